use std::path::{Path, PathBuf};

use livepaper_core::map::{GeocodeError, OfflineGeocoder};
use livepaper_core::mortgage::{AffordabilityParams, MortgageError, RateTable, RateTableError};
use livepaper_core::notes::{CatalogParseError, CodeWordCatalog, FixtureParseError, StubRecognizer};
use livepaper_core::session::SessionConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{}: {source}", path.display())]
    RateTable { path: PathBuf, source: RateTableError },
    #[error("{}: {source}", path.display())]
    Catalog { path: PathBuf, source: CatalogParseError },
    #[error("{}: {source}", path.display())]
    Geocoder { path: PathBuf, source: GeocodeError },
    #[error("{}: {source}", path.display())]
    Recognizer { path: PathBuf, source: FixtureParseError },
    #[error("invalid affordability parameters: {0}")]
    Params(#[from] MortgageError),
}

/// Contents of the `--config` TOML file. Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub listen: Option<String>,
    pub journal_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub rate_table: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    /// `address<TAB>lat<TAB>lon` lines.
    pub geocoder_fixtures: Option<PathBuf>,
    /// Nominatim-compatible endpoint used by `serve` instead of fixtures.
    pub geocoder_url: Option<String>,
    /// `hash -> text` lines for the stub recognizer.
    pub recognizer_fixtures: Option<PathBuf>,
}

/// Everything a command needs, loaded and validated.
#[derive(Debug)]
pub struct Settings {
    pub session: SessionConfig,
    pub geocoder: OfflineGeocoder,
    pub geocoder_url: Option<String>,
    pub recognizer: StubRecognizer,
    pub listen: Option<String>,
    pub journal_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

impl Settings {
    /// Loads the optional config file, then applies the command-line
    /// overrides for the rate table and affordability parameters.
    pub fn load(config: Option<&Path>, rate_table: Option<&Path>, params: Option<&Path>) -> Result<Self, ConfigError> {
        let (file, base) = match config {
            Some(path) => {
                let file: ConfigFile = toml::from_str(&read(path)?).map_err(|source| ConfigError::Toml {
                    path: path.to_path_buf(),
                    source,
                })?;
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let resolve = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));

        let mut session = SessionConfig::default();
        if let Some(path) = rate_table.map(Path::to_path_buf).or_else(|| resolve(&file.rate_table)) {
            session.rates =
                RateTable::parse(&read(&path)?).map_err(|source| ConfigError::RateTable { path, source })?;
        }
        if let Some(path) = params.map(Path::to_path_buf).or_else(|| resolve(&file.params)) {
            let parsed: AffordabilityParams =
                toml::from_str(&read(&path)?).map_err(|source| ConfigError::Toml { path, source })?;
            parsed.validate()?;
            session.params = parsed;
        }
        if let Some(path) = resolve(&file.catalog) {
            session.catalog =
                CodeWordCatalog::parse(&read(&path)?).map_err(|source| ConfigError::Catalog { path, source })?;
        }
        let geocoder = match resolve(&file.geocoder_fixtures) {
            Some(path) => {
                OfflineGeocoder::parse(&read(&path)?).map_err(|source| ConfigError::Geocoder { path, source })?
            }
            None => OfflineGeocoder::new(),
        };
        let recognizer = match resolve(&file.recognizer_fixtures) {
            Some(path) => StubRecognizer::parse_fixtures(&read(&path)?)
                .map_err(|source| ConfigError::Recognizer { path, source })?,
            None => StubRecognizer::new(),
        };
        Ok(Self {
            session,
            geocoder,
            geocoder_url: file.geocoder_url.clone(),
            recognizer,
            listen: file.listen.clone(),
            journal_dir: resolve(&file.journal_dir),
            ui_dir: resolve(&file.ui_dir),
        })
    }
}
