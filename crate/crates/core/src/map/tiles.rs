use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use super::{placeholder_tile, MapMode, TileRef};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Failed(String),
}

/// Fetches raw bytes for a URL. Injected so tests can observe traffic.
pub trait TileTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl TileTransport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let mut response = self
            .agent
            .get(url)
            .call()
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        let mut bytes = Vec::new();
        response
            .body_mut()
            .as_reader()
            .read_to_end(&mut bytes)
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        Ok(bytes)
    }
}

/// Tile fetcher with an on-disk cache and placeholder fallback.
///
/// Remote tiles live at `{base_url}/{z}/{x}/{y}.png`; cached copies at
/// `{cache_dir}/{mode}/{z}/{x}/{y}.png`.
pub struct TileClient {
    street_url: Option<String>,
    satellite_url: Option<String>,
    cache_dir: Option<PathBuf>,
    transport: Option<Box<dyn TileTransport>>,
}

impl TileClient {
    /// A client that never touches the network.
    pub fn offline(cache_dir: Option<PathBuf>) -> Self {
        Self {
            street_url: None,
            satellite_url: None,
            cache_dir,
            transport: None,
        }
    }

    pub fn new(
        street_url: Option<String>,
        satellite_url: Option<String>,
        cache_dir: Option<PathBuf>,
        transport: Box<dyn TileTransport>,
    ) -> Self {
        Self {
            street_url,
            satellite_url,
            cache_dir,
            transport: Some(transport),
        }
    }

    /// Reads `LP_TILE_URL_STREET`, `LP_TILE_URL_SAT` and `LP_TILE_CACHE_DIR`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let street_url = var("LP_TILE_URL_STREET");
        let satellite_url = var("LP_TILE_URL_SAT");
        let cache_dir = var("LP_TILE_CACHE_DIR").map(PathBuf::from);
        if street_url.is_none() && satellite_url.is_none() {
            return Self::offline(cache_dir);
        }
        Self::new(street_url, satellite_url, cache_dir, Box::new(HttpTransport::new()))
    }

    fn base_url(&self, mode: MapMode) -> Option<&str> {
        match mode {
            MapMode::Street => self.street_url.as_deref(),
            MapMode::Satellite => self.satellite_url.as_deref(),
        }
    }

    pub fn cache_path(&self, tile: TileRef, mode: MapMode) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|dir| {
            dir.join(mode.as_str())
                .join(tile.z.to_string())
                .join(tile.x.to_string())
                .join(format!("{}.png", tile.y))
        })
    }

    pub fn fetch_tile(&self, tile: TileRef, mode: MapMode) -> Vec<u8> {
        let cache_path = self.cache_path(tile, mode);
        if let Some(bytes) = cache_path.as_deref().and_then(|p| std::fs::read(p).ok()) {
            return bytes;
        }
        let remote = match (self.base_url(mode), &self.transport) {
            (Some(base), Some(transport)) => {
                let url = format!("{}/{}/{}/{}.png", base.trim_end_matches('/'), tile.z, tile.x, tile.y);
                match transport.get(&url) {
                    Ok(bytes) => Some(bytes),
                    Err(e) => {
                        log::warn!("tile {tile} ({mode}) unavailable: {e}");
                        None
                    }
                }
            }
            _ => None,
        };
        match remote {
            Some(bytes) => {
                if let Some(path) = cache_path {
                    if let Err(e) = write_atomic(&path, &bytes) {
                        log::warn!("could not cache tile at {}: {e}", path.display());
                    }
                }
                bytes
            }
            None => placeholder_tile(tile, mode),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Recorder {
        calls: Arc<Mutex<Vec<String>>>,
        fail: bool,
    }

    impl TileTransport for Recorder {
        fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
            self.calls.lock().unwrap().push(url.to_string());
            if self.fail {
                Err(TransportError::Failed("offline".into()))
            } else {
                Ok(url.as_bytes().to_vec())
            }
        }
    }

    #[test]
    fn second_fetch_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Recorder::default();
        let client = TileClient::new(
            Some("http://tiles.test/street".into()),
            None,
            Some(dir.path().to_path_buf()),
            Box::new(rec.clone()),
        );
        let t = TileRef { z: 12, x: 2141, y: 1434 };
        let first = client.fetch_tile(t, MapMode::Street);
        let second = client.fetch_tile(t, MapMode::Street);
        assert_eq!(first, second);
        assert_eq!(first, b"http://tiles.test/street/12/2141/1434.png");
        assert_eq!(rec.calls.lock().unwrap().len(), 1);
        assert!(dir.path().join("street/12/2141/1434.png").exists());
    }

    #[test]
    fn offline_uncached_gives_placeholder() {
        let rec = Recorder { fail: true, ..Default::default() };
        let client = TileClient::new(Some("http://x".into()), None, None, Box::new(rec.clone()));
        let t = TileRef { z: 3, x: 4, y: 2 };
        let bytes = client.fetch_tile(t, MapMode::Street);
        assert_eq!(bytes, placeholder_tile(t, MapMode::Street));
        // No satellite URL configured: no request at all.
        let sat = client.fetch_tile(t, MapMode::Satellite);
        assert_eq!(sat, placeholder_tile(t, MapMode::Satellite));
        assert_eq!(rec.calls.lock().unwrap().len(), 1);
        let offline = TileClient::offline(None);
        assert_ne!(
            offline.fetch_tile(t, MapMode::Street),
            offline.fetch_tile(TileRef { z: 3, x: 4, y: 3 }, MapMode::Street)
        );
    }
}
