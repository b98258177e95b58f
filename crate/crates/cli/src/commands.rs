use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use livepaper_core::geometry::{fit_homography, parse_correspondences, SensorPoint};
use livepaper_core::map::{Geocoder, HttpGeocoder, TileClient};
use livepaper_core::session::{canonical_json, replay_text, state_digest, summarize, verify_journal, ViolationKind};
use livepaper_server::{App, SessionFactory, DEFAULT_LISTEN};
use thiserror::Error;

use crate::config::{ConfigError, Settings};
use crate::script::{self, Script, ScriptParseError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Script(#[from] ScriptParseError),
    #[error("corrupt journal: {0}")]
    Journal(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Session(#[from] livepaper_core::session::SessionError),
    #[error(transparent)]
    Server(#[from] livepaper_server::ServerError),
    #[error("output error: {0}")]
    Output(#[from] io::Error),
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs a script. Returns whether every check passed.
pub fn scenario(
    settings: Settings,
    script_path: &Path,
    journal: Option<&Path>,
    out: &mut dyn Write,
) -> Result<bool, CliError> {
    let script = Script::parse(&read(script_path)?)?;
    let sink: Option<Box<dyn Write + Send>> = match journal {
        Some(path) => Some(Box::new(File::create(path).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?)),
        None => None,
    };
    let (report, _) = script::run(
        &script,
        settings.session,
        settings.geocoder,
        Arc::new(settings.recognizer),
        sink,
    )?;
    writeln!(out, "{report}")?;
    Ok(report.passed())
}

/// Replays a journal and prints the final state.
pub fn replay(journal: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let state = replay_text(&read(journal)?).map_err(|e| CliError::Journal(e.to_string()))?;
    if json {
        writeln!(out, "{}", canonical_json(&state))?;
        return Ok(());
    }
    let summary = summarize(&state);
    let case = &summary.case;
    writeln!(out, "last seq: {}", state.last_seq.map_or("none".into(), |s| s.to_string()))?;
    writeln!(out, "digest: {}", state_digest(&state))?;
    writeln!(
        out,
        "case: price {} CHF, own funds {} CHF, incomes {:?}, address {:?}",
        case.purchase_price, case.own_funds, case.annual_incomes, case.address
    )?;
    if let Some(f) = &summary.figures {
        writeln!(out, "mortgage: {} CHF, ltv {}", f.mortgage_amount, f.ltv.round_dp(4))?;
    }
    if let Some(a) = &summary.affordability {
        let verdict = if a.affordable { "affordable" } else { "not affordable" };
        writeln!(out, "affordability: ratio {} ({verdict})", a.ratio.round_dp(4))?;
    }
    if let Some(cost) = summary.monthly_cost {
        writeln!(out, "monthly cost: {cost} CHF")?;
    }
    for binding in state.bindings.bindings() {
        let Some(doc) = state.bindings.resolve(&binding.marker_id) else {
            continue;
        };
        let place = if state.is_present(&binding.marker_id) { "on table" } else { "off table" };
        writeln!(
            out,
            "  {} {} rev {} ({place})",
            binding.marker_id,
            doc.body.kind(),
            doc.revision
        )?;
    }
    Ok(())
}

/// Checks a journal. Returns whether it is clean.
pub fn verify(journal: &Path, json: bool, out: &mut dyn Write) -> Result<bool, CliError> {
    let report = verify_journal(&read(journal)?);
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(io::Error::other)?)?;
        return Ok(report.is_clean());
    }
    let corrupt = report
        .violations
        .iter()
        .any(|v| matches!(v.kind, ViolationKind::Corrupt | ViolationKind::SequenceGap));
    if corrupt {
        writeln!(out, "corrupt journal")?;
    }
    for v in &report.violations {
        writeln!(out, "{v}")?;
    }
    writeln!(
        out,
        "{} events, {} violations, final digest {}",
        report.events,
        report.violations.len(),
        report.final_digest
    )?;
    Ok(report.is_clean())
}

/// Fits a sensor-to-table homography and reports residuals in mm.
pub fn calibrate(pairs: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let pairs = parse_correspondences(&read(pairs)?).map_err(|e| CliError::Calibration(e.to_string()))?;
    let h = fit_homography(&pairs).map_err(|e| CliError::Calibration(e.to_string()))?;
    let mut max: f64 = 0.0;
    let mut sum_sq = 0.0;
    for p in &pairs {
        let t = h
            .map_point(SensorPoint::new(p.sensor.x, p.sensor.y))
            .map_err(|e| CliError::Calibration(e.to_string()))?;
        let r = t.distance(&p.table);
        max = max.max(r);
        sum_sq += r * r;
    }
    write!(out, "{h}")?;
    writeln!(
        out,
        "# {} pairs, rms residual {:.6} mm, max residual {:.6} mm",
        pairs.len(),
        (sum_sq / pairs.len() as f64).sqrt(),
        max
    )?;
    Ok(())
}

pub struct ServeOptions {
    pub listen: Option<String>,
    pub ui_dir: Option<PathBuf>,
    pub journal_dir: Option<PathBuf>,
}

pub fn serve(settings: Settings, options: ServeOptions) -> Result<(), CliError> {
    let geocoder: Arc<dyn Geocoder> = match &settings.geocoder_url {
        Some(url) => Arc::new(HttpGeocoder::new(url.clone())),
        None => Arc::new(settings.geocoder),
    };
    let factory = SessionFactory {
        config: settings.session,
        recognizer: Arc::new(settings.recognizer),
        geocoder,
        journal_dir: options.journal_dir.or(settings.journal_dir),
    };
    let listen = options
        .listen
        .or(settings.listen)
        .unwrap_or_else(|| DEFAULT_LISTEN.to_string());
    let ui_dir = options.ui_dir.or(settings.ui_dir);
    let app = App::new(factory, TileClient::from_env());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(livepaper_server::serve(&listen, app, ui_dir))?;
    Ok(())
}
