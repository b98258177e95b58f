//! Pen strokes to text, and advisor code words to case facts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mortgage::Chf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokePoint {
    pub x: f64,
    pub y: f64,
}

/// One pen-down to pen-up trace on the notepad (millimeters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<StrokePoint>,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Stroke {
    pub fn is_valid(&self) -> bool {
        self.points.len() >= 2 && self.start_ms <= self.end_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizedLine {
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecognizeError {
    #[error("handwriting recognizer unavailable: {0}")]
    RecognizerUnavailable(String),
}

pub trait Recognizer: Send {
    fn recognize(&self, strokes: &[Stroke]) -> Result<Vec<RecognizedLine>, RecognizeError>;
}

/// Stable content hash of a stroke set, hex encoded.
pub fn stroke_set_hash(strokes: &[Stroke]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((strokes.len() as u64).to_le_bytes());
    for s in strokes {
        hasher.update(s.start_ms.to_le_bytes());
        hasher.update(s.end_ms.to_le_bytes());
        hasher.update((s.points.len() as u64).to_le_bytes());
        for p in &s.points {
            hasher.update(p.x.to_bits().to_le_bytes());
            hasher.update(p.y.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Deterministic recognizer backed by a `hash -> text` fixture table.
#[derive(Debug, Default)]
pub struct StubRecognizer {
    fixtures: RwLock<HashMap<String, String>>,
}

#[derive(Debug, Error, PartialEq)]
#[error("fixture line {line}: {message}")]
pub struct FixtureParseError {
    pub line: usize,
    pub message: String,
}

impl StubRecognizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `hash -> text` lines. A literal `\n` in the text splits it into
    /// several recognized lines.
    pub fn parse_fixtures(text: &str) -> Result<Self, FixtureParseError> {
        let mut fixtures = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (hash, body) = line.split_once("->").ok_or_else(|| FixtureParseError {
                line: idx + 1,
                message: "expected `hash -> text`".into(),
            })?;
            fixtures.insert(hash.trim().to_ascii_lowercase(), body.trim().replace("\\n", "\n"));
        }
        Ok(Self {
            fixtures: RwLock::new(fixtures),
        })
    }

    pub fn learn(&self, strokes: &[Stroke], text: impl Into<String>) -> String {
        let hash = stroke_set_hash(strokes);
        self.table().insert(hash.clone(), text.into());
        hash
    }

    pub fn len(&self) -> usize {
        self.fixtures.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn table(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, String>> {
        self.fixtures.write().unwrap_or_else(|e| e.into_inner())
    }
}

impl<R: Recognizer + Sync> Recognizer for Arc<R> {
    fn recognize(&self, strokes: &[Stroke]) -> Result<Vec<RecognizedLine>, RecognizeError> {
        (**self).recognize(strokes)
    }
}

impl Recognizer for StubRecognizer {
    fn recognize(&self, strokes: &[Stroke]) -> Result<Vec<RecognizedLine>, RecognizeError> {
        if strokes.is_empty() {
            return Ok(Vec::new());
        }
        let fixtures = self.fixtures.read().unwrap_or_else(|e| e.into_inner());
        match fixtures.get(&stroke_set_hash(strokes)) {
            Some(text) => Ok(text
                .split('\n')
                .map(|t| RecognizedLine {
                    text: t.to_string(),
                    confidence: 1.0,
                })
                .collect()),
            None => Ok(vec![RecognizedLine {
                text: String::new(),
                confidence: 0.0,
            }]),
        }
    }
}

/// Fake handwriting for `text`: one short stroke per visible character, laid
/// out left to right. Used to drive the stub recognizer from scripts.
pub fn synthesize_strokes(text: &str, start_ms: u64) -> Vec<Stroke> {
    text.chars()
        .enumerate()
        .filter(|(_, c)| !c.is_whitespace())
        .map(|(i, c)| {
            let code = f64::from(u32::from(c) % 97);
            let x0 = 4.0 * i as f64;
            let t0 = start_ms + 40 * i as u64;
            Stroke {
                points: vec![
                    StrokePoint { x: x0, y: 0.0 },
                    StrokePoint { x: x0 + 1.5, y: code / 16.0 },
                    StrokePoint { x: x0 + 3.0, y: 0.5 },
                ],
                start_ms: t0,
                end_ms: t0 + 30,
            }
        })
        .collect()
}

/// Financial case fields that notes can fill in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactField {
    OwnFunds,
    PurchasePrice,
    AnnualIncome,
    PartnerIncome,
    PropertyAddress,
}

impl FactField {
    pub fn as_str(&self) -> &'static str {
        match self {
            FactField::OwnFunds => "own_funds",
            FactField::PurchasePrice => "purchase_price",
            FactField::AnnualIncome => "annual_income",
            FactField::PartnerIncome => "partner_income",
            FactField::PropertyAddress => "property_address",
        }
    }
}

impl FromStr for FactField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "own_funds" => FactField::OwnFunds,
            "purchase_price" => FactField::PurchasePrice,
            "annual_income" | "income" => FactField::AnnualIncome,
            "partner_income" => FactField::PartnerIncome,
            "property_address" | "address" => FactField::PropertyAddress,
            other => return Err(format!("unknown field `{other}`")),
        })
    }
}

impl fmt::Display for FactField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Money,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub field: FactField,
    pub kind: ValueKind,
}

/// Code words the advisor writes as `KEY = value`. Keys match
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodeWordCatalog {
    entries: BTreeMap<String, CatalogEntry>,
}

#[derive(Debug, Error, PartialEq)]
#[error("catalog line {line}: {message}")]
pub struct CatalogParseError {
    pub line: usize,
    pub message: String,
}

impl Default for CodeWordCatalog {
    fn default() -> Self {
        let mut catalog = Self {
            entries: BTreeMap::new(),
        };
        // EM (Eigenmittel) and STR come from advisor practice; KP (Kaufpreis)
        // and EK (Einkommen) are local additions.
        for (key, field, kind) in [
            ("EM", FactField::OwnFunds, ValueKind::Money),
            ("STR", FactField::PropertyAddress, ValueKind::Text),
            ("KP", FactField::PurchasePrice, ValueKind::Money),
            ("EK", FactField::AnnualIncome, ValueKind::Money),
        ] {
            catalog.entries.insert(key.to_string(), CatalogEntry { field, kind });
        }
        catalog
    }
}

impl CodeWordCatalog {
    /// Parses `KEY -> field : kind` lines.
    pub fn parse(text: &str) -> Result<Self, CatalogParseError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CatalogParseError { line: idx + 1, message };
            let (key, rest) = line
                .split_once("->")
                .ok_or_else(|| err("expected `KEY -> field : kind`".into()))?;
            let (field, kind) = rest
                .split_once(':')
                .ok_or_else(|| err("expected `field : kind`".into()))?;
            let key = key.trim().to_ascii_uppercase();
            if key.is_empty() || key.contains(char::is_whitespace) || key.contains('=') {
                return Err(err(format!("invalid key `{key}`")));
            }
            let field = field.trim().parse().map_err(err)?;
            let kind = match kind.trim().to_ascii_lowercase().as_str() {
                "money" => ValueKind::Money,
                "text" => ValueKind::Text,
                other => return Err(err(format!("unknown value kind `{other}`"))),
            };
            if entries.insert(key.clone(), CatalogEntry { field, kind }).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn lookup(&self, key: &str) -> Option<(&str, CatalogEntry)> {
        self.entries
            .get_key_value(&key.to_ascii_uppercase())
            .map(|(k, e)| (k.as_str(), *e))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FactValue {
    Money(Chf),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub field: FactField,
    pub value: FactValue,
    pub source_line: String,
}

const THOUSAND_SEPARATORS: [char; 4] = ['\'', '’', ' ', '.'];

/// Parses whole francs written with optional `'`, `’`, space or `.`
/// thousand separators and an optional `CHF`/`Fr.` tag.
pub fn parse_money(raw: &str) -> Option<Chf> {
    let mut s = raw.trim();
    for tag in ["CHF", "Fr."] {
        if s.get(..tag.len()).is_some_and(|p| p.eq_ignore_ascii_case(tag)) {
            s = s[tag.len()..].trim_start();
        }
        let cut = s.len().saturating_sub(tag.len());
        if s.get(cut..).is_some_and(|p| p.eq_ignore_ascii_case(tag)) {
            s = s[..cut].trim_end();
        }
    }
    if s.is_empty() {
        return None;
    }
    let groups: Vec<&str> = s.split(|c| THOUSAND_SEPARATORS.contains(&c)).collect();
    let well_formed = groups.iter().all(|g| !g.is_empty() && g.bytes().all(|b| b.is_ascii_digit()))
        && (groups.len() == 1 || (groups[0].len() <= 3 && groups[1..].iter().all(|g| g.len() == 3)));
    if !well_formed {
        return None;
    }
    groups.concat().parse::<Chf>().ok()
}

fn extract_line(catalog: &CodeWordCatalog, line: &str) -> Option<Fact> {
    let (key, value) = line.split_once('=')?;
    let key = key.trim();
    if key.is_empty() || key.contains(char::is_whitespace) {
        return None;
    }
    let (canonical, entry) = catalog.lookup(key)?;
    let value = value.trim();
    let value = match entry.kind {
        ValueKind::Money => FactValue::Money(parse_money(value)?),
        ValueKind::Text if value.is_empty() => return None,
        ValueKind::Text => FactValue::Text(value.to_string()),
    };
    Some(Fact {
        key: canonical.to_string(),
        field: entry.field,
        value,
        source_line: line.to_string(),
    })
}

/// Extracts `KEY = VALUE` facts line by line. Anything that does not match
/// is free note text and is skipped silently.
pub fn extract_facts(catalog: &CodeWordCatalog, text: &str) -> Vec<Fact> {
    text.lines().filter_map(|l| extract_line(catalog, l)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn em_fact() {
        let facts = extract_facts(&CodeWordCatalog::default(), "EM = 202000");
        assert_eq!(facts.len(), 1);
        assert_eq!(facts[0].field, FactField::OwnFunds);
        assert_eq!(facts[0].value, FactValue::Money(202_000));
        assert_eq!(facts[0].source_line, "EM = 202000");
    }

    #[test]
    fn street_fact() {
        let facts = extract_facts(&CodeWordCatalog::default(), "STR = Florastreet 6");
        assert_eq!(
            facts[0].value,
            FactValue::Text("Florastreet 6".to_string())
        );
        assert_eq!(facts[0].field, FactField::PropertyAddress);
    }

    #[test]
    fn free_text_yields_nothing() {
        let c = CodeWordCatalog::default();
        assert!(extract_facts(&c, "hello world").is_empty());
        assert!(extract_facts(&c, "STR = ").is_empty());
        assert!(extract_facts(&c, "EM = lots").is_empty());
        assert!(extract_facts(&c, "XY = 5").is_empty());
        assert!(extract_facts(&c, "big EM = 5").is_empty());
    }

    #[test]
    fn separators_and_case() {
        let c = CodeWordCatalog::default();
        // Oracle: drop every non-digit after '='.
        let oracle: Chf = "em=770'000"
            .split_once('=')
            .unwrap()
            .1
            .chars()
            .filter(char::is_ascii_digit)
            .collect::<String>()
            .parse()
            .unwrap();
        let facts = extract_facts(&c, "em=770'000");
        assert_eq!(facts[0].value, FactValue::Money(oracle));
        assert_eq!(facts[0].field, FactField::OwnFunds);
        assert_eq!(parse_money("1 234 567"), Some(1_234_567));
        assert_eq!(parse_money("770.000"), Some(770_000));
        assert_eq!(parse_money("CHF 5'000"), Some(5_000));
        assert_eq!(parse_money("12'34"), None);
        assert_eq!(parse_money("1.5"), None);
    }

    #[test]
    fn catalog_file() {
        let c = CodeWordCatalog::parse("# codes\nEM -> own_funds : money\nstr -> address : text\n").unwrap();
        assert_eq!(c.keys().collect::<Vec<_>>(), vec!["EM", "STR"]);
        assert!(CodeWordCatalog::parse("EM -> own_funds : money\nem -> own_funds : money").is_err());
        assert!(CodeWordCatalog::parse("EM -> wealth : money").is_err());
    }

    #[test]
    fn stub_recognizer() {
        let stub = StubRecognizer::new();
        assert!(stub.recognize(&[]).unwrap().is_empty());
        let strokes = synthesize_strokes("EM = 202000", 0);
        stub.learn(&strokes, "EM = 202000");
        let lines = stub.recognize(&strokes).unwrap();
        assert_eq!(lines, vec![RecognizedLine { text: "EM = 202000".into(), confidence: 1.0 }]);
        let other = synthesize_strokes("EM = 202001", 0);
        assert_eq!(
            stub.recognize(&other).unwrap(),
            vec![RecognizedLine { text: String::new(), confidence: 0.0 }]
        );
    }

    #[test]
    fn fixture_file_round_trip() {
        let strokes = synthesize_strokes("STR = Florastreet 6", 100);
        let hash = stroke_set_hash(&strokes);
        let stub = StubRecognizer::parse_fixtures(&format!("{hash} -> STR = Florastreet 6\\nEM = 1\n")).unwrap();
        let lines = stub.recognize(&strokes).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].text, "EM = 1");
    }
}
