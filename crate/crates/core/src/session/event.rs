use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::map::GeoPoint;
use crate::mortgage::{AffordabilityParams, MixEdit, MortgageMix, RateTable};
use crate::notes::{CodeWordCatalog, Fact, RecognizedLine, Stroke};
use crate::tracker::{MarkerId, Millis, ObjectEvent};

/// One journal entry. The session state is the fold of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub ts: Millis,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    /// Session-wide settings; written first by every live session.
    Configure {
        params: AffordabilityParams,
        rates: RateTable,
        catalog: CodeWordCatalog,
    },
    Object {
        event: ObjectEvent,
    },
    Ui {
        action: UiAction,
    },
    NoteRecognized {
        sheet: MarkerId,
        lines: Vec<RecognizedLine>,
    },
    FactExtracted {
        sheet: MarkerId,
        fact: Fact,
    },
    GeocodeResolved {
        marker: MarkerId,
        address: String,
        point: Option<GeoPoint>,
        error: Option<String>,
    },
}

impl From<ObjectEvent> for Payload {
    fn from(event: ObjectEvent) -> Self {
        Payload::Object { event }
    }
}

impl From<UiAction> for Payload {
    fn from(action: UiAction) -> Self {
        Payload::Ui { action }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum UiAction {
    ClickLabel { marker: MarkerId, label: String },
    /// `field` is a dial field name such as `income`, `tranche_size:0` or
    /// `zoom`; `none` clears the focus.
    SetDialFocus { marker: MarkerId, field: String },
    PenStrokeBatch { sheet: MarkerId, strokes: Vec<Stroke> },
    LoadScenario { name: String },
    EditMix { marker: MarkerId, edit: MixEdit },
    SetMix { marker: MarkerId, mix: MortgageMix },
}

/// Work the reducer asks its driver to do after an event.
#[derive(Debug, Clone, PartialEq)]
pub enum Followup {
    /// Journal and apply this event next.
    Event(Payload),
    Geocode { marker: MarkerId, address: String },
    Recognize { sheet: MarkerId, strokes: Vec<Stroke> },
}

/// Numeric document field the dial token adjusts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DialField {
    Income { index: usize },
    PurchasePrice,
    OwnFunds,
    TrancheSize { index: usize },
    TrancheTerm { index: usize },
    RateScenario,
    MapZoom,
}

impl fmt::Display for DialField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DialField::Income { index: 0 } => f.write_str("income"),
            DialField::Income { index } => write!(f, "income:{index}"),
            DialField::PurchasePrice => f.write_str("price"),
            DialField::OwnFunds => f.write_str("own_funds"),
            DialField::TrancheSize { index } => write!(f, "tranche_size:{index}"),
            DialField::TrancheTerm { index } => write!(f, "tranche_term:{index}"),
            DialField::RateScenario => f.write_str("rate_scenario"),
            DialField::MapZoom => f.write_str("zoom"),
        }
    }
}

/// Names that refer to text fields, which the dial cannot adjust.
pub const TEXT_FIELDS: [&str; 2] = ["address", "street"];

impl FromStr for DialField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, index) = match lower.split_once(':') {
            Some((n, i)) => (
                n.trim().to_string(),
                Some(i.trim().parse::<usize>().map_err(|_| format!("bad index in `{s}`"))?),
            ),
            None => (lower.clone(), None),
        };
        let idx = index.unwrap_or(0);
        Ok(match name.as_str() {
            "income" => DialField::Income { index: idx },
            "partner_income" => DialField::Income { index: 1 },
            "price" | "purchase_price" => DialField::PurchasePrice,
            "own_funds" | "equity" => DialField::OwnFunds,
            "tranche_size" | "size" => DialField::TrancheSize { index: idx },
            "tranche_term" | "term" | "duration" => DialField::TrancheTerm { index: idx },
            "rate_scenario" | "scenario" => DialField::RateScenario,
            "zoom" => DialField::MapZoom,
            n if TEXT_FIELDS.contains(&n) => return Err(format!("`{n}` is a text field")),
            _ => return Err(format!("unknown dial field `{s}`")),
        })
    }
}

impl From<DialField> for String {
    fn from(f: DialField) -> Self {
        f.to_string()
    }
}

impl TryFrom<String> for DialField {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialFocus {
    pub marker: MarkerId,
    pub field: DialField,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dial_field_names_round_trip() {
        for f in [
            DialField::Income { index: 0 },
            DialField::Income { index: 2 },
            DialField::PurchasePrice,
            DialField::OwnFunds,
            DialField::TrancheSize { index: 1 },
            DialField::TrancheTerm { index: 0 },
            DialField::RateScenario,
            DialField::MapZoom,
        ] {
            assert_eq!(f.to_string().parse::<DialField>().unwrap(), f);
        }
        assert!("address".parse::<DialField>().unwrap_err().contains("text field"));
        assert!("colour".parse::<DialField>().is_err());
    }
}
