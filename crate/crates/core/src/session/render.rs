use std::sync::Arc;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::binding::{ContentDoc, DocBody};
use crate::geometry::Pose2;
use crate::map::{tiles_for_view, TileRef, PROJECTOR_PX_PER_MM};
use crate::mortgage::{affordability, derive_case, Affordability, CaseFigures, FinancialCase};
use crate::tracker::{MarkerId, ObjectKind, Presence};

use super::event::DialFocus;
use super::state::SessionState;

/// A4 portrait.
pub const SHEET_MM: (f64, f64) = (210.0, 297.0);
/// Radius of the projection drawn around a token.
pub const TOKEN_RADIUS_MM: f64 = 120.0;
/// Labels projected onto a marked paper that has no document yet.
pub const BLANK_PAPER_LABELS: [&str; 2] = ["Affordability", "Motgage Mix"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Viewport {
    Sheet { pose: Pose2, width_mm: f64, height_mm: f64 },
    Surround { pose: Pose2, radius_mm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tint {
    /// Affordable.
    Blue,
    /// Not affordable.
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderEntry {
    pub marker: MarkerId,
    pub kind: ObjectKind,
    pub viewport: Viewport,
    pub doc: Arc<ContentDoc>,
    pub tint: Option<Tint>,
    /// Map tiles under the viewport; empty for non-map documents.
    pub tiles: Vec<TileRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlankPaper {
    pub marker: MarkerId,
    pub pose: Pose2,
    pub labels: Vec<String>,
}

/// What the projector should show: one entry per present, bound object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderState {
    pub seq: Option<u64>,
    pub entries: Vec<RenderEntry>,
    pub blank_papers: Vec<BlankPaper>,
    pub dial_focus: Option<DialFocus>,
}

impl RenderState {
    pub fn entry(&self, marker: &MarkerId) -> Option<&RenderEntry> {
        self.entries.iter().find(|e| &e.marker == marker)
    }
}

pub fn render(state: &SessionState) -> RenderState {
    let mut entries = Vec::new();
    let mut blank_papers = Vec::new();
    for (marker, record) in &state.objects {
        if record.presence != Presence::In {
            continue;
        }
        let Some(doc) = state.bindings.resolve(marker) else {
            if record.kind == ObjectKind::MarkedPaper {
                blank_papers.push(BlankPaper {
                    marker: marker.clone(),
                    pose: record.pose,
                    labels: BLANK_PAPER_LABELS.iter().map(|l| l.to_string()).collect(),
                });
            }
            continue;
        };
        let viewport = if record.kind.is_paper() {
            Viewport::Sheet {
                pose: record.pose,
                width_mm: SHEET_MM.0,
                height_mm: SHEET_MM.1,
            }
        } else {
            Viewport::Surround {
                pose: record.pose,
                radius_mm: TOKEN_RADIUS_MM,
            }
        };
        let tint = match &doc.body {
            DocBody::Affordability(v) => v.result.as_ref().map(|r| if r.affordable { Tint::Blue } else { Tint::Red }),
            _ => None,
        };
        let tiles = match &doc.body {
            DocBody::Map(v) => {
                let extent = match viewport {
                    Viewport::Sheet { width_mm, height_mm, .. } => (width_mm, height_mm),
                    Viewport::Surround { radius_mm, .. } => (2.0 * radius_mm, 2.0 * radius_mm),
                };
                tiles_for_view(&v.state, extent, PROJECTOR_PX_PER_MM)
            }
            _ => Vec::new(),
        };
        entries.push(RenderEntry {
            marker: marker.clone(),
            kind: record.kind,
            viewport,
            doc,
            tint,
            tiles,
        });
    }
    RenderState {
        seq: state.last_seq,
        entries,
        blank_papers,
        dial_focus: state.dial_focus.clone(),
    }
}

/// Session-wide figures shown alongside the documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: FinancialCase,
    pub figures: Option<CaseFigures>,
    pub affordability: Option<Affordability>,
    pub active_mix: Option<MarkerId>,
    pub monthly_cost: Option<Decimal>,
}

pub fn summarize(state: &SessionState) -> CaseSummary {
    let monthly_cost = state.active_mix.as_ref().and_then(|m| match state.body(m) {
        Some(DocBody::MortgageMix(v)) => v.monthly_cost,
        _ => None,
    });
    CaseSummary {
        case: state.case.clone(),
        figures: derive_case(&state.case).ok(),
        affordability: affordability(&state.case, &state.params).ok(),
        active_mix: state.active_mix.clone(),
        monthly_cost,
    }
}
