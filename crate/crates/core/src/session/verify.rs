//! Offline journal checks: sequence continuity, content constancy under
//! object motion, per-document revision order and tranche conservation.

use std::fmt;

use serde::Serialize;

use crate::binding::DocBody;
use crate::tracker::ObjectEvent;

use super::event::Payload;
use super::journal::{decode_line, state_digest};
use super::reduce::{reduce, ReduceError};
use super::state::SessionState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Corrupt,
    SequenceGap,
    Rejected,
    Constancy,
    Revision,
    Conservation,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Corrupt => "corrupt",
            ViolationKind::SequenceGap => "sequence-gap",
            ViolationKind::Rejected => "rejected",
            ViolationKind::Constancy => "constancy",
            ViolationKind::Revision => "revision",
            ViolationKind::Conservation => "conservation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub line: usize,
    pub seq: Option<u64>,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {} violation: {}", self.line, self.kind, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub events: usize,
    pub violations: Vec<Violation>,
    pub final_digest: String,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_transition(prev: &SessionState, next: &SessionState, payload: &Payload) -> Vec<(ViolationKind, String)> {
    let mut found = Vec::new();
    let motion_only = matches!(
        payload,
        Payload::Object {
            event: ObjectEvent::Entered { .. } | ObjectEvent::Moved { .. } | ObjectEvent::Left { .. }
        }
    );
    for binding in prev.bindings.bindings() {
        let marker = &binding.marker_id;
        let before = prev.bindings.resolve(marker);
        let after = next.bindings.resolve(marker);
        let (Some(before), Some(after)) = (before, after) else {
            found.push((ViolationKind::Constancy, format!("{marker} lost its document")));
            continue;
        };
        if next.bindings.binding(marker).map(|b| b.doc_id) != Some(binding.doc_id) {
            found.push((ViolationKind::Constancy, format!("{marker} was rebound")));
        }
        if after.revision < before.revision {
            found.push((
                ViolationKind::Revision,
                format!("{marker} went from revision {} back to {}", before.revision, after.revision),
            ));
        } else if after.revision == before.revision && after.body != before.body {
            found.push((ViolationKind::Revision, format!("{marker} changed without a new revision")));
        }
        if motion_only && *after != *before {
            found.push((ViolationKind::Constancy, format!("{marker} content changed on object motion")));
        }
    }
    let terms = next.mortgage_terms();
    for binding in next.bindings.bindings() {
        let Some(doc) = next.bindings.resolve(&binding.marker_id) else {
            continue;
        };
        let DocBody::MortgageMix(view) = &doc.body else {
            continue;
        };
        if view.mix.is_empty() {
            continue;
        }
        let sum = view.mix.total_principal();
        if sum != view.mortgage_amount {
            found.push((
                ViolationKind::Conservation,
                format!(
                    "{} tranches sum to {sum} CHF but the mortgage is {} CHF",
                    binding.marker_id, view.mortgage_amount
                ),
            ));
        }
        if let Some((amount, _)) = terms {
            if amount != view.mortgage_amount {
                found.push((
                    ViolationKind::Conservation,
                    format!(
                        "{} tracks a {} CHF mortgage but the case needs {amount} CHF",
                        binding.marker_id, view.mortgage_amount
                    ),
                ));
            }
        }
    }
    found
}

/// Replays a journal text and reports every invariant violation found.
/// Checking continues past bad lines.
pub fn verify_journal(text: &str) -> VerifyReport {
    let mut state = SessionState::default();
    let mut violations = Vec::new();
    let mut events = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let event = match decode_line(raw, line) {
            Ok(e) => e,
            Err(e) => {
                violations.push(Violation {
                    line,
                    seq: None,
                    kind: ViolationKind::Corrupt,
                    message: e.to_string(),
                });
                continue;
            }
        };
        events += 1;
        let mut push = |kind, message| {
            violations.push(Violation {
                line,
                seq: Some(event.seq),
                kind,
                message,
            })
        };
        let expected = state.next_seq();
        if event.seq != expected {
            push(
                ViolationKind::SequenceGap,
                format!("expected seq {expected}, got {}", event.seq),
            );
            if event.seq < expected {
                continue;
            }
            state.last_seq = event.seq.checked_sub(1);
        }
        match reduce(&state, &event) {
            Ok((next, _)) => {
                for (kind, message) in check_transition(&state, &next, &event.payload) {
                    push(kind, message);
                }
                state = next;
            }
            Err(e) => {
                let kind = match e {
                    ReduceError::Conservation { .. } => ViolationKind::Conservation,
                    _ => ViolationKind::Rejected,
                };
                push(kind, e.to_string());
                state.last_seq = Some(event.seq);
            }
        }
    }
    VerifyReport {
        events,
        violations,
        final_digest: state_digest(&state),
    }
}
