//! Append-only journal: one canonical JSON event per line.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::event::SessionEvent;
use super::reduce::{reduce, ReduceError};
use super::state::SessionState;

/// File extension of session journals.
pub const JOURNAL_EXTENSION: &str = "lpj";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JournalError {
    #[error("corrupt journal at line {line}: {message}")]
    CorruptJournal { line: usize, message: String },
    #[error("event {seq} rejected: {source}")]
    Rejected { seq: u64, source: ReduceError },
}

fn sorted(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// JSON with object keys sorted at every level and no insignificant
/// whitespace. Equal values always give equal strings.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("session types serialize to JSON");
    sorted(value).to_string()
}

pub fn encode_event(event: &SessionEvent) -> String {
    canonical_json(event)
}

/// Hex SHA-256 of the canonical form of a state.
pub fn state_digest(state: &SessionState) -> String {
    hex::encode(Sha256::digest(canonical_json(state).as_bytes()))
}

/// Decodes one journal line. `line` is 1-based and only used in errors.
pub fn decode_line(text: &str, line: usize) -> Result<SessionEvent, JournalError> {
    serde_json::from_str(text).map_err(|e| JournalError::CorruptJournal {
        line,
        message: e.to_string(),
    })
}

/// Parses a journal, checking that sequence numbers run 0, 1, 2, ...
/// Blank lines are skipped.
pub fn parse_journal(text: &str) -> Result<Vec<SessionEvent>, JournalError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let event = decode_line(raw, idx + 1)?;
        let expected = events.len() as u64;
        if event.seq != expected {
            return Err(JournalError::CorruptJournal {
                line: idx + 1,
                message: format!("sequence gap: expected {expected}, got {}", event.seq),
            });
        }
        events.push(event);
    }
    Ok(events)
}

pub fn replay(events: &[SessionEvent]) -> Result<SessionState, JournalError> {
    let mut state = SessionState::default();
    for event in events {
        let (next, _) = reduce(&state, event).map_err(|source| JournalError::Rejected {
            seq: event.seq,
            source,
        })?;
        state = next;
    }
    Ok(state)
}

pub fn replay_text(text: &str) -> Result<SessionState, JournalError> {
    replay(&parse_journal(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::event::{Payload, UiAction};

    #[test]
    fn canonical_json_sorts_nested_keys() {
        let v: Value = serde_json::from_str(r#"{"b":{"z":1,"a":[{"y":2,"x":3}]},"a":null}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":null,"b":{"a":[{"x":3,"y":2}],"z":1}}"#);
    }

    #[test]
    fn empty_journal_is_initial_state() {
        assert_eq!(replay_text("").unwrap(), SessionState::default());
        assert_eq!(replay_text("\n\n").unwrap(), SessionState::default());
    }

    #[test]
    fn gap_and_garbage_are_reported_with_line() {
        let e0 = encode_event(&SessionEvent {
            seq: 0,
            ts: 0,
            payload: Payload::Ui {
                action: UiAction::LoadScenario { name: "empty".into() },
            },
        });
        let e2 = e0.replace(r#""seq":0"#, r#""seq":2"#);
        assert_eq!(
            replay_text(&format!("{e0}\n{e2}\n")),
            Err(JournalError::CorruptJournal {
                line: 2,
                message: "sequence gap: expected 1, got 2".into()
            })
        );
        assert!(matches!(
            replay_text(&format!("{e0}\n{{not json\n")),
            Err(JournalError::CorruptJournal { line: 2, .. })
        ));
    }
}
