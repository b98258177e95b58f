//! The advisory session: an event-sourced fold over object events, UI
//! actions and recognizer/geocoder results.

mod event;
mod journal;
mod reduce;
mod render;
mod runtime;
mod state;
mod verify;

pub use event::{DialField, DialFocus, Followup, Payload, SessionEvent, UiAction, TEXT_FIELDS};
pub use journal::{
    canonical_json, decode_line, encode_event, parse_journal, replay, replay_text, state_digest, JournalError,
    JOURNAL_EXTENSION,
};
pub use reduce::{reduce, scenario_step, ReduceError, CHIP_REACH_MM, INCOME_STEP, PRICE_STEP, TRANCHE_STEP};
pub use render::{
    render, summarize, BlankPaper, CaseSummary, RenderEntry, RenderState, Tint, Viewport, BLANK_PAPER_LABELS,
    SHEET_MM, TOKEN_RADIUS_MM,
};
pub use runtime::{Session, SessionConfig, SessionError};
pub use state::{preset_case, ObjectRecord, SessionState};
pub use verify::{verify_journal, VerifyReport, Violation, ViolationKind};
