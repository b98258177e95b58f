//! Engine for a paper-and-token advisory tabletop: marker tracking, content
//! bindings that survive removal from the table, advisor note parsing and a
//! live Swiss mortgage model, all folded by a replayable session reducer.

pub mod binding;
pub mod geometry;
pub mod map;
pub mod mortgage;
pub mod notes;
pub mod tracker;
pub mod session;
pub mod wire;
