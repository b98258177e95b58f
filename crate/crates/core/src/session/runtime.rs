use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use thiserror::Error;

use crate::geometry::{marker_corners, normalize_angle, Pose2};
use crate::map::Geocoder;
use crate::mortgage::{AffordabilityParams, RateTable};
use crate::notes::{CodeWordCatalog, Recognizer};
use crate::tracker::{
    from_microdegrees, Detection, MarkerId, MicroDegrees, Millis, ObjectKind, Tracker, TrackerConfig, TrackerError,
};

use super::event::{Followup, Payload, SessionEvent};
use super::journal::{decode_line, encode_event};
use super::reduce::{reduce, ReduceError};
use super::render::{render, RenderState};
use super::state::SessionState;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("no object {0} on the table")]
    UnknownObject(MarkerId),
    #[error("object {0} is already on the table")]
    AlreadyPlaced(MarkerId),
    #[error("no dial token on the table")]
    NoDial,
    #[error("journal write failed: {0}")]
    Journal(String),
}

#[derive(Debug, Clone, Default)]
pub struct SessionConfig {
    pub params: AffordabilityParams,
    pub rates: RateTable,
    pub catalog: CodeWordCatalog,
    /// Interaction area and marker size for the virtual table; the
    /// smoothing and debounce settings are replaced by the direct preset.
    pub tracker: TrackerConfig,
}

#[derive(Debug, Clone, Copy)]
struct Placed {
    kind: ObjectKind,
    x: f64,
    y: f64,
    theta: MicroDegrees,
}

/// Largest rotation applied between two virtual frames. Keeping each step
/// under half a turn makes the direction of rotation unambiguous.
const MAX_ROTATION_STEP: MicroDegrees = 90_000_000;
const FULL_TURN: MicroDegrees = 360_000_000;

/// A live session: journal, state and the drivers for followup work.
///
/// Physical input arrives either as detection frames or through the
/// virtual tabletop (`place`, `move_object`, `remove`, `rotate_dial`),
/// which synthesizes frames for an internal tracker.
pub struct Session {
    state: SessionState,
    journal: Vec<SessionEvent>,
    sink: Option<Box<dyn Write + Send>>,
    tracker: Tracker,
    placed: BTreeMap<MarkerId, Placed>,
    recognizer: Box<dyn Recognizer>,
    geocoder: Box<dyn Geocoder>,
    clock: Millis,
}

impl Session {
    /// Starts a session. The configuration is journaled as event 0 and
    /// every event is written to `sink` before it takes effect.
    pub fn new(
        config: SessionConfig,
        recognizer: Box<dyn Recognizer>,
        geocoder: Box<dyn Geocoder>,
        sink: Option<Box<dyn Write + Send>>,
    ) -> Result<Self, SessionError> {
        let tracker_config = TrackerConfig {
            area: config.tracker.area,
            marker_side_mm: config.tracker.marker_side_mm,
            detent_rad: config.tracker.detent_rad,
            ..TrackerConfig::direct()
        };
        let mut session = Self {
            state: SessionState::default(),
            journal: Vec::new(),
            sink,
            tracker: Tracker::new(tracker_config),
            placed: BTreeMap::new(),
            recognizer,
            geocoder,
            clock: 0,
        };
        session.submit(
            0,
            Payload::Configure {
                params: config.params,
                rates: config.rates,
                catalog: config.catalog,
            },
        )?;
        Ok(session)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn journal(&self) -> &[SessionEvent] {
        &self.journal
    }

    pub fn render(&self) -> RenderState {
        render(&self.state)
    }

    pub fn tracker_config(&self) -> &TrackerConfig {
        self.tracker.config()
    }

    /// Timestamps never run backwards inside a session.
    fn clamp_ts(&mut self, ts: Millis) -> Millis {
        self.clock = self.clock.max(ts);
        self.clock
    }

    /// Journals and applies one event, then drains its followups.
    /// Returns the sequence numbers written. Only the first event's
    /// failure is an error; rejected derived events are logged and dropped.
    pub fn submit(&mut self, ts: Millis, payload: Payload) -> Result<Vec<u64>, SessionError> {
        let ts = self.clamp_ts(ts);
        let (seq, followups) = self.commit(ts, payload)?;
        let mut seqs = vec![seq];
        let mut queue: VecDeque<Followup> = followups.into();
        while let Some(followup) = queue.pop_front() {
            let payload = match followup {
                Followup::Event(p) => p,
                Followup::Geocode { marker, address } => match self.geocoder.geocode(&address) {
                    Ok(point) => Payload::GeocodeResolved {
                        marker,
                        address,
                        point: Some(point),
                        error: None,
                    },
                    Err(e) => Payload::GeocodeResolved {
                        marker,
                        address,
                        point: None,
                        error: Some(e.to_string()),
                    },
                },
                Followup::Recognize { sheet, strokes } => match self.recognizer.recognize(&strokes) {
                    Ok(lines) => Payload::NoteRecognized { sheet, lines },
                    Err(e) => {
                        log::warn!("recognition for {sheet} failed: {e}");
                        continue;
                    }
                },
            };
            match self.commit(ts, payload) {
                Ok((seq, more)) => {
                    seqs.push(seq);
                    queue.extend(more);
                }
                Err(SessionError::Reduce(e)) => log::warn!("derived event rejected: {e}"),
                Err(e) => return Err(e),
            }
        }
        Ok(seqs)
    }

    fn commit(&mut self, ts: Millis, payload: Payload) -> Result<(u64, Vec<Followup>), SessionError> {
        let seq = self.state.next_seq();
        let line = encode_event(&SessionEvent { seq, ts, payload });
        // The journal line is authoritative: apply exactly what replay reads.
        let event = decode_line(&line, self.journal.len() + 1).map_err(|e| SessionError::Journal(e.to_string()))?;
        let (next, followups) = reduce(&self.state, &event)?;
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{line}")
                .and_then(|_| sink.flush())
                .map_err(|e| SessionError::Journal(e.to_string()))?;
        }
        self.state = next;
        self.journal.push(event);
        Ok((seq, followups))
    }

    /// Feeds one detection frame through the tracker and journals the
    /// resulting object events.
    pub fn ingest_frame(&mut self, ts: Millis, detections: &[Detection]) -> Result<Vec<u64>, SessionError> {
        let ts = self.clamp_ts(ts);
        let events = self.tracker.ingest_frame(detections, ts)?;
        let mut seqs = Vec::new();
        let mut first_error = None;
        for event in events {
            match self.submit(ts, event.into()) {
                Ok(s) => seqs.extend(s),
                Err(e) => {
                    log::warn!("object event rejected: {e}");
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(seqs),
        }
    }

    fn virtual_frame(&mut self, ts: Millis) -> Result<Vec<u64>, SessionError> {
        let ts = self.clamp_ts(ts);
        let side = self.tracker.config().marker_side_mm;
        let detections: Vec<Detection> = self
            .placed
            .iter()
            .map(|(id, p)| Detection {
                marker_id: id.clone(),
                kind: p.kind,
                corners: marker_corners(&Pose2::new(p.x, p.y, normalize_angle(from_microdegrees(p.theta))), side),
                timestamp: ts,
            })
            .collect();
        self.ingest_frame(ts, &detections)
    }

    /// Puts an object on the virtual table at (`x`, `y`) mm, rotated by
    /// `theta_deg`.
    pub fn place(
        &mut self,
        ts: Millis,
        marker: &MarkerId,
        kind: ObjectKind,
        x: f64,
        y: f64,
        theta_deg: f64,
    ) -> Result<Vec<u64>, SessionError> {
        if self.placed.contains_key(marker) {
            return Err(SessionError::AlreadyPlaced(marker.clone()));
        }
        self.placed.insert(
            marker.clone(),
            Placed {
                kind,
                x,
                y,
                theta: degrees_to_units(theta_deg).rem_euclid(FULL_TURN),
            },
        );
        self.virtual_frame(ts)
    }

    pub fn move_object(
        &mut self,
        ts: Millis,
        marker: &MarkerId,
        x: f64,
        y: f64,
        theta_deg: Option<f64>,
    ) -> Result<Vec<u64>, SessionError> {
        let placed = self
            .placed
            .get_mut(marker)
            .ok_or_else(|| SessionError::UnknownObject(marker.clone()))?;
        placed.x = x;
        placed.y = y;
        if let Some(t) = theta_deg {
            placed.theta = degrees_to_units(t).rem_euclid(FULL_TURN);
        }
        self.virtual_frame(ts)
    }

    pub fn remove(&mut self, ts: Millis, marker: &MarkerId) -> Result<Vec<u64>, SessionError> {
        if self.placed.remove(marker).is_none() {
            return Err(SessionError::UnknownObject(marker.clone()));
        }
        self.virtual_frame(ts)
    }

    /// Turns a dial token by `degrees` (positive is counter-clockwise). With
    /// no marker given, the first dial on the table turns.
    pub fn rotate_dial(&mut self, ts: Millis, marker: Option<&MarkerId>, degrees: f64) -> Result<Vec<u64>, SessionError> {
        let id = match marker {
            Some(m) => {
                if !self.placed.contains_key(m) {
                    return Err(SessionError::UnknownObject(m.clone()));
                }
                m.clone()
            }
            None => self
                .placed
                .iter()
                .find(|(id, p)| p.kind == ObjectKind::DialToken && self.state.is_present(id))
                .map(|(id, _)| id.clone())
                .ok_or(SessionError::NoDial)?,
        };
        let mut remaining = degrees_to_units(degrees);
        let mut seqs = Vec::new();
        while remaining != 0 {
            let step = remaining.clamp(-MAX_ROTATION_STEP, MAX_ROTATION_STEP);
            remaining -= step;
            if let Some(p) = self.placed.get_mut(&id) {
                p.theta = (p.theta + step).rem_euclid(FULL_TURN);
            }
            seqs.extend(self.virtual_frame(ts)?);
        }
        Ok(seqs)
    }
}

fn degrees_to_units(degrees: f64) -> MicroDegrees {
    (degrees * 1e6).round() as MicroDegrees
}
