//! Marker detections to object lifecycle events.
//!
//! The tracker debounces entry (`enter_frames` consecutive inside frames),
//! holds presence through short dropouts (`leave_ms`), smooths poses and
//! converts dial rotation into discrete ticks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, pose_from_marker, InteractionArea, Pose2, TablePoint};

/// Milliseconds since session start.
pub type Millis = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("timestamp {got} ms precedes previous frame at {previous} ms")]
    NonMonotonicTimestamp { previous: Millis, got: Millis },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarkerId(pub String);

impl MarkerId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MarkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MarkerId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    MarkedPaper,
    DialToken,
    TrancheChipFixed,
    TrancheChipLibor,
    HouseToken,
    PlainPaper,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 6] = [
        ObjectKind::MarkedPaper,
        ObjectKind::DialToken,
        ObjectKind::TrancheChipFixed,
        ObjectKind::TrancheChipLibor,
        ObjectKind::HouseToken,
        ObjectKind::PlainPaper,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectKind::MarkedPaper => "marked_paper",
            ObjectKind::DialToken => "dial_token",
            ObjectKind::TrancheChipFixed => "tranche_chip_fixed",
            ObjectKind::TrancheChipLibor => "tranche_chip_libor",
            ObjectKind::HouseToken => "house_token",
            ObjectKind::PlainPaper => "plain_paper",
        }
    }

    /// Unmarked paper is visible on the table but never tracked.
    pub fn is_tracked(&self) -> bool {
        !matches!(self, ObjectKind::PlainPaper)
    }

    pub fn is_paper(&self) -> bool {
        matches!(self, ObjectKind::MarkedPaper | ObjectKind::PlainPaper)
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "marked_paper" | "paper" => ObjectKind::MarkedPaper,
            "dial_token" | "dial" => ObjectKind::DialToken,
            "tranche_chip_fixed" | "chip_fixed" | "fixed" => ObjectKind::TrancheChipFixed,
            "tranche_chip_libor" | "chip_libor" | "libor" => ObjectKind::TrancheChipLibor,
            "house_token" | "house" => ObjectKind::HouseToken,
            "plain_paper" | "plain" => ObjectKind::PlainPaper,
            other => return Err(format!("unknown object kind `{other}`")),
        })
    }
}

/// A decoded marker sighting from the sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub marker_id: MarkerId,
    pub kind: ObjectKind,
    pub corners: [TablePoint; 4],
    pub timestamp: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ObjectEvent {
    Entered {
        id: MarkerId,
        kind: ObjectKind,
        pose: Pose2,
    },
    Moved {
        id: MarkerId,
        pose: Pose2,
    },
    Left {
        id: MarkerId,
    },
    DialTicked {
        id: MarkerId,
        ticks: i64,
    },
}

impl ObjectEvent {
    pub fn id(&self) -> &MarkerId {
        match self {
            ObjectEvent::Entered { id, .. }
            | ObjectEvent::Moved { id, .. }
            | ObjectEvent::Left { id }
            | ObjectEvent::DialTicked { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub area: InteractionArea,
    pub enter_frames: u32,
    pub leave_ms: Millis,
    pub move_epsilon_mm: f64,
    pub move_epsilon_rad: f64,
    pub alpha: f64,
    pub detent_rad: f64,
    /// Physical side length of the printed markers.
    pub marker_side_mm: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            area: InteractionArea::default(),
            enter_frames: 2,
            leave_ms: 500,
            move_epsilon_mm: 5.0,
            move_epsilon_rad: 2f64.to_radians(),
            alpha: 0.5,
            detent_rad: 15f64.to_radians(),
            marker_side_mm: 60.0,
        }
    }
}

impl TrackerConfig {
    /// Settings for noise-free input such as a virtual tabletop: every
    /// placement enters at once, removal leaves at once and every motion
    /// is reported.
    pub fn direct() -> Self {
        Self {
            enter_frames: 1,
            leave_ms: 0,
            move_epsilon_mm: 0.0,
            move_epsilon_rad: 0.0,
            alpha: 1.0,
            ..Self::default()
        }
    }
}

/// Angles in integer micro-degrees; dial bookkeeping is exact in this unit.
pub type MicroDegrees = i64;

const MICRODEGREES_PER_TURN: MicroDegrees = 360_000_000;

pub fn to_microdegrees(radians: f64) -> MicroDegrees {
    (radians.to_degrees() * 1e6).round() as MicroDegrees
}

pub fn from_microdegrees(units: MicroDegrees) -> f64 {
    (units as f64 / 1e6).to_radians()
}

fn wrap_microdegrees(delta: MicroDegrees) -> MicroDegrees {
    let half = MICRODEGREES_PER_TURN / 2;
    (delta + half).rem_euclid(MICRODEGREES_PER_TURN) - half
}

/// Integer core of [`dial_ticks`]: ticks truncate toward zero and the
/// remainder keeps the sign of the accumulated rotation.
pub fn dial_ticks_exact(
    accumulated: MicroDegrees,
    delta: MicroDegrees,
    detent: MicroDegrees,
) -> (i64, MicroDegrees) {
    assert!(detent > 0, "detent must be positive");
    let total = accumulated + delta;
    let ticks = total / detent;
    (ticks, total - ticks * detent)
}

/// Splits accumulated plus new rotation into whole detent ticks and the
/// remaining fractional progress (radians).
pub fn dial_ticks(accumulated: f64, delta: f64, detent: f64) -> (i64, f64) {
    let (ticks, rest) = dial_ticks_exact(
        to_microdegrees(accumulated),
        to_microdegrees(delta),
        to_microdegrees(detent),
    );
    (ticks, from_microdegrees(rest))
}

/// Exponential blend of two poses; the heading moves along the shorter arc.
pub fn smooth_pose(previous: &Pose2, observed: &Pose2, alpha: f64) -> Pose2 {
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    if alpha >= 1.0 {
        return *observed;
    }
    let lerp = |a: f64, b: f64| a + alpha * (b - a);
    let dtheta = normalize_angle(observed.theta - previous.theta);
    Pose2 {
        position: TablePoint::new(
            lerp(previous.position.x, observed.position.x),
            lerp(previous.position.y, observed.position.y),
        ),
        theta: normalize_angle(previous.theta + alpha * dtheta),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub marker_id: MarkerId,
    pub kind: ObjectKind,
    pub pose: Pose2,
    pub presence: Presence,
    pub last_seen: Millis,
    /// Fractional dial progress toward the next detent, radians.
    pub dial_angle_accumulator: f64,
    inside_streak: u32,
    reported_pose: Pose2,
    dial_reference: MicroDegrees,
    dial_remainder: MicroDegrees,
}

#[derive(Debug, Clone, Default)]
pub struct Tracker {
    config: TrackerConfig,
    objects: BTreeMap<MarkerId, TrackedObject>,
    last_now: Option<Millis>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            objects: BTreeMap::new(),
            last_now: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn object(&self, id: &MarkerId) -> Option<&TrackedObject> {
        self.objects.get(id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &TrackedObject> {
        self.objects.values()
    }

    /// Processes one sensor frame and returns the lifecycle events it caused,
    /// ordered entries first, then motion and ticks, then departures.
    pub fn ingest_frame(
        &mut self,
        detections: &[Detection],
        now: Millis,
    ) -> Result<Vec<ObjectEvent>, TrackerError> {
        if let Some(previous) = self.last_now {
            if now < previous {
                return Err(TrackerError::NonMonotonicTimestamp { previous, got: now });
            }
            if let Some(stale) = detections.iter().find(|d| d.timestamp < previous) {
                return Err(TrackerError::NonMonotonicTimestamp {
                    previous,
                    got: stale.timestamp,
                });
            }
        }
        self.last_now = Some(now);

        // Last sighting per marker wins within a frame.
        let mut seen: BTreeMap<&MarkerId, (&Detection, Pose2)> = BTreeMap::new();
        for d in detections.iter().filter(|d| d.kind.is_tracked()) {
            match pose_from_marker(&d.corners, self.config.marker_side_mm) {
                Ok(pose) => {
                    seen.insert(&d.marker_id, (d, pose));
                }
                Err(e) => log::debug!("dropping detection of {}: {e}", d.marker_id),
            }
        }

        let mut entered = Vec::new();
        let mut updates = Vec::new();
        let mut left = Vec::new();
        let cfg = &self.config;

        for (id, (det, observed)) in &seen {
            let inside = cfg.area.contains(observed);
            let obj = self
                .objects
                .entry((*id).clone())
                .or_insert_with(|| TrackedObject {
                    marker_id: (*id).clone(),
                    kind: det.kind,
                    pose: *observed,
                    presence: Presence::Out,
                    last_seen: now,
                    dial_angle_accumulator: 0.0,
                    inside_streak: 0,
                    reported_pose: *observed,
                    dial_reference: 0,
                    dial_remainder: 0,
                });
            match obj.presence {
                Presence::Out => {
                    obj.inside_streak = if inside { obj.inside_streak + 1 } else { 0 };
                    if obj.inside_streak >= cfg.enter_frames {
                        obj.kind = det.kind;
                        obj.presence = Presence::In;
                        obj.pose = *observed;
                        obj.reported_pose = *observed;
                        obj.last_seen = now;
                        obj.dial_reference = to_microdegrees(observed.theta);
                        obj.dial_remainder = 0;
                        obj.dial_angle_accumulator = 0.0;
                        entered.push(ObjectEvent::Entered {
                            id: obj.marker_id.clone(),
                            kind: obj.kind,
                            pose: *observed,
                        });
                    }
                }
                Presence::In if inside => {
                    obj.last_seen = now;
                    obj.pose = smooth_pose(&obj.pose, observed, cfg.alpha);
                    if obj.kind == ObjectKind::DialToken {
                        let raw = to_microdegrees(observed.theta);
                        let delta = wrap_microdegrees(raw - obj.dial_reference);
                        obj.dial_reference = raw;
                        let (ticks, rest) = dial_ticks_exact(
                            obj.dial_remainder,
                            delta,
                            to_microdegrees(cfg.detent_rad),
                        );
                        obj.dial_remainder = rest;
                        obj.dial_angle_accumulator = from_microdegrees(rest);
                        if ticks != 0 {
                            updates.push(ObjectEvent::DialTicked {
                                id: obj.marker_id.clone(),
                                ticks,
                            });
                        }
                    }
                    let shift = obj.pose.position.distance(&obj.reported_pose.position);
                    let turn = normalize_angle(obj.pose.theta - obj.reported_pose.theta).abs();
                    if shift > cfg.move_epsilon_mm || turn > cfg.move_epsilon_rad {
                        obj.reported_pose = obj.pose;
                        updates.push(ObjectEvent::Moved {
                            id: obj.marker_id.clone(),
                            pose: obj.pose,
                        });
                    }
                }
                // Seen outside the area while present: treated as absent.
                Presence::In => {}
            }
        }

        for obj in self.objects.values_mut() {
            let inside_now = seen
                .get(&obj.marker_id)
                .is_some_and(|(_, pose)| cfg.area.contains(pose));
            match obj.presence {
                Presence::In if !inside_now && now.saturating_sub(obj.last_seen) >= cfg.leave_ms => {
                    obj.presence = Presence::Out;
                    obj.inside_streak = 0;
                    obj.dial_remainder = 0;
                    obj.dial_angle_accumulator = 0.0;
                    left.push(ObjectEvent::Left {
                        id: obj.marker_id.clone(),
                    });
                }
                Presence::Out if !seen.contains_key(&obj.marker_id) => obj.inside_streak = 0,
                _ => {}
            }
        }

        entered.extend(updates);
        entered.extend(left);
        Ok(entered)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

/// Parses a detection trace (`ts marker_id kind x0 y0 x1 y1 x2 y2 x3 y3` per
/// line) into frames grouped by timestamp, in file order.
pub fn parse_trace(text: &str) -> Result<Vec<(Millis, Vec<Detection>)>, TraceParseError> {
    let mut frames: Vec<(Millis, Vec<Detection>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| TraceParseError {
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 11 {
            return Err(err(format!("expected 11 fields, found {}", fields.len())));
        }
        let ts: f64 = fields[0].parse().map_err(|e| err(format!("timestamp: {e}")))?;
        if !(ts >= 0.0 && ts.is_finite()) {
            return Err(err("timestamp must be a non-negative number".into()));
        }
        let ts = ts.round() as Millis;
        let kind: ObjectKind = fields[2].parse().map_err(err)?;
        let mut coords = [0.0f64; 8];
        for (slot, text) in coords.iter_mut().zip(&fields[3..]) {
            *slot = text.parse().map_err(|e| err(format!("coordinate `{text}`: {e}")))?;
        }
        let corners = [0, 1, 2, 3].map(|i| TablePoint::new(coords[2 * i], coords[2 * i + 1]));
        let detection = Detection {
            marker_id: MarkerId::new(fields[1]),
            kind,
            corners,
            timestamp: ts,
        };
        match frames.last_mut() {
            Some((last_ts, dets)) if *last_ts == ts => dets.push(detection),
            Some((last_ts, _)) if *last_ts > ts => {
                return Err(err(format!("timestamp {ts} goes backwards")));
            }
            _ => frames.push((ts, vec![detection])),
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::marker_corners;
    use std::f64::consts::PI;

    fn det(id: &str, kind: ObjectKind, x: f64, y: f64, theta: f64, ts: Millis) -> Detection {
        Detection {
            marker_id: MarkerId::new(id),
            kind,
            corners: marker_corners(&Pose2::new(x, y, theta), 60.0),
            timestamp: ts,
        }
    }

    #[test]
    fn enters_after_two_frames() {
        let mut t = Tracker::new(TrackerConfig::default());
        let d = |ts| det("P1", ObjectKind::MarkedPaper, 300.0, 300.0, 0.0, ts);
        assert!(t.ingest_frame(&[d(0)], 0).unwrap().is_empty());
        let ev = t.ingest_frame(&[d(33)], 33).unwrap();
        assert_eq!(ev.len(), 1);
        assert!(matches!(&ev[0], ObjectEvent::Entered { id, .. } if id.as_str() == "P1"));
        assert!(t.ingest_frame(&[d(66)], 66).unwrap().is_empty());
    }

    #[test]
    fn short_gap_does_not_leave() {
        // Three-frame dropout at 33 ms spacing is 99 ms < leave_ms.
        let mut t = Tracker::new(TrackerConfig::default());
        let d = |ts| det("P1", ObjectKind::MarkedPaper, 300.0, 300.0, 0.0, ts);
        let mut events = Vec::new();
        for ts in [0, 33] {
            events.extend(t.ingest_frame(&[d(ts)], ts).unwrap());
        }
        for ts in [66, 99, 132] {
            events.extend(t.ingest_frame(&[], ts).unwrap());
        }
        events.extend(t.ingest_frame(&[d(165)], 165).unwrap());
        assert_eq!(events.len(), 1);
        assert!(!events.iter().any(|e| matches!(e, ObjectEvent::Left { .. })));
    }

    #[test]
    fn leaves_after_leave_ms() {
        let mut t = Tracker::new(TrackerConfig::default());
        let d = |ts| det("P1", ObjectKind::MarkedPaper, 300.0, 300.0, 0.0, ts);
        t.ingest_frame(&[d(0)], 0).unwrap();
        t.ingest_frame(&[d(10)], 10).unwrap();
        assert!(t.ingest_frame(&[], 509).unwrap().is_empty());
        let ev = t.ingest_frame(&[], 510).unwrap();
        assert_eq!(ev, vec![ObjectEvent::Left { id: MarkerId::new("P1") }]);
    }

    #[test]
    fn outside_detection_counts_as_absent() {
        let mut t = Tracker::new(TrackerConfig::default());
        t.ingest_frame(&[det("P1", ObjectKind::MarkedPaper, 100.0, 100.0, 0.0, 0)], 0).unwrap();
        t.ingest_frame(&[det("P1", ObjectKind::MarkedPaper, 100.0, 100.0, 0.0, 10)], 10).unwrap();
        let ev = t
            .ingest_frame(&[det("P1", ObjectKind::MarkedPaper, -200.0, 100.0, 0.0, 600)], 600)
            .unwrap();
        assert_eq!(ev, vec![ObjectEvent::Left { id: MarkerId::new("P1") }]);
        let obj = t.object(&MarkerId::new("P1")).unwrap();
        assert!(t.config().area.contains(&obj.pose));
    }

    #[test]
    fn plain_paper_is_silent() {
        let mut t = Tracker::new(TrackerConfig::default());
        for ts in 0..5 {
            let ev = t
                .ingest_frame(&[det("-", ObjectKind::PlainPaper, 500.0, 500.0, 0.0, ts)], ts)
                .unwrap();
            assert!(ev.is_empty());
        }
        assert_eq!(t.objects().count(), 0);
    }

    #[test]
    fn rejects_time_going_backwards() {
        let mut t = Tracker::new(TrackerConfig::default());
        t.ingest_frame(&[], 100).unwrap();
        assert_eq!(
            t.ingest_frame(&[], 99),
            Err(TrackerError::NonMonotonicTimestamp { previous: 100, got: 99 })
        );
    }

    #[test]
    fn dial_rotation_produces_ticks() {
        let mut t = Tracker::new(TrackerConfig::direct());
        let dial = |theta: f64, ts| det("D", ObjectKind::DialToken, 700.0, 500.0, theta, ts);
        t.ingest_frame(&[dial(0.0, 0)], 0).unwrap();
        let ev = t.ingest_frame(&[dial(47f64.to_radians(), 1)], 1).unwrap();
        let ticks: Vec<i64> = ev
            .iter()
            .filter_map(|e| match e {
                ObjectEvent::DialTicked { ticks, .. } => Some(*ticks),
                _ => None,
            })
            .collect();
        assert_eq!(ticks, vec![3]);
        let acc = t.object(&MarkerId::new("D")).unwrap().dial_angle_accumulator;
        assert!((acc - 2f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn dial_ticks_examples() {
        let (n, rem) = dial_ticks(0.0, 0.8203, 15f64.to_radians());
        assert_eq!(n, 3);
        assert!((rem.to_degrees() - 2.0).abs() < 0.01);
        let (n, rem) = dial_ticks(0.0, (-16f64).to_radians(), 15f64.to_radians());
        assert_eq!(n, -1);
        assert!((rem.to_degrees() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn smooth_pose_examples() {
        let obs = Pose2::new(10.0, 10.0, 0.0);
        assert_eq!(smooth_pose(&Pose2::new(-3.0, 7.0, 1.0), &obs, 1.0), obs);
        let mid = smooth_pose(&Pose2::new(0.0, 0.0, 0.0), &Pose2::new(10.0, 0.0, 0.0), 0.5);
        assert_eq!(mid, Pose2::new(5.0, 0.0, 0.0));
    }

    #[test]
    fn smooth_pose_takes_short_arc() {
        // Oracle: the heading of the mean of the two unit vectors.
        let (a, b) = (3.1f64, -3.1f64);
        let oracle = (a.sin() + b.sin()).atan2(a.cos() + b.cos());
        let got = smooth_pose(&Pose2::new(0.0, 0.0, a), &Pose2::new(0.0, 0.0, b), 0.5).theta;
        assert!(normalize_angle(got - oracle).abs() < 1e-12);
        assert!(normalize_angle(got - PI).abs() < 1e-9);
    }

    #[test]
    fn parse_trace_groups_frames() {
        let text = "0 P1 paper 0 0 10 0 10 10 0 10\n0 D dial 100 100 110 100 110 110 100 110\n33 P1 paper 0 0 10 0 10 10 0 10\n";
        let frames = parse_trace(text).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].1.len(), 2);
        assert_eq!(frames[1].0, 33);
        assert!(parse_trace("0 P1 paper 1 2 3\n").is_err());
        assert!(parse_trace("5 P1 paper 0 0 10 0 10 10 0 10\n1 P1 paper 0 0 10 0 10 10 0 10\n").is_err());
    }
}
