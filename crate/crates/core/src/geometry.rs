//! Table-plane geometry: sensor calibration, marker poses and the
//! interaction area.
//!
//! All table coordinates are millimeters with the origin at the advisor-side
//! left corner of the interaction area. Angles are radians in `[-π, π)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate calibration: {0}")]
    DegenerateConfiguration(String),
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("homography is not invertible (|det| = {0:e})")]
    NotInvertible(f64),
    #[error("marker corners do not form a convex quadrilateral")]
    NonConvexCorners,
}

/// A point on the table plane, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TablePoint {
    pub x: f64,
    pub y: f64,
}

impl TablePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &TablePoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A point in abstract sensor pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorPoint {
    pub x: f64,
    pub y: f64,
}

impl SensorPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Position and orientation of an object on the table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: TablePoint,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            position: TablePoint::new(x, y),
            theta: normalize_angle(theta),
        }
    }
}

/// Projective map from sensor pixels to the table plane.
///
/// Stored normalized so the bottom-right entry is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: Matrix3<f64>,
}

const MIN_DETERMINANT: f64 = 1e-9;
const MIN_HOMOGENEOUS_W: f64 = 1e-12;

impl Homography {
    pub fn identity() -> Self {
        Self {
            h: Matrix3::identity(),
        }
    }

    /// Normalizes `m` so `m[(2,2)] == 1` and checks invertibility.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let scale = m[(2, 2)];
        if !scale.is_finite() || scale.abs() < f64::EPSILON {
            return Err(GeometryError::DegenerateConfiguration(
                "bottom-right entry is zero, cannot normalize".into(),
            ));
        }
        let h = m / scale;
        let det = h.determinant();
        if !det.is_finite() || det.abs() <= MIN_DETERMINANT {
            return Err(GeometryError::NotInvertible(det.abs()));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .h
            .try_inverse()
            .ok_or(GeometryError::NotInvertible(self.h.determinant().abs()))?;
        Self::from_matrix(inv)
    }

    /// Applies the map with perspective divide.
    pub fn map_point(&self, p: SensorPoint) -> Result<TablePoint, GeometryError> {
        let (x, y) = self.apply(p.x, p.y)?;
        Ok(TablePoint::new(x, y))
    }

    /// Applies the map to raw coordinates; used for both directions.
    pub fn apply(&self, x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
        let v = self.h * Vector3::new(x, y, 1.0);
        if v.z.abs() < MIN_HOMOGENEOUS_W {
            return Err(GeometryError::PointAtInfinity(v.z));
        }
        Ok((v.x / v.z, v.y / v.z))
    }

    /// Largest absolute entry-wise difference to another homography.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.h - other.h).abs().max()
    }
}

impl fmt::Display for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..3 {
            writeln!(
                f,
                "{:.12} {:.12} {:.12}",
                self.h[(r, 0)],
                self.h[(r, 1)],
                self.h[(r, 2)]
            )?;
        }
        Ok(())
    }
}

/// Convenience for [`Homography::map_point`].
pub fn map_point(h: &Homography, p: SensorPoint) -> Result<TablePoint, GeometryError> {
    h.map_point(p)
}

/// One sensor↔table pair used for calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub sensor: SensorPoint,
    pub table: TablePoint,
}

// Similarity transform moving the centroid to the origin and the mean
// distance to √2.
fn hartley_normalizer(points: &[(f64, f64)]) -> Result<Matrix3<f64>, GeometryError> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p.0 - cx).hypot(p.1 - cy))
        .sum::<f64>()
        / n;
    if !mean_dist.is_finite() || mean_dist <= f64::EPSILON {
        return Err(GeometryError::DegenerateConfiguration(
            "all points coincide".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

const COLLINEAR_TOLERANCE: f64 = 1e-9;
const EXHAUSTIVE_COLLINEARITY_LIMIT: usize = 64;

fn check_general_position(normalized: &[(f64, f64)]) -> Result<(), GeometryError> {
    let area2 = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs()
    };
    if normalized.len() <= EXHAUSTIVE_COLLINEARITY_LIMIT {
        for i in 0..normalized.len() {
            for j in i + 1..normalized.len() {
                for k in j + 1..normalized.len() {
                    if area2(normalized[i], normalized[j], normalized[k]) < COLLINEAR_TOLERANCE {
                        return Err(GeometryError::DegenerateConfiguration(format!(
                            "sensor points {i}, {j}, {k} are collinear"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Fits the sensor→table homography with the normalized direct linear
/// transform. Exact for consistent input.
pub fn fit_homography(pairs: &[Correspondence]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {}",
            pairs.len()
        )));
    }
    let src: Vec<(f64, f64)> = pairs.iter().map(|c| (c.sensor.x, c.sensor.y)).collect();
    let dst: Vec<(f64, f64)> = pairs.iter().map(|c| (c.table.x, c.table.y)).collect();
    if src
        .iter()
        .chain(dst.iter())
        .any(|p| !p.0.is_finite() || !p.1.is_finite())
    {
        return Err(GeometryError::DegenerateConfiguration(
            "non-finite coordinate".into(),
        ));
    }

    let t_src = hartley_normalizer(&src)?;
    let t_dst = hartley_normalizer(&dst)?;
    let apply = |t: &Matrix3<f64>, p: (f64, f64)| (t[(0, 0)] * p.0 + t[(0, 2)], t[(1, 1)] * p.1 + t[(1, 2)]);
    let ns: Vec<(f64, f64)> = src.iter().map(|&p| apply(&t_src, p)).collect();
    let nd: Vec<(f64, f64)> = dst.iter().map(|&p| apply(&t_dst, p)).collect();
    check_general_position(&ns)?;

    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in ns.iter().zip(nd.iter()).enumerate() {
        let (x, y) = *s;
        let (u, v) = *d;
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| GeometryError::DegenerateConfiguration("svd failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = order[1];
    let largest = *order.last().unwrap_or(&smallest);
    // A second (near-)null direction means the pairs do not pin down a
    // unique map.
    if svd.singular_values[second] <= 1e-10 * svd.singular_values[largest] {
        return Err(GeometryError::DegenerateConfiguration(
            "correspondences do not determine a unique homography".into(),
        ));
    }

    let row = v_t.row(smallest);
    let h_norm = Matrix3::new(
        row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[7], row[8],
    );
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateConfiguration("normalizer not invertible".into()))?;
    Homography::from_matrix(t_dst_inv * h_norm * t_src)
}

/// Recovers the pose of a square marker from its four corners, given in the
/// marker's own corner order.
///
/// The position is the corner centroid. The heading is the direction of the
/// first edge (`corners[0] → corners[1]`); it is estimated from all four
/// edges, each rotated back onto the first, which is exact for square
/// markers and averages out per-corner noise.
pub fn pose_from_marker(corners: &[TablePoint; 4], marker_side: f64) -> Result<Pose2, GeometryError> {
    if corners.iter().any(|c| !c.is_finite()) {
        return Err(GeometryError::NonConvexCorners);
    }
    let edge = |i: usize| {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        (b.x - a.x, b.y - a.y)
    };
    let eps = 1e-9 * marker_side.abs().max(1.0).powi(2);
    let mut sign = 0.0f64;
    for i in 0..4 {
        let (ax, ay) = edge(i);
        let (bx, by) = edge((i + 1) % 4);
        let cross = ax * by - ay * bx;
        if cross.abs() <= eps {
            return Err(GeometryError::NonConvexCorners);
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return Err(GeometryError::NonConvexCorners);
        }
    }
    // Rotate edge k back by k quarter turns (direction depends on winding).
    let mut dx = 0.0;
    let mut dy = 0.0;
    for k in 0..4 {
        let (ex, ey) = edge(k);
        let (rx, ry) = match (k, sign > 0.0) {
            (0, _) => (ex, ey),
            (2, _) => (-ex, -ey),
            (1, true) | (3, false) => (ey, -ex),
            (1, false) | (3, true) => (-ey, ex),
            _ => unreachable!(),
        };
        dx += rx;
        dy += ry;
    }
    let cx = corners.iter().map(|c| c.x).sum::<f64>() / 4.0;
    let cy = corners.iter().map(|c| c.y).sum::<f64>() / 4.0;
    Ok(Pose2 {
        position: TablePoint::new(cx, cy),
        theta: normalize_angle(dy.atan2(dx)),
    })
}

/// Corners of an axis-aligned square marker of side `side` rotated to
/// `pose`, counter-clockwise starting at the marker's local (-s/2, -s/2).
pub fn marker_corners(pose: &Pose2, side: f64) -> [TablePoint; 4] {
    let h = side / 2.0;
    let (s, c) = pose.theta.sin_cos();
    let local = [(-h, -h), (h, -h), (h, h), (-h, h)];
    local.map(|(lx, ly)| {
        TablePoint::new(
            pose.position.x + c * lx - s * ly,
            pose.position.y + s * lx + c * ly,
        )
    })
}

/// The closed rectangle of the table where the system reacts to objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionArea {
    pub min: TablePoint,
    pub max: TablePoint,
}

impl InteractionArea {
    pub fn new(min: TablePoint, max: TablePoint) -> Result<Self, GeometryError> {
        if !(max.x > min.x && max.y > min.y) || !min.is_finite() || !max.is_finite() {
            return Err(GeometryError::DegenerateConfiguration(
                "interaction area needs positive width and height".into(),
            ));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> TablePoint {
        TablePoint::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
        )
    }

    pub fn contains_point(&self, p: &TablePoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains(&self, pose: &Pose2) -> bool {
        self.contains_point(&pose.position)
    }
}

impl Default for InteractionArea {
    /// 1500 mm × 1000 mm, about 1.5 m².
    fn default() -> Self {
        Self {
            min: TablePoint::new(0.0, 0.0),
            max: TablePoint::new(1500.0, 1000.0),
        }
    }
}

pub fn contains(area: &InteractionArea, pose: &Pose2) -> bool {
    area.contains(pose)
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseCorrespondenceError {
    pub line: usize,
    pub message: String,
}

/// Parses a calibration file: `sx sy tx ty` per line, `#` starts a comment.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>, ParseCorrespondenceError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let nums: Result<Vec<f64>, _> = line.split_whitespace().map(f64::from_str).collect();
        let nums = nums.map_err(|e| ParseCorrespondenceError {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if nums.len() != 4 {
            return Err(ParseCorrespondenceError {
                line: idx + 1,
                message: format!("expected 4 numbers, found {}", nums.len()),
            });
        }
        out.push(Correspondence {
            sensor: SensorPoint::new(nums[0], nums[1]),
            table: TablePoint::new(nums[2], nums[3]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(sx: f64, sy: f64, tx: f64, ty: f64) -> Correspondence {
        Correspondence {
            sensor: SensorPoint::new(sx, sy),
            table: TablePoint::new(tx, ty),
        }
    }

    #[test]
    fn identity_pairs_give_identity() {
        let pairs = [
            pair(0.0, 0.0, 0.0, 0.0),
            pair(1.0, 0.0, 1.0, 0.0),
            pair(0.0, 1.0, 0.0, 1.0),
            pair(1.0, 1.0, 1.0, 1.0),
        ];
        let h = fit_homography(&pairs).unwrap();
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn three_points_are_degenerate() {
        let pairs = [
            pair(0.0, 0.0, 0.0, 0.0),
            pair(1.0, 0.0, 1.0, 0.0),
            pair(0.0, 1.0, 0.0, 1.0),
        ];
        assert!(matches!(
            fit_homography(&pairs),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn collinear_sensor_points_are_degenerate() {
        let pairs = [
            pair(0.0, 0.0, 0.0, 0.0),
            pair(1.0, 1.0, 1.0, 0.0),
            pair(2.0, 2.0, 0.0, 1.0),
            pair(5.0, 1.0, 1.0, 1.0),
        ];
        assert!(matches!(
            fit_homography(&pairs),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn map_point_identity_and_scale() {
        let p = SensorPoint::new(10.0, 20.0);
        assert_eq!(
            Homography::identity().map_point(p).unwrap(),
            TablePoint::new(10.0, 20.0)
        );
        let h = Homography::from_matrix(Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0))).unwrap();
        assert_eq!(h.map_point(p).unwrap(), TablePoint::new(20.0, 40.0));
    }

    #[test]
    fn point_at_infinity() {
        // Third row (1, 0, 1) sends x = -1 to w = 0.
        let h = Homography::from_matrix(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(matches!(
            h.map_point(SensorPoint::new(-1.0, 3.0)),
            Err(GeometryError::PointAtInfinity(_))
        ));
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            Homography::from_matrix(m),
            Err(GeometryError::NotInvertible(_))
        ));
    }

    #[test]
    fn axis_aligned_square_pose() {
        let c = [
            TablePoint::new(0.0, 0.0),
            TablePoint::new(10.0, 0.0),
            TablePoint::new(10.0, 10.0),
            TablePoint::new(0.0, 10.0),
        ];
        let pose = pose_from_marker(&c, 10.0).unwrap();
        assert_eq!(pose.position, TablePoint::new(5.0, 5.0));
        assert_eq!(pose.theta, 0.0);
    }

    #[test]
    fn quarter_turn_square_pose() {
        // Same square rotated 90° about (5, 5): each corner moves to the next.
        let c = [
            TablePoint::new(10.0, 0.0),
            TablePoint::new(10.0, 10.0),
            TablePoint::new(0.0, 10.0),
            TablePoint::new(0.0, 0.0),
        ];
        let pose = pose_from_marker(&c, 10.0).unwrap();
        assert!((pose.position.x - 5.0).abs() < 1e-12);
        assert!((pose.theta - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn clockwise_winding_keeps_first_edge_heading() {
        let c = [
            TablePoint::new(0.0, 10.0),
            TablePoint::new(10.0, 10.0),
            TablePoint::new(10.0, 0.0),
            TablePoint::new(0.0, 0.0),
        ];
        let pose = pose_from_marker(&c, 10.0).unwrap();
        assert!(pose.theta.abs() < 1e-12);
    }

    #[test]
    fn bow_tie_is_not_convex() {
        let c = [
            TablePoint::new(0.0, 0.0),
            TablePoint::new(10.0, 10.0),
            TablePoint::new(10.0, 0.0),
            TablePoint::new(0.0, 10.0),
        ];
        assert_eq!(pose_from_marker(&c, 10.0), Err(GeometryError::NonConvexCorners));
        let dented = [
            TablePoint::new(0.0, 0.0),
            TablePoint::new(10.0, 0.0),
            TablePoint::new(2.0, 2.0),
            TablePoint::new(0.0, 10.0),
        ];
        assert_eq!(pose_from_marker(&dented, 10.0), Err(GeometryError::NonConvexCorners));
    }

    #[test]
    fn area_containment() {
        let area = InteractionArea::default();
        assert!(area.contains(&Pose2::new(750.0, 500.0, 0.0)));
        assert!(!area.contains(&Pose2::new(-1.0, 0.0, 0.0)));
        assert!(area.contains(&Pose2::new(1500.0, 300.0, 0.0)));
        assert!(area.contains(&Pose2::new(0.0, 0.0, 0.0)));
        assert!((area.width() * area.height() - 1.5e6).abs() < 1e-6);
    }

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), -PI);
        assert_eq!(normalize_angle(-PI), -PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!(normalize_angle(-1e-20) < PI);
    }

    #[test]
    fn parse_pairs_file() {
        let text = "# sensor -> table\n0 0 0 0\n640 0 1500 0 # corner\n\n640 480 1500 1000\n0 480 0 1000\n";
        let pairs = parse_correspondences(text).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs[1].table, TablePoint::new(1500.0, 0.0));
        let err = parse_correspondences("1 2 3\n").unwrap_err();
        assert_eq!(err.line, 1);
    }
}
