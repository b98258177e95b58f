//! Property map behind the house token: Web-Mercator tile math, view state
//! driven by the dial and clicks, geocoding and tile fetching.

mod geocode;
mod placeholder;
mod tiles;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geocode::{GeocodeError, Geocoder, HttpGeocoder, OfflineGeocoder};
pub use placeholder::placeholder_tile;
pub use tiles::{HttpTransport, TileClient, TileTransport, TransportError};

/// Latitude band where Web-Mercator is defined (degrees).
pub const MAX_LATITUDE: f64 = 85.0511;
pub const MAX_ZOOM: u8 = 19;
pub const TILE_SIZE_PX: f64 = 256.0;
/// Projected pixels per table millimeter (1920 px across 1500 mm).
pub const PROJECTOR_PX_PER_MM: f64 = 1.28;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

fn wrap_lon(lon: f64) -> f64 {
    (lon + 180.0).rem_euclid(360.0) - 180.0
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, MapError> {
        if !(lat.is_finite() && lon.is_finite())
            || lat.abs() > MAX_LATITUDE
            || !(-180.0..180.0).contains(&lon)
        {
            return Err(MapError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    /// Clamps latitude into the Mercator band and wraps longitude.
    pub fn clamped(lat: f64, lon: f64) -> Self {
        Self {
            lat: lat.clamp(-MAX_LATITUDE, MAX_LATITUDE),
            lon: wrap_lon(lon),
        }
    }
}

impl Default for GeoPoint {
    /// Zurich main station.
    fn default() -> Self {
        Self {
            lat: 47.3779,
            lon: 8.5403,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    #[default]
    Street,
    Satellite,
}

impl MapMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapMode::Street => "street",
            MapMode::Satellite => "satellite",
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            MapMode::Street => MapMode::Satellite,
            MapMode::Satellite => MapMode::Street,
        }
    }
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "street" => Ok(MapMode::Street),
            "satellite" | "sat" => Ok(MapMode::Satellite),
            other => Err(format!("unknown map mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapViewState {
    pub center: GeoPoint,
    pub zoom: u8,
    pub mode: MapMode,
}

impl Default for MapViewState {
    fn default() -> Self {
        Self {
            center: GeoPoint::default(),
            zoom: 15,
            mode: MapMode::Street,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileRef {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

impl TileRef {
    pub fn new(z: u8, x: u32, y: u32) -> Option<Self> {
        let n = 1u64 << z;
        (z <= 30 && u64::from(x) < n && u64::from(y) < n).then_some(Self { z, x, y })
    }
}

impl fmt::Display for TileRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.z, self.x, self.y)
    }
}

/// Fractional tile coordinates of a point at `zoom`.
pub fn to_tile_fraction(p: &GeoPoint, zoom: u8) -> (f64, f64) {
    let n = f64::from(1u32 << zoom);
    let phi = p.lat.to_radians();
    let x = (p.lon + 180.0) / 360.0 * n;
    let y = (1.0 - phi.tan().asinh() / PI) / 2.0 * n;
    (x, y)
}

pub fn from_tile_fraction(x: f64, y: f64, zoom: u8) -> GeoPoint {
    let n = f64::from(1u32 << zoom);
    let lon = x / n * 360.0 - 180.0;
    let lat = (PI * (1.0 - 2.0 * y / n)).sinh().atan().to_degrees();
    GeoPoint { lat, lon }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum MapInput {
    DialTicks { n: i64 },
    ToggleMode,
    /// Offset in table millimeters at the current zoom.
    Pan { dx: f64, dy: f64 },
}

pub fn adjust_view(state: &MapViewState, input: &MapInput) -> MapViewState {
    let mut next = *state;
    match *input {
        MapInput::DialTicks { n } => {
            next.zoom = (i64::from(state.zoom) + n).clamp(0, i64::from(MAX_ZOOM)) as u8;
        }
        MapInput::ToggleMode => next.mode = state.mode.toggled(),
        MapInput::Pan { dx, dy } => {
            let (tx, ty) = to_tile_fraction(&state.center, state.zoom);
            let per_mm = PROJECTOR_PX_PER_MM / TILE_SIZE_PX;
            let moved = from_tile_fraction(tx + dx * per_mm, ty + dy * per_mm, state.zoom);
            next.center = GeoPoint::clamped(moved.lat, moved.lon);
        }
    }
    next
}

/// Tiles covering a paper-sized viewport centered on the view, ordered by
/// row then column. Columns wrap around the antimeridian; rows are clipped.
pub fn tiles_for_view(state: &MapViewState, paper_mm: (f64, f64), px_per_mm: f64) -> Vec<TileRef> {
    let z = state.zoom.min(MAX_ZOOM);
    let n = 1i64 << z;
    let (cx, cy) = to_tile_fraction(&state.center, z);
    let half_w = paper_mm.0.abs() * px_per_mm / 2.0 / TILE_SIZE_PX;
    let half_h = paper_mm.1.abs() * px_per_mm / 2.0 / TILE_SIZE_PX;
    let span = |c: f64, half: f64| {
        let lo = (c - half).floor() as i64;
        let hi = ((c + half).ceil() as i64 - 1).max(lo);
        (lo, hi)
    };
    let (x0, x1) = span(cx, half_w);
    let (y0, y1) = span(cy, half_h);
    let x1 = x1.min(x0 + n - 1);
    let mut out = BTreeSet::new();
    for y in y0.max(0)..=y1.min(n - 1) {
        for x in x0..=x1 {
            out.insert((y, x.rem_euclid(n)));
        }
    }
    out.into_iter()
        .map(|(y, x)| TileRef {
            z,
            x: x as u32,
            y: y as u32,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoom_zero_is_single_tile() {
        for (lat, lon) in [(0.0, 0.0), (85.0, -179.9), (-60.0, 120.0)] {
            let s = MapViewState {
                center: GeoPoint::new(lat, lon).unwrap(),
                zoom: 0,
                mode: MapMode::Street,
            };
            assert_eq!(tiles_for_view(&s, (210.0, 297.0), 4.0), vec![TileRef { z: 0, x: 0, y: 0 }]);
        }
    }

    #[test]
    fn lenzburg_tile() {
        let s = MapViewState {
            center: GeoPoint::new(47.3887, 8.1744).unwrap(),
            zoom: 12,
            mode: MapMode::Street,
        };
        let tiles = tiles_for_view(&s, (1.0, 1.0), 1.0);
        assert!(tiles.contains(&TileRef { z: 12, x: 2141, y: 1434 }));
        assert_eq!(tiles.len(), 1);
    }

    #[test]
    fn viewport_spans_neighbours() {
        let s = MapViewState {
            center: GeoPoint::new(47.3887, 8.1744).unwrap(),
            zoom: 12,
            mode: MapMode::Street,
        };
        // 210 × 297 mm at 1.28 px/mm is about 1.05 × 1.49 tiles.
        let tiles = tiles_for_view(&s, (210.0, 297.0), PROJECTOR_PX_PER_MM);
        assert!(tiles.len() >= 4);
        assert!(tiles.iter().all(|t| t.z == 12 && t.x < 4096 && t.y < 4096));
    }

    #[test]
    fn adjust_view_examples() {
        let s = MapViewState {
            zoom: 19,
            ..MapViewState::default()
        };
        assert_eq!(adjust_view(&s, &MapInput::DialTicks { n: 3 }).zoom, 19);
        let s = MapViewState {
            zoom: 12,
            ..MapViewState::default()
        };
        assert_eq!(adjust_view(&s, &MapInput::DialTicks { n: -2 }).zoom, 10);
        let twice = adjust_view(&adjust_view(&s, &MapInput::ToggleMode), &MapInput::ToggleMode);
        assert_eq!(twice, s);
        assert_eq!(adjust_view(&s, &MapInput::ToggleMode).mode, MapMode::Satellite);
    }

    #[test]
    fn pan_moves_east_and_south() {
        let s = MapViewState::default();
        let moved = adjust_view(&s, &MapInput::Pan { dx: 100.0, dy: 100.0 });
        assert!(moved.center.lon > s.center.lon);
        assert!(moved.center.lat < s.center.lat);
        let back = adjust_view(&moved, &MapInput::Pan { dx: -100.0, dy: -100.0 });
        assert!((back.center.lat - s.center.lat).abs() < 1e-9);
        assert!((back.center.lon - s.center.lon).abs() < 1e-9);
    }

    #[test]
    fn geopoint_validation() {
        assert!(GeoPoint::new(86.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 180.0).is_err());
        assert_eq!(GeoPoint::clamped(90.0, 190.0), GeoPoint { lat: MAX_LATITUDE, lon: -170.0 });
    }
}
