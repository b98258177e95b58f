use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use super::GeoPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeocodeError {
    #[error("address not found: {0}")]
    AddressNotFound(String),
    #[error("geocoding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("bad geocoder fixture line {line}: {message}")]
    BadFixture { line: usize, message: String },
}

pub trait Geocoder: Send + Sync {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError>;
}

impl<G: Geocoder + ?Sized> Geocoder for Arc<G> {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        (**self).geocode(address)
    }
}

/// Exact-match lookup in an `address TAB lat TAB lon` fixture table.
#[derive(Debug, Clone, Default)]
pub struct OfflineGeocoder {
    entries: HashMap<String, GeoPoint>,
}

impl OfflineGeocoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, GeocodeError> {
        let mut entries = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let bad = |message: String| GeocodeError::BadFixture { line: idx + 1, message };
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected `address<TAB>lat<TAB>lon`".into()));
            }
            let lat: f64 = fields[1].trim().parse().map_err(|e| bad(format!("lat: {e}")))?;
            let lon: f64 = fields[2].trim().parse().map_err(|e| bad(format!("lon: {e}")))?;
            let point = GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?;
            entries.insert(fields[0].to_string(), point);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, address: impl Into<String>, point: GeoPoint) {
        self.entries.insert(address.into(), point);
    }
}

impl Geocoder for OfflineGeocoder {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        self.entries
            .get(address)
            .copied()
            .ok_or_else(|| GeocodeError::AddressNotFound(address.to_string()))
    }
}

/// Nominatim-compatible search endpoint (`{base}/search?format=json&q=`).
pub struct HttpGeocoder {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpGeocoder {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(5)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }
}

#[derive(serde::Deserialize)]
struct SearchHit {
    lat: String,
    lon: String,
}

impl Geocoder for HttpGeocoder {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        let url = format!("{}/search", self.base_url);
        let mut response = self
            .agent
            .get(&url)
            .query("format", "json")
            .query("limit", "1")
            .query("q", address)
            .call()
            .map_err(|e| GeocodeError::ProviderUnreachable(e.to_string()))?;
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GeocodeError::ProviderUnreachable(e.to_string()))?;
        let hits: Vec<SearchHit> = serde_json::from_str(&body)
            .map_err(|e| GeocodeError::ProviderUnreachable(format!("bad response: {e}")))?;
        let hit = hits
            .first()
            .ok_or_else(|| GeocodeError::AddressNotFound(address.to_string()))?;
        let lat: f64 = hit
            .lat
            .parse()
            .map_err(|_| GeocodeError::ProviderUnreachable("bad latitude".into()))?;
        let lon: f64 = hit
            .lon
            .parse()
            .map_err(|_| GeocodeError::ProviderUnreachable("bad longitude".into()))?;
        Ok(GeoPoint::clamped(lat, lon))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_lookup() {
        let g = OfflineGeocoder::parse("# address\tlat\tlon\nFlorastreet 6, Lenzburg\t47.3887\t8.1744\n").unwrap();
        assert_eq!(
            g.geocode("Florastreet 6, Lenzburg").unwrap(),
            GeoPoint { lat: 47.3887, lon: 8.1744 }
        );
        assert_eq!(
            g.geocode("Nowhere 1"),
            Err(GeocodeError::AddressNotFound("Nowhere 1".into()))
        );
    }

    #[test]
    fn bad_fixture_line() {
        assert!(matches!(
            OfflineGeocoder::parse("Somewhere 47.0 8.0\n"),
            Err(GeocodeError::BadFixture { line: 1, .. })
        ));
    }

    #[test]
    fn unreachable_http_provider() {
        let port = {
            let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().port()
        };
        let g = HttpGeocoder::new(format!("http://127.0.0.1:{port}"));
        assert!(matches!(
            g.geocode("Florastreet 6"),
            Err(GeocodeError::ProviderUnreachable(_))
        ));
    }
}
