//! Client for Open-Elevation-style lookup services.
//!
//! Request: `POST {"locations":[{"latitude":..,"longitude":..}, ...]}`.
//! Response: `{"results":[{"elevation":..}, ...]}` in request order.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ProfileSample, TerrainError, TerrainProfile};
use crate::geodesy::{self, EarthModel, GeoPoint};

#[derive(Debug, Clone)]
pub struct ElevationClient {
    url: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct Location {
    latitude: f64,
    longitude: f64,
}

#[derive(Serialize)]
struct Request {
    locations: Vec<Location>,
}

#[derive(Deserialize)]
struct ResultEntry {
    elevation: f64,
}

#[derive(Deserialize)]
struct Response {
    results: Vec<ResultEntry>,
}

impl ElevationClient {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build();
        ElevationClient { url: url.into(), agent }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Elevations for each point, in order.
    pub fn elevations(&self, points: &[GeoPoint]) -> Result<Vec<f64>, TerrainError> {
        let body = Request {
            locations: points
                .iter()
                .map(|p| Location {
                    latitude: p.latitude_deg(),
                    longitude: p.longitude_deg(),
                })
                .collect(),
        };
        let resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| TerrainError::Http(e.to_string()))?;
        let text = resp.into_string().map_err(|e| TerrainError::Http(e.to_string()))?;
        let parsed: Response = serde_json::from_str(&text).map_err(|e| TerrainError::Malformed(e.to_string()))?;
        if parsed.results.len() != points.len() {
            return Err(TerrainError::ShortResponse {
                expected: points.len(),
                got: parsed.results.len(),
            });
        }
        Ok(parsed.results.into_iter().map(|r| r.elevation).collect())
    }

    /// Sample `n` equally spaced points along the great circle from `a` to
    /// `b` and build a profile from the returned elevations.
    pub fn fetch_profile(&self, a: &GeoPoint, b: &GeoPoint, n: usize, earth: &EarthModel) -> Result<TerrainProfile, TerrainError> {
        let points = geodesy::intermediate_points(a, b, n)?;
        let elevations = self.elevations(&points)?;
        let total = geodesy::great_circle_distance(a, b, earth);
        let samples = elevations
            .into_iter()
            .enumerate()
            .map(|(i, e)| ProfileSample {
                distance_km: total * i as f64 / (n - 1) as f64,
                elevation_m: e,
            })
            .collect();
        TerrainProfile::new(samples, 0.0, 0.0)
    }
}
