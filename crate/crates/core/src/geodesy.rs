//! Spherical-earth geometry.
//!
//! Everything here works on a sphere whose radius comes from [`EarthModel`].
//! Distances are kilometres unless a name says otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used throughout, in kilometres.
pub const MEAN_EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("earth radius must be positive, got {0} km")]
    Radius(f64),
    #[error("need at least 2 points along a path, got {0}")]
    TooFewPoints(usize),
    #[error("K factor must be positive, got {0}")]
    KFactor(f64),
    #[error("antenna height must be non-negative, got {0} m")]
    AntennaHeight(f64),
    #[error("distances along a path must be non-negative, got {0} km")]
    Distance(f64),
    #[error("endpoints are antipodal; the great circle between them is undefined")]
    Antipodal,
}

/// A location on the earth's surface, optionally with its elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint", into = "RawGeoPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
    elevation_m: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elevation_m: Option<f64>,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawGeoPoint) -> Result<Self, Self::Error> {
        let p = GeoPoint::new(raw.lat, raw.lon)?;
        Ok(match raw.elevation_m {
            Some(e) => p.with_elevation(e),
            None => p,
        })
    }
}

impl From<GeoPoint> for RawGeoPoint {
    fn from(p: GeoPoint) -> Self {
        RawGeoPoint {
            lat: p.lat,
            lon: p.lon,
            elevation_m: p.elevation_m,
        }
    }
}

impl GeoPoint {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(GeoError::Latitude(latitude_deg));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(GeoError::Longitude(longitude_deg));
        }
        Ok(GeoPoint {
            lat: latitude_deg,
            lon: longitude_deg,
            elevation_m: None,
        })
    }

    pub fn with_elevation(self, elevation_m_asl: f64) -> Self {
        GeoPoint {
            elevation_m: Some(elevation_m_asl),
            ..self
        }
    }

    pub fn latitude_deg(&self) -> f64 {
        self.lat
    }

    pub fn longitude_deg(&self) -> f64 {
        self.lon
    }

    pub fn elevation_m_asl(&self) -> Option<f64> {
        self.elevation_m
    }

    fn to_unit_vector(self) -> [f64; 3] {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }
}

/// Sphere used for distances, bulge and K-factor work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    radius_km: f64,
}

impl EarthModel {
    pub fn new(radius_km: f64) -> Result<Self, GeoError> {
        if !(radius_km.is_finite() && radius_km > 0.0) {
            return Err(GeoError::Radius(radius_km));
        }
        Ok(EarthModel { radius_km })
    }

    pub fn radius_km(&self) -> f64 {
        self.radius_km
    }
}

impl Default for EarthModel {
    fn default() -> Self {
        EarthModel {
            radius_km: MEAN_EARTH_RADIUS_KM,
        }
    }
}

/// Haversine distance in kilometres.
pub fn great_circle_distance(a: &GeoPoint, b: &GeoPoint, earth: &EarthModel) -> f64 {
    central_angle(a, b) * earth.radius_km
}

fn central_angle(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // Clamp guards asin against h creeping past 1 through rounding.
    2.0 * h.sqrt().min(1.0).asin()
}

/// `n` points along the great circle from `a` to `b`, equally spaced in arc
/// length. The first and last entries are `a` and `b` themselves; interior
/// points carry no elevation.
pub fn intermediate_points(a: &GeoPoint, b: &GeoPoint, n: usize) -> Result<Vec<GeoPoint>, GeoError> {
    if n < 2 {
        return Err(GeoError::TooFewPoints(n));
    }
    let delta = central_angle(a, b);
    let sin_delta = delta.sin();
    if delta > 0.0 && sin_delta.abs() < 1e-12 {
        return Err(GeoError::Antipodal);
    }
    let (va, vb) = (a.to_unit_vector(), b.to_unit_vector());

    let mut out = Vec::with_capacity(n);
    out.push(*a);
    for i in 1..n - 1 {
        let f = i as f64 / (n - 1) as f64;
        if delta == 0.0 {
            out.push(GeoPoint { elevation_m: None, ..*a });
            continue;
        }
        let wa = ((1.0 - f) * delta).sin() / sin_delta;
        let wb = (f * delta).sin() / sin_delta;
        let v: Vec<f64> = (0..3).map(|k| wa * va[k] + wb * vb[k]).collect();
        let lat = v[2].atan2(v[0].hypot(v[1])).to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        out.push(GeoPoint {
            lat,
            lon,
            elevation_m: None,
        });
    }
    out.push(*b);
    Ok(out)
}

/// Distance to the radio horizon, `sqrt(2 k a h)`, in kilometres.
pub fn radio_horizon(antenna_height_m: f64, k: f64, earth: &EarthModel) -> Result<f64, GeoError> {
    check_k(k)?;
    if antenna_height_m < 0.0 {
        return Err(GeoError::AntennaHeight(antenna_height_m));
    }
    Ok((2.0 * k * earth.radius_km * antenna_height_m / 1000.0).sqrt())
}

/// Apparent rise of the effective earth, in metres, at a point `d1_km` from
/// one end and `d2_km` from the other.
pub fn earth_bulge(d1_km: f64, d2_km: f64, k: f64, earth: &EarthModel) -> Result<f64, GeoError> {
    check_k(k)?;
    for d in [d1_km, d2_km] {
        if d < 0.0 {
            return Err(GeoError::Distance(d));
        }
    }
    Ok(1000.0 * d1_km * d2_km / (2.0 * k * earth.radius_km))
}

pub(crate) fn check_k(k: f64) -> Result<(), GeoError> {
    if k.is_finite() && k > 0.0 {
        Ok(())
    } else {
        Err(GeoError::KFactor(k))
    }
}
