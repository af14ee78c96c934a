//! Terrain path profiles and single knife-edge geometry.
//!
//! Curved rays are replaced by straight lines over an earth of radius
//! `k * a`: each terrain sample is raised by the earth bulge at its position
//! and compared against the straight sightline joining the two antenna tips.

mod elevation;

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, EarthModel, GeoError};

pub use elevation::ElevationClient;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("profile needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("profile must start at distance 0, got {0} km")]
    FirstDistance(f64),
    #[error("distances must be strictly increasing (sample {index} at {distance_km} km)")]
    NotIncreasing { index: usize, distance_km: f64 },
    #[error("non-finite value in sample {0}")]
    NonFinite(usize),
    #[error("antenna height must be non-negative, got {0} m")]
    AntennaHeight(f64),
    #[error("profile CSV header must be `distance_km,elevation_m`, got `{0}`")]
    Header(String),
    #[error("profile CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("profile has no interior samples")]
    NoInterior,
    #[error("sub-path distances must be positive (d1 = {d1_km} km, d2 = {d2_km} km)")]
    ZeroDistance { d1_km: f64, d2_km: f64 },
    #[error("frequency must be positive, got {0} MHz")]
    Frequency(f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("elevation service request failed: {0}")]
    Http(String),
    #[error("malformed elevation response: {0}")]
    Malformed(String),
    #[error("short response: requested {expected} elevations, got {got}")]
    ShortResponse { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub distance_km: f64,
    pub elevation_m: f64,
}

/// Ground elevation along a path plus the antenna heights above ground at
/// either end (`a` at distance 0, `b` at the far end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainProfile {
    samples: Vec<ProfileSample>,
    antenna_a_m_agl: f64,
    antenna_b_m_agl: f64,
}

impl TerrainProfile {
    pub fn new(samples: Vec<ProfileSample>, antenna_a_m_agl: f64, antenna_b_m_agl: f64) -> Result<Self, TerrainError> {
        if samples.len() < 2 {
            return Err(TerrainError::TooFewSamples(samples.len()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.distance_km.is_finite() && s.elevation_m.is_finite()) {
                return Err(TerrainError::NonFinite(i));
            }
        }
        if samples[0].distance_km != 0.0 {
            return Err(TerrainError::FirstDistance(samples[0].distance_km));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].distance_km <= w[0].distance_km {
                return Err(TerrainError::NotIncreasing {
                    index: i + 1,
                    distance_km: w[1].distance_km,
                });
            }
        }
        let profile = TerrainProfile {
            samples,
            antenna_a_m_agl: 0.0,
            antenna_b_m_agl: 0.0,
        };
        profile.with_antennas(antenna_a_m_agl, antenna_b_m_agl)
    }

    pub fn with_antennas(mut self, a_m_agl: f64, b_m_agl: f64) -> Result<Self, TerrainError> {
        for h in [a_m_agl, b_m_agl] {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(TerrainError::AntennaHeight(h));
            }
        }
        self.antenna_a_m_agl = a_m_agl;
        self.antenna_b_m_agl = b_m_agl;
        Ok(self)
    }

    pub fn samples(&self) -> &[ProfileSample] {
        &self.samples
    }

    pub fn total_distance_km(&self) -> f64 {
        self.samples[self.samples.len() - 1].distance_km
    }

    pub fn antenna_heights_m_agl(&self) -> (f64, f64) {
        (self.antenna_a_m_agl, self.antenna_b_m_agl)
    }

    /// Height ASL of the straight line between the two antenna tips.
    pub fn sightline_m(&self, distance_km: f64) -> f64 {
        let first = self.samples[0].elevation_m + self.antenna_a_m_agl;
        let last = self.samples[self.samples.len() - 1].elevation_m + self.antenna_b_m_agl;
        first + (last - first) * distance_km / self.total_distance_km()
    }

    fn interior(&self) -> std::ops::Range<usize> {
        1..self.samples.len() - 1
    }
}

/// Read a profile from CSV with header `distance_km,elevation_m`. Antenna
/// heights start at zero; set them with [`TerrainProfile::with_antennas`].
pub fn load_profile_csv<R: Read>(reader: R) -> Result<TerrainProfile, TerrainError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["distance_km", "elevation_m"] {
        return Err(TerrainError::Header(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let samples = rdr
        .deserialize::<ProfileSample>()
        .collect::<Result<Vec<_>, _>>()?;
    TerrainProfile::new(samples, 0.0, 0.0)
}

/// Serialize a profile as `distance_km,elevation_m` CSV.
pub fn write_profile_csv(p: &TerrainProfile) -> String {
    let mut out = String::from("distance_km,elevation_m\n");
    for s in &p.samples {
        out.push_str(&format!("{},{}\n", s.distance_km, s.elevation_m));
    }
    out
}

/// Each sample's elevation raised by the earth bulge at effective factor `k`.
pub fn effective_profile(p: &TerrainProfile, k: f64, earth: &EarthModel) -> Result<Vec<(f64, f64)>, TerrainError> {
    let total = p.total_distance_km();
    p.samples
        .iter()
        .map(|s| {
            // Clamp guards the last sample against total - d rounding below 0.
            let d2 = (total - s.distance_km).max(0.0);
            let bulge = geodesy::earth_bulge(s.distance_km, d2, k, earth)?;
            Ok((s.distance_km, s.elevation_m + bulge))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearanceResult {
    pub blocked: bool,
    /// Smallest sightline-minus-terrain gap in metres; negative means the
    /// terrain intrudes.
    pub min_clearance_m: f64,
    pub obstacle_index: usize,
    pub obstacle_distance_km: f64,
}

/// Clearance of the sightline over the effective terrain. Only interior
/// samples count; a two-sample profile reports the lower antenna instead.
pub fn los_clearance(p: &TerrainProfile, k: f64, earth: &EarthModel) -> Result<ClearanceResult, TerrainError> {
    let eff = effective_profile(p, k, earth)?;
    let clearance = |i: usize| p.sightline_m(eff[i].0) - eff[i].1;

    let (index, min) = if p.interior().is_empty() {
        let (a, b) = p.antenna_heights_m_agl();
        if a <= b {
            (0, a)
        } else {
            (eff.len() - 1, b)
        }
    } else {
        p.interior()
            .map(|i| (i, clearance(i)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    };
    Ok(ClearanceResult {
        blocked: min < 0.0,
        min_clearance_m: min,
        obstacle_index: index,
        obstacle_distance_km: eff[index].0,
    })
}

fn wavelength_m(f_mhz: f64) -> Result<f64, TerrainError> {
    if !(f_mhz > 0.0 && f_mhz.is_finite()) {
        return Err(TerrainError::Frequency(f_mhz));
    }
    Ok(SPEED_OF_LIGHT / (f_mhz * 1e6))
}

/// Single knife-edge parameter `ν = h * sqrt(2/λ * (1/d1 + 1/d2))`, with `h`
/// the obstacle height above the sightline (positive when blocking).
pub fn fresnel_nu(h_m: f64, d1_km: f64, d2_km: f64, f_mhz: f64) -> Result<f64, TerrainError> {
    if !(d1_km > 0.0 && d2_km > 0.0) {
        return Err(TerrainError::ZeroDistance { d1_km, d2_km });
    }
    let lambda = wavelength_m(f_mhz)?;
    let (d1, d2) = (d1_km * 1000.0, d2_km * 1000.0);
    Ok(h_m * (2.0 / lambda * (1.0 / d1 + 1.0 / d2)).sqrt())
}

/// Radius of the first Fresnel zone, metres.
pub fn first_fresnel_radius_m(d1_km: f64, d2_km: f64, f_mhz: f64) -> Result<f64, TerrainError> {
    let lambda = wavelength_m(f_mhz)?;
    let (d1, d2) = (d1_km * 1000.0, d2_km * 1000.0);
    Ok((lambda * d1 * d2 / (d1 + d2)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub index: usize,
    pub distance_km: f64,
    /// Effective terrain height above the sightline (negative when clear).
    pub height_above_sightline_m: f64,
    pub nu: f64,
}

/// The interior sample with the largest ν. On a clear path this is the
/// least-clear point and ν is negative.
pub fn dominant_obstacle(p: &TerrainProfile, k: f64, f_mhz: f64, earth: &EarthModel) -> Result<Obstacle, TerrainError> {
    if p.interior().is_empty() {
        return Err(TerrainError::NoInterior);
    }
    let eff = effective_profile(p, k, earth)?;
    let total = p.total_distance_km();
    let mut best: Option<Obstacle> = None;
    for i in p.interior() {
        let (d, e) = eff[i];
        let h = e - p.sightline_m(d);
        let nu = fresnel_nu(h, d, total - d, f_mhz)?;
        if best.is_none_or(|b| nu > b.nu) {
            best = Some(Obstacle {
                index: i,
                distance_km: d,
                height_above_sightline_m: h,
                nu,
            });
        }
    }
    Ok(best.expect("interior is non-empty"))
}

/// Worst-case clearance expressed as a fraction of the first Fresnel radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FresnelClearance {
    pub min_ratio: f64,
    pub index: usize,
    /// At least 60 % of the first zone is clear everywhere.
    pub clear_60: bool,
}

/// Advisory Fresnel-zone check; it never decides whether a path is blocked.
pub fn fresnel_clearance(p: &TerrainProfile, k: f64, f_mhz: f64, earth: &EarthModel) -> Result<Option<FresnelClearance>, TerrainError> {
    let eff = effective_profile(p, k, earth)?;
    let total = p.total_distance_km();
    let mut best: Option<FresnelClearance> = None;
    for i in p.interior() {
        let (d, e) = eff[i];
        let ratio = (p.sightline_m(d) - e) / first_fresnel_radius_m(d, total - d, f_mhz)?;
        if best.is_none_or(|b| ratio < b.min_ratio) {
            best = Some(FresnelClearance {
                min_ratio: ratio,
                index: i,
                clear_60: ratio >= 0.6,
            });
        }
    }
    Ok(best)
}
