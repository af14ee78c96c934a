//! Radio refractivity, its vertical gradient, and effective earth radius.
//!
//! Refractivity is `N = (n - 1) * 1e6`. From a sounding level,
//!
//! ```text
//! N = 77.6 P / T + 3.73e5 * r P / (T^2 (622 + r))
//! ```
//!
//! with P in hPa, T in kelvin and r the water-vapour mixing ratio in g/kg
//! (`r P / (622 + r)` is the vapour pressure in hPa).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::EarthModel;
use crate::radiosonde::Sounding;

/// Gradient of the ITU standard atmosphere, N-units/km (K = 4/3).
pub const STANDARD_GRADIENT: f64 = -39.2;
/// At or below this gradient the atmosphere is super-refractive.
pub const SUPER_REFRACTION_LIMIT: f64 = -79.0;
/// At or below this gradient rays are trapped (ducting).
pub const DUCTING_LIMIT: f64 = -157.0;
/// Layers thinner than this are merged into the next one.
pub const MIN_LAYER_THICKNESS_M: f64 = 10.0;
/// Default height above the station searched for the operative gradient.
pub const DEFAULT_CEILING_M: f64 = 3000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefractivityError {
    #[error("pressure must be positive, got {0} hPa")]
    Pressure(f64),
    #[error("temperature must be positive, got {0} K")]
    Temperature(f64),
    #[error("mixing ratio must be non-negative, got {0} g/kg")]
    MixingRatio(f64),
    #[error("need at least 2 usable levels for a gradient, got {0}")]
    TooFewLevels(usize),
    #[error("ducting regime: K undefined for gradient {0} N/km")]
    KUndefined(f64),
    #[error("no layer has its base within {ceiling_m} m of the surface ({surface_m} m)")]
    NothingUnderCeiling { ceiling_m: f64, surface_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefractivityPoint {
    pub height_m_asl: f64,
    pub n_units: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientLayer {
    pub base_height_m_asl: f64,
    pub top_height_m_asl: f64,
    pub gradient_n_per_km: f64,
}

impl GradientLayer {
    pub fn condition(&self) -> PropagationCondition {
        classify_gradient(self.gradient_n_per_km)
    }
}

/// Refraction regime implied by a refractivity gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropagationCondition {
    SubRefraction,
    Normal,
    SuperRefraction,
    Ducting,
}

impl PropagationCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            PropagationCondition::SubRefraction => "SubRefraction",
            PropagationCondition::Normal => "Normal",
            PropagationCondition::SuperRefraction => "SuperRefraction",
            PropagationCondition::Ducting => "Ducting",
        }
    }
}

impl std::fmt::Display for PropagationCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn refractivity(p_hpa: f64, t_k: f64, r_g_kg: f64) -> Result<f64, RefractivityError> {
    if !(p_hpa > 0.0 && p_hpa.is_finite()) {
        return Err(RefractivityError::Pressure(p_hpa));
    }
    if !(t_k > 0.0 && t_k.is_finite()) {
        return Err(RefractivityError::Temperature(t_k));
    }
    if !(r_g_kg >= 0.0 && r_g_kg.is_finite()) {
        return Err(RefractivityError::MixingRatio(r_g_kg));
    }
    let dry = 77.6 * p_hpa / t_k;
    let wet = 3.73e5 * r_g_kg * p_hpa / (t_k * t_k * (622.0 + r_g_kg));
    Ok(dry + wet)
}

/// N at every level of the sounding.
pub fn refractivity_profile(s: &Sounding) -> Vec<RefractivityPoint> {
    s.levels()
        .iter()
        .map(|l| {
            // Levels were validated on construction.
            let n = refractivity(l.pressure_hpa, l.temperature_k, l.mixing_ratio_g_kg)
                .expect("sounding levels are validated");
            if !(0.0..500.0).contains(&n) {
                log::warn!("unusual refractivity {n:.1} N at {} m", l.height_m_asl);
            }
            RefractivityPoint {
                height_m_asl: l.height_m_asl,
                n_units: n,
            }
        })
        .collect()
}

/// Finite-difference gradients between consecutive points.
///
/// A point closer than [`MIN_LAYER_THICKNESS_M`] to the current layer base is
/// folded into the next layer. A thin remainder at the very top extends the
/// last layer instead.
pub fn gradients_from_points(points: &[RefractivityPoint]) -> Result<Vec<GradientLayer>, RefractivityError> {
    if points.len() < 2 {
        return Err(RefractivityError::TooFewLevels(points.len()));
    }
    let layer = |a: &RefractivityPoint, b: &RefractivityPoint| GradientLayer {
        base_height_m_asl: a.height_m_asl,
        top_height_m_asl: b.height_m_asl,
        gradient_n_per_km: (b.n_units - a.n_units) / ((b.height_m_asl - a.height_m_asl) / 1000.0),
    };

    let mut layers = Vec::new();
    let mut base = 0;
    let mut base_of_last = None;
    for i in 1..points.len() {
        if points[i].height_m_asl - points[base].height_m_asl >= MIN_LAYER_THICKNESS_M {
            layers.push(layer(&points[base], &points[i]));
            base_of_last = Some(base);
            base = i;
        }
    }
    let top = points.len() - 1;
    if base != top {
        match base_of_last {
            Some(b) => {
                let last = layers.len() - 1;
                layers[last] = layer(&points[b], &points[top]);
            }
            None => return Err(RefractivityError::TooFewLevels(1)),
        }
    }
    Ok(layers)
}

pub fn gradient_profile(s: &Sounding) -> Result<Vec<GradientLayer>, RefractivityError> {
    gradients_from_points(&refractivity_profile(s))
}

/// Map a gradient (N-units/km) to its regime. Exact boundary values go to
/// the more anomalous side: -79 is super-refractive, -157 is ducting.
pub fn classify_gradient(g: f64) -> PropagationCondition {
    if g > 0.0 {
        PropagationCondition::SubRefraction
    } else if g > SUPER_REFRACTION_LIMIT {
        PropagationCondition::Normal
    } else if g > DUCTING_LIMIT {
        PropagationCondition::SuperRefraction
    } else {
        PropagationCondition::Ducting
    }
}

/// Effective earth-radius factor `1 / (1 + a * dN/dh * 1e-6)`.
pub fn k_factor(g: f64, earth: &EarthModel) -> Result<f64, RefractivityError> {
    let denom = 1.0 + earth.radius_km() * g * 1e-6;
    if !g.is_finite() || denom <= 0.0 {
        return Err(RefractivityError::KUndefined(g));
    }
    Ok(1.0 / denom)
}

/// The most negative layer whose base lies within `ceiling_m_agl` of the
/// surface, with its regime. Ties keep the lowest layer.
pub fn dominant_gradient(
    s: &Sounding,
    ceiling_m_agl: f64,
) -> Result<(GradientLayer, PropagationCondition), RefractivityError> {
    let layers = gradient_profile(s)?;
    let surface = s.surface_elevation_m().unwrap_or(0.0);
    dominant_layer(&layers, surface, ceiling_m_agl)
}

pub fn dominant_layer(
    layers: &[GradientLayer],
    surface_m_asl: f64,
    ceiling_m_agl: f64,
) -> Result<(GradientLayer, PropagationCondition), RefractivityError> {
    let limit = surface_m_asl + ceiling_m_agl;
    layers
        .iter()
        .filter(|l| l.base_height_m_asl <= limit)
        .fold(None::<&GradientLayer>, |best, l| match best {
            Some(b) if b.gradient_n_per_km <= l.gradient_n_per_km => Some(b),
            _ => Some(l),
        })
        .map(|l| (*l, l.condition()))
        .ok_or(RefractivityError::NothingUnderCeiling {
            ceiling_m: ceiling_m_agl,
            surface_m: surface_m_asl,
        })
}
