//! Mechanism adjudication for a single node-to-gateway link.
//!
//! Geometry is checked first at the standard K = 4/3. Only a blocked path
//! consults the sounding, whose dominant low-level gradient decides between
//! ducting, super-refraction and diffraction. The diffraction verdicts rest on
//! a single dominant knife edge and the case's SF sensitivity.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, EarthModel, GeoPoint};
use crate::ingest::Registry;
use crate::linkbudget::{self, KnifeEdgeFormula, LinkBudgetError, RadioConfig, SensitivityTable, SpreadingFactor};
use crate::radiosonde::Sounding;
use crate::refractivity::{self, GradientLayer, PropagationCondition, RefractivityError};
use crate::terrain::{self, TerrainError, TerrainProfile};

/// Standard-atmosphere effective earth radius factor.
pub const STANDARD_K: f64 = 4.0 / 3.0;

/// Allowed relative mismatch between profile length and great-circle distance.
pub const DISTANCE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("profile length {profile_km:.3} km differs from great-circle distance {great_circle_km:.3} km by more than 1%")]
    InconsistentGeometry { profile_km: f64, great_circle_km: f64 },
    #[error("antenna height must be non-negative, got {0} m")]
    AntennaHeight(f64),
    #[error("node `{0}` is not in the registry")]
    UnknownNode(String),
    #[error("gateway `{0}` is not in the registry")]
    UnknownGateway(String),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Refractivity(#[from] RefractivityError),
    #[error(transparent)]
    LinkBudget(#[from] LinkBudgetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub location: GeoPoint,
    pub antenna_m_agl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOptions {
    /// Only layers whose base lies within this height above the surface are
    /// considered when picking the dominant gradient.
    pub ceiling_m_agl: f64,
    pub earth: EarthModel,
    pub knife_edge: KnifeEdgeFormula,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        ClassifierOptions {
            ceiling_m_agl: refractivity::DEFAULT_CEILING_M,
            earth: EarthModel::default(),
            knife_edge: KnifeEdgeFormula::default(),
        }
    }
}

/// Everything needed to adjudicate one link. The profile runs from the node
/// (distance 0) to the gateway; its antenna heights are replaced by the
/// endpoints' values.
#[derive(Debug, Clone)]
pub struct LinkCase {
    pub node: Endpoint,
    pub gateway: Endpoint,
    pub profile: TerrainProfile,
    pub sounding: Option<Sounding>,
    pub radio: RadioConfig,
    pub sf: SpreadingFactor,
    pub table: SensitivityTable,
    pub options: ClassifierOptions,
}

impl LinkCase {
    pub fn new(node: Endpoint, gateway: Endpoint, profile: TerrainProfile, sf: SpreadingFactor) -> Self {
        LinkCase {
            node,
            gateway,
            profile,
            sounding: None,
            radio: RadioConfig::default(),
            sf,
            table: SensitivityTable::default(),
            options: ClassifierOptions::default(),
        }
    }

    /// Build a case from registry entries; the node's ERP replaces the
    /// default radio power.
    pub fn from_registry(
        registry: &Registry,
        node_id: &str,
        gateway_id: &str,
        profile: TerrainProfile,
        sf: SpreadingFactor,
    ) -> Result<Self, ClassifyError> {
        let n = registry.node(node_id).ok_or_else(|| ClassifyError::UnknownNode(node_id.into()))?;
        let g = registry
            .gateway(gateway_id)
            .ok_or_else(|| ClassifyError::UnknownGateway(gateway_id.into()))?;
        let node = Endpoint {
            location: n.location,
            antenna_m_agl: n.antenna_m_agl,
        };
        let gateway = Endpoint {
            location: g.location,
            antenna_m_agl: g.antenna_m_agl,
        };
        let mut c = LinkCase::new(node, gateway, profile, sf);
        c.radio.erp_dbm = n.erp_dbm;
        Ok(c)
    }

    pub fn with_sounding(mut self, s: Sounding) -> Self {
        self.sounding = Some(s);
        self
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        for h in [self.node.antenna_m_agl, self.gateway.antenna_m_agl] {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(ClassifyError::AntennaHeight(h));
            }
        }
        self.radio.validate()?;
        let gc = geodesy::great_circle_distance(&self.node.location, &self.gateway.location, &self.options.earth);
        let pd = self.profile.total_distance_km();
        if (pd - gc).abs() > DISTANCE_TOLERANCE * gc {
            return Err(ClassifyError::InconsistentGeometry {
                profile_km: pd,
                great_circle_km: gc,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    LineOfSight,
    Diffraction,
    SuperRefraction,
    DiffractionPlusSuperRefraction,
    TroposphericDuct,
    Unexplained,
}

impl Mechanism {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mechanism::LineOfSight => "LineOfSight",
            Mechanism::Diffraction => "Diffraction",
            Mechanism::SuperRefraction => "SuperRefraction",
            Mechanism::DiffractionPlusSuperRefraction => "DiffractionPlusSuperRefraction",
            Mechanism::TroposphericDuct => "TroposphericDuct",
            Mechanism::Unexplained => "Unexplained",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismReport {
    pub mechanism: Mechanism,
    pub distance_km: f64,
    /// Absent for a duct, where K is undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_n_per_km: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub standard_atmosphere_assumed: bool,
    /// Clearance at `k_used` (at 4/3 for a duct).
    pub min_clearance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffraction_loss_db: Option<f64>,
    pub free_space_loss_db: f64,
    pub predicted_rx_dbm: f64,
    pub margin_db: f64,
    /// Advisory only: 60 % of the first Fresnel zone clear at `k_used`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fresnel_60_clear: Option<bool>,
    pub narrative: String,
}

impl MechanismReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("mechanism: {}\n", self.mechanism);
        out.push_str(&format!("distance: {:.1} km\n", self.distance_km));
        match self.k_used {
            Some(k) => out.push_str(&format!("K: {k:.3}\n")),
            None => out.push_str("K: undefined\n"),
        }
        if let Some(g) = self.gradient_n_per_km {
            let note = if self.standard_atmosphere_assumed { " (assumed)" } else { "" };
            out.push_str(&format!("gradient: {g:.1} N/km{note}\n"));
        }
        out.push_str(&format!("min clearance: {:.1} m\n", self.min_clearance_m));
        if let (Some(nu), Some(j)) = (self.nu, self.diffraction_loss_db) {
            out.push_str(&format!("nu: {nu:.2}\ndiffraction loss: {j:.1} dB\n"));
        }
        out.push_str(&format!("free-space loss: {:.1} dB\n", self.free_space_loss_db));
        out.push_str(&format!("predicted rx: {:.1} dBm\n", self.predicted_rx_dbm));
        out.push_str(&format!("margin: {:+.1} dB\n", self.margin_db));
        if let Some(f) = self.fresnel_60_clear {
            out.push_str(&format!("fresnel 60%: {}\n", if f { "clear" } else { "obstructed" }));
        }
        out.push_str(&self.narrative);
        out.push('\n');
        out
    }
}

struct Budget {
    fsl: f64,
    rx: f64,
    margin: f64,
    receivable: bool,
}

fn budget(c: &LinkCase, d_km: f64, extra_db: f64) -> Result<Budget, ClassifyError> {
    let fsl = linkbudget::free_space_loss(d_km, c.radio.frequency_mhz)?;
    let rx = linkbudget::received_power(&c.radio, d_km, extra_db)?;
    let r = linkbudget::is_receivable(rx, c.sf, &c.table);
    Ok(Budget {
        fsl,
        rx,
        margin: r.margin_db,
        receivable: r.receivable,
    })
}

fn fresnel_60(p: &TerrainProfile, k: f64, c: &LinkCase) -> Result<Option<bool>, ClassifyError> {
    Ok(terrain::fresnel_clearance(p, k, c.radio.frequency_mhz, &c.options.earth)?.map(|f| f.clear_60))
}

/// Run the decision procedure on one link.
pub fn classify_link(c: &LinkCase) -> Result<MechanismReport, ClassifyError> {
    c.validate()?;
    let earth = &c.options.earth;
    let profile = c.profile.clone().with_antennas(c.node.antenna_m_agl, c.gateway.antenna_m_agl)?;
    let d = profile.total_distance_km();

    let std_clear = terrain::los_clearance(&profile, STANDARD_K, earth)?;
    if !std_clear.blocked {
        let b = budget(c, d, 0.0)?;
        return Ok(MechanismReport {
            mechanism: Mechanism::LineOfSight,
            distance_km: d,
            k_used: Some(STANDARD_K),
            gradient_n_per_km: None,
            standard_atmosphere_assumed: false,
            min_clearance_m: std_clear.min_clearance_m,
            nu: None,
            diffraction_loss_db: None,
            free_space_loss_db: b.fsl,
            predicted_rx_dbm: b.rx,
            margin_db: b.margin,
            fresnel_60_clear: fresnel_60(&profile, STANDARD_K, c)?,
            narrative: format!(
                "Line of sight is clear at K = 4/3 (minimum clearance {:.1} m at {:.1} km).",
                std_clear.min_clearance_m, std_clear.obstacle_distance_km
            ),
        });
    }

    let blocked_note = format!(
        "Line of sight at K = 4/3 is blocked by {:.1} m at {:.1} km.",
        -std_clear.min_clearance_m, std_clear.obstacle_distance_km
    );
    let (g, layer, assumed) = match &c.sounding {
        Some(s) => {
            let (layer, _) = refractivity::dominant_gradient(s, c.options.ceiling_m_agl)?;
            (layer.gradient_n_per_km, Some(layer), false)
        }
        None => (refractivity::STANDARD_GRADIENT, None, true),
    };
    let condition = refractivity::classify_gradient(g);
    let mut narrative = vec![blocked_note];
    narrative.push(match (&c.sounding, layer) {
        (Some(s), Some(l)) => format!(
            "Sounding {} gives a dominant gradient of {g:.1} N/km ({}) in the layer {:.0}-{:.0} m ASL.",
            s.station_id,
            condition,
            l.base_height_m_asl,
            l.top_height_m_asl
        ),
        _ => format!("No sounding supplied: standard atmosphere assumed ({g:.1} N/km), so refractive effects are not assessed."),
    });

    if condition == PropagationCondition::Ducting {
        let b = budget(c, d, 0.0)?;
        if let Some(l) = layer {
            narrative.push(duct_geometry_note(&l, &profile));
        }
        narrative.push(format!(
            "The gradient is below {} N/km, so the link is explained by a tropospheric duct; K is undefined.",
            refractivity::DUCTING_LIMIT
        ));
        return Ok(MechanismReport {
            mechanism: Mechanism::TroposphericDuct,
            distance_km: d,
            k_used: None,
            gradient_n_per_km: Some(g),
            standard_atmosphere_assumed: assumed,
            min_clearance_m: std_clear.min_clearance_m,
            nu: None,
            diffraction_loss_db: None,
            free_space_loss_db: b.fsl,
            predicted_rx_dbm: b.rx,
            margin_db: b.margin,
            fresnel_60_clear: None,
            narrative: narrative.join(" "),
        });
    }

    let k_g = refractivity::k_factor(g, earth)?;
    if condition == PropagationCondition::SuperRefraction {
        let clear_g = terrain::los_clearance(&profile, k_g, earth)?;
        if !clear_g.blocked {
            let b = budget(c, d, 0.0)?;
            narrative.push(format!(
                "At K = {k_g:.2} the path clears by {:.1} m, confirming super-refraction.",
                clear_g.min_clearance_m
            ));
            return Ok(MechanismReport {
                mechanism: Mechanism::SuperRefraction,
                distance_km: d,
                k_used: Some(k_g),
                gradient_n_per_km: Some(g),
                standard_atmosphere_assumed: assumed,
                min_clearance_m: clear_g.min_clearance_m,
                nu: None,
                diffraction_loss_db: None,
                free_space_loss_db: b.fsl,
                predicted_rx_dbm: b.rx,
                margin_db: b.margin,
                fresnel_60_clear: fresnel_60(&profile, k_g, c)?,
                narrative: narrative.join(" "),
            });
        }
    }

    let k = if condition == PropagationCondition::SuperRefraction { k_g } else { STANDARD_K };
    let clear_k = terrain::los_clearance(&profile, k, earth)?;
    let edge = terrain::dominant_obstacle(&profile, k, c.radio.frequency_mhz, earth)?;
    let j = linkbudget::knife_edge_loss_with(edge.nu, c.options.knife_edge);
    let b = budget(c, d, j)?;
    narrative.push(format!(
        "At K = {k:.2} the dominant edge at {:.1} km stands {:.1} m above the sightline: nu = {:.2}, diffraction loss {j:.1} dB, predicted {:.1} dBm against {} sensitivity {:.1} dBm.",
        edge.distance_km,
        edge.height_above_sightline_m,
        edge.nu,
        b.rx,
        c.sf,
        c.table.get(c.sf)
    ));
    let mechanism = if !b.receivable {
        narrative.push(
            "The predicted level is below sensitivity: no modelled mechanism explains the link (tropospheric scatter is a candidate)."
                .into(),
        );
        Mechanism::Unexplained
    } else if condition == PropagationCondition::SuperRefraction {
        narrative.push("The link is explained by diffraction combined with super-refraction.".into());
        Mechanism::DiffractionPlusSuperRefraction
    } else {
        narrative.push("The link is explained by knife-edge diffraction.".into());
        Mechanism::Diffraction
    };
    Ok(MechanismReport {
        mechanism,
        distance_km: d,
        k_used: Some(k),
        gradient_n_per_km: Some(g),
        standard_atmosphere_assumed: assumed,
        min_clearance_m: clear_k.min_clearance_m,
        nu: Some(edge.nu),
        diffraction_loss_db: Some(j),
        free_space_loss_db: b.fsl,
        predicted_rx_dbm: b.rx,
        margin_db: b.margin,
        fresnel_60_clear: None,
        narrative: narrative.join(" "),
    })
}

fn duct_geometry_note(layer: &GradientLayer, p: &TerrainProfile) -> String {
    let s = p.samples();
    let (a, b) = p.antenna_heights_m_agl();
    let tip_a = s[0].elevation_m + a;
    let tip_b = s[s.len() - 1].elevation_m + b;
    format!(
        "Duct layer spans {:.0}-{:.0} m ASL; antenna tips are at {tip_a:.0} m and {tip_b:.0} m ASL (coupling not assessed).",
        layer.base_height_m_asl, layer.top_height_m_asl
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiosonde::SoundingLevel;
    use crate::terrain::ProfileSample;

    fn sf12() -> SpreadingFactor {
        SpreadingFactor::new(12).unwrap()
    }

    /// Two points on the equator `d_km` apart with a profile of `n` samples.
    fn case(d_km: f64, elev: impl Fn(f64) -> f64, n: usize, ant: f64) -> LinkCase {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(0.0, d_km / 6371.0 * 180.0 / std::f64::consts::PI).unwrap();
        let samples = (0..n)
            .map(|i| {
                let x = d_km * i as f64 / (n - 1) as f64;
                ProfileSample {
                    distance_km: x,
                    elevation_m: elev(x),
                }
            })
            .collect();
        let p = TerrainProfile::new(samples, 0.0, 0.0).unwrap();
        let ep = |location| Endpoint {
            location,
            antenna_m_agl: ant,
        };
        LinkCase::new(ep(a), ep(b), p, sf12())
    }

    /// Sounding with a single layer of gradient `g` between 0 and 100 m,
    /// built by choosing mixing ratios; the oracle inverts the refractivity
    /// formula independently.
    fn sounding_with_gradient(g: f64) -> Sounding {
        let (p0, t0, r0) = (1013.0, 288.0, 8.0);
        let n0 = 77.6 * p0 / t0 + 3.73e5 * r0 * p0 / (t0 * t0 * (622.0 + r0));
        let (p1, t1) = (1001.0, 287.35);
        let target = n0 + g * 0.1;
        let dry = 77.6 * p1 / t1;
        // wet = c * r / (622 + r) => r = 622 wet / (c - wet)
        let c = 3.73e5 * p1 / (t1 * t1);
        let wet = target - dry;
        let r1 = 622.0 * wet / (c - wet);
        let lvl = |p, h, t, r| SoundingLevel {
            pressure_hpa: p,
            height_m_asl: h,
            temperature_k: t,
            mixing_ratio_g_kg: r,
        };
        Sounding::new("TEST", vec![lvl(p0, 0.0, t0, r0), lvl(p1, 100.0, t1, r1), lvl(900.0, 1000.0, 282.0, r1 * 0.8)]).unwrap()
    }

    #[test]
    fn clear_flat_short_path_is_los() {
        let r = classify_link(&case(10.0, |_| 0.0, 11, 20.0)).unwrap();
        assert_eq!(r.mechanism, Mechanism::LineOfSight);
        assert_eq!(r.k_used, Some(STANDARD_K));
        assert!(r.nu.is_none() && r.gradient_n_per_km.is_none());
        assert!(r.min_clearance_m >= 0.0);
    }

    #[test]
    fn missing_sounding_falls_back_to_standard() {
        // Small hill blocks a 30 km path; diffraction at 4/3 is receivable.
        let c = case(30.0, |x| if (x - 15.0).abs() < 0.1 { 40.0 } else { 0.0 }, 301, 10.0);
        let r = classify_link(&c).unwrap();
        assert_eq!(r.mechanism, Mechanism::Diffraction);
        assert!(r.standard_atmosphere_assumed);
        assert_eq!(r.gradient_n_per_km, Some(-39.2));
        assert!(r.narrative.contains("standard atmosphere assumed"));
        assert!(r.nu.unwrap() > 0.0 && r.margin_db >= 0.0);
    }

    #[test]
    fn ducting_gradient_gives_duct() {
        let c = case(300.0, |_| 0.0, 61, 2.0).with_sounding(sounding_with_gradient(-300.0));
        let r = classify_link(&c).unwrap();
        assert_eq!(r.mechanism, Mechanism::TroposphericDuct);
        assert_eq!(r.k_used, None);
        assert!((r.gradient_n_per_km.unwrap() + 300.0).abs() < 1e-6);
        assert!(r.nu.is_none());
        assert!(r.narrative.contains("coupling not assessed"));
    }

    #[test]
    fn super_refraction_clears_sea_path() {
        // Over sea with 100 m masts: 4/3 bulge at mid-path of 90 km is 119 m,
        // K(-130) = 5.82 gives 27 m, so the path clears.
        let c = case(90.0, |_| 0.0, 91, 100.0).with_sounding(sounding_with_gradient(-130.0));
        let r = classify_link(&c).unwrap();
        assert_eq!(r.mechanism, Mechanism::SuperRefraction);
        assert!((r.k_used.unwrap() - 5.822).abs() < 0.01);
        assert!(r.min_clearance_m >= 0.0);
    }

    #[test]
    fn unreceivable_is_unexplained() {
        let c = case(200.0, |x| if (x - 100.0).abs() < 1.0 { 2500.0 } else { 0.0 }, 201, 10.0);
        let r = classify_link(&c).unwrap();
        assert_eq!(r.mechanism, Mechanism::Unexplained);
        assert!(r.margin_db < 0.0);
    }

    #[test]
    fn inconsistent_geometry_rejected() {
        let mut c = case(50.0, |_| 0.0, 11, 10.0);
        c.gateway.location = GeoPoint::new(0.0, 0.3).unwrap();
        assert!(matches!(classify_link(&c), Err(ClassifyError::InconsistentGeometry { .. })));
    }

    #[test]
    fn deterministic_and_serializable() {
        let c = case(30.0, |x| if (x - 15.0).abs() < 0.1 { 40.0 } else { 0.0 }, 301, 10.0);
        let a = classify_link(&c).unwrap();
        assert_eq!(a, classify_link(&c).unwrap());
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json["mechanism"], "Diffraction");
        assert!(json.get("fresnel_60_clear").is_none());
        let back: MechanismReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, a);
        assert!(a.to_text().starts_with("mechanism: Diffraction\n"));
    }
}
