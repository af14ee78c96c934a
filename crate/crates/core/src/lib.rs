//! Tropospheric propagation analysis for long-distance LoRa links.
//!
//! The crate ties together radiosonde refractivity profiles, terrain path
//! geometry and LoRa link budgets to decide which mechanism (line of sight,
//! knife-edge diffraction, super-refraction, ducting, or diffraction combined
//! with super-refraction) explains an observed link. It also ingests LoRaWAN
//! packet metadata into an append-only store and reproduces the usual
//! per-link statistics (daily counts, SF distribution, RSSI/SNR series).
//!
//! Module map:
//!
//! - [`geodesy`]: great-circle distances, path sampling, effective-earth geometry.
//! - [`radiosonde`]: Wyoming-style sounding text parser and writer.
//! - [`refractivity`]: refractivity N, layer gradients, regimes and K factors.
//! - [`terrain`]: terrain profiles, clearance, Fresnel ν and the elevation client.
//! - [`linkbudget`]: free-space and knife-edge loss, received power, SF sensitivity.
//! - [`classifier`]: the mechanism decision procedure.
//! - [`ingest`]: packet parsing, the station registry and the packet store.
//! - [`stats`]: aggregates and their CSV/SVG renderings.

pub mod classifier;
pub mod geodesy;
pub mod ingest;
pub mod linkbudget;
pub mod radiosonde;
pub mod refractivity;
pub mod stats;
pub mod terrain;


pub use classifier::{classify_link, LinkCase, Mechanism, MechanismReport};
pub use geodesy::{EarthModel, GeoPoint};
pub use linkbudget::{RadioConfig, SensitivityTable, SpreadingFactor};
pub use terrain::{ClearanceResult, TerrainProfile};

pub use radiosonde::{Sounding, SoundingLevel};
pub use refractivity::{GradientLayer, PropagationCondition};

