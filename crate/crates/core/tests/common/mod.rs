#![allow(dead_code)]

use std::fs::File;
use std::path::PathBuf;

use troppo_core::classifier::{classify_link, LinkCase, MechanismReport};
use troppo_core::ingest::Registry;
use troppo_core::radiosonde::{parse_wyoming_sounding, Sounding};
use troppo_core::terrain::{load_profile_csv, TerrainProfile};
use troppo_core::SpreadingFactor;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn registry() -> Registry {
    Registry::load(&fixture("registry.json")).unwrap()
}

pub fn profile(name: &str) -> TerrainProfile {
    load_profile_csv(File::open(fixture(&format!("profiles/{name}.csv"))).unwrap()).unwrap()
}

pub fn sounding(name: &str) -> Sounding {
    parse_wyoming_sounding(&std::fs::read_to_string(fixture(&format!("soundings/{name}.txt"))).unwrap()).unwrap()
}

pub fn case(node: &str, gateway: &str, profile_name: &str, sounding_name: Option<&str>) -> LinkCase {
    let c = LinkCase::from_registry(&registry(), node, gateway, profile(profile_name), SpreadingFactor::new(12).unwrap()).unwrap();
    match sounding_name {
        Some(s) => c.with_sounding(sounding(s)),
        None => c,
    }
}

pub fn classify(node: &str, gateway: &str, profile_name: &str, sounding_name: Option<&str>) -> MechanismReport {
    classify_link(&case(node, gateway, profile_name, sounding_name)).unwrap()
}

/// The four documented field links: (label, node, gateway, profile, sounding).
pub const FIELD_CASES: [(&str, &str, &str, &str, &str); 4] = [
    ("Trieste->Cesena", "ictp-tp", "cesena-gw", "trieste_cesena", "rivolto_20200214_12z"),
    ("Sardinia->Barcelona", "tabarka-vineyard", "bcn-gw1", "sardinia_barcelona", "decimomannu_20200203_12z"),
    ("Gattinara->Vezza", "gattinara-tp", "vezza-gw", "gattinara_vezza", "cuneo_20200210_12z"),
    ("Gattinara->Cuneo", "gattinara-tp", "cuneo-gw", "gattinara_cuneo", "cuneo_20200202_12z"),
];
