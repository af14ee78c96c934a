mod common;

use std::fs::File;
use std::io::BufReader;

use common::{fixture, registry};
use troppo_core::ingest::{parse_packets, PacketFormat, PacketStore, Query};
use troppo_core::stats::{daily_counts, link_summary, sf_distribution};
use troppo_core::SpreadingFactor;

fn load(name: &str, format: PacketFormat) -> troppo_core::ingest::ParseOutcome {
    parse_packets(BufReader::new(File::open(fixture(&format!("packets/{name}"))).unwrap()), format).unwrap()
}

#[test]
fn mixed_fixture_has_one_malformed_line() {
    let out = load("ictp_cesena_mixed.jsonl", PacketFormat::Canonical);
    assert_eq!(out.records.len(), 22);
    assert_eq!(out.rejects.len(), 1);
    assert_eq!(out.rejects[0].line, 10);
}

#[test]
fn ttn_fixture_expands_and_rejects() {
    let out = load("ttn_v3_uplinks.jsonl", PacketFormat::TtnV3);
    assert_eq!(out.records.len(), 5);
    assert_eq!(out.rejects.iter().map(|r| r.line).collect::<Vec<_>>(), [3, 4]);
    let first: Vec<_> = out.records.iter().take(3).map(|r| r.gateway_id.as_str()).collect();
    assert_eq!(first, ["cesena-gw", "ictp-gw1", "trieste-gw2"]);
    assert!(out.records.iter().all(|r| r.device_id == "ictp-tp"));
}

#[test]
fn barcelona_month_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let store = PacketStore::open(dir.path()).unwrap();
    let out = load("sardinia_barcelona_feb2020.jsonl", PacketFormat::Canonical);
    assert!(out.rejects.is_empty());
    let rep = store.append(&out.records).unwrap();
    assert_eq!((rep.appended, rep.duplicates), (107, 0));
    let again = store.append(&load("sardinia_barcelona_20200203.jsonl", PacketFormat::Canonical).records).unwrap();
    assert_eq!((again.appended, again.duplicates), (0, 20));

    let reg = registry();
    let (gw1, warn) = link_summary(&store, &reg, "tabarka-vineyard", "bcn-gw1").unwrap();
    assert!(warn.is_empty());
    assert_eq!(gw1.packet_count, 104);
    assert!((gw1.distance_km.unwrap() - 573.0).abs() < 1.0);
    let (gw2, _) = link_summary(&store, &reg, "tabarka-vineyard", "bcn-gw2").unwrap();
    assert_eq!(gw2.packet_count, 3);

    let gw1_records = store
        .query(&Query {
            gateway_id: Some("bcn-gw1".into()),
            ..Query::default()
        })
        .unwrap();
    let days = daily_counts(&gw1_records);
    assert_eq!(days.first().unwrap().date.to_string(), "2020-02-03");
    assert_eq!(days.last().unwrap().date.to_string(), "2020-02-25");
    assert_eq!(days.len(), 23);
    assert!(days[1..22].iter().all(|d| d.count == 0));
}

#[test]
fn sardinia_day_matches_reported_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let store = PacketStore::open(dir.path()).unwrap();
    let out = load("sardinia_barcelona_20200203.jsonl", PacketFormat::Canonical);
    store.append(&out.records).unwrap();
    let (s, _) = link_summary(&store, &registry(), "tabarka-vineyard", "bcn-gw1").unwrap();
    assert_eq!(s.packet_count, 20);
    assert_eq!((s.rssi_min, s.rssi_max), (-120, -112));
    assert_eq!((s.snr_min, s.snr_max), (-20.5, -9.5));
    let h = sf_distribution(&out.records);
    assert_eq!(h.get(SpreadingFactor::new(12).unwrap()), 20);
    assert_eq!(h.total(), 20);
}

#[test]
fn unregistered_gateway_summary_warns() {
    let dir = tempfile::tempdir().unwrap();
    let store = PacketStore::open(dir.path()).unwrap();
    store.append(&load("ttn_v3_uplinks.jsonl", PacketFormat::TtnV3).records).unwrap();
    let (s, warn) = link_summary(&store, &registry(), "ictp-tp", "trieste-gw2").unwrap();
    assert_eq!(s.distance_km, None);
    assert_eq!(warn, ["gateway trieste-gw2 is not in the registry"]);
    assert!(link_summary(&store, &registry(), "ictp-tp", "nowhere").is_err());
}
