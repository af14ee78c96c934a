//! Aggregates over packet records and their CSV and SVG renderings.
//!
//! Dates are UTC calendar dates. CSV output uses `\n` line endings, RFC 3339
//! timestamps and shortest round-trip decimal formatting, so the same input
//! always gives the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, EarthModel};
use crate::ingest::{PacketRecord, PacketStore, Query, Registry, StoreError};
use crate::linkbudget::SpreadingFactor;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no records for {device_id} -> {gateway_id}")]
    NoRecords { device_id: String, gateway_id: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyCount {
    pub date: NaiveDate,
    pub count: u64,
}

/// Packets per UTC date, with zero rows for every silent day between the
/// first and last.
pub fn daily_counts(records: &[PacketRecord]) -> Vec<DailyCount> {
    let mut by_day: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for r in records {
        *by_day.entry(r.received_at.date_naive()).or_default() += 1;
    }
    let (Some(&first), Some(&last)) = (by_day.keys().next(), by_day.keys().next_back()) else {
        return Vec::new();
    };
    first
        .iter_days()
        .take_while(|d| *d <= last)
        .map(|date| DailyCount {
            date,
            count: by_day.get(&date).copied().unwrap_or(0),
        })
        .collect()
}

/// Counts for SF7..SF12, zeros included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfHistogram([u64; 6]);

impl SfHistogram {
    pub fn get(&self, sf: SpreadingFactor) -> u64 {
        self.0[(sf.value() - SpreadingFactor::MIN) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (SpreadingFactor, u64)> + '_ {
        SpreadingFactor::all().zip(self.0.iter().copied())
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

pub fn sf_distribution(records: &[PacketRecord]) -> SfHistogram {
    let mut h = SfHistogram::default();
    for r in records {
        h.0[(r.spreading_factor.value() - SpreadingFactor::MIN) as usize] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub received_at: DateTime<Utc>,
    pub rssi_dbm: i32,
    pub snr_db: f64,
    pub sf: SpreadingFactor,
}

/// RSSI/SNR over time, sorted by timestamp.
pub fn series(records: &[PacketRecord]) -> Vec<SeriesPoint> {
    let mut v: Vec<_> = records
        .iter()
        .map(|r| SeriesPoint {
            received_at: r.received_at,
            rssi_dbm: r.rssi_dbm,
            snr_db: r.snr_db,
            sf: r.spreading_factor,
        })
        .collect();
    v.sort_by_key(|p| p.received_at);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub device_id: String,
    pub gateway_id: String,
    pub distance_km: Option<f64>,
    pub packet_count: u64,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
    pub rssi_min: i32,
    pub rssi_max: i32,
    pub rssi_mean: f64,
    pub snr_min: f64,
    pub snr_max: f64,
    pub snr_mean: f64,
    pub sf_histogram: SfHistogram,
}

/// Summarize the records of one link. Returns `None` for an empty slice.
pub fn summarize(device_id: &str, gateway_id: &str, records: &[PacketRecord], distance_km: Option<f64>) -> Option<LinkSummary> {
    let first = records.first()?;
    let n = records.len() as f64;
    let mut s = LinkSummary {
        device_id: device_id.into(),
        gateway_id: gateway_id.into(),
        distance_km,
        packet_count: records.len() as u64,
        first_seen: first.received_at,
        last_seen: first.received_at,
        rssi_min: first.rssi_dbm,
        rssi_max: first.rssi_dbm,
        rssi_mean: 0.0,
        snr_min: first.snr_db,
        snr_max: first.snr_db,
        snr_mean: 0.0,
        sf_histogram: sf_distribution(records),
    };
    let (mut rssi_sum, mut snr_sum) = (0.0, 0.0);
    for r in records {
        s.first_seen = s.first_seen.min(r.received_at);
        s.last_seen = s.last_seen.max(r.received_at);
        s.rssi_min = s.rssi_min.min(r.rssi_dbm);
        s.rssi_max = s.rssi_max.max(r.rssi_dbm);
        s.snr_min = s.snr_min.min(r.snr_db);
        s.snr_max = s.snr_max.max(r.snr_db);
        rssi_sum += r.rssi_dbm as f64;
        snr_sum += r.snr_db;
    }
    // Clamp away rounding so min <= mean <= max holds exactly.
    s.rssi_mean = (rssi_sum / n).clamp(s.rssi_min as f64, s.rssi_max as f64);
    s.snr_mean = (snr_sum / n).clamp(s.snr_min, s.snr_max);
    Some(s)
}

/// Summary of a stored link, plus warnings for registry gaps (the distance
/// is left out when either end is unregistered).
pub fn link_summary(
    store: &PacketStore,
    registry: &Registry,
    device_id: &str,
    gateway_id: &str,
) -> Result<(LinkSummary, Vec<String>), StatsError> {
    let records = store.query(&Query {
        device_id: Some(device_id.into()),
        gateway_id: Some(gateway_id.into()),
        ..Query::default()
    })?;
    let mut warnings = Vec::new();
    let node = registry.node(device_id);
    let gw = registry.gateway(gateway_id);
    if node.is_none() {
        warnings.push(format!("node {device_id} is not in the registry"));
    }
    if gw.is_none() {
        warnings.push(format!("gateway {gateway_id} is not in the registry"));
    }
    let distance = node
        .zip(gw)
        .map(|(n, g)| geodesy::great_circle_distance(&n.location, &g.location, &EarthModel::default()));
    let s = summarize(device_id, gateway_id, &records, distance).ok_or_else(|| StatsError::NoRecords {
        device_id: device_id.into(),
        gateway_id: gateway_id.into(),
    })?;
    Ok((s, warnings))
}

/// Anything that can be rendered as CSV or SVG.
#[derive(Debug, Clone, PartialEq)]
pub enum Product {
    Daily(Vec<DailyCount>),
    Sf(SfHistogram),
    Series(Vec<SeriesPoint>),
    Summary(LinkSummary),
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn emit_csv(p: &Product) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut row = |fields: &[String]| w.write_record(fields).expect("writing to memory");
    let s = |v: &dyn ToString| v.to_string();
    match p {
        Product::Daily(rows) => {
            row(&[s(&"date"), s(&"count")]);
            for r in rows {
                row(&[s(&r.date.format("%Y-%m-%d")), s(&r.count)]);
            }
        }
        Product::Sf(h) => {
            row(&[s(&"sf"), s(&"count")]);
            for (sf, n) in h.iter() {
                row(&[s(&sf.value()), s(&n)]);
            }
        }
        Product::Series(points) => {
            row(&["received_at", "rssi_dbm", "snr_db", "sf"].map(String::from));
            for pt in points {
                row(&[ts(&pt.received_at), s(&pt.rssi_dbm), s(&pt.snr_db), s(&pt.sf.value())]);
            }
        }
        Product::Summary(sm) => {
            let mut header: Vec<String> = [
                "device_id", "gateway_id", "distance_km", "packet_count", "first_seen", "last_seen", "rssi_min", "rssi_max",
                "rssi_mean", "snr_min", "snr_max", "snr_mean",
            ]
            .map(String::from)
            .to_vec();
            header.extend(SpreadingFactor::all().map(|sf| format!("sf{}", sf.value())));
            row(&header);
            let mut fields = vec![
                sm.device_id.clone(),
                sm.gateway_id.clone(),
                sm.distance_km.map(|d| d.to_string()).unwrap_or_default(),
                s(&sm.packet_count),
                ts(&sm.first_seen),
                ts(&sm.last_seen),
                s(&sm.rssi_min),
                s(&sm.rssi_max),
                s(&sm.rssi_mean),
                s(&sm.snr_min),
                s(&sm.snr_max),
                s(&sm.snr_mean),
            ];
            fields.extend(sm.sf_histogram.iter().map(|(_, n)| n.to_string()));
            row(&fields);
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<title>{}</title>\n\
         <line class=\"axis\" x1=\"{PAD}\" y1=\"{y}\" x2=\"{x}\" y2=\"{y}\" stroke=\"black\"/>\n\
         <line class=\"axis\" x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{y}\" stroke=\"black\"/>\n",
        escape(title),
        x = W - PAD,
        y = H - PAD
    )
}

/// Bars scaled to the tallest; each carries its label and value as data
/// attributes.
fn bars(out: &mut String, items: &[(String, &str, u64)]) {
    let max = items.iter().map(|i| i.2).max().unwrap_or(0).max(1) as f64;
    let slot = (W - 2.0 * PAD) / items.len().max(1) as f64;
    for (i, (label, key, n)) in items.iter().enumerate() {
        let h = (H - 2.0 * PAD) * *n as f64 / max;
        let _ = writeln!(
            out,
            "<rect class=\"bar\" data-{key}=\"{}\" data-count=\"{n}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"/>",
            escape(label),
            PAD + i as f64 * slot + slot * 0.1,
            H - PAD - h,
            slot * 0.8,
            h
        );
    }
}

pub fn emit_svg(p: &Product) -> String {
    let mut out;
    match p {
        Product::Daily(rows) => {
            out = svg_open("Packets per day (UTC)");
            let items: Vec<_> = rows.iter().map(|r| (r.date.format("%Y-%m-%d").to_string(), "date", r.count)).collect();
            bars(&mut out, &items);
        }
        Product::Sf(h) => {
            out = svg_open("Spreading factor distribution");
            let items: Vec<_> = h.iter().map(|(sf, n)| (sf.value().to_string(), "sf", n)).collect();
            bars(&mut out, &items);
        }
        Product::Summary(sm) => {
            out = svg_open(&format!("{} -> {}: spreading factor distribution", sm.device_id, sm.gateway_id));
            let items: Vec<_> = sm.sf_histogram.iter().map(|(sf, n)| (sf.value().to_string(), "sf", n)).collect();
            bars(&mut out, &items);
        }
        Product::Series(points) => {
            out = svg_open("RSSI over time");
            if let (Some(a), Some(b)) = (points.first(), points.last()) {
                let t0 = a.received_at.timestamp_millis() as f64;
                let span = ((b.received_at.timestamp_millis() as f64) - t0).max(1.0);
                let lo = points.iter().map(|p| p.rssi_dbm).min().unwrap_or(0) as f64;
                let hi = points.iter().map(|p| p.rssi_dbm).max().unwrap_or(0) as f64;
                let range = (hi - lo).max(1.0);
                for pt in points {
                    let x = PAD + (W - 2.0 * PAD) * (pt.received_at.timestamp_millis() as f64 - t0) / span;
                    let y = H - PAD - (H - 2.0 * PAD) * (pt.rssi_dbm as f64 - lo) / range;
                    let _ = writeln!(
                        out,
                        "<circle class=\"point\" data-time=\"{}\" data-rssi=\"{}\" data-snr=\"{}\" data-sf=\"{}\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\"/>",
                        ts(&pt.received_at),
                        pt.rssi_dbm,
                        pt.snr_db,
                        pt.sf.value()
                    );
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
