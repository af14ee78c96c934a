//! LoRaWAN packet metadata: parsing, the station registry and the on-disk
//! packet store.

mod registry;
mod store;

use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::linkbudget::SpreadingFactor;

pub use registry::{GatewayEntry, NodeEntry, Registry, RegistryError};
pub use store::{AppendReport, PacketStore, Query, StoreError, StoreLock};

/// Metadata of one frame as received by one gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub received_at: DateTime<Utc>,
    pub device_id: String,
    pub gateway_id: String,
    #[serde(rename = "rssi")]
    pub rssi_dbm: i32,
    #[serde(rename = "snr")]
    pub snr_db: f64,
    pub spreading_factor: SpreadingFactor,
    pub bandwidth_khz: f64,
    pub frequency_mhz: f64,
    pub counter: u64,
}

impl PacketRecord {
    fn check(&self) -> Result<(), String> {
        if self.device_id.is_empty() || self.gateway_id.is_empty() {
            return Err("empty device or gateway id".into());
        }
        if !self.snr_db.is_finite() {
            return Err("snr is not finite".into());
        }
        if !(self.bandwidth_khz > 0.0 && self.bandwidth_khz.is_finite()) {
            return Err(format!("bandwidth must be positive, got {}", self.bandwidth_khz));
        }
        if !(self.frequency_mhz > 0.0 && self.frequency_mhz.is_finite()) {
            return Err(format!("frequency must be positive, got {}", self.frequency_mhz));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketFormat {
    Canonical,
    TtnV3,
}

impl std::str::FromStr for PacketFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(PacketFormat::Canonical),
            "ttn_v3" | "ttn-v3" => Ok(PacketFormat::TtnV3),
            other => Err(format!("unknown packet format `{other}` (expected canonical or ttn_v3)")),
        }
    }
}

/// A line that could not be turned into records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<PacketRecord>,
    pub rejects: Vec<Reject>,
}

/// Parse newline-delimited JSON. Bad lines become rejects; only a read
/// failure aborts. Blank lines are ignored.
pub fn parse_packets<R: BufRead>(reader: R, format: PacketFormat) -> std::io::Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            PacketFormat::Canonical => parse_canonical(&line).map(|r| vec![Ok(r)]),
            PacketFormat::TtnV3 => parse_ttn_v3(&line),
        };
        match parsed {
            Ok(items) => {
                for item in items {
                    match item {
                        Ok(r) => out.records.push(r),
                        Err(reason) => out.rejects.push(Reject { line: line_no, reason }),
                    }
                }
            }
            Err(reason) => out.rejects.push(Reject { line: line_no, reason }),
        }
    }
    Ok(out)
}

fn parse_canonical(line: &str) -> Result<PacketRecord, String> {
    let r: PacketRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    r.check()?;
    Ok(r)
}

fn field<'a>(v: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(v, |cur, k| cur.get(k))
}

fn timestamp(v: Option<&Value>) -> Option<Result<DateTime<Utc>, String>> {
    v.and_then(Value::as_str).map(|s| {
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| format!("bad timestamp `{s}`: {e}"))
    })
}

/// Expand one TTN v3 uplink into a record per reporting gateway. The outer
/// error rejects the whole line; inner errors reject single gateways.
fn parse_ttn_v3(line: &str) -> Result<Vec<Result<PacketRecord, String>>, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let device_id = field(&v, &["end_device_ids", "device_id"])
        .and_then(Value::as_str)
        .ok_or("missing end_device_ids.device_id")?
        .to_string();
    let up = v.get("uplink_message").ok_or("not an uplink message")?;
    let counter = match up.get("f_cnt") {
        None => 0,
        Some(c) => c.as_u64().ok_or("f_cnt is not a non-negative integer")?,
    };
    let lora = field(up, &["settings", "data_rate", "lora"]).ok_or("missing settings.data_rate.lora")?;
    let sf_raw = lora
        .get("spreading_factor")
        .and_then(Value::as_u64)
        .ok_or("missing spreading_factor")?;
    let spreading_factor = u8::try_from(sf_raw)
        .ok()
        .and_then(|s| SpreadingFactor::new(s).ok())
        .ok_or_else(|| format!("spreading factor {sf_raw} outside 7..=12"))?;
    let bandwidth_khz = lora.get("bandwidth").and_then(Value::as_f64).ok_or("missing bandwidth")? / 1000.0;
    let frequency_mhz = match field(up, &["settings", "frequency"]) {
        Some(Value::String(s)) => s.parse::<f64>().map_err(|_| format!("bad frequency `{s}`"))?,
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        _ => return Err("missing settings.frequency".into()),
    } / 1e6;
    let uplink_time = timestamp(up.get("received_at")).or_else(|| timestamp(v.get("received_at")));
    let gateways = up
        .get("rx_metadata")
        .and_then(Value::as_array)
        .filter(|a| !a.is_empty())
        .ok_or("no rx_metadata")?;

    let mut items = Vec::with_capacity(gateways.len());
    for (gi, md) in gateways.iter().enumerate() {
        let item = (|| {
            let gateway_id = field(md, &["gateway_ids", "gateway_id"])
                .and_then(Value::as_str)
                .ok_or_else(|| format!("rx_metadata[{gi}]: missing gateway id"))?
                .to_string();
            let received_at = uplink_time
                .clone()
                .or_else(|| timestamp(md.get("received_at")))
                .or_else(|| timestamp(md.get("time")))
                .ok_or_else(|| format!("rx_metadata[{gi}] ({gateway_id}): no timestamp"))??;
            let rssi = md
                .get("rssi")
                .or_else(|| md.get("channel_rssi"))
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("rx_metadata[{gi}] ({gateway_id}): missing rssi"))?;
            let snr_db = md
                .get("snr")
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("rx_metadata[{gi}] ({gateway_id}): missing snr"))?;
            let r = PacketRecord {
                received_at,
                device_id: device_id.clone(),
                gateway_id,
                rssi_dbm: rssi.round() as i32,
                snr_db,
                spreading_factor,
                bandwidth_khz,
                frequency_mhz,
                counter,
            };
            r.check()?;
            Ok(r)
        })();
        items.push(item);
    }
    Ok(items)
}
