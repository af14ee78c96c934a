//! Append-only packet store.
//!
//! Layout under the root directory:
//!
//! ```text
//! registry.json
//! links/<device_id>/<gateway_id>.jsonl
//! .lock
//! ```
//!
//! Ids are percent-encoded when they contain anything outside
//! `[A-Za-z0-9_.-]` (or start with a dot). Readers ignore a trailing line
//! without a newline, so a reader racing a writer sees a complete prefix.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::registry::{Registry, RegistryError};
use super::PacketRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: corrupt record: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("store {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("append stopped at {path} after {appended} new records: {source}")]
    PartialAppend {
        path: PathBuf,
        appended: usize,
        completed: Vec<(PathBuf, usize)>,
        source: io::Error,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppendReport {
    pub appended: usize,
    pub duplicates: usize,
    /// New records written per link file, in path order.
    pub per_file: Vec<(PathBuf, usize)>,
}

/// Filters for [`PacketStore::query`]. The time range is half-open: `from`
/// inclusive, `to` exclusive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Query {
    pub device_id: Option<String>,
    pub gateway_id: Option<String>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl Query {
    pub fn matches(&self, r: &PacketRecord) -> bool {
        self.device_id.as_ref().is_none_or(|d| *d == r.device_id)
            && self.gateway_id.as_ref().is_none_or(|g| *g == r.gateway_id)
            && self.from.is_none_or(|f| r.received_at >= f)
            && self.to.is_none_or(|t| r.received_at < t)
    }
}

/// Exclusive writer lock; released on drop.
#[derive(Debug)]
pub struct StoreLock {
    _file: File,
}

#[derive(Debug, Clone)]
pub struct PacketStore {
    root: PathBuf,
}

impl PacketStore {
    /// Open a store, creating the directory layout if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let links = root.join("links");
        fs::create_dir_all(&links).map_err(io_err(&links))?;
        Ok(PacketStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    /// The stored registry, or an empty one if none has been written.
    pub fn registry(&self) -> Result<Registry, StoreError> {
        let path = self.registry_path();
        if !path.exists() {
            return Ok(Registry::default());
        }
        Ok(Registry::load(&path)?)
    }

    pub fn save_registry(&self, r: &Registry) -> Result<(), StoreError> {
        let path = self.registry_path();
        let tmp = self.root.join("registry.json.tmp");
        fs::write(&tmp, r.to_json()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Take the advisory writer lock without blocking.
    pub fn try_lock(&self) -> Result<StoreLock, StoreError> {
        let path = self.root.join(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(StoreLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(StoreError::Locked(self.root.clone())),
            Err(fs::TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }

    pub fn link_path(&self, device_id: &str, gateway_id: &str) -> PathBuf {
        self.root
            .join("links")
            .join(encode_id(device_id))
            .join(format!("{}.jsonl", encode_id(gateway_id)))
    }

    /// All (device, gateway) pairs with a record file, sorted.
    pub fn links(&self) -> Result<Vec<(String, String)>, StoreError> {
        let mut out = Vec::new();
        let links = self.root.join("links");
        for dev in read_dir_sorted(&links)? {
            if !dev.is_dir() {
                continue;
            }
            let Some(device) = dev.file_name().and_then(|n| n.to_str()).and_then(decode_id) else {
                continue;
            };
            for f in read_dir_sorted(&dev)? {
                let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if let Some(gw) = name.strip_suffix(".jsonl").and_then(decode_id) {
                    out.push((device.clone(), gw));
                }
            }
        }
        Ok(out)
    }

    /// Append records, skipping any whose (device, gateway, counter,
    /// received_at) is already stored or repeated earlier in the batch.
    pub fn append(&self, records: &[PacketRecord]) -> Result<AppendReport, StoreError> {
        let mut groups: BTreeMap<(&str, &str), Vec<&PacketRecord>> = BTreeMap::new();
        for r in records {
            groups.entry((&r.device_id, &r.gateway_id)).or_default().push(r);
        }
        let mut report = AppendReport::default();
        for ((dev, gw), recs) in groups {
            let path = self.link_path(dev, gw);
            let mut seen: HashSet<(u64, DateTime<Utc>)> =
                read_file(&path)?.iter().map(|r| (r.counter, r.received_at)).collect();
            let mut buf = String::new();
            let mut fresh = 0;
            for r in recs {
                if seen.insert((r.counter, r.received_at)) {
                    buf.push_str(&serde_json::to_string(r).expect("record serializes"));
                    buf.push('\n');
                    fresh += 1;
                } else {
                    report.duplicates += 1;
                }
            }
            if fresh == 0 {
                continue;
            }
            if let Err(source) = write_append(&path, buf.as_bytes()) {
                return Err(StoreError::PartialAppend {
                    path,
                    appended: report.appended,
                    completed: report.per_file,
                    source,
                });
            }
            report.appended += fresh;
            report.per_file.push((path, fresh));
        }
        Ok(report)
    }

    /// Matching records sorted by time (ties by device, gateway, counter).
    pub fn query(&self, q: &Query) -> Result<Vec<PacketRecord>, StoreError> {
        let mut out = Vec::new();
        for (dev, gw) in self.links()? {
            if q.device_id.as_ref().is_some_and(|d| *d != dev) || q.gateway_id.as_ref().is_some_and(|g| *g != gw) {
                continue;
            }
            out.extend(read_file(&self.link_path(&dev, &gw))?.into_iter().filter(|r| q.matches(r)));
        }
        out.sort_by(|a, b| {
            (a.received_at, &a.device_id, &a.gateway_id, a.counter).cmp(&(b.received_at, &b.device_id, &b.gateway_id, b.counter))
        });
        Ok(out)
    }
}

fn write_append(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(bytes)?;
    f.sync_data()
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut v = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    v.sort();
    Ok(v)
}

fn read_file(path: &Path) -> Result<Vec<PacketRecord>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    // Drop an incomplete last line from a concurrent writer.
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

fn safe_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.')
}

pub(crate) fn encode_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for (i, b) in id.bytes().enumerate() {
        if safe_byte(b) && !(i == 0 && b == b'.') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub(crate) fn decode_id(name: &str) -> Option<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = name.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkbudget::SpreadingFactor;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn rec(dev: &str, gw: &str, counter: u64, secs: i64) -> PacketRecord {
        PacketRecord {
            received_at: Utc.timestamp_opt(1_580_000_000 + secs, 0).unwrap(),
            device_id: dev.into(),
            gateway_id: gw.into(),
            rssi_dbm: -100 - counter as i32 % 20,
            snr_db: -7.25,
            spreading_factor: SpreadingFactor::new(12).unwrap(),
            bandwidth_khz: 125.0,
            frequency_mhz: 868.1,
            counter,
        }
    }

    #[test]
    fn id_encoding() {
        assert_eq!(encode_id("bcn-gw1"), "bcn-gw1");
        assert_eq!(encode_id("a/b c"), "a%2Fb%20c");
        assert_eq!(encode_id(".."), "%2E.");
        for id in ["bcn-gw1", "a/b c", "..", "é%"] {
            assert_eq!(decode_id(&encode_id(id)).as_deref(), Some(id));
        }
        assert_eq!(decode_id("%zz"), None);
    }

    #[test]
    fn append_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        let batch = [rec("n", "g", 1, 0), rec("n", "g", 2, 60), rec("n", "g", 3, 120)];
        let r = s.append(&batch).unwrap();
        assert_eq!((r.appended, r.duplicates), (3, 0));
        let r = s.append(&batch).unwrap();
        assert_eq!((r.appended, r.duplicates), (0, 3));
        assert_eq!(s.query(&Query::default()).unwrap(), batch);
    }

    #[test]
    fn counter_reset_is_not_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        let r = s.append(&[rec("n", "g", 1, 0), rec("n", "g", 1, 5000), rec("n", "g", 1, 0)]).unwrap();
        assert_eq!((r.appended, r.duplicates), (2, 1));
    }

    #[test]
    fn one_file_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        let r = s.append(&[rec("n", "g1", 1, 0), rec("n", "g2", 1, 0)]).unwrap();
        assert_eq!(r.per_file.len(), 2);
        assert!(s.link_path("n", "g1").exists() && s.link_path("n", "g2").exists());
        assert_eq!(s.links().unwrap(), [("n".into(), "g1".into()), ("n".into(), "g2".into())]);
    }

    #[test]
    fn empty_and_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        assert!(s.query(&Query::default()).unwrap().is_empty());
        s.append(&[rec("n", "g", 1, 0)]).unwrap();
        let q = Query {
            device_id: Some("ghost".into()),
            ..Query::default()
        };
        assert!(s.query(&q).unwrap().is_empty());
    }

    #[test]
    fn unwritable_root_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("not-a-dir");
        fs::write(&file, "x").unwrap();
        assert!(PacketStore::open(&file).is_err());
    }

    #[test]
    fn partial_trailing_line_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        s.append(&[rec("n", "g", 1, 0)]).unwrap();
        let mut f = OpenOptions::new().append(true).open(s.link_path("n", "g")).unwrap();
        f.write_all(br#"{"received_at":"2020-"#).unwrap();
        assert_eq!(s.query(&Query::default()).unwrap().len(), 1);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        let held = s.try_lock().unwrap();
        assert!(matches!(s.try_lock(), Err(StoreError::Locked(_))));
        drop(held);
        assert!(s.try_lock().is_ok());
    }

    #[test]
    fn registry_persists() {
        let dir = tempfile::tempdir().unwrap();
        let s = PacketStore::open(dir.path()).unwrap();
        assert_eq!(s.registry().unwrap(), Registry::default());
        let r = Registry::from_json(r#"{"gateways": {"g": {"lat": 1, "lon": 2, "elevation_m": 3, "antenna_m_agl": 4}}}"#).unwrap();
        s.save_registry(&r).unwrap();
        assert_eq!(s.registry().unwrap(), r);
    }

    fn arb_records() -> impl Strategy<Value = Vec<PacketRecord>> {
        proptest::collection::vec(
            (0usize..3, 0usize..3, 0u64..20, 0i64..40 * 86_400, -30.0f64..15.0, 7u8..=12, -140i32..-40),
            0..40,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(d, g, c, t, snr, sf, rssi)| PacketRecord {
                    received_at: Utc.timestamp_opt(1_580_000_000 + t, 123_456_789).unwrap(),
                    device_id: ["tp1", "node/2", "n3"][d].into(),
                    gateway_id: ["gw a", "gw-b", "c"][g].into(),
                    rssi_dbm: rssi,
                    snr_db: snr,
                    spreading_factor: SpreadingFactor::new(sf).unwrap(),
                    bandwidth_khz: 125.0,
                    frequency_mhz: 867.1 + 0.2 * g as f64,
                    counter: c,
                })
                .collect()
        })
    }

    fn unique(v: &[PacketRecord]) -> Vec<PacketRecord> {
        let mut seen = HashSet::new();
        v.iter()
            .filter(|r| seen.insert((r.device_id.clone(), r.gateway_id.clone(), r.counter, r.received_at)))
            .cloned()
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_and_idempotence(recs in arb_records(), split in 0usize..40) {
            let dir = tempfile::tempdir().unwrap();
            let s = PacketStore::open(dir.path()).unwrap();
            let k = split.min(recs.len());
            // Ingest a suffix first, then everything: order must not matter.
            s.append(&recs[k..]).unwrap();
            s.append(&recs).unwrap();
            let mut expected = unique(&recs);
            expected.sort_by(|a, b| (a.received_at, &a.device_id, &a.gateway_id, a.counter).cmp(&(b.received_at, &b.device_id, &b.gateway_id, b.counter)));
            let got = s.query(&Query::default()).unwrap();
            prop_assert_eq!(&got, &expected);
            for (g, e) in got.iter().zip(&expected) {
                prop_assert_eq!(g.snr_db.to_bits(), e.snr_db.to_bits());
                prop_assert_eq!(g.frequency_mhz.to_bits(), e.frequency_mhz.to_bits());
            }
        }

        #[test]
        fn query_matches_linear_scan(recs in arb_records(), a in 0i64..40, w in 0i64..40, narrow in 0i64..20) {
            let dir = tempfile::tempdir().unwrap();
            let s = PacketStore::open(dir.path()).unwrap();
            s.append(&recs).unwrap();
            let t = |d: i64| Utc.timestamp_opt(1_580_000_000 + d * 86_400, 0).unwrap();
            let wide = Query { from: Some(t(a)), to: Some(t(a + w)), ..Query::default() };
            let got = s.query(&wide).unwrap();
            let expected: Vec<_> = unique(&recs).into_iter()
                .filter(|r| r.received_at >= t(a) && r.received_at < t(a + w))
                .collect();
            prop_assert_eq!(got.len(), expected.len());
            for r in &expected { prop_assert!(got.contains(r)); }
            let inner = Query { from: Some(t(a + narrow.min(w))), ..wide.clone() };
            for r in s.query(&inner).unwrap() { prop_assert!(got.contains(&r)); }
        }
    }
}
