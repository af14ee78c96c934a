use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::GeoPoint;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reading registry {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid registry: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid registry: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    #[serde(flatten)]
    pub location: GeoPoint,
    pub antenna_m_agl: f64,
    pub erp_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatewayEntry {
    #[serde(flatten)]
    pub location: GeoPoint,
    pub antenna_m_agl: f64,
}

/// Known end nodes and gateways, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    #[serde(default, deserialize_with = "unique_map")]
    pub nodes: BTreeMap<String, NodeEntry>,
    #[serde(default, deserialize_with = "unique_map")]
    pub gateways: BTreeMap<String, GatewayEntry>,
}

impl Registry {
    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let r: Registry = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Registry::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("registry serializes");
        s.push('\n');
        s
    }

    fn validate(&self) -> Result<(), RegistryError> {
        let heights = self
            .nodes
            .iter()
            .map(|(id, n)| (id, n.antenna_m_agl))
            .chain(self.gateways.iter().map(|(id, g)| (id, g.antenna_m_agl)));
        for (id, h) in heights {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(RegistryError::Invalid(format!("{id}: antenna height {h} m")));
            }
        }
        Ok(())
    }

    /// Human-readable notes about incomplete entries.
    pub fn warnings(&self) -> Vec<String> {
        let nodes = self
            .nodes
            .iter()
            .filter(|(_, n)| n.location.elevation_m_asl().is_none())
            .map(|(id, _)| format!("node {id} has no elevation_m"));
        let gws = self
            .gateways
            .iter()
            .filter(|(_, g)| g.location.elevation_m_asl().is_none())
            .map(|(id, _)| format!("gateway {id} has no elevation_m"));
        nodes.chain(gws).collect()
    }

    pub fn node(&self, id: &str) -> Option<&NodeEntry> {
        self.nodes.get(id)
    }

    pub fn gateway(&self, id: &str) -> Option<&GatewayEntry> {
        self.gateways.get(id)
    }
}

/// Like the default map impl, but a repeated key is an error instead of a
/// silent overwrite.
fn unique_map<'de, D, V>(d: D) -> Result<BTreeMap<String, V>, D::Error>
where
    D: Deserializer<'de>,
    V: Deserialize<'de>,
{
    struct V2<V>(PhantomData<V>);

    impl<'de, V: Deserialize<'de>> Visitor<'de> for V2<V> {
        type Value = BTreeMap<String, V>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map of ids")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((k, v)) = m.next_entry::<String, V>()? {
                if out.contains_key(&k) {
                    return Err(de::Error::custom(format!("duplicate id `{k}`")));
                }
                out.insert(k, v);
            }
            Ok(out)
        }
    }

    d.deserialize_map(V2(PhantomData))
}
