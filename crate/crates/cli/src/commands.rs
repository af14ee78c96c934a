use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use chrono::Duration;
use troppo_core::classifier::{classify_link, ClassifyError, LinkCase, Mechanism};
use troppo_core::geodesy::great_circle_distance;
use troppo_core::ingest::{parse_packets, PacketFormat, PacketStore, Query, Registry, StoreError};
use troppo_core::linkbudget::KnifeEdgeFormula;
use troppo_core::radiosonde::{parse_wyoming_sounding, Sounding};
use troppo_core::refractivity::{self, PropagationCondition, RefractivityError};
use troppo_core::stats::{self, Product};
use troppo_core::terrain::{self, ElevationClient, TerrainError, TerrainProfile};
use troppo_core::SpreadingFactor;

use crate::config::Config;
use crate::{CliError, Format, IngestArgs, KnifeEdge, LinkArgs, Metric, RefractArgs, StatsArgs};

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_sounding(path: &Path) -> Result<Sounding, CliError> {
    parse_wyoming_sounding(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn store_err(e: StoreError) -> CliError {
    match e {
        StoreError::Corrupt { .. } | StoreError::Registry(_) => CliError::Usage(e.to_string()),
        _ => CliError::Environment(e.to_string()),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Environment(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Environment(format!("stdout: {e}"))),
    }
}

/// The explicit registry file, else the one kept in the store.
fn load_registry(cfg: &Config, explicit: Option<&Path>) -> Result<Registry, CliError> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| cfg.store.join("registry.json"));
    if explicit.is_none() && !path.exists() {
        return Err(CliError::Usage(format!(
            "no registry at {} (pass --registry or ingest one with `troppo ingest --registry`)",
            path.display()
        )));
    }
    let r = Registry::load(&path).map_err(|e| CliError::Usage(e.to_string()))?;
    for w in r.warnings() {
        log::warn!("{w}");
    }
    Ok(r)
}

pub fn refract(cfg: &Config, a: &RefractArgs) -> Result<(), CliError> {
    let s = load_sounding(&a.sounding)?;
    let layers = refractivity::gradient_profile(&s).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut csv = String::from("height_m,n_units,gradient_n_per_km,condition\n");
    for p in refractivity::refractivity_profile(&s) {
        match layers.iter().find(|l| l.base_height_m_asl == p.height_m_asl) {
            Some(l) => csv.push_str(&format!(
                "{},{:.3},{:.3},{}\n",
                p.height_m_asl,
                p.n_units,
                l.gradient_n_per_km,
                l.condition()
            )),
            None => csv.push_str(&format!("{},{:.3},,\n", p.height_m_asl, p.n_units)),
        }
    }
    let (layer, cond) = refractivity::dominant_layer(&layers, s.surface_elevation_m().unwrap_or(0.0), cfg.gradient_ceiling_m)
        .map_err(|e| CliError::Analysis(e.to_string()))?;
    let g = layer.gradient_n_per_km;
    let k = match cond {
        PropagationCondition::Ducting => "K undefined (ducting)".to_string(),
        _ => format!("K = {:.2}", refractivity::k_factor(g, &cfg.earth).map_err(|e| CliError::Analysis(e.to_string()))?),
    };
    let summary = format!(
        "dominant gradient {g:.1} N/km at {:.0}-{:.0} m ASL: {cond}, {k}",
        layer.base_height_m_asl, layer.top_height_m_asl
    );
    match &a.out {
        Some(p) => {
            write_output(Some(p), &csv)?;
            println!("{summary}");
        }
        None => {
            write_output(None, &csv)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn fetch_profile(cfg: &Config, a: &LinkArgs, registry: &Registry) -> Result<TerrainProfile, CliError> {
    let url = cfg.elevation_url.as_ref().ok_or_else(|| {
        CliError::Usage("--fetch needs an elevation service (--elevation-url, config elevation_url or TROPPO_ELEVATION_URL)".into())
    })?;
    let node = registry.node(&a.node).ok_or_else(|| CliError::Usage(format!("node `{}` is not in the registry", a.node)))?;
    let gw = registry
        .gateway(&a.gateway)
        .ok_or_else(|| CliError::Usage(format!("gateway `{}` is not in the registry", a.gateway)))?;
    let p = ElevationClient::new(url.clone())
        .fetch_profile(&node.location, &gw.location, a.samples, &cfg.earth)
        .map_err(|e| match e {
            TerrainError::Geo(_) | TerrainError::TooFewSamples(_) => CliError::Usage(e.to_string()),
            _ => CliError::Environment(e.to_string()),
        })?;
    if let Some(out) = &a.save_profile {
        write_output(Some(out), &terrain::write_profile_csv(&p))?;
    }
    Ok(p)
}

pub fn link(cfg: &Config, a: &LinkArgs) -> Result<(), CliError> {
    let registry = load_registry(cfg, a.registry.as_deref())?;
    let sf = SpreadingFactor::new(a.sf).map_err(|e| CliError::Usage(e.to_string()))?;
    let sounding = a.sounding.as_deref().map(load_sounding).transpose()?;
    let profile = match &a.profile {
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            terrain::load_profile_csv(f).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => fetch_profile(cfg, a, &registry)?,
    };
    let mut case = LinkCase::from_registry(&registry, &a.node, &a.gateway, profile, sf).map_err(|e| CliError::Usage(e.to_string()))?;
    case.sounding = sounding;
    case.table = cfg.sensitivity;
    case.options.earth = cfg.earth;
    case.options.ceiling_m_agl = cfg.gradient_ceiling_m;
    case.options.knife_edge = match a.knife_edge {
        KnifeEdge::Printed => KnifeEdgeFormula::Printed,
        KnifeEdge::ItuP526 => KnifeEdgeFormula::ItuP526,
    };
    let report = classify_link(&case).map_err(|e| match e {
        ClassifyError::Refractivity(RefractivityError::NothingUnderCeiling { .. }) => CliError::Analysis(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let text = if a.json {
        let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
        s.push('\n');
        s
    } else {
        report.to_text()
    };
    write_output(None, &text)?;
    if a.strict && report.mechanism == Mechanism::Unexplained {
        return Err(CliError::Analysis("link is unexplained by the modelled mechanisms".into()));
    }
    Ok(())
}

pub fn ingest(cfg: &Config, a: &IngestArgs) -> Result<(), CliError> {
    let file = File::open(&a.input).map_err(|e| CliError::Usage(format!("{}: {e}", a.input.display())))?;
    let format = match a.format {
        Format::Canonical => PacketFormat::Canonical,
        Format::TtnV3 => PacketFormat::TtnV3,
    };
    let registry = a
        .registry
        .as_deref()
        .map(|p| Registry::load(p).map_err(|e| CliError::Usage(e.to_string())))
        .transpose()?;
    let parsed = parse_packets(BufReader::new(file), format)
        .map_err(|e| CliError::Environment(format!("{}: {e}", a.input.display())))?;
    for r in &parsed.rejects {
        eprintln!("{}:{}: rejected: {}", a.input.display(), r.line, r.reason);
    }

    let store = PacketStore::open(&cfg.store).map_err(store_err)?;
    let _lock = store.try_lock().map_err(store_err)?;
    if let Some(r) = &registry {
        for w in r.warnings() {
            log::warn!("{w}");
        }
        store.save_registry(r).map_err(store_err)?;
    }
    let report = store.append(&parsed.records).map_err(store_err)?;
    for (path, n) in &report.per_file {
        log::info!("{}: {n} new", path.display());
    }
    println!(
        "{} appended, {} duplicate, {} rejected",
        report.appended,
        report.duplicates,
        parsed.rejects.len()
    );
    Ok(())
}

fn parse_window(w: &str) -> Result<Option<Duration>, CliError> {
    if w == "all" {
        return Ok(None);
    }
    w.strip_suffix('d')
        .and_then(|n| n.parse::<u32>().ok())
        .filter(|&n| n > 0)
        .map(|n| Some(Duration::days(n as i64)))
        .ok_or_else(|| CliError::Usage(format!("bad window `{w}` (expected all, 1d, 10d, 30d, ...)")))
}

pub fn stats(cfg: &Config, a: &StatsArgs) -> Result<(), CliError> {
    let window = parse_window(&a.window)?;
    if !cfg.store.join("links").is_dir() {
        return Err(CliError::Usage(format!("no packet store at {}", cfg.store.display())));
    }
    let store = PacketStore::open(&cfg.store).map_err(store_err)?;
    let mut records = store
        .query(&Query {
            device_id: a.device.clone(),
            gateway_id: a.gateway.clone(),
            ..Query::default()
        })
        .map_err(store_err)?;
    if let (Some(w), Some(newest)) = (window, records.last().map(|r| r.received_at)) {
        records.retain(|r| r.received_at >= newest - w);
    }

    let product = match a.metric {
        Metric::Daily => Product::Daily(stats::daily_counts(&records)),
        Metric::Sf => Product::Sf(stats::sf_distribution(&records)),
        Metric::Series => Product::Series(stats::series(&records)),
        Metric::Summary => {
            let (Some(dev), Some(gw)) = (&a.device, &a.gateway) else {
                return Err(CliError::Usage("--metric summary needs --device and --gateway".into()));
            };
            let registry = match &a.registry {
                Some(p) => Some(load_registry(cfg, Some(p))?),
                None if store.registry_path().exists() => Some(load_registry(cfg, None)?),
                None => None,
            };
            let ends = registry.as_ref().and_then(|r| r.node(dev).zip(r.gateway(gw)));
            if ends.is_none() {
                log::warn!("{dev} -> {gw} is not fully registered; distance omitted");
            }
            let distance = ends.map(|(n, g)| great_circle_distance(&n.location, &g.location, &cfg.earth));
            let s = stats::summarize(dev, gw, &records, distance)
                .ok_or_else(|| CliError::Usage(format!("no records for {dev} -> {gw}")))?;
            Product::Summary(s)
        }
    };
    let text = if a.svg {
        stats::emit_svg(&product)
    } else {
        stats::emit_csv(&product)
    };
    write_output(a.out.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows() {
        assert_eq!(parse_window("all").unwrap(), None);
        assert_eq!(parse_window("30d").unwrap(), Some(Duration::days(30)));
        assert!(parse_window("0d").is_err());
        assert!(parse_window("week").is_err());
    }
}
