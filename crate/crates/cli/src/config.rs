//! Settings resolution: command-line flags, then the TOML config file, then
//! `TROPPO_*` environment variables, then built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use troppo_core::geodesy::MEAN_EARTH_RADIUS_KM;
use troppo_core::refractivity::DEFAULT_CEILING_M;
use troppo_core::{EarthModel, SensitivityTable};

use crate::CliError;

pub const DEFAULT_STORE: &str = "troppo-data";

/// Keys accepted in the config file. Relative paths are taken relative to
/// the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub earth_radius_km: Option<f64>,
    pub gradient_ceiling_m: Option<f64>,
    pub sensitivity_table: Option<PathBuf>,
    pub elevation_url: Option<String>,
    pub store: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut c: FileConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.sensitivity_table, &mut c.store].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(c)
    }
}

/// Values given directly on the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub earth_radius_km: Option<f64>,
    pub gradient_ceiling_m: Option<f64>,
    pub sensitivity_table: Option<PathBuf>,
    pub elevation_url: Option<String>,
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub earth: EarthModel,
    pub gradient_ceiling_m: f64,
    pub sensitivity: SensitivityTable,
    pub elevation_url: Option<String>,
    pub store: PathBuf,
}

fn env_f64(env: &dyn Fn(&str) -> Option<String>, key: &str) -> Result<Option<f64>, CliError> {
    env(key)
        .map(|v| v.trim().parse().map_err(|_| CliError::Usage(format!("{key}: not a number: `{v}`"))))
        .transpose()
}

impl Config {
    pub fn resolve(flags: Overrides, file: FileConfig, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let radius = flags
            .earth_radius_km
            .or(file.earth_radius_km)
            .or(env_f64(env, "TROPPO_EARTH_RADIUS_KM")?)
            .unwrap_or(MEAN_EARTH_RADIUS_KM);
        let earth = EarthModel::new(radius).map_err(|e| CliError::Usage(e.to_string()))?;
        let gradient_ceiling_m = flags
            .gradient_ceiling_m
            .or(file.gradient_ceiling_m)
            .or(env_f64(env, "TROPPO_GRADIENT_CEILING_M")?)
            .unwrap_or(DEFAULT_CEILING_M);
        if !(gradient_ceiling_m > 0.0 && gradient_ceiling_m.is_finite()) {
            return Err(CliError::Usage(format!("gradient ceiling must be positive, got {gradient_ceiling_m}")));
        }
        let table_path = flags
            .sensitivity_table
            .or(file.sensitivity_table)
            .or_else(|| env("TROPPO_SENSITIVITY_TABLE").map(PathBuf::from));
        let sensitivity = match table_path {
            None => SensitivityTable::default(),
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                SensitivityTable::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
        };
        let elevation_url = flags
            .elevation_url
            .or(file.elevation_url)
            .or_else(|| env("TROPPO_ELEVATION_URL"));
        let store = flags
            .store
            .or(file.store)
            .or_else(|| env("TROPPO_STORE").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE));
        Ok(Config {
            earth,
            gradient_ceiling_m,
            sensitivity,
            elevation_url,
            store,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let c = Config::resolve(Overrides::default(), FileConfig::default(), &env_of(&[])).unwrap();
        assert_eq!(c.earth.radius_km(), 6371.0);
        assert_eq!(c.gradient_ceiling_m, 3000.0);
        assert_eq!(c.sensitivity, SensitivityTable::default());
        assert_eq!(c.elevation_url, None);
        assert_eq!(c.store, PathBuf::from(DEFAULT_STORE));
    }

    #[test]
    fn precedence_flag_file_env() {
        let env = env_of(&[
            ("TROPPO_EARTH_RADIUS_KM", "6400"),
            ("TROPPO_GRADIENT_CEILING_M", "1000"),
            ("TROPPO_ELEVATION_URL", "http://env"),
            ("TROPPO_STORE", "/env/store"),
        ]);
        let c = Config::resolve(Overrides::default(), FileConfig::default(), &env).unwrap();
        assert_eq!((c.earth.radius_km(), c.gradient_ceiling_m), (6400.0, 1000.0));
        assert_eq!(c.elevation_url.as_deref(), Some("http://env"));

        let file = || FileConfig {
            earth_radius_km: Some(6378.0),
            elevation_url: Some("http://file".into()),
            ..FileConfig::default()
        };
        let c = Config::resolve(Overrides::default(), file(), &env).unwrap();
        assert_eq!((c.earth.radius_km(), c.gradient_ceiling_m), (6378.0, 1000.0));
        assert_eq!(c.elevation_url.as_deref(), Some("http://file"));
        assert_eq!(c.store, PathBuf::from("/env/store"));

        let flags = Overrides {
            earth_radius_km: Some(6000.0),
            store: Some("/flag".into()),
            ..Overrides::default()
        };
        let c = Config::resolve(flags, file(), &env).unwrap();
        assert_eq!(c.earth.radius_km(), 6000.0);
        assert_eq!(c.store, PathBuf::from("/flag"));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert!(Config::resolve(Overrides::default(), FileConfig::default(), &env_of(&[("TROPPO_EARTH_RADIUS_KM", "x")])).is_err());
        let flags = Overrides {
            earth_radius_km: Some(-1.0),
            ..Overrides::default()
        };
        assert!(Config::resolve(flags, FileConfig::default(), &env_of(&[])).is_err());
    }

    #[test]
    fn file_paths_are_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sens.txt"), "12 = -141\n").unwrap();
        let path = dir.path().join("troppo.toml");
        std::fs::write(&path, "sensitivity_table = \"sens.txt\"\nstore = \"data\"\n").unwrap();
        let file = FileConfig::load(&path).unwrap();
        let c = Config::resolve(Overrides::default(), file, &env_of(&[])).unwrap();
        assert_eq!(c.sensitivity.get(troppo_core::SpreadingFactor::new(12).unwrap()), -141.0);
        assert_eq!(c.store, dir.path().join("data"));
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
    }
}
