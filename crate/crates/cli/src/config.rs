//! Run configuration: a TOML file merged under command-line flags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use spindex::geometry::GeometrySpec;
use spindex::index::IndexTolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryName {
    Circle,
    Torus,
    Sphere,
    BCylinder,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: Option<GeometryName>,
    pub periods: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub boundary_length: Option<f64>,
    pub collar: Option<f64>,
    pub resolution: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub geometric: Option<f64>,
    pub supertrace: Option<f64>,
    pub mckean_singer: Option<f64>,
    pub eta: Option<f64>,
}

/// Contents of a `--config` file. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub geometry: GeometryConfig,
    pub twist: Option<i64>,
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

pub const CONFIG_SCHEMA: &str = "\
configuration file (TOML, unknown keys rejected):

  twist = 2                      # twisting degree d
  times = [0.1, 0.5, 1.0]        # heat times
  format = \"json\"                # json | csv
  output = \"report.json\"         # default: standard output

  [geometry]
  kind = \"torus\"                 # circle | torus | sphere | b-cylinder
  periods = [6.283185, 6.283185] # circle / torus
  radius = 1.0                   # sphere
  boundary_length = 6.283185     # b-cylinder
  collar = 1.0                   # b-cylinder
  resolution = 8

  [tolerances]                   # all positive
  geometric = 1e-3
  supertrace = 1e-6
  mckean_singer = 1e-8
  eta = 1e-10
";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("geometric", t.geometric),
            ("supertrace", t.supertrace),
            ("mckean_singer", t.mckean_singer),
            ("eta", t.eta),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(ConfigError(format!("tolerance {name} must be positive, got {v}")));
                }
            }
        }
        if let Some(times) = &self.times {
            if let Some(t) = times.iter().find(|t| !(**t > 0.0)) {
                return Err(ConfigError(format!("times must be positive, got {t}")));
            }
        }
        if let Some(out) = &self.output {
            check_output(out)?;
        }
        Ok(())
    }

    pub fn tolerances(&self) -> IndexTolerances {
        let d = IndexTolerances::default();
        let t = &self.tolerances;
        IndexTolerances {
            geometric: t.geometric.unwrap_or(d.geometric),
            supertrace: t.supertrace.unwrap_or(d.supertrace),
            mckean_singer: t.mckean_singer.unwrap_or(d.mckean_singer),
            eta: t.eta.unwrap_or(d.eta),
        }
    }
}

pub fn check_output(path: &Path) -> Result<(), ConfigError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let meta = std::fs::metadata(dir)
        .map_err(|e| ConfigError(format!("output directory {}: {e}", dir.display())))?;
    if !meta.is_dir() || meta.permissions().readonly() {
        return Err(ConfigError(format!("output directory {} is not writable", dir.display())));
    }
    Ok(())
}

impl GeometryConfig {
    /// Flags win over file values.
    pub fn merged(&self, over: &GeometryConfig) -> GeometryConfig {
        GeometryConfig {
            kind: over.kind.or(self.kind),
            periods: over.periods.clone().or_else(|| self.periods.clone()),
            radius: over.radius.or(self.radius),
            boundary_length: over.boundary_length.or(self.boundary_length),
            collar: over.collar.or(self.collar),
            resolution: over.resolution.or(self.resolution),
        }
    }

    pub fn spec(&self, default_kind: GeometryName, default_resolution: usize) -> Result<GeometrySpec, ConfigError> {
        let kind = self.kind.unwrap_or(default_kind);
        let res = self.resolution.unwrap_or(default_resolution);
        let periods = |n: usize| -> Result<Vec<f64>, ConfigError> {
            let p = self.periods.clone().unwrap_or_else(|| vec![2.0 * PI; n]);
            if p.len() != n {
                return Err(ConfigError(format!("{n} periods expected, got {}", p.len())));
            }
            Ok(p)
        };
        Ok(match kind {
            GeometryName::Circle => GeometrySpec::flat_torus(periods(1)?, res),
            GeometryName::Torus => GeometrySpec::flat_torus(periods(2)?, res),
            GeometryName::Sphere => GeometrySpec::round_sphere(self.radius.unwrap_or(1.0), res),
            GeometryName::BCylinder => GeometrySpec::b_cylinder(
                self.boundary_length.unwrap_or(2.0 * PI),
                self.collar.unwrap_or(1.0),
                res,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("twist = 1\nbogus = 2").is_err());
        assert!(toml::from_str::<RunConfig>("[geometry]\nkind = \"torus\"\nsides = 3").is_err());
        let ok: RunConfig = toml::from_str("twist = 1\n[geometry]\nkind = \"b-cylinder\"\ncollar = 2.0").unwrap();
        assert_eq!(ok.geometry.kind, Some(GeometryName::BCylinder));
    }

    #[test]
    fn tolerances_must_be_positive() {
        let cfg: RunConfig = toml::from_str("[tolerances]\neta = 0.0").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str("[tolerances]\neta = 1e-9").unwrap();
        assert_eq!(cfg.tolerances().eta, 1e-9);
        assert_eq!(cfg.tolerances().geometric, 1e-3);
    }

    #[test]
    fn flags_override_file() {
        let file = GeometryConfig {
            kind: Some(GeometryName::Sphere),
            resolution: Some(40),
            ..Default::default()
        };
        let flags = GeometryConfig {
            resolution: Some(20),
            ..Default::default()
        };
        let m = file.merged(&flags);
        assert_eq!(m.kind, Some(GeometryName::Sphere));
        assert_eq!(m.resolution, Some(20));
        assert!(GeometryConfig {
            periods: Some(vec![1.0]),
            ..Default::default()
        }
        .spec(GeometryName::Torus, 8)
        .is_err());
    }
}
