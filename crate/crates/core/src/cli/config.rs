//! JSON scenario files and `--set key=value` overrides.
//!
//! A file is a flat object of scenario fields plus optional `units`,
//! `quadrature` and `monte_carlo` objects. Missing scenario fields take
//! the reference-scenario values. Numbers are read in the units declared
//! by the `units` block, which defaults to the display units used in the
//! reference table (densities per km², SNR/N₀/τ in dB, powers in dBm).
//!
//! ```json
//! {
//!   "units": { "density": "per_km2", "ratio": "dB", "power": "dBm" },
//!   "lambda_b": 10, "lambda_l": 500, "mu": 0.6, "snr": 16, "tau": 3,
//!   "quadrature": { "rel_tol": 1e-6 },
//!   "monte_carlo": { "mode": "per-link" }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analytic::QuadratureSpec;
use crate::montecarlo::McSettings;
use crate::params::{
    db_to_linear, dbm_to_watts, linear_to_db, per_km2_to_per_m2, ConfigError, ScenarioConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DensityUnit {
    #[default]
    #[serde(rename = "per_km2")]
    PerKm2,
    #[serde(rename = "per_m2")]
    PerM2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RatioUnit {
    #[default]
    #[serde(rename = "dB")]
    Db,
    #[serde(rename = "linear")]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PowerUnit {
    #[default]
    #[serde(rename = "dBm")]
    Dbm,
    #[serde(rename = "W")]
    Watt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Units {
    /// λ_B, λ_U, λ_L.
    pub density: DensityUnit,
    /// SNR, N₀ and τ.
    pub ratio: RatioUnit,
    /// P_B and P_R.
    pub power: PowerUnit,
}

impl Units {
    pub fn density_to_si(&self, x: f64) -> f64 {
        match self.density {
            DensityUnit::PerKm2 => per_km2_to_per_m2(x),
            DensityUnit::PerM2 => x,
        }
    }

    pub fn density_from_si(&self, x: f64) -> f64 {
        match self.density {
            DensityUnit::PerKm2 => x * 1e6,
            DensityUnit::PerM2 => x,
        }
    }

    pub fn ratio_to_si(&self, x: f64) -> f64 {
        match self.ratio {
            RatioUnit::Db => db_to_linear(x),
            RatioUnit::Linear => x,
        }
    }

    pub fn ratio_from_si(&self, x: f64) -> f64 {
        match self.ratio {
            RatioUnit::Db => linear_to_db(x),
            RatioUnit::Linear => x,
        }
    }

    pub fn power_to_si(&self, x: f64) -> f64 {
        match self.power {
            PowerUnit::Dbm => dbm_to_watts(x),
            PowerUnit::Watt => x,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    units: Units,
    lambda_b: Option<f64>,
    lambda_u: Option<f64>,
    lambda_l: Option<f64>,
    mu: Option<f64>,
    blockage_len: Option<f64>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    m_b: Option<u32>,
    m_r: Option<u32>,
    m_u: Option<u32>,
    k_b: Option<f64>,
    k_u: Option<f64>,
    frame_len: Option<f64>,
    beta: Option<f64>,
    snr: Option<f64>,
    p_b: Option<f64>,
    p_r: Option<f64>,
    n0: Option<f64>,
    tau: Option<f64>,
    #[serde(default)]
    quadrature: QuadratureSpec,
    #[serde(default)]
    monte_carlo: McSettings,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadedConfig {
    pub scenario: ScenarioConfig,
    pub units: Units,
    pub quadrature: QuadratureSpec,
    pub monte_carlo: McSettings,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("bad override '{0}': expected key=value")]
    Override(String),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl RawConfig {
    fn resolve(self) -> LoadedConfig {
        let u = self.units;
        let mut c = ScenarioConfig::reference();
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            };
            ($field:ident, $conv:ident) => {
                if let Some(v) = self.$field {
                    c.$field = u.$conv(v);
                }
            };
        }
        set!(lambda_b, density_to_si);
        set!(lambda_u, density_to_si);
        set!(lambda_l, density_to_si);
        set!(mu);
        set!(blockage_len);
        set!(alpha);
        set!(gamma);
        set!(m_b);
        set!(m_r);
        set!(m_u);
        set!(k_b);
        set!(k_u);
        set!(frame_len);
        set!(beta);
        set!(snr, ratio_to_si);
        set!(p_b, power_to_si);
        set!(p_r, power_to_si);
        set!(n0, ratio_to_si);
        set!(tau, ratio_to_si);
        LoadedConfig { scenario: c, units: u, quadrature: self.quadrature, monte_carlo: self.monte_carlo }
    }
}

/// Parse an override value: JSON if it parses, a bare string otherwise.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Apply `a.b.c=value` to a JSON object, creating nested objects.
fn apply_override(root: &mut Map<String, Value>, spec: &str) -> Result<(), LoadError> {
    let (key, value) = spec.split_once('=').ok_or_else(|| LoadError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(LoadError::Override(spec.to_string()));
    }
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut node = root;
    for p in parts {
        let entry = node.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
        node = entry.as_object_mut().ok_or_else(|| LoadError::Override(spec.to_string()))?;
    }
    node.insert(last.to_string(), override_value(value.trim()));
    Ok(())
}

/// Build a configuration from optional file contents plus overrides, then
/// validate the scenario.
pub fn load_from_str(contents: Option<&str>, overrides: &[String]) -> Result<LoadedConfig, LoadError> {
    let mut root = match contents {
        Some(text) => match serde_json::from_str::<Value>(text).map_err(|e| LoadError::Parse(e.to_string()))? {
            Value::Object(m) => m,
            _ => return Err(LoadError::Parse("top level must be a JSON object".into())),
        },
        None => Map::new(),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let raw: RawConfig =
        serde_json::from_value(Value::Object(root)).map_err(|e| LoadError::Parse(e.to_string()))?;
    let loaded = raw.resolve();
    loaded.scenario.validate()?;
    Ok(loaded)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, LoadError> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|source| LoadError::Io {
            path: p.display().to_string(),
            source,
        })?),
        None => None,
    };
    load_from_str(text.as_deref(), overrides)
}
