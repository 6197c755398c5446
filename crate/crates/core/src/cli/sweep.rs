//! Parameter sweeps over one scenario variable.

use std::io::Write;
use std::time::Instant;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{LoadedConfig, Units};
use crate::analytic::AnalyticModel;
use crate::montecarlo::Simulator;
use crate::params::{db_to_linear, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SweepVariable {
    #[value(name = "beta")]
    Beta,
    #[value(name = "mu")]
    Mu,
    #[value(name = "lambda_b")]
    LambdaB,
    #[value(name = "lambda_l")]
    LambdaL,
    #[value(name = "m_b")]
    MB,
    #[value(name = "k_b")]
    KB,
    #[value(name = "snr_db")]
    SnrDb,
    #[value(name = "tau_db")]
    TauDb,
    #[value(name = "frame_len")]
    FrameLen,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Mu => "mu",
            Self::LambdaB => "lambda_b",
            Self::LambdaL => "lambda_l",
            Self::MB => "m_b",
            Self::KB => "k_b",
            Self::SnrDb => "snr_db",
            Self::TauDb => "tau_db",
            Self::FrameLen => "frame_len",
        }
    }

    /// Scenario with this variable set to `value`. Densities are read in
    /// the configured density unit; `snr_db` and `tau_db` are always dB.
    pub fn apply(&self, base: &ScenarioConfig, units: &Units, value: f64) -> Result<ScenarioConfig, String> {
        let mut c = base.clone();
        match self {
            Self::Beta => c.beta = value,
            Self::Mu => c.mu = value,
            Self::LambdaB => c.lambda_b = units.density_to_si(value),
            Self::LambdaL => c.lambda_l = units.density_to_si(value),
            Self::MB => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(format!("m_b must be a positive integer, got {value}"));
                }
                c.m_b = value as u32;
            }
            Self::KB => c.k_b = value,
            Self::SnrDb => c.snr = db_to_linear(value),
            Self::TauDb => c.tau = db_to_linear(value),
            Self::FrameLen => c.frame_len = value,
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Engine {
    Analytic,
    Montecarlo,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Output {
    Coverage,
    Ase,
    Ee,
    Assoc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub outputs: Vec<Output>,
    pub engine: Engine,
    pub mc_trials: usize,
    pub master_seed: u64,
}

/// `start:stop:count` or `start:stop:count:log`.
pub fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(format!("range '{text}' must be start:stop:count[:linear|log]"));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("bad number '{s}': {e}"));
    let (start, stop) = (num(parts[0])?, num(parts[1])?);
    let count: usize = parts[2].trim().parse().map_err(|e| format!("bad count '{}': {e}", parts[2]))?;
    if count < 2 {
        return Err("a range needs at least 2 points".into());
    }
    let log = match parts.get(3).map(|s| s.trim()) {
        None | Some("linear") => false,
        Some("log") => true,
        Some(other) => return Err(format!("unknown spacing '{other}'")),
    };
    if log && !(start > 0.0 && stop > 0.0) {
        return Err("log spacing needs positive endpoints".into());
    }
    Ok((0..count)
        .map(|i| {
            let z = i as f64 / (count - 1) as f64;
            if log {
                (start.ln() + z * (stop.ln() - start.ln())).exp()
            } else {
                start + z * (stop - start)
            }
        })
        .collect())
}

/// Comma-separated explicit values.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad value '{s}': {e}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variable: &'static str,
    pub value: f64,
    pub engine: &'static str,
    pub coverage: Option<f64>,
    pub coverage_hw: Option<f64>,
    pub ase: Option<f64>,
    pub ase_hw: Option<f64>,
    pub ee: Option<f64>,
    pub ee_hw: Option<f64>,
    pub p_direct: Option<f64>,
    pub p_reflected: Option<f64>,
    pub p_outage: Option<f64>,
    pub wall_time_s: f64,
    /// Metrics for which this row is the maximum over its engine's rows.
    pub optimum: String,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(variable: &'static str, value: f64, engine: &'static str) -> Self {
        Self {
            variable,
            value,
            engine,
            coverage: None,
            coverage_hw: None,
            ase: None,
            ase_hw: None,
            ee: None,
            ee_hw: None,
            p_direct: None,
            p_reflected: None,
            p_outage: None,
            wall_time_s: 0.0,
            optimum: String::new(),
            error: None,
        }
    }
}

fn analytic_row(spec: &SweepSpec, cfg: &LoadedConfig, value: f64) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow::empty(spec.variable.name(), value, "analytic");
    let result = (|| -> Result<(), String> {
        let scenario = spec.variable.apply(&cfg.scenario, &cfg.units, value)?;
        let model = AnalyticModel::new(&scenario, &cfg.quadrature).map_err(|e| e.to_string())?;
        let want = |o| spec.outputs.contains(&o);
        if want(Output::Coverage) {
            row.coverage = Some(model.coverage_probability(scenario.tau).map_err(|e| e.to_string())?);
        }
        if want(Output::Ase) || want(Output::Ee) {
            let ase = model.ase(scenario.tau).map_err(|e| e.to_string())?;
            if want(Output::Ase) {
                row.ase = Some(ase);
            }
            if want(Output::Ee) {
                row.ee = Some(ase / scenario.areal_power());
            }
        }
        if want(Output::Assoc) {
            let a = model.association_probabilities();
            row.p_direct = Some(a.p_direct);
            row.p_reflected = Some(a.p_reflected);
            row.p_outage = Some(a.p_outage);
        }
        Ok(())
    })();
    row.error = result.err();
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

fn montecarlo_row(spec: &SweepSpec, cfg: &LoadedConfig, value: f64) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow::empty(spec.variable.name(), value, "montecarlo");
    let result = (|| -> Result<(), String> {
        let scenario = spec.variable.apply(&cfg.scenario, &cfg.units, value)?;
        let sim = Simulator::new(&scenario, &cfg.monte_carlo).map_err(|e| e.to_string())?;
        let m = sim.estimate_metrics(spec.mc_trials, spec.master_seed);
        let want = |o| spec.outputs.contains(&o);
        if want(Output::Coverage) {
            row.coverage = Some(m.coverage.value);
            row.coverage_hw = Some(m.coverage.half_width);
        }
        if want(Output::Ase) {
            row.ase = Some(m.ase.value);
            row.ase_hw = Some(m.ase.half_width);
        }
        if want(Output::Ee) {
            row.ee = Some(m.ee.value);
            row.ee_hw = Some(m.ee.half_width);
        }
        if want(Output::Assoc) {
            row.p_direct = Some(m.assoc_freq.direct);
            row.p_reflected = Some(m.assoc_freq.reflected);
            row.p_outage = Some(m.assoc_freq.outage);
        }
        Ok(())
    })();
    row.error = result.err();
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

type Getter = fn(&SweepRow) -> Option<f64>;

fn flag_optima(rows: &mut [SweepRow], engine: &'static str) {
    let metrics: [(&str, Getter); 3] =
        [("coverage", |r| r.coverage), ("ase", |r| r.ase), ("ee", |r| r.ee)];
    for (name, get) in metrics {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if r.engine != engine {
                continue;
            }
            if let Some(v) = get(r) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        if let Some((i, _)) = best {
            let r = &mut rows[i];
            if !r.optimum.is_empty() {
                r.optimum.push(';');
            }
            r.optimum.push_str(name);
        }
    }
}

/// Evaluate every point of the sweep. Rows come out in value order, with
/// the analytic row before the Monte Carlo row for each value.
pub fn run_sweep(spec: &SweepSpec, cfg: &LoadedConfig) -> Vec<SweepRow> {
    let per_point: Vec<Vec<SweepRow>> = spec
        .values
        .par_iter()
        .map(|&v| {
            let mut rows = Vec::new();
            if matches!(spec.engine, Engine::Analytic | Engine::Both) {
                rows.push(analytic_row(spec, cfg, v));
            }
            if matches!(spec.engine, Engine::Montecarlo | Engine::Both) {
                rows.push(montecarlo_row(spec, cfg, v));
            }
            rows
        })
        .collect();
    let mut rows: Vec<SweepRow> = per_point.into_iter().flatten().collect();
    flag_optima(&mut rows, "analytic");
    flag_optima(&mut rows, "montecarlo");
    rows
}

pub const CSV_HEADER: [&str; 15] = [
    "variable",
    "value",
    "engine",
    "coverage",
    "coverage_hw",
    "ase",
    "ase_hw",
    "ee",
    "ee_hw",
    "p_direct",
    "p_reflected",
    "p_outage",
    "wall_time_s",
    "optimum",
    "error",
];

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.variable.to_string(),
            format!("{}", r.value),
            r.engine.to_string(),
            opt(r.coverage),
            opt(r.coverage_hw),
            opt(r.ase),
            opt(r.ase_hw),
            opt(r.ee),
            opt(r.ee_hw),
            opt(r.p_direct),
            opt(r.p_reflected),
            opt(r.p_outage),
            format!("{:.3}", r.wall_time_s),
            r.optimum.clone(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
