//! The oracle suite behind `ris-stogeo validate`.

use std::io::Write;

use serde::Serialize;

use super::config::LoadedConfig;
use crate::analytic::{AnalyticError, AnalyticModel};
use crate::montecarlo::{ks_distance, laplace_oracle, LaplaceKind, Simulator};
use crate::optimizer::{erf_decay_ratio, optimal_beta, BetaMethod, OptimizeError};
use crate::channel::BeamParams;
use crate::params::{db_to_linear, derive_params, ScenarioConfig};

/// Laplace-transform spot points (serving distance in m, linear threshold).
pub const LAPLACE_POINTS: [(f64, f64); 3] = [(100.0, 2.0), (200.0, 10.0), (300.0, 50.0)];
/// Coverage thresholds in dB.
pub const COVERAGE_THRESHOLDS_DB: [f64; 5] = [-5.0, 0.0, 3.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// The compared quantity (a distance, difference or ratio).
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), measured, tolerance, pass: measured <= tolerance, detail }
    }
}

/// β grid over [0, 0.95·β_max) used for the coverage monotonicity check.
pub fn beta_grid(cfg: &ScenarioConfig, points: usize) -> Vec<f64> {
    let top = 0.95 * cfg.beta_max();
    (0..points).map(|i| top * i as f64 / points as f64).collect()
}

/// Largest decrease of coverage along an increasing β grid.
pub fn coverage_beta_violation(cfg: &ScenarioConfig, model: &AnalyticModel) -> Result<f64, AnalyticError> {
    // coverage depends on β only through p_EB·p_EU
    let aligned = model.aligned_coverage(cfg.tau)?;
    let mut worst: f64 = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for b in beta_grid(cfg, 20) {
        let d = derive_params(&cfg.with_beta(b));
        let c = BeamParams::bs(&d).alignment_probability() * BeamParams::ue(&d).alignment_probability() * aligned;
        worst = worst.max(prev - c);
        prev = c;
    }
    Ok(worst)
}

/// Largest non-decrease of x·e^{−x²}/erf(x) on a log grid over [1e-3, 10].
pub fn erf_ratio_violation(points: usize) -> f64 {
    let xs: Vec<f64> = (0..points).map(|i| 1e-3 * 1e4f64.powf(i as f64 / (points - 1) as f64)).collect();
    xs.windows(2)
        .map(|w| erf_decay_ratio(w[1]) - erf_decay_ratio(w[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn beta_method_gap(cfg: &ScenarioConfig) -> Result<(f64, f64, f64), OptimizeError> {
    let scan = optimal_beta(cfg, BetaMethod::Scan)?;
    let root = optimal_beta(cfg, BetaMethod::Root)?;
    Ok(((scan.beta_star - root.beta_star).abs(), scan.beta_star, root.beta_star))
}

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Config(#[from] crate::params::ConfigError),
}

pub fn run_validation(cfg: &LoadedConfig, trials: usize, seed: u64) -> Result<Vec<Check>, ValidationError> {
    let sc = &cfg.scenario;
    let model = AnalyticModel::new(sc, &cfg.quadrature)?;
    let sim = Simulator::new(sc, &cfg.monte_carlo)?;
    let outcomes = sim.run_trials(trials, seed);
    let mut checks = Vec::new();

    let direct: Vec<f64> = outcomes.iter().map(|t| t.min_direct).collect();
    let ks = ks_distance(&direct, |x| model.cdf_direct(x));
    checks.push(Check::at_most("direct_distance_ks", ks, 0.01, format!("{trials} trials")));

    let a = model.association_probabilities();
    let f = sim.metrics_from(&outcomes, sc.tau).assoc_freq;
    for (name, an, mc) in [
        ("assoc_direct", a.p_direct, f.direct),
        ("assoc_reflected", a.p_reflected, f.reflected),
        ("assoc_outage", a.p_outage, f.outage),
    ] {
        checks.push(Check::at_most(name, (an - mc).abs(), 0.01, format!("analytic {an:.5}, mc {mc:.5}")));
    }
    let sum = a.p_direct + a.p_reflected + a.p_outage;
    checks.push(Check::at_most("assoc_sum", (sum - 1.0).abs(), 1e-6, format!("sum {sum}")));

    let kinds = [
        (LaplaceKind::IdDirect, "id_direct", AnalyticModel::laplace_id_direct as fn(&AnalyticModel, f64, f64) -> f64),
        (LaplaceKind::IrDirect, "ir_direct", AnalyticModel::laplace_ir_direct),
        (LaplaceKind::IdReflected, "id_reflected", AnalyticModel::laplace_id_reflected),
        (LaplaceKind::IrReflected, "ir_reflected", AnalyticModel::laplace_ir_reflected),
    ];
    for (i, &(x, tau)) in LAPLACE_POINTS.iter().enumerate() {
        for (k, (kind, name, f)) in kinds.iter().enumerate() {
            let an = f(&model, x, tau);
            let mc = laplace_oracle(sc, *kind, x, tau, trials, seed.wrapping_add(1 + (4 * i + k) as u64), sim.radius());
            let se = mc.std_error().max(f64::MIN_POSITIVE);
            checks.push(Check::at_most(
                format!("laplace_{name}_x{x}_tau{tau}"),
                (an - mc.value).abs() / se,
                3.0,
                format!("analytic {an:.6}, mc {:.6} (se {:.1e}), |diff|/se", mc.value, mc.std_error()),
            ));
        }
    }

    for db in COVERAGE_THRESHOLDS_DB {
        let tau = db_to_linear(db);
        let an = model.coverage_probability(tau)?;
        let mc = sim.metrics_from(&outcomes, tau).coverage;
        checks.push(Check::at_most(
            format!("coverage_{db}dB"),
            (an - mc.value).abs(),
            0.02,
            format!("analytic {an:.4}, mc {:.4} ± {:.4}", mc.value, mc.half_width),
        ));
    }

    let mc = sim.metrics_from(&outcomes, sc.tau);
    let ase = model.ase(sc.tau)?;
    let ee = ase / sc.areal_power();
    checks.push(Check::at_most(
        "ase_relative",
        (ase - mc.ase.value).abs() / mc.ase.value,
        0.05,
        format!("analytic {ase:.4e}, mc {:.4e}", mc.ase.value),
    ));
    checks.push(Check::at_most(
        "ee_relative",
        (ee - mc.ee.value).abs() / mc.ee.value,
        0.05,
        format!("analytic {ee:.4e}, mc {:.4e}", mc.ee.value),
    ));
    let power = sc.areal_power();
    let ratio_gap = ((ase / ee - power) / power).abs().max(((mc.ase.value / mc.ee.value - power) / power).abs());
    checks.push(Check::at_most("ase_ee_ratio", ratio_gap, 4.0 * f64::EPSILON, "relative gap to areal power".into()));

    let v = coverage_beta_violation(sc, &model)?;
    checks.push(Check::at_most("coverage_nondecreasing_in_beta", v, 1e-9, "largest drop on a 20-point grid".into()));

    let v = erf_ratio_violation(100);
    checks.push(Check { name: "erf_ratio_decreasing".into(), measured: v, tolerance: 0.0, pass: v < 0.0, detail: "largest step".into() });

    let (gap, scan, root) = beta_method_gap(sc)?;
    checks.push(Check::at_most("beta_root_vs_scan", gap, 1e-3, format!("scan {scan:.6}, root {root:.6}")));
    Ok(checks)
}

pub fn write_checks<W: Write>(checks: &[Check], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "measured", "tolerance", "pass", "detail"])?;
    for c in checks {
        w.write_record([
            c.name.clone(),
            format!("{:e}", c.measured),
            format!("{:e}", c.tolerance),
            if c.pass { "pass" } else { "FAIL" }.to_string(),
            c.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
