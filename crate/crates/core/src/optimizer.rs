//! Optimal unit training overhead β* and RIS deployment fraction μ*.
//!
//! Coverage depends on β only through p_EB·p_EU, and ASE/EE carry the extra
//! factor (T − β·paths)/T. The β-dependent part of the ASE is therefore
//! proportional to g(β) = (β_max − β)·p_EB(β)·p_EU(β), which is maximised
//! directly (scan) and cross-checked against the stationarity condition
//! (root).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{AnalyticError, AnalyticModel, QuadratureSpec};
use crate::channel::alignment_probability;
use crate::params::{ConfigError, ScenarioConfig};

const SCAN_POINTS: usize = 256;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("mu grid needs at least 11 points, got {0}")]
    Resolution(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMethod {
    Root,
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Coverage,
    Ase,
    Ee,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaStarResult {
    pub beta_star: f64,
    /// Stationarity residual at `beta_star`.
    pub residual: f64,
    /// g(β*) = (β_max − β*)·p_EB·p_EU.
    pub objective: f64,
    pub method: BetaMethod,
    /// The maximiser sits on the boundary β = 0.
    pub boundary: bool,
    /// More than one local maximum on the scan grid.
    pub multimodal: bool,
    /// Number of sign changes of the residual on the scan grid.
    pub sign_changes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuStarResult {
    pub metric: Metric,
    pub mu_star: f64,
    pub value: f64,
    /// (μ, metric) pairs over the grid.
    pub curve: Vec<(f64, f64)>,
}

/// x·e^{−x²}/erf(x), strictly decreasing on (0, ∞) from √π/2.
pub fn erf_decay_ratio(x: f64) -> f64 {
    if x < 1e-4 {
        // erf(x) = 2x/√π·(1 − x²/3 + …)
        return 0.5 * PI.sqrt() * (-x * x).exp() / (1.0 - x * x / 3.0);
    }
    x * (-x * x).exp() / libm::erf(x)
}

/// Constants (a, b, c, d) of the stationarity condition.
fn residual_constants(cfg: &ScenarioConfig) -> [f64; 4] {
    let theta_b = crate::params::beamwidth(cfg.m_b);
    let theta_u = crate::params::beamwidth(cfg.m_u);
    let sb = (2.0 * cfg.k_b).sqrt();
    let su = (2.0 * cfg.k_u).sqrt();
    [theta_b / (2.0 * PI * sb), theta_u / (2.0 * PI * su), 1.0 / sb, 1.0 / su]
}

/// SNR/(√π·f)·(β_max − β)·[a e^{−a²f²}/erf(af) + b(…) − c(…) − d(…)] − 1
/// with f = √(1 + β·SNR). Zero at interior stationary points of g.
pub fn stationarity_residual(cfg: &ScenarioConfig, beta: f64) -> f64 {
    let f = (1.0 + beta * cfg.snr).sqrt();
    let [a, b, c, d] = residual_constants(cfg);
    // z·e^{−z²f²}/erf(zf) = ratio(zf)/f
    let term = |z: f64| erf_decay_ratio(z * f) / f;
    let bracket = term(a) + term(b) - term(c) - term(d);
    cfg.snr / (PI.sqrt() * f) * (cfg.beta_max() - beta) * bracket - 1.0
}

/// g(β) = (β_max − β)·p_EB(β)·p_EU(β).
pub fn beta_objective(cfg: &ScenarioConfig, beta: f64) -> f64 {
    let sigma_e2 = crate::params::estimation_error_variance(beta, cfg.snr);
    let pb = alignment_probability(cfg.k_b * PI * PI * sigma_e2, crate::params::beamwidth(cfg.m_b));
    let pu = alignment_probability(cfg.k_u * PI * PI * sigma_e2, crate::params::beamwidth(cfg.m_u));
    (cfg.beta_max() - beta) * pb * pu
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

fn beta_grid(bmax: f64) -> Vec<f64> {
    (0..SCAN_POINTS).map(|i| bmax * i as f64 / SCAN_POINTS as f64).collect()
}

/// β* by direct maximisation of g (scan) or by solving the stationarity
/// condition (root). The root method falls back to the scan result when
/// the residual has no sign change.
pub fn optimal_beta(cfg: &ScenarioConfig, method: BetaMethod) -> Result<BetaStarResult, OptimizeError> {
    cfg.validate()?;
    let bmax = cfg.beta_max();
    let grid = beta_grid(bmax);
    let g: Vec<f64> = grid.iter().map(|&b| beta_objective(cfg, b)).collect();

    let n = g.len();
    let mut local_max = 0;
    for i in 0..n {
        let left = i == 0 || g[i] > g[i - 1];
        let right = i + 1 == n || g[i] >= g[i + 1];
        if left && right {
            local_max += 1;
        }
    }
    let k = (0..n).fold(0, |best, i| if g[i] > g[best] { i } else { best });
    let lo = grid[k.saturating_sub(1)];
    let hi = if k + 1 < n { grid[k + 1] } else { bmax };
    let tol = 1e-10 * bmax.max(1.0);
    let mut scan = golden_max(|b| beta_objective(cfg, b), lo, hi, tol);
    if k == 0 && beta_objective(cfg, 0.0) >= beta_objective(cfg, scan) {
        scan = 0.0;
    }
    let boundary = scan <= tol;

    let res: Vec<f64> = grid.iter().map(|&b| stationarity_residual(cfg, b)).collect();
    let changes: Vec<usize> = (0..n - 1).filter(|&i| (res[i] > 0.0) != (res[i + 1] > 0.0)).collect();

    let scan_result = BetaStarResult {
        beta_star: scan,
        residual: stationarity_residual(cfg, scan),
        objective: beta_objective(cfg, scan),
        method: BetaMethod::Scan,
        boundary,
        multimodal: local_max > 1,
        sign_changes: changes.len(),
    };
    if method == BetaMethod::Scan || changes.is_empty() {
        return Ok(scan_result);
    }
    // bracket nearest to the scan optimum
    let i = *changes
        .iter()
        .min_by(|&&p, &&q| (grid[p] - scan).abs().total_cmp(&(grid[q] - scan).abs()))
        .expect("non-empty");
    let (mut a, mut b) = (grid[i], grid[i + 1]);
    let mut fa = res[i];
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = stationarity_residual(cfg, m);
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let root = if stationarity_residual(cfg, a).abs() <= stationarity_residual(cfg, b).abs() { a } else { b };
    Ok(BetaStarResult {
        beta_star: root,
        residual: stationarity_residual(cfg, root),
        objective: beta_objective(cfg, root),
        method: BetaMethod::Root,
        ..scan_result
    })
}

/// Evaluate `metric` over `resolution` equally spaced μ ∈ [0, 1] and return
/// the maximiser (ties go to the smaller μ).
pub fn optimal_mu(
    cfg: &ScenarioConfig,
    metric: Metric,
    resolution: usize,
    quad: &QuadratureSpec,
) -> Result<MuStarResult, OptimizeError> {
    if resolution < 11 {
        return Err(OptimizeError::Resolution(resolution));
    }
    cfg.validate()?;
    let mus: Vec<f64> = (0..resolution).map(|i| i as f64 / (resolution - 1) as f64).collect();
    let values: Vec<Result<f64, OptimizeError>> = mus
        .par_iter()
        .map(|&mu| {
            let c = ScenarioConfig { mu, ..cfg.clone() };
            let m = AnalyticModel::new(&c, quad)?;
            Ok(match metric {
                Metric::Coverage => m.coverage_probability(c.tau)?,
                Metric::Ase => m.ase(c.tau)?,
                Metric::Ee => m.ee(c.tau)?,
            })
        })
        .collect();
    let mut curve = Vec::with_capacity(resolution);
    for (mu, v) in mus.iter().zip(values) {
        curve.push((*mu, v?));
    }
    let best = (1..curve.len()).fold(0, |b, i| if curve[i].1 > curve[b].1 { i } else { b });
    Ok(MuStarResult { metric, mu_star: curve[best].0, value: curve[best].1, curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let x = 1e-3 * 1e4f64.powf(i as f64 / 99.0);
            let g = erf_decay_ratio(x);
            assert!(g < prev, "at {x}");
            prev = g;
        }
        assert!((erf_decay_ratio(1e-9) - 0.5 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn residual_limits() {
        let cfg = ScenarioConfig::reference();
        let near_max = cfg.beta_max() * (1.0 - 1e-12);
        assert!((stationarity_residual(&cfg, near_max) + 1.0).abs() < 1e-9);
        assert!(stationarity_residual(&cfg, 0.0) > -1.0);
    }

    #[test]
    fn root_and_scan_agree_for_reference() {
        let cfg = ScenarioConfig::reference();
        let scan = optimal_beta(&cfg, BetaMethod::Scan).unwrap();
        let root = optimal_beta(&cfg, BetaMethod::Root).unwrap();
        assert_eq!(root.method, BetaMethod::Root);
        assert!(root.residual.abs() <= 1e-8, "{root:?}");
        assert!((scan.beta_star - root.beta_star).abs() < 1e-3, "{scan:?} {root:?}");
        assert!(scan.beta_star > 0.0 && scan.beta_star < cfg.beta_max());
        for b in beta_grid(cfg.beta_max()) {
            assert!(beta_objective(&cfg, b) <= scan.objective + 1e-12);
        }
    }

    #[test]
    fn near_perfect_alignment_needs_no_training() {
        let cfg = ScenarioConfig { k_b: 1e-6, k_u: 1e-6, ..ScenarioConfig::reference() };
        let r = optimal_beta(&cfg, BetaMethod::Root).unwrap();
        assert!(r.beta_star < 1e-6 && r.boundary, "{r:?}");
        assert_eq!(r.method, BetaMethod::Scan);
    }

    #[test]
    fn longer_frames_allow_more_training() {
        let a = optimal_beta(&ScenarioConfig::reference(), BetaMethod::Scan).unwrap();
        let cfg = ScenarioConfig { frame_len: 8960.0, ..ScenarioConfig::reference() };
        assert!((cfg.beta_max() - 2.0 * ScenarioConfig::reference().beta_max()).abs() < 1e-12);
        let b = optimal_beta(&cfg, BetaMethod::Scan).unwrap();
        assert!(b.beta_star >= a.beta_star);
    }

    #[test]
    fn mu_resolution_checked() {
        let r = optimal_mu(&ScenarioConfig::reference(), Metric::Ase, 5, &QuadratureSpec::default());
        assert_eq!(r.unwrap_err(), OptimizeError::Resolution(5));
    }
}
