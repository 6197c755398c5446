//! Numerical evaluation of the analytic model: link-distance laws,
//! association probabilities, interference Laplace transforms, coverage,
//! area spectral efficiency and energy efficiency.
//!
//! The reflected-link integrals are evaluated in elliptic coordinates (see
//! [`crate::kernel`]): with the BS at distance `u`, every RIS position is
//! indexed by its reflected path length `s` and the angle ψ, and the ψ
//! integral collapses into the tabulated kernel Φ(u, s). Each region of
//! the form "reflected path length in [a, b]" then becomes a 1-D integral
//! in `s`, and the C₂/C₃ sub-region bookkeeping reduces to choosing the
//! lower limit max(u, threshold).
//!
//! Every branch integral over the serving distance is done on one fixed
//! composite Gauss–Legendre grid. The per-node distance densities and
//! exclusion probabilities are computed once per model; coverage at a new
//! threshold only re-evaluates the Laplace transforms and noise factors.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::alignment_probability;
use crate::kernel::KernelTable;
use crate::params::{ConfigError, DerivedParams, ScenarioConfig};
use crate::quadrature::{integrate, integrate_with_breaks, QuadDiagnostics, Tolerance};

/// How the two branch integrals of the coverage expression are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchWeighting {
    /// Integrate each distance density against the probability that the
    /// other link type is weaker, i.e. the exact joint law of the serving
    /// link under independent direct/reflected candidates.
    Conditional,
    /// Multiply P_D (P_R) by the average over the normalised density
    /// f_D/F_D(∞) (f_R/F_R(∞)).
    Normalized,
}

/// Truncation and resolution settings for the analytic engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Relative tolerance of the adaptive integrals. Nested distance-law
    /// integrals run 100 times tighter; Laplace exponents are controlled
    /// in absolute terms.
    pub rel_tol: f64,
    /// Tail threshold for the LoS factor exp(−η r).
    pub eps_los: f64,
    /// Radial truncation in metres. `None` means ln(1/eps_los)/η.
    pub r_max: Option<f64>,
    /// Number of table nodes for the angular kernel.
    pub kernel_nodes: usize,
    /// Number of Gauss–Legendre panels over the serving distance.
    pub distance_panels: usize,
    /// Maximum number of thresholds sampled for the ASE integral.
    pub ase_thresholds: usize,
    /// Spacing of the ASE thresholds in t = ln(1 + threshold).
    pub ase_step: f64,
    pub weighting: BranchWeighting,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            eps_los: 1e-6,
            r_max: None,
            kernel_nodes: 1025,
            distance_panels: 48,
            ase_thresholds: 32,
            ase_step: 0.5,
            weighting: BranchWeighting::Conditional,
        }
    }
}

impl QuadratureSpec {
    pub fn r_max(&self, eta: f64) -> f64 {
        self.r_max.unwrap_or_else(|| (1.0 / self.eps_los).ln() / eta)
    }

    pub fn validate(&self, eta: f64) -> Result<(), AnalyticError> {
        let mut problems = Vec::new();
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            problems.push(format!("rel_tol must lie in (0, 1e-2], got {}", self.rel_tol));
        }
        if !(self.eps_los > 0.0 && self.eps_los < 1.0) {
            problems.push(format!("eps_los must lie in (0, 1), got {}", self.eps_los));
        }
        let r = self.r_max(eta);
        if !(r.is_finite() && r >= 5.0 / eta) {
            problems.push(format!("r_max must be at least 5/eta = {}, got {r}", 5.0 / eta));
        }
        if self.kernel_nodes < 32 || self.distance_panels < 32 {
            problems.push("kernel_nodes and distance_panels must be at least 32".into());
        }
        if self.ase_thresholds < 8 {
            problems.push("ase_thresholds must be at least 8".into());
        }
        if !(self.ase_step > 0.0 && self.ase_step <= 2.0) {
            problems.push(format!("ase_step must lie in (0, 2], got {}", self.ase_step));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AnalyticError::Spec(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalyticError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid quadrature settings: {0}")]
    Spec(String),
    #[error("quadrature did not converge for {quantity}: {failures} integrals missed tolerance, worst relative error {achieved:.3e}")]
    NonConvergence { quantity: &'static str, failures: usize, achieved: f64 },
}

/// Probabilities of associating through a direct link, a reflected link,
/// or not at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssociationProbabilities {
    pub p_direct: f64,
    pub p_reflected: f64,
    pub p_outage: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    w: f64,
    f_d: f64,
    /// P[no reflected link stronger than a direct link at x]
    excl_d: f64,
    f_r: f64,
    /// P[no direct link stronger than a reflected link at x]
    excl_r: f64,
}

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn shared_kernel(nodes: usize) -> Arc<KernelTable> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<KernelTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(k) = cache.lock().expect("kernel cache poisoned").get(&nodes) {
        return Arc::clone(k);
    }
    let table = Arc::new(KernelTable::new(nodes));
    cache
        .lock()
        .expect("kernel cache poisoned")
        .entry(nodes)
        .or_insert(table)
        .clone()
}

/// 1 − (1 + z)·e^{−z}, accurate for small z.
fn los_mass_fraction(z: f64) -> f64 {
    if z < 1e-3 {
        let z2 = z * z;
        z2 * (0.5 - z / 3.0 + z2 / 8.0 - z2 * z / 30.0)
    } else {
        -(-z).exp_m1() - z * (-z).exp()
    }
}

/// Analytic engine for one scenario.
#[derive(Debug, Clone)]
pub struct AnalyticModel {
    cfg: ScenarioConfig,
    d: DerivedParams,
    quad: QuadratureSpec,
    r_max: f64,
    /// Integration length used past each lower limit.
    tail: f64,
    kernel: Arc<KernelTable>,
    nodes: Vec<Node>,
    assoc: AssociationProbabilities,
    blocked_total: f64,
    reflected_branch_mass: f64,
    build_diagnostics: QuadDiagnostics,
}

impl AnalyticModel {
    pub fn new(cfg: &ScenarioConfig, quad: &QuadratureSpec) -> Result<Self, AnalyticError> {
        let d = cfg.derive()?;
        quad.validate(d.eta)?;
        let r_max = quad.r_max(d.eta);
        let mut model = Self {
            cfg: cfg.clone(),
            d,
            quad: quad.clone(),
            r_max,
            tail: 1.5 * r_max,
            kernel: shared_kernel(quad.kernel_nodes),
            nodes: Vec::new(),
            assoc: AssociationProbabilities { p_direct: 0.0, p_reflected: 0.0, p_outage: 0.0 },
            blocked_total: 0.0,
            reflected_branch_mass: 0.0,
            build_diagnostics: QuadDiagnostics::default(),
        };
        model.build()?;
        Ok(model)
    }

    /// Model with the default quadrature settings.
    pub fn with_defaults(cfg: &ScenarioConfig) -> Result<Self, AnalyticError> {
        Self::new(cfg, &QuadratureSpec::default())
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn derived(&self) -> &DerivedParams {
        &self.d
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn diagnostics(&self) -> QuadDiagnostics {
        self.build_diagnostics
    }

    fn outer_tol(&self) -> Tolerance {
        Tolerance::rel(self.quad.rel_tol)
    }

    fn inner_tol(&self) -> Tolerance {
        Tolerance::rel(self.quad.rel_tol * 1e-2)
    }

    /// Tolerance for an integral that enters a Laplace exponent as
    /// `prefactor·∫`: the exponent itself is needed to `0.1·rel_tol`
    /// absolute, or `rel_tol` relative, whichever is looser.
    fn exponent_tol(&self, prefactor: f64) -> Tolerance {
        Tolerance::new(0.1 * self.quad.rel_tol / prefactor, self.quad.rel_tol)
    }

    #[inline]
    fn pow_alpha(&self, r: f64) -> f64 {
        if self.cfg.alpha == 4.0 {
            let r2 = r * r;
            r2 * r2
        } else {
            r.powf(self.cfg.alpha)
        }
    }

    fn build(&mut self) -> Result<(), AnalyticError> {
        let panels = self.quad.distance_panels;
        let tail = self.tail;
        // Half the panels cover the range where a nearest BS is likely,
        // the other half stretch out to the truncation radius.
        let near = (10.0 / (PI * self.cfg.lambda_b).sqrt()).min(tail);
        let mut edges: Vec<f64> = Vec::with_capacity(panels + 1);
        let (n_near, n_far) = if near < tail { (panels / 2, panels - panels / 2) } else { (panels, 0) };
        for k in 0..=n_near {
            let z = k as f64 / n_near as f64;
            edges.push(near * z * z);
        }
        for k in 1..=n_far {
            let z = k as f64 / n_far as f64;
            edges.push(near + (tail - near) * z * z);
        }
        let mut abscissae = Vec::with_capacity(8 * panels);
        for e in edges.windows(2) {
            let (c, h) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
            for i in (0..4).rev() {
                abscissae.push((c - h * GL8_X[i], h * GL8_W[i]));
            }
            for i in 0..4 {
                abscissae.push((c + h * GL8_X[i], h * GL8_W[i]));
            }
        }

        let g = self.cfg.gamma.powf(1.0 / self.cfg.alpha);
        let built: Vec<(Node, QuadDiagnostics)> = abscissae
            .par_iter()
            .map(|&(x, w)| {
                let mut diag = QuadDiagnostics::default();
                let b_x = self.blocked_mass(x, &mut diag);
                let node = Node {
                    x,
                    w,
                    f_d: self.pdf_direct(x),
                    excl_d: (-self.blocked_mass(x * g, &mut diag)).exp(),
                    f_r: self.blocked_mass_rate(x, &mut diag) * (-b_x).exp(),
                    excl_r: 1.0 - self.cdf_direct(x / g),
                };
                (node, diag)
            })
            .collect();

        let mut diag = QuadDiagnostics::default();
        self.nodes = built
            .into_iter()
            .map(|(n, dg)| {
                diag.merge(&dg);
                n
            })
            .collect();
        self.blocked_total = self.blocked_mass(f64::INFINITY, &mut diag);

        let p_direct: f64 = self.nodes.iter().map(|n| n.w * n.f_d * n.excl_d).sum();
        let p_outage = (1.0 - self.cdf_direct_limit()) * (-self.blocked_total).exp();
        let (p_direct, p_reflected) = if self.d.lambda_r == 0.0 {
            (1.0 - p_outage, 0.0)
        } else {
            (p_direct, (1.0 - p_outage - p_direct).max(0.0))
        };
        self.assoc = AssociationProbabilities { p_direct, p_reflected, p_outage };
        self.reflected_branch_mass = self.nodes.iter().map(|n| n.w * n.f_r * n.excl_r).sum();
        self.build_diagnostics = diag;
        if diag.failures > 0 {
            return Err(AnalyticError::NonConvergence {
                quantity: "distance distributions",
                failures: diag.failures,
                achieved: diag.worst_relative_error,
            });
        }
        Ok(())
    }

    // ---- distance laws -------------------------------------------------

    /// F_D(x): probability that some LoS BS lies within distance x.
    pub fn cdf_direct(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let eta = self.d.eta;
        if x.is_infinite() {
            return self.cdf_direct_limit();
        }
        let m = 2.0 * PI * self.cfg.lambda_b * los_mass_fraction(eta * x) / (eta * eta);
        -(-m).exp_m1()
    }

    /// F_D(∞) = 1 − exp(−2πλ_B/η²).
    pub fn cdf_direct_limit(&self) -> f64 {
        let eta = self.d.eta;
        -(-2.0 * PI * self.cfg.lambda_b / (eta * eta)).exp_m1()
    }

    /// f_D(x), a defective density with total mass F_D(∞).
    pub fn pdf_direct(&self, x: f64) -> f64 {
        if x <= 0.0 || !x.is_finite() {
            return 0.0;
        }
        let eta = self.d.eta;
        let lb = self.cfg.lambda_b;
        let m = 2.0 * PI * lb * los_mass_fraction(eta * x) / (eta * eta);
        2.0 * PI * lb * x * (-eta * x - m).exp()
    }

    /// Mean number of LoS-feasible RIS reflections of a BS at distance `u`
    /// with path length at most `x`, divided by λ_R:
    /// H(u, x) = ∫_u^x e^{−ηs} Φ(u, s) ds.
    pub fn ris_mass(&self, u: f64, x: f64) -> f64 {
        self.ris_mass_diag(u, x, &mut QuadDiagnostics::default())
    }

    fn ris_mass_diag(&self, u: f64, x: f64, diag: &mut QuadDiagnostics) -> f64 {
        let hi = x.min(u + self.tail);
        if hi <= u {
            return 0.0;
        }
        let eta = self.d.eta;
        let tol = self.inner_tol();
        let r = integrate(|s| (-eta * s).exp() * self.kernel.weight(u, s), u, hi, tol);
        diag.record(&r, tol);
        r.value
    }

    /// F_{R|u}(x): probability that a BS at distance `u` has a reflected
    /// link of length at most `x`.
    pub fn cdf_reflected_given_u(&self, x: f64, u: f64) -> f64 {
        if x <= u {
            return 0.0;
        }
        -(-self.d.lambda_r * self.ris_mass(u, x)).exp_m1()
    }

    /// ∂F_{R|u}/∂x.
    pub fn d_cdf_reflected_given_u(&self, x: f64, u: f64) -> f64 {
        if x <= u || !x.is_finite() {
            return 0.0;
        }
        let lr = self.d.lambda_r;
        lr * (-lr * self.ris_mass(u, x)).exp() * (-self.d.eta * x).exp() * self.kernel.weight(u, x)
    }

    /// B(y) = −ln P[no blocked BS has a reflected link shorter than y].
    fn blocked_mass(&self, y: f64, diag: &mut QuadDiagnostics) -> f64 {
        let lr = self.d.lambda_r;
        if lr == 0.0 || y <= 0.0 {
            return 0.0;
        }
        let eta = self.d.eta;
        let hi = y.min(self.tail);
        let tol = self.outer_tol();
        let mut inner = QuadDiagnostics::default();
        let r = integrate(
            |u| {
                let h = self.ris_mass_diag(u, y, &mut inner);
                -(-eta * u).exp_m1() * -(-lr * h).exp_m1() * u
            },
            0.0,
            hi,
            tol,
        );
        diag.record(&r, tol);
        diag.merge(&inner);
        2.0 * PI * self.cfg.lambda_b * r.value
    }

    /// B'(y).
    fn blocked_mass_rate(&self, y: f64, diag: &mut QuadDiagnostics) -> f64 {
        let lr = self.d.lambda_r;
        if lr == 0.0 || y <= 0.0 || !y.is_finite() {
            return 0.0;
        }
        let eta = self.d.eta;
        let hi = y.min(self.tail);
        let tol = self.outer_tol();
        let mut inner = QuadDiagnostics::default();
        let r = integrate(
            |u| {
                let h = self.ris_mass_diag(u, y, &mut inner);
                -(-eta * u).exp_m1() * (-lr * h).exp() * self.kernel.at(u / y) * u
            },
            0.0,
            hi,
            tol,
        );
        diag.record(&r, tol);
        diag.merge(&inner);
        2.0 * PI * self.cfg.lambda_b * lr * (-eta * y).exp() * y * r.value
    }

    /// F_R(x): probability that some blocked BS has a reflected link of
    /// length at most x.
    pub fn cdf_reflected(&self, x: f64) -> f64 {
        -(-self.blocked_mass(x, &mut QuadDiagnostics::default())).exp_m1()
    }

    /// F_R(∞).
    pub fn cdf_reflected_limit(&self) -> f64 {
        -(-self.blocked_total).exp_m1()
    }

    /// f_R(x), a defective density with total mass F_R(∞).
    pub fn pdf_reflected(&self, x: f64) -> f64 {
        let mut diag = QuadDiagnostics::default();
        let b = self.blocked_mass(x, &mut diag);
        self.blocked_mass_rate(x, &mut diag) * (-b).exp()
    }

    // ---- association ---------------------------------------------------

    pub fn association_probabilities(&self) -> AssociationProbabilities {
        self.assoc
    }

    /// ∫ f_R(x)·(1 − F_D(x·γ^{−1/α})) dx, computed directly. Agrees with
    /// `p_reflected` up to quadrature error.
    pub fn reflected_branch_mass(&self) -> f64 {
        self.reflected_branch_mass
    }

    // ---- Laplace transforms -------------------------------------------

    fn direct_interference_exponent(&self, x: f64, tau: f64, reflected: bool, diag: &mut QuadDiagnostics) -> f64 {
        let lb = self.cfg.lambda_b;
        if lb == 0.0 || x <= 0.0 {
            return 0.0;
        }
        let (lo, scale) = if reflected {
            (x * self.cfg.gamma.powf(-1.0 / self.cfg.alpha), self.cfg.gamma)
        } else {
            (x, 1.0)
        };
        let eta = self.d.eta;
        let prefactor = lb * self.d.theta_b * self.d.theta_u / (2.0 * PI);
        let tol = self.exponent_tol(prefactor);
        let r = integrate(
            |u| tau / (scale * self.pow_alpha(u / x) + tau) * (-eta * u).exp() * u,
            lo,
            lo + self.tail,
            tol,
        );
        diag.record(&r, tol);
        prefactor * r.value
    }

    fn reflected_interference_exponent(
        &self,
        x: f64,
        tau: f64,
        reflected: bool,
        diag: &mut QuadDiagnostics,
    ) -> f64 {
        let lb = self.cfg.lambda_b;
        let lr = self.d.lambda_r;
        if lb == 0.0 || lr == 0.0 || x <= 0.0 {
            return 0.0;
        }
        let (lo, a) = if reflected {
            (x, tau)
        } else {
            (x * self.cfg.gamma.powf(1.0 / self.cfg.alpha), tau * self.cfg.gamma)
        };
        let kappa = lr * self.d.theta_b * self.d.theta_u / (4.0 * PI * PI);
        let eta = self.d.eta;
        let prefactor = 2.0 * PI * lb;
        let outer_tol = self.exponent_tol(prefactor);
        // only κ·Q matters, and κ·Q ≪ 1 in practice
        let inner_tol = Tolerance::rel(self.quad.rel_tol.sqrt() * 0.1);
        let mut inner = QuadDiagnostics::default();
        let r = integrate_with_breaks(
            |u| {
                let start = u.max(lo);
                let q = integrate(
                    |s| a / (self.pow_alpha(s / x) + a) * (-eta * s).exp() * self.kernel.weight(u, s),
                    start,
                    start + self.tail,
                    inner_tol,
                );
                inner.record(&q, inner_tol);
                -(-kappa * q.value).exp_m1() * u
            },
            &[0.0, lo, lo + self.tail],
            outer_tol,
        );
        diag.record(&r, outer_tol);
        diag.merge(&inner);
        prefactor * r.value
    }

    /// Laplace transform of the direct-link interference seen by a user
    /// served directly at distance x, at s = τ·x^α/(N_B·N_U).
    pub fn laplace_id_direct(&self, x: f64, tau: f64) -> f64 {
        (-self.direct_interference_exponent(x, tau, false, &mut QuadDiagnostics::default())).exp()
    }

    /// Laplace transform of the reflected-link interference for a user
    /// served directly at distance x.
    pub fn laplace_ir_direct(&self, x: f64, tau: f64) -> f64 {
        (-self.reflected_interference_exponent(x, tau, false, &mut QuadDiagnostics::default())).exp()
    }

    /// Direct-link interference for a user served over a reflected path
    /// of length x, at s = τ·x^α/(γ·N_B·N_U).
    pub fn laplace_id_reflected(&self, x: f64, tau: f64) -> f64 {
        (-self.direct_interference_exponent(x, tau, true, &mut QuadDiagnostics::default())).exp()
    }

    /// Reflected-link interference for a user served over a reflected path
    /// of length x.
    pub fn laplace_ir_reflected(&self, x: f64, tau: f64) -> f64 {
        (-self.reflected_interference_exponent(x, tau, true, &mut QuadDiagnostics::default())).exp()
    }

    // ---- coverage, ASE, EE --------------------------------------------

    /// p_EB·p_EU, the only β-dependent factor of the coverage probability.
    pub fn alignment_factor(&self) -> f64 {
        alignment_probability(self.d.sigma_b2, self.d.theta_b)
            * alignment_probability(self.d.sigma_u2, self.d.theta_u)
    }

    /// Coverage probability divided by the alignment factor.
    pub fn aligned_coverage(&self, tau: f64) -> Result<f64, AnalyticError> {
        let (v, diag) = self.aligned_coverage_diag(tau);
        if diag.failures > 0 {
            return Err(AnalyticError::NonConvergence {
                quantity: "coverage",
                failures: diag.failures,
                achieved: diag.worst_relative_error,
            });
        }
        Ok(v)
    }

    fn aligned_coverage_diag(&self, tau: f64) -> (f64, QuadDiagnostics) {
        if !(tau.is_finite()) {
            return (0.0, QuadDiagnostics::default());
        }
        let gain = self.d.n_b * self.d.n_u;
        let noise_scale = tau * self.cfg.n0 / gain;
        let gamma = self.cfg.gamma;
        // contributions below this are dropped without evaluating transforms
        let negligible = 1e-12;
        let terms: Vec<(f64, f64, QuadDiagnostics)> = self
            .nodes
            .par_iter()
            .map(|n| {
                let mut diag = QuadDiagnostics::default();
                let xa = self.pow_alpha(n.x);
                let mut wd = n.w * n.f_d * (-noise_scale * xa).exp();
                let mut wr = n.w * n.f_r * (-noise_scale * xa / gamma).exp();
                if self.quad.weighting == BranchWeighting::Conditional {
                    wd *= n.excl_d;
                    wr *= n.excl_r;
                }
                let direct = if wd > negligible {
                    let e = self.direct_interference_exponent(n.x, tau, false, &mut diag)
                        + self.reflected_interference_exponent(n.x, tau, false, &mut diag);
                    wd * (-e).exp()
                } else {
                    0.0
                };
                let refl = if wr > negligible {
                    let e = self.direct_interference_exponent(n.x, tau, true, &mut diag)
                        + self.reflected_interference_exponent(n.x, tau, true, &mut diag);
                    wr * (-e).exp()
                } else {
                    0.0
                };
                (direct, refl, diag)
            })
            .collect();
        let mut diag = QuadDiagnostics::default();
        let (mut direct, mut refl) = (0.0, 0.0);
        for (a, b, dg) in &terms {
            direct += a;
            refl += b;
            diag.merge(dg);
        }
        let value = match self.quad.weighting {
            BranchWeighting::Conditional => direct + refl,
            BranchWeighting::Normalized => {
                let fd = self.cdf_direct_limit();
                let fr = self.cdf_reflected_limit();
                let d = if fd > 0.0 { self.assoc.p_direct * direct / fd } else { 0.0 };
                let r = if fr > 0.0 { self.assoc.p_reflected * refl / fr } else { 0.0 };
                d + r
            }
        };
        (value.clamp(0.0, 1.0), diag)
    }

    /// P[SINR > τ] for the typical user.
    pub fn coverage_probability(&self, tau: f64) -> Result<f64, AnalyticError> {
        Ok(self.alignment_factor() * self.aligned_coverage(tau)?)
    }

    /// The β-free part of the ASE:
    /// (1/ln 2)·∫_{ln(1+τ)}^∞ C(e^t − 1) dt + log₂(1+τ)·C(τ), where C is the
    /// aligned coverage. Sampled on a uniform grid in t and integrated
    /// piecewise-exponentially, with an exponential tail beyond the last
    /// sample.
    pub fn rate_kernel(&self, tau: f64) -> Result<f64, AnalyticError> {
        let t0 = tau.ln_1p();
        let h = self.quad.ase_step;
        let c0 = self.aligned_coverage(tau)?;
        if c0 <= 0.0 {
            return Ok(0.0);
        }
        let mut prev = c0;
        let mut integral = 0.0;
        let mut last_rate = None;
        for j in 1..self.quad.ase_thresholds {
            let t = t0 + j as f64 * h;
            let c = self.aligned_coverage(t.exp_m1())?;
            integral += exp_segment(prev, c, h);
            if c > 0.0 && c < prev {
                last_rate = Some((prev / c).ln() / h);
            }
            prev = c;
            if c < 1e-4 * c0 {
                break;
            }
        }
        if let Some(rate) = last_rate {
            integral += prev / rate;
        }
        Ok(integral / LN_2 + tau.ln_1p() / LN_2 * c0)
    }

    /// Area spectral efficiency (bit/s/Hz/m²).
    pub fn ase(&self, tau: f64) -> Result<f64, AnalyticError> {
        let fraction = self.d.data_fraction(self.cfg.frame_len);
        Ok(fraction * self.cfg.lambda_b * self.alignment_factor() * self.rate_kernel(tau)?)
    }

    /// Energy efficiency (bit/s/Hz/W).
    pub fn ee(&self, tau: f64) -> Result<f64, AnalyticError> {
        Ok(self.ase(tau)? / self.cfg.areal_power())
    }

    /// Coverage, ASE and EE at the configured threshold.
    pub fn metrics(&self) -> Result<AnalyticMetrics, AnalyticError> {
        let tau = self.cfg.tau;
        let aligned = self.aligned_coverage(tau)?;
        let pe = self.alignment_factor();
        let ase = self.d.data_fraction(self.cfg.frame_len) * self.cfg.lambda_b * pe * self.rate_kernel(tau)?;
        Ok(AnalyticMetrics {
            coverage: pe * aligned,
            ase,
            ee: ase / self.cfg.areal_power(),
            association: self.assoc,
        })
    }
}

/// ∫₀ʰ of the exponential through (0, a) and (h, b).
fn exp_segment(a: f64, b: f64, h: f64) -> f64 {
    if a > 0.0 && b > 0.0 && (a - b).abs() > 1e-12 * a {
        h * (a - b) / (a / b).ln()
    } else {
        0.5 * h * (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticMetrics {
    pub coverage: f64,
    pub ase: f64,
    pub ee: f64,
    pub association: AssociationProbabilities,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(cfg: &ScenarioConfig) -> AnalyticModel {
        AnalyticModel::with_defaults(cfg).unwrap()
    }

    #[test]
    fn los_mass_fraction_branches_agree() {
        for z in [1e-4_f64, 9.99e-4, 1.001e-3, 0.5, 5.0] {
            let direct = 1.0 - (1.0 + z) * (-z).exp();
            assert!((los_mass_fraction(z) - direct).abs() <= 1e-8 * direct);
        }
    }

    #[test]
    fn direct_law_examples() {
        let m = model(&ScenarioConfig::reference());
        assert_eq!(m.cdf_direct(0.0), 0.0);
        assert_eq!(m.pdf_direct(0.0), 0.0);
        let eta = m.derived().eta;
        let lim = 1.0 - (-2.0 * PI * 1e-5 / (eta * eta)).exp();
        assert!((m.cdf_direct_limit() - lim).abs() < 1e-15);
        assert!((lim - 0.9364).abs() < 1e-4);
        for x in [10.0, 150.0, 700.0] {
            let h = 1e-3 * x;
            let fd = (m.cdf_direct(x + h) - m.cdf_direct(x - h)) / (2.0 * h);
            assert!((fd - m.pdf_direct(x)).abs() < 1e-5 * m.pdf_direct(x));
        }
        let r = integrate(|x| m.pdf_direct(x), 0.0, m.r_max(), Tolerance::rel(1e-10));
        assert!((r.value - m.cdf_direct(m.r_max())).abs() < 1e-8);
    }

    #[test]
    fn reflected_conditional_law() {
        let m = model(&ScenarioConfig::reference());
        assert_eq!(m.cdf_reflected_given_u(80.0, 80.0), 0.0);
        let mut prev = 0.0;
        for k in 1..30 {
            let x = 80.0 + 20.0 * k as f64;
            let f = m.cdf_reflected_given_u(x, 80.0);
            assert!(f >= prev && f <= 1.0);
            prev = f;
        }
        for (u, x) in [(40.0, 60.0), (100.0, 300.0), (300.0, 310.0)] {
            let h = 1e-3;
            let fd = (m.cdf_reflected_given_u(x + h, u) - m.cdf_reflected_given_u(x - h, u)) / (2.0 * h);
            let d = m.d_cdf_reflected_given_u(x, u);
            assert!((fd - d).abs() < 1e-6 * d.max(1e-6), "({u},{x}) {fd} vs {d}");
        }
        let no_ris = ScenarioConfig { mu: 0.0, ..ScenarioConfig::reference() };
        let m0 = model(&no_ris);
        assert_eq!(m0.cdf_reflected_given_u(500.0, 100.0), 0.0);
        assert_eq!(m0.cdf_reflected(500.0), 0.0);
    }

    #[test]
    fn reflected_law_matches_its_density() {
        let m = model(&ScenarioConfig::reference());
        assert_eq!(m.cdf_reflected(0.0), 0.0);
        for x in [50.0, 200.0, 600.0] {
            let h = 0.05;
            let fd = (m.cdf_reflected(x + h) - m.cdf_reflected(x - h)) / (2.0 * h);
            let f = m.pdf_reflected(x);
            assert!((fd - f).abs() < 1e-5 * f, "{x}: {fd} vs {f}");
        }
    }

    #[test]
    fn association_sums_and_limits() {
        let m = model(&ScenarioConfig::reference());
        let a = m.association_probabilities();
        assert!((a.p_direct + a.p_reflected + a.p_outage - 1.0).abs() < 1e-12);
        assert!((a.p_reflected - m.reflected_branch_mass()).abs() < 1e-5, "{a:?} {}", m.reflected_branch_mass());

        let no_ris = ScenarioConfig { mu: 0.0, ..ScenarioConfig::reference() };
        let m0 = model(&no_ris);
        let a0 = m0.association_probabilities();
        assert_eq!(a0.p_reflected, 0.0);
        assert!((a0.p_outage - (1.0 - m0.cdf_direct_limit())).abs() < 1e-12);

        let clear = ScenarioConfig { lambda_l: 1e-8, ..ScenarioConfig::reference() };
        let a1 = model(&clear).association_probabilities();
        assert!(a1.p_direct > 0.999 && a1.p_outage < 1e-3, "{a1:?}");
    }

    #[test]
    fn laplace_limits() {
        let m = model(&ScenarioConfig::reference());
        for f in [
            AnalyticModel::laplace_id_direct,
            AnalyticModel::laplace_ir_direct,
            AnalyticModel::laplace_id_reflected,
            AnalyticModel::laplace_ir_reflected,
        ] {
            let v = f(&m, 100.0, 2.0);
            assert!(v > 0.0 && v <= 1.0);
        }
        let sparse = ScenarioConfig { lambda_b: 1e-12, ..ScenarioConfig::reference() };
        let ms = model(&sparse);
        assert!(1.0 - ms.laplace_id_direct(100.0, 2.0) < 1e-9);
        assert!(1.0 - ms.laplace_ir_reflected(100.0, 2.0) < 1e-9);
        let narrow = ScenarioConfig { m_b: 4096, m_u: 4096, beta: 0.0, ..ScenarioConfig::reference() };
        let mn = model(&narrow);
        assert!(1.0 - mn.laplace_id_direct(100.0, 2.0) < 1e-5);
        assert!(1.0 - mn.laplace_ir_direct(100.0, 2.0) < 1e-5);
    }

    #[test]
    fn coverage_basic_properties() {
        let m = model(&ScenarioConfig::reference());
        let mut prev = 1.0;
        for db in [-5.0, 0.0, 3.0, 10.0, 20.0] {
            let c = m.coverage_probability(crate::params::db_to_linear(db)).unwrap();
            assert!((0.0..=prev).contains(&c), "{db} dB: {c}");
            prev = c;
        }
        assert_eq!(m.coverage_probability(f64::INFINITY).unwrap(), 0.0);
        let noisy = ScenarioConfig { n0: 1e12, ..ScenarioConfig::reference() };
        assert!(model(&noisy).coverage_probability(2.0).unwrap() < 1e-6);
    }

    #[test]
    fn ee_is_ase_over_areal_power() {
        let cfg = ScenarioConfig::reference();
        let m = model(&cfg);
        let ase = m.ase(cfg.tau).unwrap();
        let ee = m.ee(cfg.tau).unwrap();
        assert_eq!(ee, ase / cfg.areal_power());
        assert!(ase > 0.0);
    }

    #[test]
    fn rejects_bad_spec() {
        let cfg = ScenarioConfig::reference();
        for q in [
            QuadratureSpec { rel_tol: 0.1, ..Default::default() },
            QuadratureSpec { r_max: Some(10.0), ..Default::default() },
            QuadratureSpec { distance_panels: 8, ..Default::default() },
        ] {
            assert!(matches!(AnalyticModel::new(&cfg, &q), Err(AnalyticError::Spec(_))));
        }
    }
}
