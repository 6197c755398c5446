//! Monte Carlo network simulator used as the oracle for the analysis.
//!
//! Each trial drops BSs and RISs as Poisson processes on a disc around the
//! typical user, draws the blockage and orientation indicators, associates
//! the user with the strongest average link and samples one SINR.
//!
//! Trial `i` of a run with master seed `m` uses `ChaCha8Rng` seeded with
//! `m` on stream `i`. Trials run on the rayon pool and are reduced in
//! index order, so results do not depend on the number of threads.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{attenuation, interferer_hit_probability, sample_fading, sample_serving_gain, BeamParams};
use crate::geometry::{feasibility_from_parts, sample_ppp_disc, sample_ppp_disc_sorted, PolarPoint};
use crate::params::{ConfigError, DerivedParams, ScenarioConfig};

/// How indicators and beam-gain coins are shared between links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    /// Every (BS, RIS) pair draws its own LoS indicators, and every
    /// interference term its own gain coin and fading.
    PerLink,
    /// The RIS–UE LoS indicator is shared by all pairs of a RIS, and one
    /// gain coin is shared by all paths of an interfering BS.
    PerBs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    /// Simulation disc radius in metres. `None` means 1.25·ln(1/eps_los)/η.
    pub radius: Option<f64>,
    pub eps_los: f64,
    pub mode: GainMode,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { radius: None, eps_los: 1e-6, mode: GainMode::PerLink }
    }
}

impl McSettings {
    pub fn radius(&self, eta: f64) -> f64 {
        self.radius.unwrap_or_else(|| 1.25 * (1.0 / self.eps_los).ln() / eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsSite {
    pub pos: PolarPoint,
    /// LoS indicator of the BS–UE link.
    pub los: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RisSite {
    pub pos: PolarPoint,
    /// LoS indicator of the RIS–UE link.
    pub los: bool,
}

/// A (BS, RIS) pair whose BS–RIS link, RIS–UE link and orientation are
/// all favourable. Inactive pairs are not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReflectedLink {
    pub bs: usize,
    pub ris: usize,
    /// BS→RIS→UE path length.
    pub path_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkRealization {
    pub bss: Vec<BsSite>,
    pub riss: Vec<RisSite>,
    pub links: Vec<ReflectedLink>,
    /// (master seed, trial index) of the generating stream.
    pub seed: (u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Direct,
    Reflected,
    Outage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssociationOutcome {
    pub kind: LinkKind,
    pub serving_bs: Option<usize>,
    pub serving_ris: Option<usize>,
    /// Average path gain of the serving link (0 in outage).
    pub serving_path_loss: f64,
}

/// Everything recorded about one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub kind: LinkKind,
    /// SINR (linear); 0 for outage or misaligned beams.
    pub sinr: f64,
    /// Distance of the nearest LoS BS, ∞ if none.
    pub min_direct: f64,
    /// Shortest reflected path from a blocked BS, ∞ if none.
    pub min_reflected: f64,
}

/// Sample mean with a 95 % normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

impl Estimate {
    pub const Z95: f64 = 1.959_963_984_540_054;

    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for x in samples {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        if n < 2.0 {
            return Self { value: mean, half_width: f64::INFINITY };
        }
        Self { value: mean, half_width: Self::Z95 * (m2 / (n - 1.0) / n).sqrt() }
    }

    /// Standard error implied by the half-width.
    pub fn std_error(&self) -> f64 {
        self.half_width / Self::Z95
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { value: self.value * k, half_width: self.half_width * k.abs() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssocFrequencies {
    pub direct: f64,
    pub reflected: f64,
    pub outage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricEstimates {
    pub coverage: Estimate,
    pub ase: Estimate,
    pub ee: Estimate,
    pub assoc_freq: AssocFrequencies,
    pub n_trials: usize,
}

/// Per-trial link distances, ∞ where the link type is absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkDistanceSamples {
    pub direct: Vec<f64>,
    pub reflected: Vec<f64>,
}

impl LinkDistanceSamples {
    /// Empirical (defective) CDFs on a distance grid.
    pub fn cdfs_on(&self, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (empirical_cdf(&self.direct, grid), empirical_cdf(&self.reflected, grid))
    }
}

fn empirical_cdf(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len().max(1) as f64;
    grid.iter().map(|&x| s.partition_point(|&v| v <= x) as f64 / n).collect()
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples`
/// (entries may be ∞) and a possibly defective CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Deterministic per-trial generator.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

#[inline]
fn pair_geometry(u: f64, bs_cos: f64, bs_sin: f64, ris: &PolarPoint) -> (f64, f64, f64) {
    // cos of the angle between BS and RIS bearings
    let c = bs_cos * ris.phi.cos() + bs_sin * ris.phi.sin();
    let t = ris.r;
    let d = (u * u + t * t - 2.0 * u * t * c).max(0.0).sqrt();
    (c, d, t + d)
}

/// The simulator for one scenario.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ScenarioConfig,
    d: DerivedParams,
    bs_beam: BeamParams,
    ue_beam: BeamParams,
    p_hit: f64,
    radius: f64,
    mode: GainMode,
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig, settings: &McSettings) -> Result<Self, ConfigError> {
        let d = cfg.derive()?;
        let bs_beam = BeamParams::bs(&d);
        let ue_beam = BeamParams::ue(&d);
        Ok(Self {
            cfg: cfg.clone(),
            d,
            bs_beam,
            ue_beam,
            p_hit: interferer_hit_probability(&bs_beam, &ue_beam),
            radius: settings.radius(d.eta),
            mode: settings.mode,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mode(&self) -> GainMode {
        self.mode
    }

    /// Network drawn from the stream of trial `trial`.
    pub fn realize_network(&self, master_seed: u64, trial: u64) -> NetworkRealization {
        let mut rng = trial_rng(master_seed, trial);
        let mut net = self.realize_with(&mut rng);
        net.seed = (master_seed, trial);
        net
    }

    fn sample_bss<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<BsSite> {
        let eta = self.d.eta;
        sample_ppp_disc(self.cfg.lambda_b, self.radius, rng)
            .into_iter()
            .map(|pos| BsSite { pos, los: rng.random::<f64>() < (-eta * pos.r).exp() })
            .collect()
    }

    pub fn realize_with<R: Rng + ?Sized>(&self, rng: &mut R) -> NetworkRealization {
        let eta = self.d.eta;
        let bss = self.sample_bss(rng);
        let riss: Vec<RisSite> = sample_ppp_disc_sorted(self.d.lambda_r, self.radius, rng)
            .into_iter()
            .map(|pos| RisSite { pos, los: rng.random::<f64>() < (-eta * pos.r).exp() })
            .collect();
        let links = match self.mode {
            GainMode::PerLink => self.per_link_pairs(&bss, &riss, rng),
            GainMode::PerBs => self.per_bs_pairs(&bss, &riss, rng),
        };
        NetworkRealization { bss, riss, links, seed: (0, 0) }
    }

    /// Active pairs with independent indicators per pair. The pair
    /// probability e^{−η·path}·p_F is at most ½·e^{−η·max(u, 2t−u)}, which
    /// does not increase along the distance-sorted RIS list, so candidates
    /// are drawn by geometric skipping and then thinned.
    fn per_link_pairs<R: Rng + ?Sized>(&self, bss: &[BsSite], riss: &[RisSite], rng: &mut R) -> Vec<ReflectedLink> {
        let eta = self.d.eta;
        let n = riss.len();
        let mut links = Vec::new();
        for (i, bs) in bss.iter().enumerate() {
            let u = bs.pos.r;
            let (bs_sin, bs_cos) = bs.pos.phi.sin_cos();
            let bound = |t: f64| 0.5 * (-eta * u.max(2.0 * t - u)).exp();
            let mut j = 0;
            while j < n {
                let bj = bound(riss[j].pos.r);
                if bj <= 0.0 {
                    break;
                }
                let e: f64 = Exp1.sample(rng);
                let skip = (e / -(-bj).ln_1p()).floor();
                if skip >= (n - j) as f64 {
                    break;
                }
                let k = j + skip as usize;
                let ris = &riss[k].pos;
                let bk = bound(ris.r);
                if rng.random::<f64>() * bj < bk {
                    let (c, d, s) = pair_geometry(u, bs_cos, bs_sin, ris);
                    let p = (-eta * s).exp() * feasibility_from_parts(u, ris.r, c, d);
                    if rng.random::<f64>() * bk < p {
                        links.push(ReflectedLink { bs: i, ris: k, path_len: s });
                    }
                }
                j = k + 1;
            }
        }
        links
    }

    /// Active pairs sharing each RIS's RIS–UE LoS indicator.
    fn per_bs_pairs<R: Rng + ?Sized>(&self, bss: &[BsSite], riss: &[RisSite], rng: &mut R) -> Vec<ReflectedLink> {
        let eta = self.d.eta;
        let visible: Vec<usize> = (0..riss.len()).filter(|&k| riss[k].los).collect();
        let mut links = Vec::new();
        for (i, bs) in bss.iter().enumerate() {
            let u = bs.pos.r;
            let (bs_sin, bs_cos) = bs.pos.phi.sin_cos();
            for &k in &visible {
                let ris = &riss[k].pos;
                // quick bound: |u − t| ≤ d and p_F ≤ ½
                if rng.random::<f64>() >= 0.5 * (-eta * (u - ris.r).abs()).exp() {
                    continue;
                }
                let (c, d, s) = pair_geometry(u, bs_cos, bs_sin, ris);
                let p = (-eta * d).exp() * feasibility_from_parts(u, ris.r, c, d);
                if rng.random::<f64>() * 0.5 * (-eta * (u - ris.r).abs()).exp() < p {
                    links.push(ReflectedLink { bs: i, ris: k, path_len: s });
                }
            }
        }
        links
    }

    /// Strongest-average-power association over direct and reflected links.
    pub fn associate(&self, net: &NetworkRealization) -> AssociationOutcome {
        let alpha = self.cfg.alpha;
        let mut best = AssociationOutcome {
            kind: LinkKind::Outage,
            serving_bs: None,
            serving_ris: None,
            serving_path_loss: 0.0,
        };
        for (i, bs) in net.bss.iter().enumerate() {
            if bs.los && bs.pos.r > 0.0 {
                let pl = attenuation(bs.pos.r, alpha);
                if pl > best.serving_path_loss {
                    best = AssociationOutcome {
                        kind: LinkKind::Direct,
                        serving_bs: Some(i),
                        serving_ris: None,
                        serving_path_loss: pl,
                    };
                }
            }
        }
        for l in &net.links {
            let pl = self.cfg.gamma * attenuation(l.path_len, alpha);
            if pl > best.serving_path_loss {
                best = AssociationOutcome {
                    kind: LinkKind::Reflected,
                    serving_bs: Some(l.bs),
                    serving_ris: Some(l.ris),
                    serving_path_loss: pl,
                };
            }
        }
        best
    }

    /// One SINR draw for the given association; `None` in outage.
    pub fn sample_sinr<R: Rng + ?Sized>(
        &self,
        net: &NetworkRealization,
        assoc: &AssociationOutcome,
        rng: &mut R,
    ) -> Option<f64> {
        let serving = assoc.serving_bs?;
        let g0 = sample_serving_gain(&self.bs_beam, &self.ue_beam, rng);
        let signal = g0 * sample_fading(rng) * assoc.serving_path_loss;
        let interference = match self.mode {
            GainMode::PerLink => self.interference_per_link(net, serving, rng),
            GainMode::PerBs => self.interference_per_bs(net, serving, rng),
        };
        Some(signal / (self.cfg.n0 + interference))
    }

    fn interference_per_link<R: Rng + ?Sized>(&self, net: &NetworkRealization, serving: usize, rng: &mut R) -> f64 {
        let alpha = self.cfg.alpha;
        let gain = self.bs_beam.n * self.ue_beam.n;
        let mut total = 0.0;
        for (i, bs) in net.bss.iter().enumerate() {
            if i != serving && bs.los && rng.random::<f64>() < self.p_hit {
                total += gain * sample_fading(rng) * attenuation(bs.pos.r, alpha);
            }
        }
        for l in &net.links {
            if l.bs != serving && rng.random::<f64>() < self.p_hit {
                total += gain * sample_fading(rng) * self.cfg.gamma * attenuation(l.path_len, alpha);
            }
        }
        total
    }

    fn interference_per_bs<R: Rng + ?Sized>(&self, net: &NetworkRealization, serving: usize, rng: &mut R) -> f64 {
        let alpha = self.cfg.alpha;
        let gain = self.bs_beam.n * self.ue_beam.n;
        let hits: Vec<bool> = (0..net.bss.len()).map(|_| rng.random::<f64>() < self.p_hit).collect();
        let mut total = 0.0;
        for (i, bs) in net.bss.iter().enumerate() {
            if i != serving && bs.los && hits[i] {
                total += gain * sample_fading(rng) * attenuation(bs.pos.r, alpha);
            }
        }
        for l in &net.links {
            if l.bs != serving && hits[l.bs] {
                total += gain * sample_fading(rng) * self.cfg.gamma * attenuation(l.path_len, alpha);
            }
        }
        total
    }

    pub fn run_trial(&self, master_seed: u64, trial: u64) -> TrialOutcome {
        let mut rng = trial_rng(master_seed, trial);
        let net = self.realize_with(&mut rng);
        let assoc = self.associate(&net);
        let sinr = self.sample_sinr(&net, &assoc, &mut rng).unwrap_or(0.0);
        let min_direct = net
            .bss
            .iter()
            .filter(|b| b.los)
            .map(|b| b.pos.r)
            .fold(f64::INFINITY, f64::min);
        let min_reflected = net
            .links
            .iter()
            .filter(|l| !net.bss[l.bs].los)
            .map(|l| l.path_len)
            .fold(f64::INFINITY, f64::min);
        TrialOutcome { kind: assoc.kind, sinr, min_direct, min_reflected }
    }

    /// Trials `0..n` in index order.
    pub fn run_trials(&self, n: usize, master_seed: u64) -> Vec<TrialOutcome> {
        (0..n as u64).into_par_iter().map(|i| self.run_trial(master_seed, i)).collect()
    }

    /// (T_D/T)·λ_B, the factor turning E[log₂(1+SINR)·1{SINR>τ}] into ASE.
    fn ase_scale(&self) -> f64 {
        self.d.data_fraction(self.cfg.frame_len) * self.cfg.lambda_b
    }

    /// Coverage, ASE and EE at threshold `tau` from a set of trials.
    pub fn metrics_from(&self, trials: &[TrialOutcome], tau: f64) -> MetricEstimates {
        let n = trials.len();
        let coverage = Estimate::from_samples(trials.iter().map(|t| (t.sinr > tau) as u8 as f64));
        let rate = Estimate::from_samples(
            trials.iter().map(|t| if t.sinr > tau { t.sinr.ln_1p() / std::f64::consts::LN_2 } else { 0.0 }),
        );
        let ase = rate.scaled(self.ase_scale());
        let power = self.cfg.areal_power();
        let ee = Estimate { value: ase.value / power, half_width: ase.half_width / power };
        let count = |k: LinkKind| trials.iter().filter(|t| t.kind == k).count() as f64 / n.max(1) as f64;
        let direct = count(LinkKind::Direct);
        let reflected = count(LinkKind::Reflected);
        MetricEstimates {
            coverage,
            ase,
            ee,
            assoc_freq: AssocFrequencies { direct, reflected, outage: 1.0 - direct - reflected },
            n_trials: n,
        }
    }

    /// Coverage, ASE, EE and association frequencies at the configured τ.
    pub fn estimate_metrics(&self, n_trials: usize, master_seed: u64) -> MetricEstimates {
        let trials = self.run_trials(n_trials, master_seed);
        self.metrics_from(&trials, self.cfg.tau)
    }

    /// Nearest LoS BS distance and shortest blocked-BS reflected path per
    /// trial.
    pub fn link_distance_samples(&self, n_trials: usize, master_seed: u64) -> LinkDistanceSamples {
        let trials = self.run_trials(n_trials, master_seed);
        LinkDistanceSamples {
            direct: trials.iter().map(|t| t.min_direct).collect(),
            reflected: trials.iter().map(|t| t.min_reflected).collect(),
        }
    }

    /// Nearest LoS BS distance per trial. The BS layer is the first thing
    /// drawn from a trial stream, so these equal the `min_direct` values of
    /// [`Simulator::run_trials`] with the same seed.
    pub fn direct_distance_samples(&self, n_trials: usize, master_seed: u64) -> Vec<f64> {
        (0..n_trials as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(master_seed, i);
                self.sample_bss(&mut rng)
                    .iter()
                    .filter(|b| b.los)
                    .map(|b| b.pos.r)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Empirical F_D and F_R on `grid`.
    pub fn empirical_link_cdfs(&self, n_trials: usize, master_seed: u64, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.link_distance_samples(n_trials, master_seed).cdfs_on(grid)
    }
}

// ---- oracles for individual analytic quantities ---------------------------

/// Shortest reflected path from a BS at distance `u` over an RIS process
/// with independent per-RIS indicators, together with a gain coin per
/// RIS. Candidates are generated from the dominating intensity
/// λ·½·e^{−η·max(u, 2t−u)} and thinned to the exact pair probability.
struct RisCandidates {
    eta: f64,
    lambda: f64,
}

impl RisCandidates {
    /// Calls `visit(path_len)` for each active reflected path of a BS at
    /// distance `u`; the BS sits at angle 0.
    fn for_each<R: Rng + ?Sized, F: FnMut(f64)>(&self, u: f64, rng: &mut R, mut visit: F) {
        let eta = self.eta;
        let decay = (-eta * u).exp();
        let inner = 0.5 * self.lambda * decay * PI * u * u;
        let w_exp = u / (2.0 * eta);
        let w_gamma = 1.0 / (4.0 * eta * eta);
        let outer = PI * self.lambda * decay * (w_exp + w_gamma);
        let mean = inner + outer;
        if mean <= 0.0 {
            return;
        }
        let count = Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0);
        let gamma2 = Gamma::new(2.0, 1.0 / (2.0 * eta)).expect("valid gamma");
        for _ in 0..count {
            let t = if rng.random::<f64>() * mean < inner {
                u * rng.random::<f64>().sqrt()
            } else if rng.random::<f64>() * (w_exp + w_gamma) < w_exp {
                let e: f64 = Exp1.sample(rng);
                u + e / (2.0 * eta)
            } else {
                u + gamma2.sample(rng)
            };
            let psi = rng.random::<f64>() * TAU;
            let c = psi.cos();
            let d = (u * u + t * t - 2.0 * u * t * c).max(0.0).sqrt();
            let s = t + d;
            let bound = 0.5 * (-eta * u.max(2.0 * t - u)).exp();
            let p = (-eta * s).exp() * feasibility_from_parts(u, t, c, d);
            if rng.random::<f64>() * bound < p {
                visit(s);
            }
        }
    }
}

/// Shortest reflected path length of a BS at distance `u`, one sample
/// per trial (∞ when no reflection is available).
pub fn sample_min_reflected_given_u(cfg: &ScenarioConfig, u: f64, n: usize, master_seed: u64) -> Vec<f64> {
    let d = crate::params::derive_params(cfg);
    let cands = RisCandidates { eta: d.eta, lambda: d.lambda_r };
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            let mut best = f64::INFINITY;
            cands.for_each(u, &mut rng, |s| best = best.min(s));
            best
        })
        .collect()
}

/// The interference Laplace transforms of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceKind {
    /// Direct-link interference, user served directly.
    IdDirect,
    /// Reflected-link interference, user served directly.
    IrDirect,
    /// Direct-link interference, user served over a reflection.
    IdReflected,
    /// Reflected-link interference, user served over a reflection.
    IrReflected,
}

/// Monte Carlo estimate of E[exp(−s·I)] where I is the interference of
/// the given kind for a serving link of length `x`, with every interferer
/// restricted to be weaker than the serving link. Interferers come from
/// independent PPPs with per-term gain coins, as in the analysis.
pub fn laplace_oracle(
    cfg: &ScenarioConfig,
    kind: LaplaceKind,
    x: f64,
    tau: f64,
    realizations: usize,
    master_seed: u64,
    radius: f64,
) -> Estimate {
    let d = crate::params::derive_params(cfg);
    let eta = d.eta;
    let alpha = cfg.alpha;
    let gamma = cfg.gamma;
    let p_hit = d.theta_b * d.theta_u / (4.0 * PI * PI);
    let gain = d.n_b * d.n_u;
    let reflected_serving = matches!(kind, LaplaceKind::IdReflected | LaplaceKind::IrReflected);
    let serving_pl = if reflected_serving { gamma * x.powf(-alpha) } else { x.powf(-alpha) };
    let s_lap = tau / (gain * serving_pl);

    let samples: Vec<f64> = (0..realizations as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            let mut interference = 0.0;
            match kind {
                LaplaceKind::IdDirect | LaplaceKind::IdReflected => {
                    let lo = if reflected_serving { x * gamma.powf(-1.0 / alpha) } else { x };
                    let hi = lo + radius;
                    let mean = cfg.lambda_b * p_hit * PI * (hi * hi - lo * lo);
                    let n = Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
                    for _ in 0..n {
                        let u = (lo * lo + (hi * hi - lo * lo) * rng.random::<f64>()).sqrt();
                        if rng.random::<f64>() < (-eta * u).exp() {
                            interference += gain * sample_fading(&mut rng) * u.powf(-alpha);
                        }
                    }
                }
                LaplaceKind::IrDirect | LaplaceKind::IrReflected => {
                    let threshold = if reflected_serving { x } else { x * gamma.powf(1.0 / alpha) };
                    let cands = RisCandidates { eta, lambda: d.lambda_r * p_hit };
                    let bss = sample_ppp_disc(cfg.lambda_b, threshold + radius, &mut rng);
                    let mut paths = Vec::new();
                    for bs in &bss {
                        cands.for_each(bs.r, &mut rng, |s| paths.push(s));
                    }
                    for s in paths {
                        let weaker = if reflected_serving { s > threshold } else { s >= threshold };
                        if weaker {
                            interference += gain * sample_fading(&mut rng) * gamma * s.powf(-alpha);
                        }
                    }
                }
            }
            (-s_lap * interference).exp()
        })
        .collect();
    Estimate::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(cfg: &ScenarioConfig) -> Simulator {
        Simulator::new(cfg, &McSettings::default()).unwrap()
    }

    fn bs(r: f64, phi: f64, los: bool) -> BsSite {
        BsSite { pos: PolarPoint::new(r, phi), los }
    }

    fn empty_net() -> NetworkRealization {
        NetworkRealization { bss: vec![], riss: vec![], links: vec![], seed: (0, 0) }
    }

    #[test]
    fn association_cases() {
        let s = sim(&ScenarioConfig::reference());
        let mut net = empty_net();
        assert_eq!(s.associate(&net).kind, LinkKind::Outage);

        net.bss.push(bs(100.0, 0.0, true));
        let a = s.associate(&net);
        assert_eq!((a.kind, a.serving_bs), (LinkKind::Direct, Some(0)));
        assert!((a.serving_path_loss - 1e-8).abs() < 1e-20);

        let mut net = empty_net();
        net.bss.push(bs(100.0, 0.0, false));
        net.riss.push(RisSite { pos: PolarPoint::new(30.0, 1.0), los: true });
        net.links.push(ReflectedLink { bs: 0, ris: 0, path_len: 120.0 });
        let a = s.associate(&net);
        assert_eq!((a.kind, a.serving_bs, a.serving_ris), (LinkKind::Reflected, Some(0), Some(0)));

        // a LoS BS slightly farther than the reflected path still loses only
        // if γ·s^{−α} > r^{−α}
        net.bss.push(bs(121.0, 2.0, true));
        let a = s.associate(&net);
        assert_eq!(a.kind, LinkKind::Direct);
        assert_eq!(a.serving_bs, Some(1));

        net.bss[1].los = false;
        assert_eq!(s.associate(&net).kind, LinkKind::Reflected);
    }

    #[test]
    fn empty_network_without_bss() {
        let cfg = ScenarioConfig { lambda_b: 1e-30, ..ScenarioConfig::reference() };
        let s = sim(&cfg);
        let net = s.realize_network(1, 0);
        assert!(net.bss.is_empty());
        assert_eq!(s.run_trial(1, 0).kind, LinkKind::Outage);
    }

    #[test]
    fn bs_count_mean() {
        let cfg = ScenarioConfig { mu: 0.0, ..ScenarioConfig::reference() };
        let s = sim(&cfg);
        let n = 10_000;
        let mean = cfg.lambda_b * PI * s.radius() * s.radius();
        let total: usize = (0..n).map(|i| s.realize_network(5, i).bss.len()).sum();
        let emp = total as f64 / n as f64;
        assert!((emp - mean).abs() < 3.0 * (mean / n as f64).sqrt(), "{emp} vs {mean}");
    }

    #[test]
    fn los_indicator_frequency_by_distance() {
        let cfg = ScenarioConfig { mu: 0.0, ..ScenarioConfig::reference() };
        let s = sim(&cfg);
        let eta = crate::params::derive_params(&cfg).eta;
        let (lo, hi) = (150.0, 170.0);
        let (mut hits, mut total) = (0usize, 0usize);
        for i in 0..4000 {
            for b in s.realize_network(8, i).bss {
                if b.pos.r >= lo && b.pos.r < hi {
                    total += 1;
                    hits += b.los as usize;
                }
            }
        }
        let p = (-eta * 0.5 * (lo + hi)).exp();
        let emp = hits as f64 / total as f64;
        assert!((emp - p).abs() < 3.0 * (p * (1.0 - p) / total as f64).sqrt() + 2e-3, "{emp} vs {p}");
    }

    #[test]
    fn per_link_pairs_have_correct_frequency() {
        // one BS, many RISs; compare the active-pair count with its mean
        let cfg = ScenarioConfig::reference();
        let s = sim(&cfg);
        let eta = s.d.eta;
        let bss = vec![bs(150.0, 0.3, false)];
        let mut rng = trial_rng(21, 0);
        let riss: Vec<RisSite> = sample_ppp_disc_sorted(s.d.lambda_r, 800.0, &mut rng)
            .into_iter()
            .map(|pos| RisSite { pos, los: true })
            .collect();
        let expected: f64 = riss
            .iter()
            .map(|r| {
                let (sn, cs) = 0.3f64.sin_cos();
                let (c, d, sum) = pair_geometry(150.0, cs, sn, &r.pos);
                (-eta * sum).exp() * feasibility_from_parts(150.0, r.pos.r, c, d)
            })
            .sum();
        let reps = 20_000;
        let total: usize = (0..reps).map(|_| s.per_link_pairs(&bss, &riss, &mut rng).len()).sum();
        let emp = total as f64 / reps as f64;
        assert!((emp - expected).abs() < 3.0 * (expected / reps as f64).sqrt(), "{emp} vs {expected}");
    }

    #[test]
    fn noise_limited_coverage_matches_exponential_tail() {
        // a single LoS BS at fixed distance, nothing else
        let cfg = ScenarioConfig::reference();
        let s = sim(&cfg);
        let mut net = empty_net();
        net.bss.push(bs(400.0, 0.0, true));
        let a = s.associate(&net);
        let tau = 2.0;
        let pe = s.bs_beam.alignment_probability() * s.ue_beam.alignment_probability();
        let gain = s.bs_beam.n * s.ue_beam.n;
        let expected = pe * (-tau * cfg.n0 / (gain * a.serving_path_loss)).exp();
        let mut rng = trial_rng(33, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let sinr = s.sample_sinr(&net, &a, &mut rng).unwrap();
            // law: 0 w.p. 1−pe, else (gain·PL/N₀)·Exp(1)
            sum += (sinr > tau) as u8 as f64;
        }
        let emp = sum / n as f64;
        assert!((emp - expected).abs() < 3.0 * (expected * (1.0 - expected) / n as f64).sqrt());
        let misaligned = AssociationOutcome { serving_path_loss: 0.0, ..a };
        assert_eq!(s.sample_sinr(&net, &misaligned, &mut rng), Some(0.0));
    }

    #[test]
    fn estimates_are_thread_count_independent() {
        let s = sim(&ScenarioConfig::reference());
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| s.run_trials(200, 77))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn coverage_monotone_in_tau_on_fixed_trials() {
        let s = sim(&ScenarioConfig::reference());
        let trials = s.run_trials(500, 3);
        let mut prev = 1.0;
        for db in [-10.0, -5.0, 0.0, 3.0, 10.0, 20.0, 60.0] {
            let c = s.metrics_from(&trials, crate::params::db_to_linear(db)).coverage.value;
            assert!(c <= prev);
            prev = c;
        }
        assert_eq!(s.metrics_from(&trials, f64::INFINITY).coverage.value, 0.0);
        let m = s.metrics_from(&trials, 2.0);
        assert_eq!(m.ase.value / m.ee.value, s.config().areal_power());
        let f = m.assoc_freq;
        assert!((f.direct + f.reflected + f.outage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_ris_means_no_reflections() {
        let cfg = ScenarioConfig { mu: 0.0, ..ScenarioConfig::reference() };
        let s = sim(&cfg);
        let d = s.link_distance_samples(2000, 4);
        assert!(d.reflected.iter().all(|x| x.is_infinite()));
    }

    #[test]
    fn estimate_statistics() {
        let e = Estimate::from_samples([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.half_width - Estimate::Z95 * sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn direct_only_sampler_matches_full_trials() {
        let sim = Simulator::new(&ScenarioConfig::reference(), &McSettings::default()).unwrap();
        let full: Vec<f64> = sim.run_trials(200, 4).iter().map(|t| t.min_direct).collect();
        let fast = sim.direct_distance_samples(200, 4);
        assert_eq!(full.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), fast.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn ks_of_exact_sample_is_small() {
        let mut rng = trial_rng(1, 1);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) < 0.015);
        // defective law: half the mass at ∞
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 0.5 { 2.0 * x } else { f64::INFINITY }).collect();
        assert!(ks_distance(&ys, |x| 0.5 * x.clamp(0.0, 1.0)) < 0.015);
    }
}
