//! Scenario configuration and the quantities derived from it.
//!
//! Every value stored here is in SI / linear units: metres, m⁻², watts,
//! radians and linear power ratios. Conversion from per-km² densities and
//! dB values happens once, when a configuration file is loaded (see
//! [`crate::cli::config`]).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical and system parameters of one network scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// BS density (m⁻²).
    pub lambda_b: f64,
    /// UE density (m⁻²). Echoed only; the analysis is for a typical user.
    pub lambda_u: f64,
    /// Blockage centre density (m⁻²).
    pub lambda_l: f64,
    /// Fraction of blockages replaced by RISs, in [0, 1].
    pub mu: f64,
    /// Blockage (and RIS) length in metres.
    pub blockage_len: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// RIS reflection power attenuation, in (0, 1].
    pub gamma: f64,
    pub m_b: u32,
    pub m_r: u32,
    pub m_u: u32,
    /// BS beam-alignment error scale, in (0, 1].
    pub k_b: f64,
    /// UE beam-alignment error scale, in (0, 1].
    pub k_u: f64,
    /// Frame length T in symbols.
    pub frame_len: f64,
    /// Unit training overhead in symbols per path.
    pub beta: f64,
    /// Average channel SNR (linear).
    pub snr: f64,
    /// BS power (W).
    pub p_b: f64,
    /// RIS power (W).
    pub p_r: f64,
    /// Noise power normalised by the BS transmit power (linear).
    pub n0: f64,
    /// SINR threshold (linear).
    pub tau: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl ScenarioConfig {
    /// The reference scenario: 10 BSs/km², 500 blockages/km², μ = 0.6,
    /// l = 15 m, α = 4, γ = 0.85, M = (16, 16, 4), k = (0.02, 0.08),
    /// T = 4480, β = 1, SNR = 16 dB, P_B = 40 dBm, P_R = 15 dBm,
    /// N₀ = −90 dB, τ = 3 dB.
    pub fn reference() -> Self {
        Self {
            lambda_b: 10.0e-6,
            lambda_u: 100.0e-6,
            lambda_l: 500.0e-6,
            mu: 0.6,
            blockage_len: 15.0,
            alpha: 4.0,
            gamma: 0.85,
            m_b: 16,
            m_r: 16,
            m_u: 4,
            k_b: 0.02,
            k_u: 0.08,
            frame_len: 4480.0,
            beta: 1.0,
            snr: db_to_linear(16.0),
            p_b: dbm_to_watts(40.0),
            p_r: dbm_to_watts(15.0),
            n0: db_to_linear(-90.0),
            tau: db_to_linear(3.0),
        }
    }

    /// Number of antenna-to-antenna and antenna-to-element paths that
    /// have to be trained: M_B·M_R·M_U + M_B·M_U.
    pub fn training_paths(&self) -> f64 {
        let (b, r, u) = (self.m_b as f64, self.m_r as f64, self.m_u as f64);
        b * r * u + b * u
    }

    /// Exclusive upper bound of the feasible unit training overhead.
    pub fn beta_max(&self) -> f64 {
        self.frame_len / self.training_paths()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_config(self)
    }

    /// Validate and derive in one step.
    pub fn derive(&self) -> Result<DerivedParams, ConfigError> {
        validate_config(self)?;
        Ok(derive_params(self))
    }

    /// Copy with a different unit training overhead.
    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }

    /// Areal power consumption λ_B·P_B + λ_R·P_R (W/m²).
    pub fn areal_power(&self) -> f64 {
        self.lambda_b * self.p_b + self.mu * self.lambda_l * self.p_r
    }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid scenario configuration: {}", join_violations(.violations))]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl ConfigError {
    pub fn has_field(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Check every configuration invariant and report all violations at once.
pub fn validate_config(cfg: &ScenarioConfig) -> Result<(), ConfigError> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, message: String| out.push(Violation { field, message });

    let positive = [
        ("lambda_b", cfg.lambda_b),
        ("lambda_u", cfg.lambda_u),
        ("lambda_l", cfg.lambda_l),
        ("blockage_len", cfg.blockage_len),
        ("frame_len", cfg.frame_len),
        ("snr", cfg.snr),
        ("p_b", cfg.p_b),
        ("p_r", cfg.p_r),
        ("n0", cfg.n0),
        ("tau", cfg.tau),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            bad(name, format!("must be finite and > 0, got {v}"));
        }
    }
    if !(0.0..=1.0).contains(&cfg.mu) {
        bad("mu", format!("must lie in [0, 1], got {}", cfg.mu));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
        bad("gamma", format!("must lie in (0, 1], got {}", cfg.gamma));
    }
    for (name, k) in [("k_b", cfg.k_b), ("k_u", cfg.k_u)] {
        if !(k > 0.0 && k <= 1.0) {
            bad(name, format!("must lie in (0, 1], got {k}"));
        }
    }
    if !(cfg.alpha.is_finite() && cfg.alpha > 2.0) {
        bad("alpha", format!("must be > 2, got {}", cfg.alpha));
    }
    for (name, m) in [("m_b", cfg.m_b), ("m_r", cfg.m_r), ("m_u", cfg.m_u)] {
        if m == 0 {
            bad(name, "must be a positive integer".to_string());
        }
    }
    if cfg.m_b > 0 && cfg.m_r > 0 && cfg.m_u > 0 && cfg.frame_len > 0.0 {
        let bmax = cfg.beta_max();
        if !(cfg.beta >= 0.0 && cfg.beta < bmax) {
            bad(
                "beta",
                format!("beta out of feasible range [0, {bmax}), got {}", cfg.beta),
            );
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(ConfigError { violations: out })
    }
}

/// Quantities defined by formula from a [`ScenarioConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// LoS decay rate η = 2·l·λ_L/π (m⁻¹).
    pub eta: f64,
    /// RIS density λ_R = μ·λ_L (m⁻²).
    pub lambda_r: f64,
    pub theta_b: f64,
    pub theta_u: f64,
    pub n_b: f64,
    pub n_u: f64,
    /// Channel-estimation error variance 1/(1 + β·SNR).
    pub sigma_e2: f64,
    pub sigma_b2: f64,
    pub sigma_u2: f64,
    /// Training phase length (symbols).
    pub t_e: f64,
    /// Data phase length (symbols).
    pub t_d: f64,
    pub beta_max: f64,
}

impl DerivedParams {
    /// Fraction of the frame left for data, T_D/T.
    pub fn data_fraction(&self, frame_len: f64) -> f64 {
        self.t_d / frame_len
    }
}

/// Beamwidth of a half-wavelength ULA with `m` elements: θ = 4/M.
pub fn beamwidth(m: u32) -> f64 {
    4.0 / m as f64
}

/// Main-lobe gain under the total radiation constraint N·θ = 2π.
pub fn main_lobe_gain(theta: f64) -> f64 {
    2.0 * PI / theta
}

pub fn estimation_error_variance(beta: f64, snr: f64) -> f64 {
    1.0 / (1.0 + beta * snr)
}

pub fn derive_params(cfg: &ScenarioConfig) -> DerivedParams {
    let eta = 2.0 * cfg.blockage_len * cfg.lambda_l / PI;
    let theta_b = beamwidth(cfg.m_b);
    let theta_u = beamwidth(cfg.m_u);
    let sigma_e2 = estimation_error_variance(cfg.beta, cfg.snr);
    let t_e = cfg.beta * cfg.training_paths();
    DerivedParams {
        eta,
        lambda_r: cfg.mu * cfg.lambda_l,
        theta_b,
        theta_u,
        n_b: main_lobe_gain(theta_b),
        n_u: main_lobe_gain(theta_u),
        sigma_e2,
        sigma_b2: cfg.k_b * PI * PI * sigma_e2,
        sigma_u2: cfg.k_u * PI * PI * sigma_e2,
        t_e,
        t_d: cfg.frame_len - t_e,
        beta_max: cfg.beta_max(),
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Densities are quoted per km²; internally everything is per m².
pub fn per_km2_to_per_m2(x: f64) -> f64 {
    x * 1e-6
}
