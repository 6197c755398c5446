//! Path loss, Rayleigh fading and the sectored beam model.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use crate::params::{beamwidth, main_lobe_gain, DerivedParams};

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum ChannelError {
    #[error("path loss is singular at zero distance")]
    ZeroDistance,
    #[error("distance must be finite and non-negative, got {0}")]
    BadDistance(f64),
}

/// Sectored pattern of one link end plus its alignment-error variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamParams {
    /// Beamwidth θ (rad).
    pub theta: f64,
    /// Main-lobe gain N, with N·θ = 2π.
    pub n: f64,
    /// Alignment-error variance σ² (rad²).
    pub sigma2: f64,
}

impl BeamParams {
    pub fn new(theta: f64, sigma2: f64) -> Self {
        Self { theta, n: main_lobe_gain(theta), sigma2 }
    }

    /// ULA with `m` antennas, error scale `k` and estimation-error variance
    /// `sigma_e2`.
    pub fn for_array(m: u32, k: f64, sigma_e2: f64) -> Self {
        Self::new(beamwidth(m), k * PI * PI * sigma_e2)
    }

    pub fn bs(d: &DerivedParams) -> Self {
        Self { theta: d.theta_b, n: d.n_b, sigma2: d.sigma_b2 }
    }

    pub fn ue(d: &DerivedParams) -> Self {
        Self { theta: d.theta_u, n: d.n_u, sigma2: d.sigma_u2 }
    }

    /// P[|ε| ≤ θ/2] under the truncated Gaussian alignment error.
    pub fn alignment_probability(&self) -> f64 {
        alignment_probability(self.sigma2, self.theta)
    }
}

#[inline]
pub(crate) fn attenuation(d: f64, alpha: f64) -> f64 {
    d.powf(-alpha)
}

fn check_distance(r: f64) -> Result<(), ChannelError> {
    if !(r.is_finite() && r >= 0.0) {
        Err(ChannelError::BadDistance(r))
    } else if r == 0.0 {
        Err(ChannelError::ZeroDistance)
    } else {
        Ok(())
    }
}

/// Direct-link path loss r^(−α).
pub fn path_loss_direct(r: f64, alpha: f64) -> Result<f64, ChannelError> {
    check_distance(r)?;
    Ok(attenuation(r, alpha))
}

/// Reflected-link path loss γ·d^(−α) with the sum-distance model.
pub fn path_loss_reflected(d_sum: f64, alpha: f64, gamma: f64) -> Result<f64, ChannelError> {
    check_distance(d_sum)?;
    Ok(gamma * attenuation(d_sum, alpha))
}

/// Probability that a zero-mean Gaussian error of variance `sigma2`,
/// truncated to [−π, π], stays within half a beamwidth:
/// erf(θ/(2√(2σ²))) / erf(π/√(2σ²)).
pub fn alignment_probability(sigma2: f64, theta: f64) -> f64 {
    let s = (2.0 * sigma2).sqrt();
    let num = libm::erf(theta / (2.0 * s));
    let den = libm::erf(PI / s);
    (num / den).min(1.0)
}

/// Beam gain of the serving link: N_B·N_U when both ends are aligned,
/// zero otherwise.
pub fn sample_serving_gain<R: Rng + ?Sized>(bs: &BeamParams, ue: &BeamParams, rng: &mut R) -> f64 {
    let p = bs.alignment_probability() * ue.alignment_probability();
    if rng.random::<f64>() < p {
        bs.n * ue.n
    } else {
        0.0
    }
}

/// Probability that an interfering link falls in both main lobes:
/// θ_B·θ_U/(4π²).
pub fn interferer_hit_probability(bs: &BeamParams, ue: &BeamParams) -> f64 {
    bs.theta * ue.theta / (4.0 * PI * PI)
}

/// Beam gain of an interfering link: N_B·N_U with probability
/// θ_B·θ_U/(4π²), zero otherwise. Its mean is exactly 1.
pub fn sample_interferer_gain<R: Rng + ?Sized>(bs: &BeamParams, ue: &BeamParams, rng: &mut R) -> f64 {
    if rng.random::<f64>() < interferer_hit_probability(bs, ue) {
        bs.n * ue.n
    } else {
        0.0
    }
}

/// Rayleigh power fading, h ~ Exp(1).
#[inline]
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}
