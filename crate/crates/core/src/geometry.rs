//! Geometric and probabilistic primitives shared by the analysis and the
//! simulator: LoS probability, reflection feasibility, reflected path
//! length and Poisson point sampling on a disc centred at the typical user.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::Serialize;

/// A point in polar coordinates around the typical user at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarPoint {
    /// Distance from the origin (m).
    pub r: f64,
    /// Azimuth in [0, 2π).
    pub phi: f64,
}

impl PolarPoint {
    pub fn new(r: f64, phi: f64) -> Self {
        Self { r, phi: phi.rem_euclid(TAU) }
    }

    /// Angle at the origin between `self` and `other`, folded into [0, π].
    pub fn angle_to(&self, other: &PolarPoint) -> f64 {
        let d = (self.phi - other.phi).abs();
        if d > PI {
            TAU - d
        } else {
            d
        }
    }

    /// Euclidean distance between two points.
    pub fn distance_to(&self, other: &PolarPoint) -> f64 {
        law_of_cosines(self.r, other.r, self.angle_to(other))
    }
}

/// Third side of a triangle with sides `a`, `b` enclosing angle `psi`.
#[inline]
pub fn law_of_cosines(a: f64, b: f64, psi: f64) -> f64 {
    (a * a + b * b - 2.0 * a * b * psi.cos()).max(0.0).sqrt()
}

/// LoS probability of a link of length `r` under the Boolean blockage
/// model: exp(−η·r).
#[inline]
pub fn los_probability(r: f64, eta: f64) -> f64 {
    (-eta * r).exp()
}

/// Probability that a randomly oriented RIS at distance `r_ru` from the
/// user sees the BS (at distance `r_bu`, angle `psi` away) on its
/// reflective side. Lies in [0, 1/2].
///
/// When the BS sits exactly on the RIS the arccos argument is undefined;
/// the value 1/2 is returned there.
#[inline]
pub fn feasibility_probability(r_bu: f64, r_ru: f64, psi: f64) -> f64 {
    let d = law_of_cosines(r_bu, r_ru, psi);
    if d <= 0.0 {
        return 0.5;
    }
    feasibility_from_parts(r_bu, r_ru, psi.cos(), d)
}

/// Same as [`feasibility_probability`] with cos ψ and the BS–RIS distance
/// already at hand.
#[inline]
pub(crate) fn feasibility_from_parts(r_bu: f64, r_ru: f64, cos_psi: f64, d_br: f64) -> f64 {
    if d_br <= 0.0 {
        return 0.5;
    }
    let arg = ((r_ru - r_bu * cos_psi) / d_br).clamp(-1.0, 1.0);
    0.5 * (1.0 - arg.acos() / PI)
}

/// Equivalent length of the BS→RIS→UE path when the BS is at distance `u`
/// and the RIS at distance `t` from the user, separated by angle `psi`.
#[inline]
pub fn reflected_distance(u: f64, t: f64, psi: f64) -> f64 {
    t + law_of_cosines(u, t, psi)
}

/// Homogeneous PPP of intensity `lambda` on the disc of the given radius.
/// Points come out in no particular order.
pub fn sample_ppp_disc<R: Rng + ?Sized>(lambda: f64, radius: f64, rng: &mut R) -> Vec<PolarPoint> {
    let mean = lambda * PI * radius * radius;
    if mean <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0);
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            PolarPoint::new(r, rng.random::<f64>() * TAU)
        })
        .collect()
}

/// Homogeneous PPP on a disc, generated in increasing distance order.
///
/// The areas π·λ·r_k² of a planar PPP seen from the origin are the
/// arrival times of a unit-rate Poisson process, so radii come out sorted
/// without a sort pass.
pub fn sample_ppp_disc_sorted<R: Rng + ?Sized>(
    lambda: f64,
    radius: f64,
    rng: &mut R,
) -> Vec<PolarPoint> {
    let mut out = Vec::new();
    if lambda <= 0.0 {
        return out;
    }
    let scale = 1.0 / (PI * lambda);
    let r2_max = radius * radius;
    let mut area = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        area += e;
        let r2 = area * scale;
        if r2 > r2_max {
            break;
        }
        out.push(PolarPoint::new(r2.sqrt(), rng.random::<f64>() * TAU));
    }
    out
}
