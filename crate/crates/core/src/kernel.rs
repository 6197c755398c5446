//! Angular kernel of the reflected-link geometry.
//!
//! Put the BS at distance `u` from the user and fix the total reflected
//! path length `s = t + |BS − RIS|`. The RIS positions with that path
//! length lie on an ellipse whose foci are the user and the BS. Swapping
//! the polar coordinates (t, ψ) of the RIS for (s, ψ) makes the region
//! "reflected path ≤ x" a plain interval in `s`. The feasibility-weighted
//! length element of each ellipse, integrated over ψ, is
//!
//! ```text
//! Φ(u, s) = ∫_{−π}^{π} p_F(u, t*(s, ψ), ψ) · J(s, ψ) dψ,
//! t*(s, ψ) = (s² − u²) / (2(s − u cos ψ)),
//! J(s, ψ)  = (s² − 2us cos ψ + u²)(s² − u²) / (4 (s − u cos ψ)³),
//! ```
//!
//! and `t·dt·dψ = J·ds·dψ`. Φ is homogeneous of degree one, so
//! Φ(u, s) = s·φ(u/s) with φ a fixed function on [0, 1]. This module
//! tabulates φ once in the variable v = √(1 − u/s), which resolves the
//! boundary layer at u → s.

use std::f64::consts::PI;

use crate::geometry::feasibility_from_parts;
use crate::quadrature::{integrate_with_breaks, Tolerance};

/// φ(0): the RIS sees a BS at the user, p_F = 1/2 on a circle of radius s/2.
pub const KERNEL_AT_ZERO: f64 = PI / 4.0;
/// lim φ(w) as w → 1, where the ellipse collapses onto the BS–user segment.
pub const KERNEL_AT_ONE: f64 = 1.0 / PI;

/// The ψ-integrand of φ at v = √(1 − w), scaled to s = 1.
fn integrand(v: f64, psi: f64) -> f64 {
    let w = 1.0 - v * v;
    let c = psi.cos();
    let half = (0.5 * psi).sin();
    let one_minus_c = 2.0 * half * half;
    let one_minus_w2 = v * v * (2.0 - v * v);
    // 1 − w·cos ψ, written to avoid cancellation near (w, ψ) = (1, 0)
    let den = one_minus_c + v * v * c;
    if den <= 0.0 {
        return 0.0;
    }
    let t = one_minus_w2 / (2.0 * den);
    let chord = v.powi(4) + 2.0 * w * one_minus_c;
    let jac = chord * one_minus_w2 / (4.0 * den * den * den);
    let d_br = 1.0 - t;
    feasibility_from_parts(w, t, c, d_br) * jac
}

/// Direct evaluation of φ(w) by adaptive quadrature over ψ.
pub fn kernel_direct(w: f64) -> f64 {
    if w >= 1.0 {
        return KERNEL_AT_ONE;
    }
    let v = (1.0 - w.max(0.0)).sqrt();
    let mut breaks = vec![0.0];
    for k in [0.25, 1.0, 4.0, 16.0] {
        let b = k * v;
        if b < PI {
            breaks.push(b);
        }
    }
    breaks.push(PI);
    let tol = Tolerance::new(1e-14, 1e-12).with_max_intervals(400);
    2.0 * integrate_with_breaks(|psi| integrand(v, psi), &breaks, tol).value
}

/// φ sampled on a uniform grid in v ∈ [0, 1], read back with local cubic
/// Lagrange interpolation.
#[derive(Debug, Clone)]
pub struct KernelTable {
    h: f64,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(nodes: usize) -> Self {
        let nodes = nodes.max(4);
        let h = 1.0 / (nodes - 1) as f64;
        let values = (0..nodes)
            .map(|i| {
                let v = i as f64 * h;
                if i == 0 {
                    KERNEL_AT_ONE
                } else {
                    kernel_direct(1.0 - v * v)
                }
            })
            .collect();
        Self { h, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// φ at v = √(1 − w).
    #[inline]
    pub fn at_v(&self, v: f64) -> f64 {
        let n = self.values.len();
        let x = (v / self.h).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).clamp(1, n - 3);
        let p = x - i as f64;
        let y = &self.values[i - 1..i + 3];
        // cubic through nodes at offsets −1, 0, 1, 2
        let (pm, p1, p2) = (p + 1.0, p - 1.0, p - 2.0);
        -y[0] * p * p1 * p2 / 6.0 + y[1] * pm * p1 * p2 / 2.0 - y[2] * pm * p * p2 / 2.0
            + y[3] * pm * p * p1 / 6.0
    }

    /// φ(w) for w = u/s ∈ [0, 1].
    #[inline]
    pub fn at(&self, w: f64) -> f64 {
        self.at_v((1.0 - w).max(0.0).sqrt())
    }

    /// Φ(u, s) = s·φ(u/s) for s ≥ u ≥ 0.
    #[inline]
    pub fn weight(&self, u: f64, s: f64) -> f64 {
        if s <= 0.0 || s < u {
            return 0.0;
        }
        s * self.at_v(((s - u) / s).sqrt())
    }
}
