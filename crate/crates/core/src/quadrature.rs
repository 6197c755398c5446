//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the
//! summed estimate meets `max(abs_tol, rel_tol·|I|)` or the subdivision
//! budget runs out. Error estimation follows QUADPACK's QK15.

use serde::Serialize;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 200 }
    }

    pub fn rel(rel: f64) -> Self {
        Self::new(0.0, rel)
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn qk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment { a, b, value, error }
}

/// ∫ₐᵇ f(x) dx.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> QuadResult {
    integrate_with_breaks(f, &[a, b], tol)
}

/// ∫ f over [points[0], points.last()], starting from the given panels.
/// Breakpoints at known kinks make convergence much faster.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    tol: Tolerance,
) -> QuadResult {
    assert!(points.len() >= 2, "need at least one interval");
    let mut segs: Vec<Segment> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| qk15(&mut f, w[0], w[1]))
        .collect();
    let mut evaluations = 15 * segs.len();
    if segs.is_empty() {
        return QuadResult { value: 0.0, error: 0.0, evaluations: 0, converged: true };
    }
    let max_segs = tol.max_intervals.max(segs.len());
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.error).sum();
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target || !err.is_finite() {
            return QuadResult { value: total, error: err, evaluations, converged: err.is_finite() };
        }
        if segs.len() >= max_segs {
            return QuadResult { value: total, error: err, evaluations, converged: false };
        }
        let (idx, worst) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, s)| (i, *s))
            .expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval collapsed to rounding; nothing more to gain
            return QuadResult { value: total, error: err, evaluations, converged: false };
        }
        let left = qk15(&mut f, worst.a, mid);
        let right = qk15(&mut f, mid, worst.b);
        evaluations += 30;
        segs[idx] = left;
        segs.push(right);
    }
}

/// Tracks the worst non-converged result across many nested integrals.
#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize)]
pub struct QuadDiagnostics {
    pub calls: usize,
    pub failures: usize,
    pub worst_relative_error: f64,
}

impl QuadDiagnostics {
    /// Record one integral. Only misses by more than ten times the
    /// requested tolerance count as failures.
    pub fn record(&mut self, r: &QuadResult, tol: Tolerance) {
        self.calls += 1;
        let target = tol.abs.max(tol.rel * r.value.abs());
        if !r.converged && r.error > 10.0 * target {
            self.failures += 1;
        }
        let rel = if r.value != 0.0 { r.error / r.value.abs() } else { r.error };
        if rel > self.worst_relative_error {
            self.worst_relative_error = rel;
        }
    }

    pub fn merge(&mut self, other: &QuadDiagnostics) {
        self.calls += other.calls;
        self.failures += other.failures;
        self.worst_relative_error = self.worst_relative_error.max(other.worst_relative_error);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, Tolerance::rel(1e-12));
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn oscillatory_and_peaked() {
        let r = integrate(|x| x.sin(), 0.0, PI, Tolerance::rel(1e-12));
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::rel(1e-10).with_max_intervals(500));
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((r.value - exact).abs() / exact < 1e-9, "{} vs {exact}", r.value);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, Tolerance::rel(1e-8).with_max_intervals(1000));
        assert!((r.value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn breakpoints_and_empty_range() {
        let r = integrate_with_breaks(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], Tolerance::rel(1e-13));
        assert!((r.value - 2.5).abs() < 1e-13);
        let r = integrate(|x| x, 1.0, 1.0, Tolerance::rel(1e-6));
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, Tolerance::rel(1e-14).with_max_intervals(10));
        assert!(!r.converged);
        let mut d = QuadDiagnostics::default();
        d.record(&r, Tolerance::rel(1e-14));
        assert_eq!(d.failures, 1);
    }
}
