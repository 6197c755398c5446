use proptest::prelude::*;

use ris_stogeo::analytic::{AnalyticModel, QuadratureSpec};
use ris_stogeo::channel::alignment_probability;
use ris_stogeo::cli::sweep::parse_range;
use ris_stogeo::optimizer::{beta_objective, stationarity_residual, erf_decay_ratio, optimal_beta, BetaMethod};
use ris_stogeo::params::{db_to_linear, derive_params, ScenarioConfig};

fn coarse() -> QuadratureSpec {
    QuadratureSpec { rel_tol: 1e-4, distance_panels: 32, ..QuadratureSpec::default() }
}

fn heavy() -> ProptestConfig {
    ProptestConfig { cases: 6, ..ProptestConfig::default() }
}

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (2.0f64..40.0, 50.0f64..1200.0, 0.0f64..=1.0, 0.5f64..1.0).prop_map(|(lb, ll, mu, gamma)| ScenarioConfig {
        lambda_b: lb * 1e-6,
        lambda_l: ll * 1e-6,
        mu,
        gamma,
        ..ScenarioConfig::reference()
    })
}

proptest! {
    #[test]
    fn alignment_probability_is_a_decreasing_probability(
        theta in 0.01f64..std::f64::consts::PI,
        s1 in 1e-4f64..10.0,
        s2 in 1e-4f64..10.0,
    ) {
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        let (a, b) = (alignment_probability(lo, theta), alignment_probability(hi, theta));
        prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn erf_decay_ratio_is_decreasing(x in 1e-3f64..10.0, dx in 1e-3f64..1.0) {
        prop_assert!(erf_decay_ratio(x + dx) < erf_decay_ratio(x));
    }

    #[test]
    fn derived_quantities_are_consistent(
        m_b in prop::sample::select(vec![2u32, 4, 8, 16, 32, 64]),
        snr_db in -10.0f64..40.0,
        frac in 0.0f64..0.99,
    ) {
        let base = ScenarioConfig { m_b, snr: db_to_linear(snr_db), ..ScenarioConfig::reference() };
        let cfg = base.with_beta(frac * base.beta_max());
        prop_assume!(cfg.validate().is_ok());
        let d = derive_params(&cfg);
        prop_assert!((d.theta_b - 4.0 / m_b as f64).abs() < 1e-12);
        prop_assert!((d.lambda_r - cfg.mu * cfg.lambda_l).abs() < 1e-18);
        prop_assert!(d.t_e + d.t_d <= cfg.frame_len * (1.0 + 1e-12));
        prop_assert!(d.t_d >= 0.0);
    }

    #[test]
    fn residual_sign_brackets_the_optimum(
        k_b in 0.005f64..1.0,
        snr_db in 0.0f64..30.0,
        frame in prop::sample::select(vec![2240.0, 4480.0, 8960.0]),
    ) {
        let cfg = ScenarioConfig { k_b, snr: db_to_linear(snr_db), frame_len: frame, ..ScenarioConfig::reference() };
        let r = optimal_beta(&cfg, BetaMethod::Root).unwrap();
        prop_assume!(!r.boundary && !r.multimodal);
        let bmax = cfg.beta_max();
        prop_assert!(r.beta_star > 0.0 && r.beta_star < bmax);
        prop_assert!(stationarity_residual(&cfg, 0.5 * r.beta_star) > 0.0);
        prop_assert!(stationarity_residual(&cfg, 0.5 * (r.beta_star + bmax)) < 0.0);
        for z in [0.1, 0.3, 0.7, 0.9] {
            prop_assert!(beta_objective(&cfg, z * bmax) <= r.objective + 1e-9);
        }
    }

    #[test]
    fn ranges_have_requested_endpoints(a in -50.0f64..50.0, span in 0.1f64..50.0, count in 2usize..40) {
        let v = parse_range(&format!("{a}:{}:{count}", a + span)).unwrap();
        prop_assert_eq!(v.len(), count);
        prop_assert!((v[0] - a).abs() < 1e-12);
        prop_assert!((v[count - 1] - (a + span)).abs() < 1e-9);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }
}

proptest! {
    #![proptest_config(heavy())]

    #[test]
    fn association_probabilities_partition_unity(cfg in scenario()) {
        let m = AnalyticModel::new(&cfg, &coarse()).unwrap();
        let a = m.association_probabilities();
        for p in [a.p_direct, a.p_reflected, a.p_outage] {
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&p), "{a:?}");
        }
        prop_assert!((a.p_direct + a.p_reflected + a.p_outage - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_laws_are_monotone_and_bounded(cfg in scenario(), xs in prop::collection::vec(1.0f64..800.0, 8)) {
        let m = AnalyticModel::new(&cfg, &coarse()).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let (mut pd, mut pr) = (0.0, 0.0);
        for x in xs {
            let (d, r) = (m.cdf_direct(x), m.cdf_reflected(x));
            prop_assert!(d >= pd - 1e-12 && d <= m.cdf_direct_limit() + 1e-12);
            prop_assert!(r >= pr - 1e-12 && r <= 1.0);
            pd = d;
            pr = r;
        }
    }

    #[test]
    fn coverage_factorises_over_beta(cfg in scenario(), f1 in 0.0f64..0.95, f2 in 0.0f64..0.95) {
        let q = coarse();
        let c1 = cfg.with_beta(f1 * cfg.beta_max());
        let c2 = cfg.with_beta(f2 * cfg.beta_max());
        let (m1, m2) = (AnalyticModel::new(&c1, &q).unwrap(), AnalyticModel::new(&c2, &q).unwrap());
        let (a1, a2) = (m1.aligned_coverage(cfg.tau).unwrap(), m2.aligned_coverage(cfg.tau).unwrap());
        prop_assert!((a1 - a2).abs() <= 1e-12 * a1.max(1e-300), "{a1} vs {a2}");
        let (p1, p2) = (m1.coverage_probability(cfg.tau).unwrap(), m2.coverage_probability(cfg.tau).unwrap());
        prop_assert!((0.0..=1.0).contains(&p1));
        if f1 < f2 {
            prop_assert!(p1 <= p2 + 1e-12);
        }
    }

    #[test]
    fn coverage_decreases_with_threshold(cfg in scenario(), t1 in -10.0f64..20.0, dt in 0.5f64..10.0) {
        let m = AnalyticModel::new(&cfg, &coarse()).unwrap();
        let lo = m.coverage_probability(db_to_linear(t1)).unwrap();
        let hi = m.coverage_probability(db_to_linear(t1 + dt)).unwrap();
        prop_assert!(hi <= lo + 1e-6, "{lo} -> {hi}");
    }
}
