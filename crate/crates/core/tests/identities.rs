use proptest::prelude::*;

use thermal_filtering::analytics::{
    compute_coefficients, gamma_threshold, min_variance_over_n, squeezing_bound,
    steady_state_purity, steady_state_variance, BathParams,
};
use thermal_filtering::gaussian::{variance_drift, Covariance, GaussianMoments};

fn params() -> impl Strategy<Value = BathParams> {
    (0.0..20.0f64, 0.0..=1.0f64).prop_map(|(n, g)| BathParams::new(n, g).unwrap())
}

proptest! {
    #[test]
    fn variance_matches_subtracted_form(p in params()) {
        let u = 2.0 * p.n + 1.0;
        let textbook = u - p.gamma * p.gamma * 4.0 * p.n * (p.n + 1.0) / u;
        let v = steady_state_variance(p).unwrap();
        prop_assert!((v - textbook).abs() <= 1e-12 * u);
        prop_assert!(v >= squeezing_bound(p.n).unwrap() * (1.0 - 1e-12));
        prop_assert!(v <= u * (1.0 + 1e-15));
    }

    #[test]
    fn steady_state_is_a_fixed_point_of_the_riccati_drift(p in params()) {
        let c = compute_coefficients(p).unwrap();
        let v = Covariance {
            var_x: steady_state_variance(p).unwrap(),
            var_p: 2.0 * p.n + 1.0,
            cov_xp: 0.0,
        };
        let d = variance_drift(v, &c, p.n);
        let scale = 1.0 + p.n * p.n;
        prop_assert!(d.var_x.abs() < 1e-9 * scale, "{:?}", d);
        prop_assert!(d.var_p.abs() < 1e-12 * scale && d.cov_xp == 0.0);
    }

    #[test]
    fn purity_is_the_gaussian_purity_of_the_steady_state(p in params()) {
        let m = GaussianMoments {
            mean_x: 0.0,
            mean_p: 0.0,
            var_x: steady_state_variance(p).unwrap(),
            var_p: 2.0 * p.n + 1.0,
            cov_xp: 0.0,
        };
        let pur = steady_state_purity(p).unwrap();
        prop_assert!((m.purity() - pur).abs() < 1e-12);
        prop_assert!(pur > 0.0 && pur <= 1.0);
    }

    #[test]
    fn mixing_is_a_square_root_of_the_outcome_covariance(p in params()) {
        let c = compute_coefficients(p).unwrap();
        let m = c.mixing;
        for i in 0..2 {
            for j in 0..2 {
                let mm = m[i][0] * m[0][j] + m[i][1] * m[1][j];
                prop_assert!((mm - c.outcome_cov[i][j]).abs() < 1e-10 * c.outcome_cov[0][0]);
            }
        }
    }

    #[test]
    fn additive_noise_terms_are_minus_the_mixing_entries(p in params()) {
        let c = compute_coefficients(p).unwrap();
        let scale = 1.0 + p.n;
        prop_assert!((c.a2 + c.m_plus).abs() < 1e-10 * scale, "{} vs {}", c.a2, c.m_plus);
        prop_assert!((c.b2 + c.m_minus).abs() < 1e-10 * scale, "{} vs {}", c.b2, c.m_minus);
    }

    #[test]
    fn decorrelation_inverts_mixing(p in params(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let c = compute_coefficients(p).unwrap();
        let w = c.decorrelate(c.correlate([a, b]));
        prop_assert!((w[0] - a).abs() < 1e-10 && (w[1] - b).abs() < 1e-10);
    }

    #[test]
    fn threshold_gives_unit_variance(n in 0.0..100.0f64) {
        let g = gamma_threshold(n).unwrap();
        let v = steady_state_variance(BathParams::new(n, g).unwrap()).unwrap();
        prop_assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn optimum_lies_below_every_occupation(g in 0.0..1.0f64, n in 0.0..50.0f64) {
        let o = min_variance_over_n(g).unwrap();
        let v = steady_state_variance(BathParams::new(n, g).unwrap()).unwrap();
        prop_assert!(o.v_min <= v + 1e-12);
        let at_opt = steady_state_variance(BathParams::new(o.n_opt, g).unwrap()).unwrap();
        prop_assert!((at_opt - o.v_min).abs() < 1e-12);
    }
}
