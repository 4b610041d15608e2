//! Structural invariants checked on random inputs.

use proptest::prelude::*;
use vrjp_lab::beta::{BetaField, EtaVector, WeightedGraph1D, laplace_transform_closed_form};
use vrjp_lab::experiments::{num, Params};
use vrjp_lab::green::{green_from_field, invert_r_explicit, vrjp_rates, Provenance, USequence};
use vrjp_lab::kernel::{apply_kernel, kernel_eval, quadratic_form, quadratic_form_double, CircleKernel};
use vrjp_lab::matsumoto_yor::MyChain;
use vrjp_lab::spectrum::{count_states_fd, phase_propagate};
use vrjp_lab::stats::{ks_one_sample, ks_two_sample, moment_ci};
use vrjp_lab::stochastic::{new_stream, sample_brownian_path, sample_inverse_gaussian, IgParams};

fn positive_seq(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, len).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

/// Circle field with `2 size + 1` vertices, skipping the singular case.
fn circle_field() -> impl Strategy<Value = BetaField> {
    (1usize..12, 0.2f64..5.0)
        .prop_flat_map(|(size, w)| (Just(size), Just(w), positive_seq(2 * size + 1..=2 * size + 1)))
        .prop_filter_map("degenerate product", |(size, w, a)| BetaField::circle_from_a(size, w, a).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circle_operator_is_positive_definite(field in circle_field()) {
        prop_assert!(field.is_positive_definite());
        prop_assert!(field.beta.iter().all(|b| *b > 0.0));
    }

    #[test]
    fn explicit_and_dense_green_agree(field in circle_field()) {
        let e = green_from_field(&field, Provenance::ExplicitFormula).unwrap();
        let d = green_from_field(&field, Provenance::DenseSolve).unwrap();
        prop_assert!(e.max_relative_deviation(&d) < 1e-10);
        for i in 0..e.dim() {
            prop_assert!(e.get(i, i) > 0.0);
            for j in 0..e.dim() {
                prop_assert!((e.get(i, j) - e.get(j, i)).abs() <= 1e-12 * e.get(i, j).abs());
                prop_assert!(e.get(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn explicit_inverse_inverts_r(u in positive_seq(3..=40)) {
        if let Ok(u) = USequence::new(u) {
            let g = invert_r_explicit(&u);
            prop_assert!(g.inverse_residual(&u.r_matrix().to_dense()) < 1e-12);
        }
    }

    #[test]
    fn vrjp_rates_are_reversible(field in circle_field(), root in 0usize..25) {
        let g = green_from_field(&field, Provenance::ExplicitFormula).unwrap();
        let i0 = root % g.dim();
        let rates = vrjp_rates(&g, &field, i0).unwrap();
        for r in &rates {
            let back = rates.iter().find(|x| x.from == r.to && x.to == r.from).unwrap();
            let lhs = r.rate * g.get(i0, r.from).powi(2);
            let rhs = back.rate * g.get(i0, r.to).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }
    }

    #[test]
    fn laplace_transform_is_one_at_zero_and_decreasing(size in 1usize..6, w in 0.3f64..3.0, t in 0.0f64..2.0) {
        let graph = WeightedGraph1D::circle(size, w).unwrap();
        let n = graph.vertex_count();
        let eta = EtaVector::zeros(n);
        let at_zero = laplace_transform_closed_form(&vec![0.0; n], &graph, &eta).unwrap();
        prop_assert!((at_zero - 1.0).abs() < 1e-14);
        let mut probe = vec![0.0; n];
        probe[0] = t;
        let v = laplace_transform_closed_form(&probe, &graph, &eta).unwrap();
        prop_assert!(v <= 1.0 + 1e-14 && v > 0.0);
    }

    #[test]
    fn matsumoto_yor_chain_matches_dense(a in positive_seq(1..=12), m in 1u32..6) {
        let chain = MyChain::from_a(m, a.clone()).unwrap();
        let n = a.len();
        let (psi, g11) = chain.dense_values(n).unwrap();
        prop_assert!((psi - chain.psi[n]).abs() <= 1e-9 * psi.abs());
        prop_assert!((g11 - chain.g11[n]).abs() <= 1e-9 * g11.abs());
        prop_assert!((chain.zhat[n] - g11 / psi).abs() <= 1e-9 * chain.zhat[n]);
    }

    #[test]
    fn inverse_gaussian_draws_are_positive(mu in 0.05f64..20.0, lam in 0.05f64..50.0, seed in 0u64..1000) {
        let p = IgParams::new(mu, lam).unwrap();
        let mut s = new_stream(seed, 1);
        for _ in 0..50 {
            let x = sample_inverse_gaussian(p, &mut s);
            prop_assert!(x > 0.0 && x.is_finite());
            let c = p.cdf(x);
            prop_assert!((0.0..=1.0).contains(&c));
        }
        prop_assert!(p.cdf(0.5 * mu) <= p.cdf(mu) && p.cdf(mu) <= p.cdf(2.0 * mu));
    }

    #[test]
    fn ks_statistics_are_bounded(values in prop::collection::vec(0.0f64..1.0, 100..300)) {
        let r = ks_one_sample(&values, |x| x, 0.05).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.statistic));
        prop_assert_eq!(r.passed(), r.statistic < r.critical);
        let same = ks_two_sample(&values, &values, 0.05).unwrap();
        prop_assert_eq!(same.statistic, 0.0);
        prop_assert_eq!(ks_one_sample(&values, |x| x, 0.05).unwrap(), r);
    }

    #[test]
    fn constant_samples_have_zero_width(c in -5.0f64..5.0, n in 2usize..50) {
        let ci = moment_ci(&vec![c; n], 1, 0.05).unwrap();
        prop_assert!(ci.half_width.abs() < 1e-12);
        prop_assert!((ci.estimate - c).abs() < 1e-12);
    }

    #[test]
    fn params_round_trip(lambda in 0.01f64..100.0, samples in 1usize..100_000) {
        let items = [format!("lambda={}", num(lambda)), format!("samples={samples}")];
        let p = Params::parse(&items).unwrap();
        prop_assert_eq!(p.get("lambda").unwrap().parse::<f64>().unwrap(), lambda);
        prop_assert_eq!(p.get("samples").unwrap().parse::<usize>().unwrap(), samples);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kernel_is_symmetric_positive_and_consistent(seed in 0u64..10_000, t in -1.0f64..1.0, t2 in -1.0f64..1.0) {
        let mut s = new_stream(seed, 2);
        let k = match CircleKernel::sample(1.0, 1e-2, &mut s) {
            Ok(k) => k,
            Err(_) => return Ok(()),
        };
        let a = kernel_eval(&k, t, t2).unwrap();
        prop_assert_eq!(a, kernel_eval(&k, t2, t).unwrap());
        prop_assert!(a > 0.0);
        let f = k.sample_fn(|x| 1.0 + (3.0 * x).sin().abs());
        let q = quadratic_form(&k, &f).unwrap();
        let qd = quadratic_form_double(&k, &f).unwrap();
        prop_assert!(q > 0.0);
        prop_assert!((q - qd).abs() <= 1e-8 * qd);
        let g = apply_kernel(&k, &f).unwrap();
        prop_assert!(g.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn phase_is_monotone_and_counts_crossings(seed in 0u64..10_000, e in 0.1f64..10.0) {
        let mut s = new_stream(seed, 3);
        let path = sample_brownian_path(-4.0, 4.0, 1e-2, &mut s).unwrap();
        let low = phase_propagate(e, &path).unwrap();
        let high = phase_propagate(1.5 * e, &path).unwrap();
        prop_assert!(low.theta_final >= 0.0);
        prop_assert!(high.theta_final >= low.theta_final);
        prop_assert!(low.crossings.windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(low.count() as f64, (low.theta_final / std::f64::consts::PI).floor());
        prop_assert!(count_states_fd(1.5 * e, &path).unwrap() >= count_states_fd(e, &path).unwrap());
    }
}
