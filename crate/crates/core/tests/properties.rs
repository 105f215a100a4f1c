use proptest::prelude::*;

use sparsemix::boundary::{analyze, closed_form_beta};
use sparsemix::experiments::{estimate_risk, ExperimentConfig, TestKind};
use sparsemix::hc::{hc_classical, hc_star, t_statistic};
use sparsemix::models::{sample_alternative, sample_null, ModelSpec};
use sparsemix::rate::{analytic_rate, midpoint_violations};

fn convex_spec() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        (0.01..3.0f64).prop_map(|r| ModelSpec::Idj { r }),
        (0.01..3.0f64, 0.2..5.0f64).prop_map(|(r, sigma2)| ModelSpec::Heteroscedastic { r, sigma2 }),
        (0.01..3.0f64).prop_map(|r| ModelSpec::LowRank { r, k: 1, q: vec![vec![1.0, 0.0], vec![0.0, 1.0]] }),
        (0.01..2.0f64, -0.9..0.9f64).prop_map(|(r, rho)| ModelSpec::CorrelatedPairs { r, rho }),
        (0.01..1.0f64).prop_map(|r| ModelSpec::MixtureOfMixturesII { r, u: vec![1.0, 0.0], v: vec![0.0, 1.0] }),
    ]
}

fn any_spec() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        convex_spec(),
        (0.01..3.0f64).prop_map(|r| ModelSpec::SbmPair { r }),
        (0.01..2.0f64, 0.01..1.0f64).prop_map(|(r, rho)| ModelSpec::SideInfo { r, rho }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rate_is_nonnegative(spec in any_spec(), t in -6.0..6.0f64) {
        let rate = analytic_rate(&spec).unwrap();
        let v = rate.eval(t);
        prop_assert!(v >= -1e-12, "I({t}) = {v}");
    }

    #[test]
    fn convex_rates_pass_midpoint_check(spec in convex_spec()) {
        let rate = analytic_rate(&spec).unwrap();
        let lo = rate.domain_lo().max(-5.0);
        let hi = rate.domain_hi().min(5.0);
        prop_assert_eq!(midpoint_violations(&rate, lo, hi, 201), 0);
    }

    #[test]
    fn boundaries_are_ordered_and_in_range(spec in any_spec()) {
        let report = analyze(&analytic_rate(&spec).unwrap(), Some(&spec));
        prop_assert!(report.beta_lower_sharp <= report.beta_upper_sharp + 1e-9, "{report:?}");
        for b in [report.beta_lower_sharp, report.beta_upper_sharp] {
            prop_assert!((0.5 - 1e-9..=1.0 + 1e-9).contains(&b), "{report:?}");
        }
        if let Some(hc) = report.beta_hc_lower {
            prop_assert!(hc <= report.beta_upper_sharp + 1e-9, "{report:?}");
        }
    }

    #[test]
    fn closed_form_is_nondecreasing_in_r(a in 0.01..2.5f64, b in 0.01..2.5f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for make in [
            |r| ModelSpec::Idj { r },
            |r| ModelSpec::SbmPair { r },
            |r| ModelSpec::LowRank { r, k: 1, q: vec![vec![1.0, 0.0], vec![0.0, 1.0]] },
        ] {
            prop_assert!(closed_form_beta(&make(lo)).unwrap() <= closed_form_beta(&make(hi)).unwrap() + 1e-12);
        }
    }

    #[test]
    fn hc_star_is_invariant_under_increasing_maps(
        values in prop::collection::vec(-4.0..4.0f64, 1..40),
        scale in 0.1..10.0f64,
        shift in -5.0..5.0f64,
    ) {
        let tail = |v: f64| sparsemix::numeric::norm_sf(v);
        let base = hc_star(&values, tail, None).unwrap();
        let mapped: Vec<f64> = values.iter().map(|v| (scale * v + shift).exp()).collect();
        let back = hc_star(&mapped, |w| if w > 0.0 { tail((w.ln() - shift) / scale) } else { 1.0 }, None).unwrap();
        prop_assert!((base.statistic - back.statistic).abs() <= 1e-9 * base.statistic.max(1.0));
    }

    #[test]
    fn hc_star_matches_classical_on_p_values(values in prop::collection::vec(-4.0..4.0f64, 1..60)) {
        let tail = |v: f64| sparsemix::numeric::norm_sf(v);
        let star = hc_star(&values, tail, None).unwrap();
        let p: Vec<f64> = values.iter().map(|&v| tail(v)).collect();
        let classical = hc_classical(&p, None).unwrap();
        prop_assert!((star.statistic - classical.statistic).abs() <= 1e-12 * star.statistic.max(1.0));
    }

    #[test]
    fn centered_counts_have_zero_t(n in 1usize..500, frac in 0.0..1.0f64) {
        let count = ((n as f64) * frac).floor() as usize;
        if count > 0 && count < n {
            let p = count as f64 / n as f64;
            prop_assert!(t_statistic(count, p, n).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), n in 3usize..200, beta in 0.05..0.95f64) {
        let spec = ModelSpec::Heteroscedastic { r: 0.3, sigma2: 2.0 };
        let (a, b) = (sample_null(&spec, n, seed).unwrap(), sample_null(&spec, n, seed).unwrap());
        prop_assert_eq!(a.values, b.values);
        let (a, b) = (sample_alternative(&spec, n, beta, seed).unwrap(), sample_alternative(&spec, n, beta, seed).unwrap());
        prop_assert_eq!(a.values, b.values);
        prop_assert_eq!(a.signal, b.signal);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn risk_estimates_are_bounded(
        seed in any::<u64>(),
        beta in 0.3..0.95f64,
        kind in prop_oneof![Just(TestKind::HcStar), Just(TestKind::HcClassical), Just(TestKind::NpOracle)],
    ) {
        let config = ExperimentConfig {
            spec: ModelSpec::Idj { r: 0.5 },
            n_values: vec![64],
            beta_grid: vec![beta],
            test_kind: kind,
            delta: 0.1,
            replications: 12,
            master_seed: seed,
            output_path: None,
            workers: Some(1),
            null_control: false,
        };
        let e = estimate_risk(&config, 64, beta).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.type_i_rate));
        prop_assert!((0.0..=1.0).contains(&e.type_ii_rate));
        prop_assert!((e.risk - (e.type_i_rate + e.type_ii_rate)).abs() < 1e-15);
        prop_assert!(e.half_width_95 >= 0.0);
        prop_assert_eq!(e, estimate_risk(&config, 64, beta).unwrap());
    }
}
