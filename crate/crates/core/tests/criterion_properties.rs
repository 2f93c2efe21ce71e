use liouville_lab::coefficients::{make_log_example, make_standard_fields, EllipticityBounds};
use liouville_lab::criterion::{
    dispersion_objective, drift_dispersion, evaluate_liouville_criterion, log_grid, theorem_threshold,
    CriterionConfig, RadiiGrid, Verdict,
};
use liouville_lab::rng::norm;
use proptest::prelude::*;

fn quick() -> CriterionConfig {
    CriterionConfig {
        radii: RadiiGrid {
            min: 1.0,
            max: 1e8,
            points: 30,
            log_spaced: true,
        },
        n_pairs: 12,
        ellipticity_samples: 256,
        modulus_grid: 24,
        classic_pairs: 200,
        ..CriterionConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isotropic_threshold_is_twice_the_scale(c in 0.01f64..100.0, d in 1usize..=4) {
        let f = make_standard_fields("const_q", d, &vec![c; d]).unwrap();
        let b = liouville_lab::estimate_ellipticity(&f, 10.0, 16, 0).unwrap();
        prop_assert_eq!(theorem_threshold(&b, d), 2.0 * c);
    }

    #[test]
    fn more_starts_never_lower_kappa(c in -3.0f64..3.0, n in 1usize..6, seed in 0u64..1000) {
        let f = make_standard_fields("radial", 2, &[c]).unwrap();
        let radii = [0.5, 3.0, 40.0];
        let few = drift_dispersion(&f, &radii, n, seed).unwrap();
        let many = drift_dispersion(&f, &radii, 3 * n, seed).unwrap();
        for (a, b) in few.values.iter().zip(&many.values) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn reported_pairs_attain_reported_values(c in -3.0f64..3.0, seed in 0u64..1000) {
        let f = make_standard_fields("radial", 3, &[c]).unwrap();
        let radii = log_grid(0.1, 1e4, 6);
        let curve = drift_dispersion(&f, &radii, 4, seed).unwrap();
        for ((s, v), p) in radii.iter().zip(&curve.values).zip(&curve.argmax) {
            let diff: Vec<f64> = p.x.iter().zip(&p.y).map(|(a, b)| a - b).collect();
            prop_assert!((norm(&diff) - s).abs() <= 1e-9 * s.max(1.0));
            prop_assert_eq!(dispersion_objective(&f, &p.x, &p.y), *v);
        }
    }
}

#[test]
fn unit_diffusion_verdict_follows_kappa_below_two() {
    let fields = [
        make_standard_fields("zero", 2, &[]).unwrap(),
        make_standard_fields("ou", 3, &[]).unwrap(),
        make_standard_fields("radial", 2, &[0.3]).unwrap(),
        make_standard_fields("radial", 1, &[1.0]).unwrap(),
        make_log_example(0.25).unwrap(),
        make_log_example(0.75).unwrap(),
    ];
    for f in &fields {
        let r = evaluate_liouville_criterion(f, &quick()).unwrap();
        assert_eq!(r.threshold, 2.0);
        assert_eq!(
            r.verdict == Verdict::LiouvilleGuaranteed,
            r.kappa_inf < 2.0,
            "{}: kappa_inf {} verdict {:?} {:?}",
            f.label(),
            r.kappa_inf,
            r.verdict,
            r.diagnostics
        );
    }
}

#[test]
fn guaranteed_reports_carry_admissible_constants() {
    let f = make_standard_fields("var_q_const_b", 2, &[0.5]).unwrap();
    let r = evaluate_liouville_criterion(&f, &quick()).unwrap();
    assert_eq!(r.verdict, Verdict::LiouvilleGuaranteed);
    let c = r.constants.unwrap();
    assert!(c.is_admissible(&r.bounds, 2));
    assert!((c.lambda - 1.0 / (4.0 * (r.bounds.lambda0 - c.mu))).abs() < 1e-15);
    let m = r.modulus.unwrap();
    assert!(m.dini_mass.is_finite() && m.dini_mass >= 0.0);
    assert!(m.values.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(r.escape_divergent, Some(true));
}

#[test]
fn wide_spectrum_makes_threshold_negative() {
    let b = EllipticityBounds::exact(1.0, 5.0);
    assert_eq!(theorem_threshold(&b, 2), -2.0);
    let f = make_standard_fields("const_q", 2, &[1.0, 5.0]).unwrap();
    let r = evaluate_liouville_criterion(&make_standard_fields("zero", 2, &[]).unwrap(), &quick()).unwrap();
    assert_eq!(r.verdict, Verdict::LiouvilleGuaranteed);
    let r = evaluate_liouville_criterion(&f, &quick()).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert_eq!(r.failed_stage.as_deref(), Some("dispersion"));
}
