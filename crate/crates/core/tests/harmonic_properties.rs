use liouville_lab::coefficients::{field_from_expressions, make_log_example, make_standard_fields};
use liouville_lab::coupling::space_time_residual;
use liouville_lab::harmonic::{harmonic_1d, liouville_verdict_1d, HarmonicProfile};

const TOL: f64 = 1e-10;

fn residual_bound_holds(p: &HarmonicProfile, stride: usize) {
    let interior = &p.grid[2..p.grid.len() - 2];
    for &x in interior.iter().step_by(stride) {
        let r = p.residual(x, 1e-3).unwrap();
        assert!(r <= 10.0 * TOL, "{} at x = {x}: residual {r:e}", p.label);
    }
}

#[test]
fn finite_difference_residual_is_at_tolerance_level() {
    for field in [
        make_standard_fields("zero", 1, &[]).unwrap(),
        make_log_example(0.25).unwrap(),
        make_log_example(0.75).unwrap(),
        make_log_example(2.0).unwrap(),
    ] {
        let p = harmonic_1d(&field, 1e6, TOL).unwrap();
        residual_bound_holds(&p, 1);
    }
}

#[test]
fn residual_through_the_space_time_operator() {
    let f = make_log_example(0.75).unwrap();
    let p = harmonic_1d(&f, 1e6, TOL).unwrap();
    let grid: Vec<(f64, Vec<f64>)> = (0..=40).map(|k| (0.0, vec![-5.0 + 0.25 * k as f64])).collect();
    let u = |_: f64, x: &[f64]| p.eval(x[0]).unwrap();
    let r = space_time_residual(&f, &u, &grid, 1e-3).unwrap();
    assert!(r <= 1e-5, "{r}");
}

#[test]
fn odd_drift_gives_odd_profile() {
    for field in [
        make_log_example(0.75).unwrap(),
        field_from_expressions(1, &["sin(x) + x/(1+x^2)".into()], &["1".into()]).unwrap(),
    ] {
        let p = harmonic_1d(&field, 1e4, TOL).unwrap();
        let n = p.grid.len();
        assert_eq!(n % 2, 1);
        for k in 0..n / 2 {
            let (l, r) = (n / 2 - 1 - k, n / 2 + 1 + k);
            assert_eq!(p.grid[l], -p.grid[r]);
            let (ul, ur) = (p.u_values[l], p.u_values[r]);
            assert!((ul + ur).abs() <= 1e-9 * (1.0 + ur.abs()), "{}: x = {}", p.label, p.grid[r]);
        }
    }
}

#[test]
fn sup_is_nonincreasing_in_delta() {
    let mut prev = f64::INFINITY;
    for delta in [0.6, 0.75, 1.0, 2.0] {
        let p = harmonic_1d(&make_log_example(delta).unwrap(), 1e6, TOL).unwrap();
        let sup = p.sup_estimate.expect("bounded for delta > 1/2");
        assert!(sup <= prev, "delta {delta}: {sup} > {prev}");
        assert_eq!(p.inf_estimate, Some(-sup));
        prev = sup;
    }
}

#[test]
fn threshold_bracketing() {
    assert!(liouville_verdict_1d(0.49).unwrap());
    assert!(!liouville_verdict_1d(0.51).unwrap());
}

#[test]
fn tail_mass_matches_asymptotic_series() {
    // δ = 1: u′ = 2 ln²2 / ((2+x²) ln²(2+x²)) ≈ (ln²2 / 2) / (x² ln²x), and
    // ∫_X^∞ dx / (x² ln²x) = (1 − 2/L + 6/L² − 24/L³ + …) / (X L²) with L = ln X
    let p = harmonic_1d(&make_log_example(1.0).unwrap(), 1e6, TOL).unwrap();
    let mass = p.right_tail.tail_mass.unwrap();
    let l = 1e6f64.ln();
    let series = 1.0 - 2.0 / l + 6.0 / l.powi(2) - 24.0 / l.powi(3);
    let want = 2f64.ln().powi(2) / 2.0 * series / (1e6 * l * l);
    assert!((mass - want).abs() < 0.01 * want, "{mass} vs {want}");
}
