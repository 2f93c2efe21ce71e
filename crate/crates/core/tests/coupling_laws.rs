use liouville_lab::coefficients::{make_log_example, make_standard_fields, CoefficientField, EllipticityBounds};
use liouville_lab::coupling::{coupled_step, coupling_distances_at, simulate_coupling, CouplingConfig};
use liouville_lab::rng::{standard_normal, stream, Stream};

fn unit() -> EllipticityBounds {
    EllipticityBounds::exact(1.0, 1.0)
}

#[test]
#[allow(clippy::needless_range_loop)]
fn one_step_covariance_is_q_dt() {
    let f = make_standard_fields("var_q_const_b", 2, &[0.5]).unwrap();
    let bounds = EllipticityBounds::exact(1.0, 1.5);
    let (x, y) = ([0.7, -0.3], [-0.2, 0.4]);
    let (mu, dt, n) = (0.5, 1e-2f64, 100_000);
    let b = f.eval_drift(&x).unwrap();
    let q = f.eval_diffusion(&x).unwrap();
    let mut rng = stream(77, Stream::Coupling, 1 << 40);
    let mut sums = [[0.0f64; 2]; 2];
    let mut means = [0.0f64; 2];
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let db: Vec<f64> = (0..2).map(|_| dt.sqrt() * standard_normal(&mut rng)).collect();
        let dw: Vec<f64> = (0..2).map(|_| dt.sqrt() * standard_normal(&mut rng)).collect();
        let (xn, _) = coupled_step(&f, &bounds, &x, &y, mu, dt, (&db, &dw)).unwrap();
        let inc = [xn[0] - x[0] - b[0] * dt, xn[1] - x[1] - b[1] * dt];
        means[0] += inc[0] / n as f64;
        means[1] += inc[1] / n as f64;
        samples.push(inc);
    }
    for s in &samples {
        for i in 0..2 {
            for j in 0..2 {
                sums[i][j] += (s[i] - means[i]) * (s[j] - means[j]);
            }
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let cov = sums[i][j] / (n - 1) as f64;
            let want = q.get(i, j) * dt;
            let se = ((q.get(i, i) * q.get(j, j) + q.get(i, j).powi(2)) / n as f64).sqrt() * dt;
            assert!((cov - want).abs() <= 4.0 * se, "({i},{j}): {cov} vs {want} (se {se})");
        }
    }
}

/// Scalar `r' = r − r dt + 2√μ ΔW` absorbed at the couple radius or on a
/// sign change, for the Ornstein–Uhlenbeck drift.
fn scalar_ou_distances(r0: f64, mu: f64, dt: f64, t: f64, n: usize, radius: f64) -> Vec<f64> {
    let steps = (t / dt).round() as usize;
    (0..n)
        .map(|p| {
            let mut rng = stream(4242, Stream::Coupling, p as u64);
            let mut r = r0;
            for _ in 0..steps {
                let dw = dt.sqrt() * standard_normal(&mut rng);
                r += -r * dt + 2.0 * mu.sqrt() * dw;
                if r <= radius {
                    return 0.0;
                }
            }
            r
        })
        .collect()
}

fn ks_distance(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn distance_law_matches_scalar_sde() {
    let f = make_standard_fields("ou", 1, &[]).unwrap();
    let n = 10_000;
    let cfg = CouplingConfig {
        mu: 0.5,
        dt: 1e-3,
        t_max: 1.0,
        n_paths: n,
        seed: 17,
        ..CouplingConfig::default()
    };
    let mut coupled = coupling_distances_at(&f, &unit(), &cfg, &[1.0], &[-1.0]).unwrap();
    let mut scalar = scalar_ou_distances(2.0, 0.5, 1e-3, 1.0, n, cfg.couple_radius);
    let d = ks_distance(&mut coupled, &mut scalar);
    // two-sample 1% critical value
    let crit = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "KS {d} vs {crit}");
}

fn halving_case(field: &CoefficientField, cfg: CouplingConfig, x0: &[f64], y0: &[f64]) {
    let a = simulate_coupling(field, &unit(), &cfg, x0, y0).unwrap();
    let half = CouplingConfig { dt: cfg.dt / 2.0, ..cfg };
    let b = simulate_coupling(field, &unit(), &half, x0, y0).unwrap();
    let ci = a.ci_halfwidth.max(b.ci_halfwidth).max(1.96 / (a.n_paths as f64));
    assert!(
        (a.p_couple - b.p_couple).abs() < 2.0 * ci,
        "{}: {} vs {} (ci {ci})",
        field.label(),
        a.p_couple,
        b.p_couple
    );
}

#[test]
fn halving_dt_is_stable_on_acceptance_scenarios() {
    let zero = make_standard_fields("zero", 1, &[]).unwrap();
    for t in [1.0, 10.0] {
        let cfg = CouplingConfig {
            mu: 0.5,
            dt: 1e-3,
            t_max: t,
            n_paths: 10_000,
            seed: 21,
            ..CouplingConfig::default()
        };
        halving_case(&zero, cfg, &[1.0], &[0.0]);
    }
    let long = CouplingConfig {
        mu: 0.9,
        dt: 1e-3,
        t_max: 50.0,
        n_paths: 10_000,
        seed: 8,
        ..CouplingConfig::default()
    };
    let ou = make_standard_fields("ou", 2, &[]).unwrap();
    halving_case(&ou, long.clone(), &[0.5, 0.0], &[-0.5, 0.0]);
    let log2 = make_log_example(2.0).unwrap();
    halving_case(&log2, long, &[5.0], &[-5.0]);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let f = make_log_example(0.75).unwrap();
    let cfg = CouplingConfig {
        mu: 0.9,
        dt: 1e-2,
        t_max: 5.0,
        n_paths: 400,
        seed: 5,
        ..CouplingConfig::default()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| simulate_coupling(&f, &unit(), &cfg, &[1.0], &[-1.0]).unwrap());
    let b = three.install(|| simulate_coupling(&f, &unit(), &cfg, &[1.0], &[-1.0]).unwrap());
    assert_eq!(a, b);
}
