//! Reflection coupling and martingale checks by Euler–Maruyama.
//!
//! The noise is split as `q = σ² + μI`: the `σ` part is shared by both
//! copies, the additive `√μ` part is mirrored across the hyperplane
//! orthogonal to `e = (x − y)/|x − y|`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, EllipticityBounds};
use crate::error::{Error, Result};
use crate::matrix::{shifted_sqrt, SymMatrix};
use crate::rng::{self, dot, norm, Stream};

pub const MAX_STEPS: usize = 10_000_000;
/// Runaway guard: `|b(X)| > RUNAWAY_FACTOR · growth_bound · (1 + |X|)`.
const RUNAWAY_FACTOR: f64 = 1e3;

/// `v − 2⟨e, v⟩e`.
pub fn reflect(e: &[f64], v: &[f64]) -> Vec<f64> {
    let c = 2.0 * dot(e, v);
    v.iter().zip(e).map(|(a, b)| a - c * b).collect()
}

/// `I − 2eeᵀ` for a unit vector `e`.
pub fn reflection_matrix(e: &[f64]) -> SymMatrix {
    let d = e.len();
    let mut m = SymMatrix::identity(d).entries().to_vec();
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] -= 2.0 * e[i] * e[j];
        }
    }
    SymMatrix::from_row_major_unchecked(d, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingConfig {
    pub mu: f64,
    pub dt: f64,
    pub t_max: f64,
    pub couple_radius: f64,
    pub n_paths: usize,
    /// Taken from the run seed when loaded from a config file.
    #[serde(skip)]
    pub seed: u64,
    /// Defaults to `10³(1 + |x0| + |y0|)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_radius: Option<f64>,
    /// Count escaped paths as coupled instead of not coupled.
    pub escaped_count_as_coupled: bool,
    /// Row stride of the trajectory dump.
    pub trajectory_stride: usize,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            dt: 1e-3,
            t_max: 10.0,
            couple_radius: 1e-3,
            n_paths: 10_000,
            seed: 0,
            escape_radius: None,
            escaped_count_as_coupled: false,
            trajectory_stride: 100,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self, bounds: &EllipticityBounds) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.mu > 0.0 && self.mu < bounds.lambda0) {
            return bad(format!("mu = {} must lie in (0, lambda0 = {})", self.mu, bounds.lambda0));
        }
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) || (self.t_max > 0.0 && self.dt > self.t_max) {
            return bad(format!("need 0 < dt <= t_max, got dt = {}, t_max = {}", self.dt, self.t_max));
        }
        if !(self.couple_radius > 0.0) {
            return bad("couple_radius must be positive".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.n_steps() > MAX_STEPS {
            return bad(format!("t_max/dt = {} exceeds the step cap {MAX_STEPS}", self.n_steps()));
        }
        if matches!(self.escape_radius, Some(r) if !(r > 0.0)) {
            return bad("escape_radius must be positive".into());
        }
        if self.trajectory_stride == 0 {
            return bad("trajectory_stride must be at least 1".into());
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingStats {
    pub n_paths: usize,
    pub n_coupled: usize,
    pub p_couple: f64,
    /// 95% normal-approximation halfwidth.
    pub ci_halfwidth: f64,
    /// 25/50/90% quantiles of the coupling time over coupled paths.
    pub coupling_time_quantiles: Option<[f64; 3]>,
    pub n_escaped: usize,
    pub escape_radius: f64,
    pub escaped_count_as_coupled: bool,
    pub dt: f64,
    pub t_max: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PathOutcome {
    Coupled { time: f64 },
    Survived { distance: f64 },
    Escaped { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub distance: f64,
}

/// `σ(x)` with a cache for constant diffusion.
struct Sigma {
    constant: Option<SymMatrix>,
    mu: f64,
}

impl Sigma {
    fn new(field: &CoefficientField, mu: f64) -> Result<Self> {
        let constant = field.constant_diffusion().map(|q| shifted_sqrt(q, mu)).transpose()?;
        Ok(Self { constant, mu })
    }

    fn at(&self, field: &CoefficientField, x: &[f64]) -> Result<SymMatrix> {
        match &self.constant {
            Some(s) => Ok(s.clone()),
            None => shifted_sqrt(&field.eval_diffusion(x)?, self.mu),
        }
    }
}

fn check_mu(bounds: &EllipticityBounds, mu: f64) -> Result<()> {
    if mu > 0.0 && mu < bounds.lambda0 {
        Ok(())
    } else {
        Err(Error::Config(format!("mu = {mu} must lie in (0, lambda0 = {})", bounds.lambda0)))
    }
}

/// One coupled Euler–Maruyama step driven by `noise = (ΔB, ΔW)`.
pub fn coupled_step(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    x: &[f64],
    y: &[f64],
    mu: f64,
    dt: f64,
    noise: (&[f64], &[f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_mu(bounds, mu)?;
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let r = norm(&z);
    if !(r > 0.0) {
        return Err(Error::Config("coupled_step needs x != y".into()));
    }
    let e: Vec<f64> = z.iter().map(|c| c / r).collect();
    let (db, dw) = noise;
    let sqrt_mu = mu.sqrt();
    let bx = field.eval_drift(x)?;
    let by = field.eval_drift(y)?;
    let sx = shifted_sqrt(&field.eval_diffusion(x)?, mu)?.mul_vec(db);
    let sy = shifted_sqrt(&field.eval_diffusion(y)?, mu)?.mul_vec(db);
    let rdw = reflect(&e, dw);
    let xn = (0..x.len()).map(|i| x[i] + bx[i] * dt + sx[i] + sqrt_mu * dw[i]).collect();
    let yn = (0..y.len()).map(|i| y[i] + by[i] * dt + sy[i] + sqrt_mu * rdw[i]).collect();
    Ok((xn, yn))
}

struct Runner<'a> {
    field: &'a CoefficientField,
    cfg: &'a CouplingConfig,
    sigma: Sigma,
    escape_radius: f64,
    runaway: f64,
}

impl Runner<'_> {
    fn runaway(&self, b: &[f64], x: &[f64]) -> bool {
        norm(b) > self.runaway * (1.0 + norm(x))
    }

    fn run_path(
        &self,
        x0: &[f64],
        y0: &[f64],
        path: usize,
        mut record: Option<&mut Vec<TrajectoryRow>>,
    ) -> Result<PathOutcome> {
        let d = x0.len();
        let cfg = self.cfg;
        let mut rng = rng::stream(cfg.seed, Stream::Coupling, path as u64);
        let sqrt_dt = cfg.dt.sqrt();
        let sqrt_mu = cfg.mu.sqrt();
        let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
        let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
        let (mut db, mut dw) = (vec![0.0; d], vec![0.0; d]);
        let (mut sbx, mut sby) = (vec![0.0; d], vec![0.0; d]);
        let mut e = vec![0.0; d];

        let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let push = |rec: &mut Option<&mut Vec<TrajectoryRow>>, t: f64, x: &[f64], y: &[f64]| {
            if let Some(r) = rec.as_deref_mut() {
                r.push(TrajectoryRow {
                    t,
                    x: x.to_vec(),
                    y: y.to_vec(),
                    distance: dist(x, y),
                });
            }
        };
        push(&mut record, 0.0, &x, &y);
        let r0 = dist(&x, &y);
        if r0 <= cfg.couple_radius {
            return Ok(PathOutcome::Coupled { time: 0.0 });
        }
        let n_steps = cfg.n_steps();
        let mut r = r0;
        for k in 0..n_steps {
            let t = (k + 1) as f64 * cfg.dt;
            for i in 0..d {
                e[i] = (x[i] - y[i]) / r;
            }
            for v in db.iter_mut().chain(dw.iter_mut()) {
                *v = sqrt_dt * rng::standard_normal(&mut rng);
            }
            self.field.drift_into(&x, &mut bx);
            self.field.drift_into(&y, &mut by);
            if self.runaway(&bx, &x) || self.runaway(&by, &y) {
                push(&mut record, t - cfg.dt, &x, &y);
                return Ok(PathOutcome::Escaped { time: t - cfg.dt });
            }
            match &self.sigma.constant {
                Some(s) => {
                    s.mul_vec_into(&db, &mut sbx);
                    sby.copy_from_slice(&sbx);
                }
                None => {
                    self.sigma.at(self.field, &x)?.mul_vec_into(&db, &mut sbx);
                    self.sigma.at(self.field, &y)?.mul_vec_into(&db, &mut sby);
                }
            }
            let proj = 2.0 * dot(&e, &dw);
            let mut along = 0.0;
            let mut r2 = 0.0;
            for i in 0..d {
                x[i] += bx[i] * cfg.dt + sbx[i] + sqrt_mu * dw[i];
                y[i] += by[i] * cfg.dt + sby[i] + sqrt_mu * (dw[i] - proj * e[i]);
                let zi = x[i] - y[i];
                along += zi * e[i];
                r2 += zi * zi;
            }
            if !x.iter().chain(&y).all(|v| v.is_finite()) {
                return Err(Error::SimulationBlowUp { path, time: t });
            }
            r = r2.sqrt();
            // a sign change along e is a crossing: clamp it to coupling
            if r <= cfg.couple_radius || along <= 0.0 {
                push(&mut record, t, &x, &y);
                return Ok(PathOutcome::Coupled { time: t });
            }
            if norm(&x) > self.escape_radius || norm(&y) > self.escape_radius {
                push(&mut record, t, &x, &y);
                return Ok(PathOutcome::Escaped { time: t });
            }
            if (k + 1).is_multiple_of(cfg.trajectory_stride) {
                push(&mut record, t, &x, &y);
            }
        }
        if !n_steps.is_multiple_of(cfg.trajectory_stride) {
            push(&mut record, n_steps as f64 * cfg.dt, &x, &y);
        }
        Ok(PathOutcome::Survived { distance: r })
    }
}

fn runner<'a>(
    field: &'a CoefficientField,
    bounds: &EllipticityBounds,
    cfg: &'a CouplingConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<Runner<'a>> {
    cfg.validate(bounds)?;
    if x0.len() != field.dim() || y0.len() != field.dim() {
        return Err(Error::Config(format!("start points must have dimension {}", field.dim())));
    }
    if x0 == y0 {
        return Err(Error::Config("x0 and y0 must differ".into()));
    }
    Ok(Runner {
        field,
        cfg,
        sigma: Sigma::new(field, cfg.mu)?,
        escape_radius: cfg
            .escape_radius
            .unwrap_or(1e3 * (1.0 + norm(x0) + norm(y0))),
        runaway: RUNAWAY_FACTOR * field.growth_bound(),
    })
}

/// Outcome of every path, in path order.
pub fn simulate_paths(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    cfg: &CouplingConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<Vec<PathOutcome>> {
    let run = runner(field, bounds, cfg, x0, y0)?;
    let outcomes: Vec<Result<PathOutcome>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| run.run_path(x0, y0, p, None))
        .collect();
    outcomes.into_iter().collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(cfg: &CouplingConfig, escape_radius: f64, outcomes: &[PathOutcome]) -> CouplingStats {
    let mut times: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            PathOutcome::Coupled { time } => Some(*time),
            _ => None,
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n_escaped = outcomes.iter().filter(|o| matches!(o, PathOutcome::Escaped { .. })).count();
    let n = outcomes.len();
    let n_coupled = times.len() + if cfg.escaped_count_as_coupled { n_escaped } else { 0 };
    let p = n_coupled as f64 / n as f64;
    CouplingStats {
        n_paths: n,
        n_coupled,
        p_couple: p,
        ci_halfwidth: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
        coupling_time_quantiles: (!times.is_empty())
            .then(|| [quantile(&times, 0.25), quantile(&times, 0.5), quantile(&times, 0.9)]),
        n_escaped,
        escape_radius,
        escaped_count_as_coupled: cfg.escaped_count_as_coupled,
        dt: cfg.dt,
        t_max: cfg.t_max,
        mu: cfg.mu,
    }
}

pub fn simulate_coupling(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    cfg: &CouplingConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<CouplingStats> {
    let outcomes = simulate_paths(field, bounds, cfg, x0, y0)?;
    let escape_radius = cfg.escape_radius.unwrap_or(1e3 * (1.0 + norm(x0) + norm(y0)));
    Ok(summarize(cfg, escape_radius, &outcomes))
}

/// `|X − Y|` at `t_max` per path, 0 for coupled paths. Escaped paths are an
/// error since their distance is not observed.
pub fn coupling_distances_at(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    cfg: &CouplingConfig,
    x0: &[f64],
    y0: &[f64],
) -> Result<Vec<f64>> {
    simulate_paths(field, bounds, cfg, x0, y0)?
        .into_iter()
        .enumerate()
        .map(|(i, o)| match o {
            PathOutcome::Coupled { .. } => Ok(0.0),
            PathOutcome::Survived { distance } => Ok(distance),
            PathOutcome::Escaped { time } => Err(Error::NotApplicable(format!(
                "path {i} escaped at t = {time}"
            ))),
        })
        .collect()
}

/// Rows of one path at `cfg.trajectory_stride`, with the same noise as path
/// `path` of [`simulate_coupling`].
pub fn trajectory(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    cfg: &CouplingConfig,
    x0: &[f64],
    y0: &[f64],
    path: usize,
) -> Result<Vec<TrajectoryRow>> {
    let run = runner(field, bounds, cfg, x0, y0)?;
    let mut rows = Vec::new();
    run.run_path(x0, y0, path, Some(&mut rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleConfig {
    pub mu: f64,
    pub t: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Sample mean and standard error of `u(t, X_t)` for `X_0 = x0`, with the
/// same `σ ΔB + √μ ΔW` noise split. The last step is shortened to land on `t`.
pub fn martingale_check(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    u: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    x0: &[f64],
    cfg: &MartingaleConfig,
) -> Result<MartingaleEstimate> {
    check_mu(bounds, cfg.mu)?;
    if !(cfg.t > 0.0) || !(cfg.dt > 0.0) || cfg.n_paths < 2 {
        return Err(Error::Config("martingale check needs t > 0, dt > 0 and at least 2 paths".into()));
    }
    let n_steps = (cfg.t / cfg.dt - 1e-9).ceil() as usize;
    if n_steps > MAX_STEPS {
        return Err(Error::Config(format!("t/dt exceeds the step cap {MAX_STEPS}")));
    }
    let sigma = Sigma::new(field, cfg.mu)?;
    let d = field.dim();
    let sqrt_mu = cfg.mu.sqrt();
    let values: Vec<Result<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(cfg.seed, Stream::Martingale, p as u64);
            let mut x = x0.to_vec();
            let mut b = vec![0.0; d];
            let mut db = vec![0.0; d];
            let mut dw = vec![0.0; d];
            let mut sb = vec![0.0; d];
            let mut t = 0.0;
            for k in 0..n_steps {
                let h = if k + 1 == n_steps { cfg.t - t } else { cfg.dt };
                let sh = h.sqrt();
                for v in db.iter_mut().chain(dw.iter_mut()) {
                    *v = sh * rng::standard_normal(&mut rng);
                }
                field.drift_into(&x, &mut b);
                sigma.at(field, &x)?.mul_vec_into(&db, &mut sb);
                for i in 0..d {
                    x[i] += b[i] * h + sb[i] + sqrt_mu * dw[i];
                }
                t = if k + 1 == n_steps { cfg.t } else { t + h };
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::SimulationBlowUp { path: p, time: t });
                }
            }
            Ok(u(cfg.t, &x))
        })
        .collect();
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = crate::quadrature::neumaier_sum(values.iter().copied()) / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(MartingaleEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_paths: values.len(),
    })
}

/// Max over `grid` of `|∂_t u + Lu|` by second-order central differences
/// with step `h`. Steps are rounded so that `x ± h` is exact.
#[allow(clippy::needless_range_loop)]
pub fn space_time_residual(
    field: &CoefficientField,
    u: &dyn Fn(f64, &[f64]) -> f64,
    grid: &[(f64, Vec<f64>)],
    h: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (t, x) in grid {
        let d = x.len();
        let b = field.eval_drift(x)?;
        let q = field.eval_diffusion(x)?;
        let step: Vec<f64> = x.iter().map(|c| (c + h) - c).collect();
        let at = |shifts: &[(usize, f64)]| {
            let mut p = x.clone();
            for &(i, s) in shifts {
                p[i] += s * step[i];
            }
            u(*t, &p)
        };
        let ht = (t + h) - t;
        let u0 = u(*t, x);
        let mut lu = (u(t + ht, x) - u(t - ht, x)) / (2.0 * ht);
        for i in 0..d {
            let hi = step[i];
            let up = at(&[(i, 1.0)]);
            let um = at(&[(i, -1.0)]);
            lu += b[i] * (up - um) / (2.0 * hi);
            lu += 0.5 * q.get(i, i) * (up - 2.0 * u0 + um) / (hi * hi);
            for j in (i + 1)..d {
                let dij = (at(&[(i, 1.0), (j, 1.0)]) - at(&[(i, 1.0), (j, -1.0)]) - at(&[(i, -1.0), (j, 1.0)])
                    + at(&[(i, -1.0), (j, -1.0)]))
                    / (4.0 * hi * step[j]);
                // q symmetric: the (i, j) and (j, i) terms together
                lu += q.get(i, j) * dij;
            }
        }
        worst = worst.max(lu.abs());
    }
    Ok(worst)
}
