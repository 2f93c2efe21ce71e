//! Coefficient fields `b` and `q` of `L = ½ Σ q_ij D_ij + Σ b_i D_i`, the
//! built-in catalogue, and ellipticity estimation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::matrix::{sym_eig, SymMatrix, MAX_DIM, SYMMETRY_TOL};
use crate::rng::{self, Stream};

pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type DiffusionFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Window radius used when a field's growth bound is computed at construction.
pub const DEFAULT_WINDOW_RADIUS: f64 = 100.0;

/// The operator's data. Cheap to clone; evaluation is pure.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    label: String,
    drift: DriftFn,
    diffusion: DiffusionFn,
    constant_diffusion: Option<SymMatrix>,
    growth_bound: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("constant_diffusion", &self.constant_diffusion)
            .field("growth_bound", &self.growth_bound)
            .finish()
    }
}

impl CoefficientField {
    /// Field with a state-dependent diffusion. `diffusion` writes `q(x)` in
    /// row-major order.
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        let mut field = Self {
            dim,
            label: label.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            constant_diffusion: None,
            growth_bound: 1.0,
        };
        field.growth_bound = field.sample_growth_bound(DEFAULT_WINDOW_RADIUS);
        Ok(field)
    }

    /// Field with a constant diffusion matrix.
    pub fn with_constant_diffusion(
        dim: usize,
        label: impl Into<String>,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        q: SymMatrix,
    ) -> Result<Self> {
        check_dim(dim)?;
        if q.dim() != dim {
            return Err(Error::FieldParams(format!(
                "diffusion is {}x{}, field dimension is {dim}",
                q.dim(),
                q.dim()
            )));
        }
        let entries = q.entries().to_vec();
        let mut field = Self::new(dim, label, drift, move |_, out| out.copy_from_slice(&entries))?;
        field.constant_diffusion = Some(q);
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Linear-growth constant `max(1, sup |b(x)|/(1+|x|))` over the window;
    /// only the simulator's runaway guard uses it.
    pub fn growth_bound(&self) -> f64 {
        self.growth_bound
    }

    pub fn constant_diffusion(&self) -> Option<&SymMatrix> {
        self.constant_diffusion.as_ref()
    }

    /// Recomputes the growth bound over a window of the given radius.
    pub fn with_growth_window(mut self, radius: f64) -> Self {
        self.growth_bound = self.sample_growth_bound(radius);
        self
    }

    /// Returns `b(x)`.
    pub fn eval_drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let mut out = vec![0.0; self.dim];
        (self.drift)(x, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::CoefficientEvaluation {
                field: self.label.clone(),
                point: x.to_vec(),
            })
        }
    }

    /// Returns `q(x)`, checked for finiteness and symmetry.
    pub fn eval_diffusion(&self, x: &[f64]) -> Result<SymMatrix> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        if let Some(q) = &self.constant_diffusion {
            return Ok(q.clone());
        }
        let mut out = vec![0.0; self.dim * self.dim];
        (self.diffusion)(x, &mut out);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::CoefficientEvaluation {
                field: self.label.clone(),
                point: x.to_vec(),
            });
        }
        let m = SymMatrix::from_row_major_unchecked(self.dim, out);
        let asymmetry = m.max_asymmetry();
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::AsymmetricDiffusion {
                field: self.label.clone(),
                point: x.to_vec(),
                asymmetry,
            });
        }
        Ok(m)
    }

    /// Unchecked drift evaluation for hot loops.
    #[inline]
    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// Heuristic flag for fields that are continuous but not locally
    /// Lipschitz near sampled points: difference quotients that keep growing
    /// as the step shrinks.
    pub fn lipschitz_suspect(&self, radius: f64) -> bool {
        let d = self.dim;
        let mut points = rng::ball_grid(d, radius, 125);
        let mut r = rng::stream(0, Stream::GrowthBound, 1);
        points.extend((0..64).map(|_| rng::point_in_ball(&mut r, d, radius)));
        let quotient = |x: &[f64], h: f64, i: usize| -> f64 {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            (self.drift)(x, &mut a);
            (self.drift)(&xp, &mut b);
            let mut diff = rng::norm(&a.iter().zip(&b).map(|(u, v)| u - v).collect::<Vec<_>>());
            if self.constant_diffusion.is_none() {
                let mut qa = vec![0.0; d * d];
                let mut qb = vec![0.0; d * d];
                (self.diffusion)(x, &mut qa);
                (self.diffusion)(&xp, &mut qb);
                diff += rng::norm(&qa.iter().zip(&qb).map(|(u, v)| u - v).collect::<Vec<_>>());
            }
            diff / h
        };
        points.iter().any(|x| {
            (0..d).any(|i| {
                let coarse = quotient(x, 1e-4, i);
                let fine = quotient(x, 1e-7, i);
                fine.is_finite() && fine > 10.0 * coarse + 1.0
            })
        })
    }

    fn sample_growth_bound(&self, radius: f64) -> f64 {
        let d = self.dim;
        let mut points = rng::ball_grid(d, radius, 1024);
        let mut r = rng::stream(0, Stream::GrowthBound, 0);
        points.extend((0..1024).map(|_| rng::point_in_ball(&mut r, d, radius)));
        let mut out = vec![0.0; d];
        let mut worst = 1.0f64;
        for x in &points {
            (self.drift)(x, &mut out);
            let g = rng::norm(&out) / (1.0 + rng::norm(x));
            if g.is_finite() {
                worst = worst.max(g);
            }
        }
        worst
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::FieldParams(format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

/// Drift of the logarithmic example, `x/(2+x²)·(δ + 2/log(2+x²))`, evaluated
/// without overflow for very large `|x|`.
pub fn log_example_drift(x: f64, delta: f64) -> f64 {
    let ax = x.abs();
    if ax > 1.0 {
        let inv = 1.0 / x;
        let ratio = 1.0 / (x + 2.0 * inv);
        let log_term = 2.0 * ax.ln() + (2.0 * inv * inv).ln_1p();
        ratio * (delta + 2.0 / log_term)
    } else {
        let s = 2.0 + x * x;
        x / s * (delta + 2.0 / s.ln())
    }
}

pub fn make_log_example(delta: f64) -> Result<CoefficientField> {
    if !delta.is_finite() {
        return Err(Error::FieldParams(format!("delta must be finite, got {delta}")));
    }
    CoefficientField::with_constant_diffusion(
        1,
        format!("log_example(delta={delta})"),
        move |x, out| out[0] = log_example_drift(x[0], delta),
        SymMatrix::identity(1),
    )
}

/// One catalogue entry as listed by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogueEntry {
    pub name: &'static str,
    pub params: &'static str,
    pub description: &'static str,
}

pub fn catalogue() -> Vec<CatalogueEntry> {
    vec![
        CatalogueEntry {
            name: "zero",
            params: "none",
            description: "b = 0, q = I (any dimension)",
        },
        CatalogueEntry {
            name: "ou",
            params: "[theta] (default 1)",
            description: "Ornstein-Uhlenbeck: b(x) = -theta x, q = I",
        },
        CatalogueEntry {
            name: "var_q_const_b",
            params: "[a] (default 0.5, a > -1)",
            description: "b = e1, q(x) = (1 + a sin^2|x|) I",
        },
        CatalogueEntry {
            name: "radial",
            params: "[c] (default 1)",
            description: "b(x) = c x / (1 + |x|^2), q = I",
        },
        CatalogueEntry {
            name: "const_q",
            params: "[q_11, ..., q_dd] (positive)",
            description: "b = 0, q = diag(params)",
        },
        CatalogueEntry {
            name: "log",
            params: "[delta]",
            description: "dimension 1: b(x) = x/(2+x^2) (delta + 2/log(2+x^2)), q = 1",
        },
    ]
}

fn param(params: &[f64], idx: usize, default: f64) -> f64 {
    params.get(idx).copied().unwrap_or(default)
}

pub fn make_standard_fields(name: &str, dim: usize, params: &[f64]) -> Result<CoefficientField> {
    check_dim(dim)?;
    let max_params = match name {
        "zero" => 0,
        "ou" | "var_q_const_b" | "radial" | "log" | "log_example" => 1,
        "const_q" => dim,
        _ => return Err(Error::Catalogue(name.to_string())),
    };
    if params.len() > max_params {
        return Err(Error::FieldParams(format!(
            "`{name}` takes at most {max_params} parameter(s), got {}",
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::FieldParams("parameters must be finite".into()));
    }
    let id = SymMatrix::identity(dim);
    match name {
        "zero" => CoefficientField::with_constant_diffusion(dim, "zero", |_, out| out.fill(0.0), id),
        "ou" => {
            let theta = param(params, 0, 1.0);
            CoefficientField::with_constant_diffusion(
                dim,
                format!("ou(theta={theta})"),
                move |x, out| {
                    for (o, v) in out.iter_mut().zip(x) {
                        *o = -theta * v;
                    }
                },
                id,
            )
        }
        "var_q_const_b" => {
            let a = param(params, 0, 0.5);
            if a <= -1.0 {
                return Err(Error::FieldParams(format!("var_q_const_b needs a > -1, got {a}")));
            }
            CoefficientField::new(
                dim,
                format!("var_q_const_b(a={a})"),
                |_, out| {
                    out.fill(0.0);
                    out[0] = 1.0;
                },
                move |x, out| {
                    let s = rng::norm(x).sin();
                    let c = 1.0 + a * s * s;
                    let d = x.len();
                    out.fill(0.0);
                    for i in 0..d {
                        out[i * d + i] = c;
                    }
                },
            )
        }
        "radial" => {
            let c = param(params, 0, 1.0);
            CoefficientField::with_constant_diffusion(
                dim,
                format!("radial(c={c})"),
                move |x, out| {
                    let f = c / (1.0 + x.iter().map(|v| v * v).sum::<f64>());
                    for (o, v) in out.iter_mut().zip(x) {
                        *o = f * v;
                    }
                },
                id,
            )
        }
        "const_q" => {
            if params.len() != dim || params.iter().any(|p| *p <= 0.0) {
                return Err(Error::FieldParams(format!(
                    "const_q needs {dim} positive diagonal entries"
                )));
            }
            CoefficientField::with_constant_diffusion(
                dim,
                format!("const_q({params:?})"),
                |_, out| out.fill(0.0),
                SymMatrix::diag(params),
            )
        }
        "log" | "log_example" => {
            if dim != 1 {
                return Err(Error::FieldParams("the log example is one-dimensional".into()));
            }
            let delta = params
                .first()
                .copied()
                .ok_or_else(|| Error::FieldParams("log needs [delta]".into()))?;
            make_log_example(delta)
        }
        _ => unreachable!(),
    }
}

/// Field built from expression text: `d` drift components, and either one
/// scalar diffusion expression (times the identity) or `d²` row-major entries.
pub fn field_from_expressions(dim: usize, drift: &[String], diffusion: &[String]) -> Result<CoefficientField> {
    check_dim(dim)?;
    if drift.len() != dim {
        return Err(Error::FieldParams(format!(
            "expected {dim} drift expressions, got {}",
            drift.len()
        )));
    }
    if diffusion.len() != 1 && diffusion.len() != dim * dim {
        return Err(Error::FieldParams(format!(
            "expected 1 or {} diffusion expressions, got {}",
            dim * dim,
            diffusion.len()
        )));
    }
    let b: Vec<Expr> = drift.iter().map(|s| Expr::parse(s, dim)).collect::<Result<_>>()?;
    let q: Vec<Expr> = diffusion.iter().map(|s| Expr::parse(s, dim)).collect::<Result<_>>()?;
    let label = format!("expr(b=[{}]; q=[{}])", drift.join(", "), diffusion.join(", "));

    let drift_fn = move |x: &[f64], out: &mut [f64]| {
        for (o, e) in out.iter_mut().zip(&b) {
            *o = e.eval(x);
        }
    };

    if q.iter().all(Expr::is_constant) {
        let origin = vec![0.0; dim];
        let entries = expand_diffusion(&q, dim, &origin);
        let m = SymMatrix::from_row_major(dim, entries)
            .map_err(|_| Error::FieldParams("constant diffusion matrix is not symmetric".into()))?;
        CoefficientField::with_constant_diffusion(dim, label, drift_fn, m)
    } else {
        CoefficientField::new(dim, label, drift_fn, move |x, out| {
            out.copy_from_slice(&expand_diffusion(&q, dim, x))
        })
    }
}

fn expand_diffusion(q: &[Expr], dim: usize, x: &[f64]) -> Vec<f64> {
    if q.len() == 1 {
        let c = q[0].eval(x);
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            out[i * dim + i] = c;
        }
        out
    } else {
        q.iter().map(|e| e.eval(x)).collect()
    }
}

/// How a run names its field: a catalogue member or expression text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Catalogue {
        name: String,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        params: Vec<f64>,
    },
    Expression {
        dim: usize,
        drift: Vec<String>,
        diffusion: Vec<String>,
    },
}

fn default_dim() -> usize {
    1
}

impl FieldSpec {
    pub fn build(&self) -> Result<CoefficientField> {
        match self {
            FieldSpec::Catalogue { name, dim, params } => make_standard_fields(name, *dim, params),
            FieldSpec::Expression { dim, drift, diffusion } => field_from_expressions(*dim, drift, diffusion),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldSpec::Catalogue { dim, .. } | FieldSpec::Expression { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub lambda0: f64,
    #[serde(rename = "Lambda0")]
    pub big_lambda0: f64,
    pub domain_radius: f64,
    pub n_samples: usize,
    pub n_grid: usize,
}

impl EllipticityBounds {
    /// Bounds known exactly rather than estimated (e.g. constant `q`).
    pub fn exact(lambda0: f64, big_lambda0: f64) -> Self {
        assert!(0.0 < lambda0 && lambda0 <= big_lambda0);
        Self {
            lambda0,
            big_lambda0,
            domain_radius: f64::INFINITY,
            n_samples: 0,
            n_grid: 0,
        }
    }
}

/// Maximum number of deterministic grid points added to the random samples.
const ELLIPTICITY_GRID_POINTS: usize = 4096;

/// Smallest and largest eigenvalue of `q` over seeded uniform samples of the
/// ball plus a regular grid. The first `n` random samples are the same for
/// every `n_samples ≥ n`, so more samples never narrow the bounds.
pub fn estimate_ellipticity(
    field: &CoefficientField,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<EllipticityBounds> {
    if !(radius > 0.0) || n_samples == 0 {
        return Err(Error::Config("ellipticity needs radius > 0 and n_samples >= 1".into()));
    }
    let d = field.dim();
    let check = |x: &[f64], lo: &mut f64, hi: &mut f64| -> Result<()> {
        let eig = sym_eig(&field.eval_diffusion(x)?)?;
        let min = eig.eigenvalues[0];
        if !(min > 0.0) {
            return Err(Error::EllipticityViolation {
                point: x.to_vec(),
                eigenvalue: min,
            });
        }
        *lo = lo.min(min);
        *hi = hi.max(eig.eigenvalues[d - 1]);
        Ok(())
    };

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    if field.constant_diffusion().is_some() {
        check(&vec![0.0; d], &mut lo, &mut hi)?;
        return Ok(EllipticityBounds {
            lambda0: lo,
            big_lambda0: hi,
            domain_radius: radius,
            n_samples,
            n_grid: 0,
        });
    }
    let grid = rng::ball_grid(d, radius, ELLIPTICITY_GRID_POINTS);
    for x in &grid {
        check(x, &mut lo, &mut hi)?;
    }
    let mut r = rng::stream(seed, Stream::Ellipticity, 0);
    for _ in 0..n_samples {
        let x = rng::point_in_ball(&mut r, d, radius);
        check(&x, &mut lo, &mut hi)?;
    }
    Ok(EllipticityBounds {
        lambda0: lo,
        big_lambda0: hi,
        domain_radius: radius,
        n_samples,
        n_grid: grid.len(),
    })
}
