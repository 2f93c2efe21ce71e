//! Small dense symmetric matrices: cyclic Jacobi eigendecomposition, the
//! shifted square root `sigma` with `sigma^2 + mu I = q`, Hilbert-Schmidt
//! norms, and the two sigma-difference bounds used by the coupling.

use serde::Serialize;

use crate::coefficients::{CoefficientField, EllipticityBounds};
use crate::error::{Error, Result};

/// Symmetry tolerance on `max |a_ij - a_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Sweep limit for the cyclic Jacobi method.
pub const MAX_JACOBI_SWEEPS: usize = 64;

/// Largest supported dimension.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries; rejects matrices that are not symmetric
    /// to [`SYMMETRY_TOL`].
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!("matrix dimension {dim} outside 1..={MAX_DIM}")));
        }
        if entries.len() != dim * dim {
            return Err(Error::Config(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let m = Self { dim, entries };
        let asym = m.max_asymmetry();
        if asym > SYMMETRY_TOL || asym.is_nan() {
            return Err(Error::Config(format!("matrix not symmetric (asymmetry {asym:e})")));
        }
        Ok(m)
    }

    pub(crate) fn from_row_major_unchecked(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = c;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.entries[i * values.len() + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i + 1..d {
                let a = (self.entries[i * d + j] - self.entries[j * d + i]).abs();
                if a.is_nan() {
                    return f64::NAN;
                }
                worst = worst.max(a);
            }
        }
        worst
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        SymMatrix::from_row_major_unchecked(self.dim, entries)
    }

    pub fn add_identity(&self, c: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.entries[i * self.dim + i] += c;
        }
        m
    }

    /// `A * A`, symmetric for symmetric `A`.
    pub fn square(&self) -> SymMatrix {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| self.entries[i * d + k] * self.entries[k * d + j]).sum();
            }
        }
        SymMatrix::from_row_major_unchecked(d, out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub(crate) fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.entries[i * d..(i + 1) * d];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn quadratic_form(&self, h: &[f64]) -> f64 {
        self.mul_vec(h).iter().zip(h).map(|(a, b)| a * b).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// stored as the columns of a row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<f64>,
    pub sweeps: usize,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V f(Λ) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim();
        let v = &self.eigenvectors;
        let lam: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let s: f64 = (0..d).map(|k| v[i * d + k] * lam[k] * v[j * d + k]).sum();
                out[i * d + j] = s;
                out[j * d + i] = s;
            }
        }
        SymMatrix::from_row_major_unchecked(d, out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    /// `‖VᵀV − I‖_HS`.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim();
        let v = &self.eigenvectors;
        let mut acc = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..d).map(|k| v[k * d + a] * v[k * d + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                acc += (dot - want).powi(2);
            }
        }
        acc.sqrt()
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eig(a: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = a.dim;
    let mut m = a.entries.clone();
    let mut v = SymMatrix::identity(n).entries;
    let scale = hs_norm(a);

    let mut sweeps = 0;
    loop {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q] * m[p * n + q])
            .sum();
        if off.sqrt() <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::EigenFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[i * n + i]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[k * n + col] = v[k * n + src];
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

/// The symmetric PSD `sigma` with `sigma^2 = q - mu I`.
///
/// Requires every eigenvalue of `q` to be strictly above `mu`; otherwise the
/// shift is outside the admissible range `mu < lambda0`.
pub fn shifted_sqrt(q: &SymMatrix, mu: f64) -> Result<SymMatrix> {
    let eig = sym_eig(q)?;
    let min = eig.eigenvalues[0];
    if min <= mu {
        return Err(Error::ShiftTooLarge {
            mu,
            min_eigenvalue: min,
        });
    }
    Ok(eig.reconstruct_with(|l| (l - mu).sqrt()))
}

pub fn hs_norm(a: &SymMatrix) -> f64 {
    a.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn hs_norm_sq(a: &SymMatrix) -> f64 {
    a.entries.iter().map(|v| v * v).sum()
}

/// Absolute slack allowed on both sigma-difference inequalities.
pub const SIGMA_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaPairCheck {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `‖σ(x) − σ(y)‖²`.
    pub sigma_diff_sq: f64,
    /// `‖q(x) − q(y)‖² / (4(λ₀ − μ))`.
    pub lipschitz_rhs: f64,
    /// `d(Λ₀ − μ)`.
    pub trace_rhs: f64,
    pub lipschitz_slack: f64,
    pub trace_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaBoundReport {
    pub mu: f64,
    pub checks: Vec<SigmaPairCheck>,
    /// Indices into `checks` where either inequality fails by more than
    /// [`SIGMA_BOUND_TOL`].
    pub violations: Vec<usize>,
    /// Points where `q` had an eigenvalue at or below `mu`.
    pub shift_failures: Vec<Vec<f64>>,
    pub note: Option<String>,
}

/// Evaluates `‖σ(x)−σ(y)‖² ≤ ‖q(x)−q(y)‖²/(4(λ₀−μ))` and
/// `‖σ(x)−σ(y)‖² ≤ d(Λ₀−μ)` on every pair. Failures are reported, not raised.
pub fn check_sigma_bounds(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    mu: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<SigmaBoundReport> {
    if !(mu > 0.0 && mu < bounds.lambda0) {
        return Err(Error::ShiftTooLarge {
            mu,
            min_eigenvalue: bounds.lambda0,
        });
    }
    let d = field.dim() as f64;
    let mut checks = Vec::with_capacity(pairs.len());
    let mut violations = Vec::new();
    let mut shift_failures = Vec::new();
    for (x, y) in pairs {
        let qx = field.eval_diffusion(x)?;
        let qy = field.eval_diffusion(y)?;
        let (sx, sy) = match (shifted_sqrt(&qx, mu), shifted_sqrt(&qy, mu)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::ShiftTooLarge { .. }), _) => {
                shift_failures.push(x.clone());
                continue;
            }
            (_, Err(Error::ShiftTooLarge { .. })) => {
                shift_failures.push(y.clone());
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let sigma_diff_sq = hs_norm_sq(&sx.sub(&sy));
        let lipschitz_rhs = hs_norm_sq(&qx.sub(&qy)) / (4.0 * (bounds.lambda0 - mu));
        let trace_rhs = d * (bounds.big_lambda0 - mu);
        let check = SigmaPairCheck {
            x: x.clone(),
            y: y.clone(),
            sigma_diff_sq,
            lipschitz_rhs,
            trace_rhs,
            lipschitz_slack: lipschitz_rhs - sigma_diff_sq,
            trace_slack: trace_rhs - sigma_diff_sq,
        };
        if check.lipschitz_slack < -SIGMA_BOUND_TOL || check.trace_slack < -SIGMA_BOUND_TOL {
            violations.push(checks.len());
        }
        checks.push(check);
    }
    let note = (!violations.is_empty() || !shift_failures.is_empty()).then(|| {
        format!(
            "sigma bounds failed on {} pair(s) and the shift failed at {} point(s); \
             lambda0 = {} was estimated on radius {} and the window probably needs to grow",
            violations.len(),
            shift_failures.len(),
            bounds.lambda0,
            bounds.domain_radius
        )
    });
    Ok(SigmaBoundReport {
        mu,
        checks,
        violations,
        shift_failures,
        note,
    })
}
