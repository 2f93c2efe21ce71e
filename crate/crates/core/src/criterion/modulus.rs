use serde::Serialize;

use super::search::{maximize_at_distance, SearchOptions};
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::matrix::hs_norm_sq;
use crate::quadrature::neumaier_sum;
use crate::rng::{dot, Stream};

pub const DEFAULT_S_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiniStatus {
    Holds,
    /// The power fit near zero gave a non-positive exponent: ω does not vanish
    /// at the origin fast enough to certify integrability.
    Violation,
}

/// Estimate of `ω(s) = sup_{|x−y|≤s} {λ‖q(x)−q(y)‖² + 2⟨x−y, b(x)−b(y)⟩}` on a
/// grid in `[s_min, s₀]`, and of its Dini mass `∫₀^{s₀} ω(s)/s ds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusProfile {
    pub lambda: f64,
    pub radii: Vec<f64>,
    /// Running maximum of `raw_values`, floored at 0 (pairs with `x = y` are
    /// admissible in the sup).
    pub values: Vec<f64>,
    /// Per-radius estimates at `|x−y| = s` exactly.
    pub raw_values: Vec<f64>,
    /// Fit `ω(s) ≈ a s^p` on the three smallest radii; absent when `ω(s_min) = 0`.
    pub head_exponent: Option<f64>,
    pub head_coefficient: Option<f64>,
    /// `∫₀^{s_min} ω(s)/s ds` from the power fit.
    pub head_mass: f64,
    /// `∫_{s_min}^{s₀} ω(s)/s ds` by the trapezoid rule in `log s`.
    pub body_mass: f64,
    pub dini_mass: f64,
    pub dini: DiniStatus,
}

impl ModulusProfile {
    /// Builds a profile from per-radius sup estimates on an ascending grid.
    pub fn from_samples(lambda: f64, radii: Vec<f64>, raw_values: Vec<f64>) -> Result<Self> {
        if radii.len() < 3 || radii.len() != raw_values.len() {
            return Err(Error::Config("modulus needs at least 3 matching radii/values".into()));
        }
        if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("modulus radii must be positive and ascending".into()));
        }
        let mut running = 0.0f64;
        let values: Vec<f64> = raw_values
            .iter()
            .map(|&v| {
                running = running.max(v);
                running
            })
            .collect();

        let (head_exponent, head_coefficient, head_mass, dini) = if values[0] == 0.0 {
            (None, None, 0.0, DiniStatus::Holds)
        } else {
            let (p, a) = power_fit(&radii[..3], &values[..3]);
            if p > 0.0 {
                (Some(p), Some(a), a * radii[0].powf(p) / p, DiniStatus::Holds)
            } else {
                (Some(p), Some(a), f64::INFINITY, DiniStatus::Violation)
            }
        };
        let mut profile = Self {
            lambda,
            radii,
            values,
            raw_values,
            head_exponent,
            head_coefficient,
            head_mass,
            body_mass: 0.0,
            dini_mass: 0.0,
            dini,
        };
        profile.body_mass = profile.mass_between(0, profile.radii.len() - 1);
        profile.dini_mass = profile.head_mass + profile.body_mass;
        if !profile.dini_mass.is_finite() {
            profile.dini = DiniStatus::Violation;
        }
        Ok(profile)
    }

    pub fn s_min(&self) -> f64 {
        self.radii[0]
    }

    pub fn s0(&self) -> f64 {
        *self.radii.last().expect("nonempty")
    }

    /// Trapezoid mass of `ω(s)/s` between grid indices `i ≤ j`, i.e. the exact
    /// integral of the interpolant that is linear in `log s`.
    pub fn mass_between(&self, i: usize, j: usize) -> f64 {
        neumaier_sum((i..j).map(|k| {
            0.5 * (self.values[k] + self.values[k + 1]) * (self.radii[k + 1] / self.radii[k]).ln()
        }))
    }

    /// ω interpolated linearly in `log s`, with the power fit below `s_min`.
    pub fn omega(&self, s: f64) -> f64 {
        if s <= self.radii[0] {
            return match (self.head_coefficient, self.head_exponent) {
                (Some(a), Some(p)) if s > 0.0 => a * s.powf(p),
                (Some(_), Some(_)) => 0.0,
                _ => 0.0,
            };
        }
        let k = self.radii.partition_point(|&r| r < s);
        if k >= self.radii.len() {
            return *self.values.last().expect("nonempty");
        }
        let (r0, r1) = (self.radii[k - 1], self.radii[k]);
        let t = (s / r0).ln() / (r1 / r0).ln();
        self.values[k - 1] + t * (self.values[k] - self.values[k - 1])
    }

    /// `∫₀^s ω(r)/r dr` for `s ≤ s₀`, consistent with `omega`.
    pub fn cumulative_mass(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s <= self.radii[0] {
            return match (self.head_coefficient, self.head_exponent) {
                (Some(a), Some(p)) if p > 0.0 => a * s.powf(p) / p,
                (Some(_), Some(_)) => f64::INFINITY,
                _ => 0.0,
            };
        }
        let k = self.radii.partition_point(|&r| r < s).min(self.radii.len() - 1);
        let r0 = self.radii[k - 1];
        let w = self.omega(s);
        self.head_mass + self.mass_between(0, k - 1) + 0.5 * (self.values[k - 1] + w) * (s / r0).ln()
    }
}

/// Least-squares fit of `log v = log a + p log s`; returns `(p, a)`.
fn power_fit(s: &[f64], v: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = s.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = v.iter().map(|w| w.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let p = sxy / sxx;
    (p, (my - p * mx).exp())
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else if k == 0 {
                lo
            } else {
                (a + (b - a) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// The modulus objective `λ‖q(x)−q(y)‖² + 2⟨x−y, b(x)−b(y)⟩` at one pair.
pub fn modulus_objective(field: &CoefficientField, lambda: f64, x: &[f64], y: &[f64]) -> f64 {
    let (Ok(bx), Ok(by)) = (field.eval_drift(x), field.eval_drift(y)) else {
        return f64::NAN;
    };
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
    let drift_part = 2.0 * dot(&diff, &db);
    if field.constant_diffusion().is_some() || lambda == 0.0 {
        return drift_part;
    }
    match (field.eval_diffusion(x), field.eval_diffusion(y)) {
        (Ok(qx), Ok(qy)) => lambda * hs_norm_sq(&qx.sub(&qy)) + drift_part,
        _ => f64::NAN,
    }
}

/// Estimates ω on `grid_size` log-spaced radii in `[s_min, s₀]`.
pub fn modulus_with(
    field: &CoefficientField,
    lambda: f64,
    s0: f64,
    s_min: f64,
    grid_size: usize,
    opts: &SearchOptions,
) -> Result<ModulusProfile> {
    if !(lambda > 0.0) || !(s0 > 0.0) {
        return Err(Error::Config(format!("modulus needs lambda > 0 and s0 > 0 (got {lambda}, {s0})")));
    }
    if s0 <= s_min || grid_size < 3 {
        return Err(Error::Config(format!(
            "modulus needs s0 > s_min = {s_min} and grid_size >= 3"
        )));
    }
    let radii = log_grid(s_min, s0, grid_size);
    let objective = |x: &[f64], y: &[f64]| modulus_objective(field, lambda, x, y);
    let raw: Vec<f64> = radii
        .iter()
        .enumerate()
        .map(|(i, &s)| maximize_at_distance(&objective, field.dim(), s, opts, Stream::Modulus, i as u64).value)
        .collect();
    ModulusProfile::from_samples(lambda, radii, raw)
}

/// [`modulus_with`] using the default window and `s_min`.
pub fn modulus(
    field: &CoefficientField,
    lambda: f64,
    s0: f64,
    n_pairs: usize,
    grid_size: usize,
    seed: u64,
) -> Result<ModulusProfile> {
    let opts = SearchOptions {
        n_pairs,
        seed,
        ..SearchOptions::default()
    };
    modulus_with(field, lambda, s0, DEFAULT_S_MIN, grid_size, &opts)
}
