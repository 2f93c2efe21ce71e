use serde::Serialize;

use super::modulus::{log_grid, ModulusProfile};
use super::CriterionConstants;
use crate::error::{Error, Result};

/// The radial rate `g(s) = ω(s)/s` on `(0, s₀]` and `s₂/s` beyond.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialRate {
    profile: ModulusProfile,
    s0: f64,
    s2: f64,
}

/// Relative tolerance on `profile.lambda == 1/(4(λ₀ − μ))`.
const LAMBDA_MATCH_TOL: f64 = 1e-12;

pub fn build_g(profile: &ModulusProfile, constants: &CriterionConstants) -> Result<RadialRate> {
    let expected = constants.lambda;
    if (profile.lambda - expected).abs() > LAMBDA_MATCH_TOL * expected.abs().max(1.0) {
        return Err(Error::ConstantMismatch {
            profile: profile.lambda,
            expected,
        });
    }
    if (profile.s0() - constants.s0).abs() > 1e-12 * constants.s0 {
        return Err(Error::Config(format!(
            "modulus grid ends at {} but s0 = {}",
            profile.s0(),
            constants.s0
        )));
    }
    Ok(RadialRate {
        profile: profile.clone(),
        s0: constants.s0,
        s2: constants.s2,
    })
}

impl RadialRate {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= self.s0 {
            if s <= 0.0 {
                return 0.0;
            }
            self.profile.omega(s) / s
        } else {
            self.s2 / s
        }
    }

    /// `∫₀^r g(s) ds`.
    pub fn integral(&self, r: f64) -> f64 {
        if r <= self.s0 {
            self.profile.cumulative_mass(r)
        } else {
            self.profile.cumulative_mass(self.s0) + self.s2 * (r / self.s0).ln()
        }
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeIntegral {
    pub divergent: bool,
    /// `s₂/(4μ)`: beyond `s₀` the integrand is `C r^(−s₂/(4μ))`.
    pub tail_exponent: f64,
    /// `log C = −(c − s₂ log s₀)/(4μ)` with `c = ∫₀^{s₀} g`.
    pub log_prefactor: f64,
    pub r_max: f64,
    /// Trapezoid estimate of `∫₀^{r_max} exp(−(1/4μ)∫₀^r g) dr`.
    pub partial_integral: f64,
    pub log_partial_integral: f64,
}

const POINTS_PER_DECADE: f64 = 200.0;

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Decides divergence of `∫₀^∞ exp(−(1/4μ)∫₀^r g(s) ds) dr` from the tail
/// exponent (divergent iff `s₂/(4μ) ≤ 1`) and reports a numeric partial
/// integral up to `r_max`.
pub fn escape_integral_divergent(
    g: &RadialRate,
    constants: &CriterionConstants,
    r_max: f64,
) -> Result<EscapeIntegral> {
    if !(r_max > g.s0) {
        return Err(Error::Config(format!("r_max = {r_max} must exceed s0 = {}", g.s0)));
    }
    let four_mu = 4.0 * constants.mu;
    let tail_exponent = g.s2 / four_mu;
    let c = g.integral(g.s0);
    let log_prefactor = -(c - g.s2 * g.s0.ln()) / four_mu;

    let lo = g.profile.s_min().min(g.s0 * 1e-6);
    let n_head = ((g.s0 / lo).log10() * POINTS_PER_DECADE).ceil().max(2.0) as usize;
    let n_tail = ((r_max / g.s0).log10() * POINTS_PER_DECADE).ceil().max(2.0) as usize;
    let mut grid = vec![0.0];
    grid.extend(log_grid(lo, g.s0, n_head));
    grid.extend(log_grid(g.s0, r_max, n_tail).into_iter().skip(1));

    let log_integrand = |r: f64| -g.integral(r) / four_mu;
    let mut log_total = f64::NEG_INFINITY;
    let mut prev = (grid[0], log_integrand(grid[0]));
    for &r in &grid[1..] {
        let cur = (r, log_integrand(r));
        let segment = (0.5 * (cur.0 - prev.0)).ln() + log_add_exp(prev.1, cur.1);
        log_total = log_add_exp(log_total, segment);
        prev = cur;
    }
    Ok(EscapeIntegral {
        divergent: tail_exponent <= 1.0,
        tail_exponent,
        log_prefactor,
        r_max,
        partial_integral: log_total.exp(),
        log_partial_integral: log_total,
    })
}
