//! Exact harmonic functions in one dimension.
//!
//! For `L = (c/2) D² + b D` every harmonic function is `c₁ + c₂ u` with
//! `u(x) = ∫₀^x exp(−(2/c)∫₀^r b(v) dv) dr`. Profiles use `c₁ = 0, c₂ = 1`.

use std::cell::Cell;

use serde::Serialize;

use crate::coefficients::{make_log_example, CoefficientField};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, neumaier_sum, Tolerance};

pub const DEFAULT_X_MAX: f64 = 1e6;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const POINTS_PER_DECADE: usize = 256;
/// Innermost positive grid node.
pub const GRID_START: f64 = 1e-3;
/// `log u′` above this is treated as overflow.
const LOG_OVERFLOW: f64 = 700.0;
/// Fit window: the last `FIT_DECADES` decades of the grid, starting no
/// earlier than `e²` so that `log log x` is well spread.
const FIT_DECADES: f64 = 3.0;
const FIT_MIN_POINTS: usize = 8;
/// Power exponents within this distance of −1 fall back to the log exponent.
pub const POWER_BAND: f64 = 0.005;
/// Log exponents within this distance of −1 are undecided.
pub const LOG_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailClass {
    Bounded,
    Unbounded,
}

/// `log u′ ≈ a + p log|x| + q log log|x|` over the fit window, or the
/// overflow cutoff when the side was truncated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub class: TailClass,
    pub truncated_at: Option<f64>,
    pub from: f64,
    pub to: f64,
    pub n_points: usize,
    pub a: f64,
    pub p: f64,
    pub q: f64,
    /// `|u(x_end) − u(x_end/10)|`.
    pub last_decade_increment: f64,
    /// `last_decade_increment < tol·|u(x_end/10)|`; reported, not used.
    pub last_decade_small: bool,
    /// Extrapolated `∫_{x_end}^∞ |u′|` for bounded sides.
    pub tail_mass: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicProfile {
    pub label: String,
    /// `c` in `q ≡ c`; the drift is used as `b/c`.
    pub diffusion: f64,
    pub tol: f64,
    pub grid: Vec<f64>,
    pub u_values: Vec<f64>,
    pub du_values: Vec<f64>,
    pub bounded_right: bool,
    pub bounded_left: bool,
    pub right_tail: TailFit,
    pub left_tail: TailFit,
    /// `sup u`, `None` when infinite.
    pub sup_estimate: Option<f64>,
    /// `inf u`, `None` when infinite.
    pub inf_estimate: Option<f64>,
    pub liouville_holds: bool,
    /// `log u′` at the grid nodes.
    #[serde(skip)]
    log_du: Vec<f64>,
    #[serde(skip)]
    field: CoefficientField,
}

/// Drift divided by `c`, NaN on non-finite output so the quadrature fails.
struct ScaledDrift<'a> {
    field: &'a CoefficientField,
    inv_c: f64,
}

impl ScaledDrift<'_> {
    fn at(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.field.drift_into(&[x], &mut out);
        out[0] * self.inv_c
    }

    /// `∫_a^b b/c`.
    fn integral(&self, a: f64, b: f64, tol: f64) -> Result<f64> {
        integrate(|v| self.at(v), a, b, Tolerance::absolute(tol))
    }

    /// `∫_a^b exp(log_du_a − 2∫_a^r b/c) dr`.
    fn du_integral(&self, a: f64, b: f64, log_du_a: f64, tol: f64) -> Result<f64> {
        let failure = Cell::new(None);
        let inner_tol = 1e-3 * tol;
        let value = integrate(
            |r| match self.integral(a, r, inner_tol) {
                Ok(inner) => (log_du_a - 2.0 * inner).exp(),
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            },
            a,
            b,
            Tolerance::absolute(inner_tol),
        );
        match failure.into_inner() {
            Some(e) => Err(e),
            None => value,
        }
    }
}

fn unit_diffusion(field: &CoefficientField) -> Result<f64> {
    if field.dim() != 1 {
        return Err(Error::NotApplicable(format!(
            "harmonic oracle needs d = 1, field `{}` has d = {}",
            field.label(),
            field.dim()
        )));
    }
    match field.constant_diffusion() {
        Some(q) if q.get(0, 0) > 0.0 => Ok(q.get(0, 0)),
        _ => Err(Error::NotApplicable(format!(
            "harmonic oracle needs a constant positive diffusion, field `{}` has none",
            field.label()
        ))),
    }
}

struct Side {
    nodes: Vec<f64>,
    u: Vec<f64>,
    log_du: Vec<f64>,
    truncated_at: Option<f64>,
}

/// Integrates outward from 0 along `sign · radii`.
fn integrate_side(drift: &ScaledDrift, radii: &[f64], sign: f64, tol: f64) -> Result<Side> {
    let mut side = Side {
        nodes: vec![0.0],
        u: vec![0.0],
        log_du: vec![0.0],
        truncated_at: None,
    };
    let mut b_parts = vec![0.0];
    let mut u_parts = vec![0.0];
    for &r in radii {
        let a = *side.nodes.last().expect("nonempty");
        let x = sign * r;
        let log_du_a = *side.log_du.last().expect("nonempty");
        let b_step = drift.integral(a, x, 1e-3 * tol)?;
        b_parts.push(b_step);
        let log_du = -2.0 * neumaier_sum(b_parts.iter().copied());
        if !(log_du <= LOG_OVERFLOW) {
            side.truncated_at = Some(x);
            break;
        }
        u_parts.push(drift.du_integral(a, x, log_du_a, tol)?);
        let u = neumaier_sum(u_parts.iter().copied());
        if !u.is_finite() {
            side.truncated_at = Some(x);
            break;
        }
        side.nodes.push(x);
        side.u.push(u);
        side.log_du.push(log_du);
    }
    Ok(side)
}

fn fit_tail(side: &Side, tol: f64) -> TailFit {
    let n = side.nodes.len();
    let end = side.nodes[n - 1].abs();
    let decade_idx = side.nodes.iter().position(|x| x.abs() >= end / 10.0).unwrap_or(0);
    let last_decade_increment = (side.u[n - 1] - side.u[decade_idx]).abs();
    let last_decade_small = last_decade_increment < tol * side.u[decade_idx].abs();

    let lo = (end / 10f64.powf(FIT_DECADES)).max(std::f64::consts::E.powi(2));
    let (xs, ys): (Vec<f64>, Vec<f64>) = side
        .nodes
        .iter()
        .zip(&side.log_du)
        .filter(|(x, _)| x.abs() >= lo)
        .map(|(x, y)| (x.abs(), *y))
        .unzip();
    let (a, p, q) = if xs.len() >= FIT_MIN_POINTS {
        least_squares_tail(&xs, &ys)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    TailFit {
        // set by classify()
        class: TailClass::Unbounded,
        truncated_at: side.truncated_at,
        from: lo,
        to: end,
        n_points: xs.len(),
        a,
        p,
        q,
        last_decade_increment,
        last_decade_small,
        tail_mass: None,
    }
}

/// Least squares for `y = a + p log x + q log log x`.
fn least_squares_tail(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let l1: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let l2: Vec<f64> = l1.iter().map(|l| l.ln()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (m1, m2, my) = (mean(&l1), mean(&l2), mean(ys));
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        let (c1, c2, cy) = (l1[i] - m1, l2[i] - m2, ys[i] - my);
        s11 += c1 * c1;
        s12 += c1 * c2;
        s22 += c2 * c2;
        s1y += c1 * cy;
        s2y += c2 * cy;
    }
    let det = s11 * s22 - s12 * s12;
    let p = (s1y * s22 - s2y * s12) / det;
    let q = (s11 * s2y - s12 * s1y) / det;
    (my - p * m1 - q * m2, p, q)
}

fn classify(fit: &TailFit) -> Result<TailClass> {
    if fit.truncated_at.is_some() {
        return Ok(TailClass::Unbounded);
    }
    if !fit.p.is_finite() || !fit.q.is_finite() {
        return Err(Error::Config(format!(
            "tail fit on [{}, {}] has only {} points; increase x_max",
            fit.from, fit.to, fit.n_points
        )));
    }
    if fit.p < -1.0 - POWER_BAND {
        Ok(TailClass::Bounded)
    } else if fit.p > -1.0 + POWER_BAND {
        Ok(TailClass::Unbounded)
    } else if fit.q < -1.0 - LOG_BAND {
        Ok(TailClass::Bounded)
    } else if fit.q > -1.0 + LOG_BAND {
        Ok(TailClass::Unbounded)
    } else {
        Err(Error::BoundaryUndecided { exponent: fit.p })
    }
}

/// `∫_X^∞ exp(a) x^p (log x)^q dx` with `p` clamped to at most −1.
fn tail_mass(fit: &TailFit) -> Result<f64> {
    let p1 = fit.p.min(-1.0) + 1.0;
    let t0 = fit.to.ln();
    // t = log x = t0 / w, w ∈ (0, 1]
    let f = |w: f64| {
        let t = t0 / w;
        (fit.a + p1 * t + fit.q * t.ln()).exp() * t0 / (w * w)
    };
    integrate(f, 0.0, 1.0, Tolerance::absolute(1e-14))
}

/// `u` on a grid out to `±x_max` with both tails classified.
pub fn harmonic_1d(field: &CoefficientField, x_max: f64, tol: f64) -> Result<HarmonicProfile> {
    let c = unit_diffusion(field)?;
    if !(x_max > GRID_START) || !(tol > 0.0) {
        return Err(Error::Config(format!(
            "harmonic_1d needs x_max > {GRID_START} and tol > 0, got {x_max}, {tol}"
        )));
    }
    let drift = ScaledDrift { field, inv_c: 1.0 / c };
    let decades = (x_max / GRID_START).log10();
    let n = (decades * POINTS_PER_DECADE as f64).ceil() as usize + 1;
    let radii = crate::criterion::log_grid(GRID_START, x_max, n);

    let right = integrate_side(&drift, &radii, 1.0, tol)?;
    let left = integrate_side(&drift, &radii, -1.0, tol)?;

    let mut tails = Vec::with_capacity(2);
    let mut extremes = Vec::with_capacity(2);
    for side in [&right, &left] {
        let mut fit = fit_tail(side, tol);
        fit.class = classify(&fit)?;
        let end = *side.u.last().expect("nonempty");
        let extreme = if fit.class == TailClass::Bounded {
            let mass = tail_mass(&fit)?;
            fit.tail_mass = Some(mass);
            Some(end + end.signum() * mass)
        } else {
            None
        };
        tails.push(fit);
        extremes.push(extreme);
    }
    let left_tail = tails.pop().expect("two tails");
    let right_tail = tails.pop().expect("two tails");

    let mut grid: Vec<f64> = left.nodes.iter().rev().copied().collect();
    let mut u_values: Vec<f64> = left.u.iter().rev().copied().collect();
    let mut log_du: Vec<f64> = left.log_du.iter().rev().copied().collect();
    grid.extend(&right.nodes[1..]);
    u_values.extend(&right.u[1..]);
    log_du.extend(&right.log_du[1..]);
    let bounded_right = right_tail.class == TailClass::Bounded;
    let bounded_left = left_tail.class == TailClass::Bounded;

    Ok(HarmonicProfile {
        label: field.label().to_string(),
        diffusion: c,
        tol,
        du_values: log_du.iter().map(|l| l.exp()).collect(),
        log_du,
        grid,
        u_values,
        bounded_right,
        bounded_left,
        right_tail,
        left_tail,
        sup_estimate: extremes[0],
        inf_estimate: extremes[1],
        liouville_holds: !(bounded_right && bounded_left),
        field: field.clone(),
    })
}

/// True iff bounded harmonic functions of the logarithmic example are constant.
pub fn liouville_verdict_1d(delta: f64) -> Result<bool> {
    let field = make_log_example(delta)?;
    Ok(harmonic_1d(&field, DEFAULT_X_MAX, DEFAULT_TOL)?.liouville_holds)
}

impl HarmonicProfile {
    pub fn x_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.grid.last().expect("nonempty")
    }

    fn base_node(&self, x: f64) -> Result<usize> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return Err(Error::NotApplicable(format!(
                "x = {x} outside the profile range [{}, {}]",
                self.x_min(),
                self.x_max()
            )));
        }
        // nearest node on the side of 0, so integration runs outward
        let k = self.grid.partition_point(|g| *g <= x);
        let zero = self.grid.partition_point(|g| *g < 0.0);
        Ok(if x >= 0.0 { k - 1 } else { k.min(zero) })
    }

    fn drift(&self) -> ScaledDrift<'_> {
        ScaledDrift {
            field: &self.field,
            inv_c: 1.0 / self.diffusion,
        }
    }

    fn eval_from(&self, k: usize, x: f64) -> Result<f64> {
        let a = self.grid[k];
        Ok(self.u_values[k] + self.drift().du_integral(a, x, self.log_du[k], self.tol)?)
    }

    /// `u(x)` anywhere in the grid range; `±∞` give the sup and inf.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x.is_infinite() {
            let v = if x > 0.0 { self.sup_estimate } else { self.inf_estimate };
            return v.ok_or_else(|| Error::NotApplicable("u is unbounded on that side".into()));
        }
        let k = self.base_node(x)?;
        self.eval_from(k, x)
    }

    /// `u′(x)` anywhere in the grid range.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let k = self.base_node(x)?;
        let a = self.grid[k];
        let inner = self.drift().integral(a, x, 1e-3 * self.tol)?;
        Ok((self.log_du[k] - 2.0 * inner).exp())
    }

    /// `|(c/2) u″ + b u′|` at `x` from fourth-order stencils with step
    /// `h·max(1, |x|)`, all taken from one base node.
    pub fn residual(&self, x: f64, h: f64) -> Result<f64> {
        let step = h * x.abs().max(1.0);
        let lo = x - 2.0 * step;
        let hi = x + 2.0 * step;
        let k = if x >= 0.0 {
            self.base_node(lo.max(0.0).min(x))?
        } else {
            self.base_node(hi.min(0.0).max(x))?
        };
        self.base_node(lo)?;
        self.base_node(hi)?;
        let f = |t: f64| self.eval_from(k, t);
        let (m2, m1, z, p1, p2) = (f(lo)?, f(x - step)?, f(x)?, f(x + step)?, f(hi)?);
        let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step);
        let d2 = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * step * step);
        let b = self.drift().at(x) * self.diffusion;
        Ok((0.5 * self.diffusion * d2 + b * d1).abs())
    }

    /// `(x, u, u′)` at the grid nodes.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.grid
            .iter()
            .zip(&self.u_values)
            .zip(&self.du_values)
            .map(|((x, u), du)| (*x, *u, *du))
    }
}

/// `|u(x) − u(y)| / (sup u − inf u)`; `±∞` stand for the limits.
pub fn oscillation_bound(profile: &HarmonicProfile, x: f64, y: f64) -> Result<f64> {
    let (Some(sup), Some(inf)) = (profile.sup_estimate, profile.inf_estimate) else {
        return Err(Error::NotApplicable(format!(
            "oscillation bound needs a bounded profile; `{}` is unbounded",
            profile.label
        )));
    };
    let osc = sup - inf;
    Ok(((profile.eval(x)? - profile.eval(y)?).abs() / osc).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::make_standard_fields;

    /// `u′` of the logarithmic example, normalised to `u′(0) = 1`.
    fn closed_form_du(x: f64, delta: f64) -> f64 {
        let s = 2.0 + x * x;
        let ln2 = 2f64.ln();
        (s / 2.0).powf(-delta) * (ln2 / s.ln()).powi(2)
    }

    #[test]
    fn zero_drift_is_identity() {
        let f = make_standard_fields("zero", 1, &[]).unwrap();
        let p = harmonic_1d(&f, 1e4, 1e-10).unwrap();
        for (x, u, du) in p.rows() {
            assert!((u - x).abs() < 1e-9 * (1.0 + x.abs()), "{x}: {u}");
            assert!((du - 1.0).abs() < 1e-14);
        }
        assert!(!p.bounded_left && !p.bounded_right && p.liouville_holds);
        assert!((p.right_tail.p).abs() < 1e-9);
    }

    #[test]
    fn log_example_derivative_matches_closed_form() {
        for delta in [0.25, 0.75, 2.0] {
            let p = harmonic_1d(&make_log_example(delta).unwrap(), 1e6, 1e-10).unwrap();
            for x in [0.0, 1.0, 10.0, 100.0, -10.0] {
                let got = p.derivative(x).unwrap();
                let want = closed_form_du(x, delta);
                assert!((got - want).abs() < 1e-10 * want, "delta {delta}, x {x}: {got} vs {want}");
            }
            for (x, _, du) in p.rows().step_by(97) {
                let want = closed_form_du(x, delta);
                assert!((du - want).abs() < 1e-10 * want, "node {x}");
            }
        }
    }

    #[test]
    fn attracting_drift_overflows_to_unbounded() {
        let f = make_standard_fields("ou", 1, &[]).unwrap();
        let p = harmonic_1d(&f, 1e6, 1e-10).unwrap();
        assert!(p.right_tail.truncated_at.is_some() && p.left_tail.truncated_at.is_some());
        assert!(p.liouville_holds);
        // u′ = exp(x²)
        let x = 3.0;
        assert!((p.derivative(x).unwrap() - (x * x).exp()).abs() < 1e-12 * (x * x).exp());
    }

    #[test]
    fn tail_exponents_of_log_example() {
        for delta in [0.25, 0.5, 1.0] {
            let p = harmonic_1d(&make_log_example(delta).unwrap(), 1e6, 1e-10).unwrap();
            assert!((p.right_tail.p + 2.0 * delta).abs() < 1e-3, "{:?}", p.right_tail);
            assert!((p.right_tail.q + 2.0).abs() < 0.05, "{:?}", p.right_tail);
        }
    }

    #[test]
    fn constant_diffusion_is_rescaled() {
        // q ≡ 2, b = 2·log drift gives the same u as q ≡ 1, b = log drift
        let scaled = crate::coefficients::field_from_expressions(
            1,
            &["2*x/(2+x^2)*(0.75 + 2/log(2+x^2))".into()],
            &["2".into()],
        )
        .unwrap();
        let a = harmonic_1d(&scaled, 1e4, 1e-10).unwrap();
        let b = harmonic_1d(&make_log_example(0.75).unwrap(), 1e4, 1e-10).unwrap();
        for (ra, rb) in a.rows().zip(b.rows()).step_by(50) {
            assert!((ra.1 - rb.1).abs() < 1e-9 * (1.0 + rb.1.abs()));
        }
    }

    #[test]
    fn non_constant_or_multidimensional_fields_rejected() {
        let vq = make_standard_fields("var_q_const_b", 1, &[0.5]).unwrap();
        assert!(matches!(harmonic_1d(&vq, 10.0, 1e-8), Err(Error::NotApplicable(_))));
        let ou2 = make_standard_fields("ou", 2, &[]).unwrap();
        assert!(matches!(harmonic_1d(&ou2, 10.0, 1e-8), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn oscillation_bound_examples() {
        let p = harmonic_1d(&make_log_example(2.0).unwrap(), 1e6, 1e-10).unwrap();
        assert_eq!(oscillation_bound(&p, 3.0, 3.0).unwrap(), 0.0);
        let full = oscillation_bound(&p, f64::INFINITY, f64::NEG_INFINITY).unwrap();
        assert!((full - 1.0).abs() < 1e-15);

        let p = harmonic_1d(&make_log_example(0.75).unwrap(), 1e6, 1e-10).unwrap();
        let v = oscillation_bound(&p, 5.0, -5.0).unwrap();
        // direct quadrature of the closed form
        let tol = Tolerance::absolute(1e-13);
        let u5 = integrate(|r| closed_form_du(r, 0.75), 0.0, 5.0, tol).unwrap();
        // ∫₁^∞ via x = 1/w
        let head = integrate(|r| closed_form_du(r, 0.75), 0.0, 1.0, tol).unwrap();
        let tail = integrate(
            |w| {
                let v = closed_form_du(1.0 / w, 0.75);
                if v == 0.0 {
                    0.0
                } else {
                    v / (w * w)
                }
            },
            0.0,
            1.0,
            tol,
        )
        .unwrap();
        let total = head + tail;
        let want = u5 / total;
        assert!(v > 0.0 && v < 1.0);
        assert!((v - want).abs() < 1e-6, "{v} vs {want}");

        let ou = harmonic_1d(&make_standard_fields("zero", 1, &[]).unwrap(), 100.0, 1e-10).unwrap();
        assert!(matches!(oscillation_bound(&ou, 1.0, 2.0), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn eval_between_nodes_and_limits() {
        let p = harmonic_1d(&make_log_example(0.75).unwrap(), 1e6, 1e-10).unwrap();
        let tol = Tolerance::absolute(1e-13);
        for x in [0.3, 2.5, -7.0] {
            let want = integrate(|r| closed_form_du(r, 0.75), 0.0, x, tol).unwrap();
            assert!((p.eval(x).unwrap() - want).abs() < 1e-9, "{x}");
        }
        assert!(p.eval(2e6).is_err());
    }
}
