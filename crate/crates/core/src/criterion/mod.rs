//! The decision pipeline for the Liouville criterion: drift dispersion
//! `κ(s)`, its truncated limsup, the threshold `2λ₀ − (d/2)(Λ₀ − λ₀)`, the
//! constants `(μ, s₀, s₁, s₂)`, the Dini modulus, the radial rate `g` and the
//! escape-integral verdict.

mod escape;
mod modulus;
mod search;

pub use escape::{build_g, escape_integral_divergent, EscapeIntegral, RadialRate};
pub use modulus::{
    log_grid, modulus, modulus_objective, modulus_with, DiniStatus, ModulusProfile, DEFAULT_S_MIN,
};
pub use search::{PairMax, SearchOptions};

use serde::{Deserialize, Serialize};

use crate::coefficients::{estimate_ellipticity, CoefficientField, EllipticityBounds};
use crate::error::{Error, Result};
use crate::rng::{self, dot, Stream};
use search::maximize_at_distance;

/// `κ(s) = sup_{|x−y|=s} ⟨x−y, b(x)−b(y)⟩` estimated on a radius grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionCurve {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub method: String,
    pub n_pairs_per_radius: usize,
    pub window_radius: f64,
    /// Best pair found at each radius.
    pub argmax: Vec<PairMax>,
}

impl DispersionCurve {
    /// A curve from given values, for callers that already know `κ`.
    pub fn from_values(radii: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            method: "supplied".into(),
            n_pairs_per_radius: 0,
            window_radius: f64::INFINITY,
            argmax: Vec::new(),
            radii,
            values,
        }
    }
}

pub fn dispersion_objective(field: &CoefficientField, x: &[f64], y: &[f64]) -> f64 {
    match (field.eval_drift(x), field.eval_drift(y)) {
        (Ok(bx), Ok(by)) => {
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
            dot(&diff, &db)
        }
        _ => f64::NAN,
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("radii must be positive and strictly ascending".into()));
    }
    Ok(())
}

pub fn drift_dispersion_with(
    field: &CoefficientField,
    radii: &[f64],
    opts: &SearchOptions,
) -> Result<DispersionCurve> {
    check_radii(radii)?;
    if opts.n_pairs == 0 {
        return Err(Error::Config("n_pairs must be at least 1".into()));
    }
    let objective = |x: &[f64], y: &[f64]| dispersion_objective(field, x, y);
    let argmax: Vec<PairMax> = radii
        .iter()
        .enumerate()
        .map(|(i, &s)| maximize_at_distance(&objective, field.dim(), s, opts, Stream::Dispersion, i as u64))
        .collect();
    Ok(DispersionCurve {
        radii: radii.to_vec(),
        values: argmax.iter().map(|p| p.value).collect(),
        method: format!(
            "{} axis + {} random starts per radius (midpoints uniform in ball of radius {}, \
             directions uniform on the sphere), each refined by coordinate ascent with step halving; \
             values are lower bounds of the sup",
            field.dim(),
            opts.n_pairs,
            opts.window_radius
        ),
        n_pairs_per_radius: opts.n_pairs,
        window_radius: opts.window_radius,
        argmax,
    })
}

/// [`drift_dispersion_with`] on the default window.
pub fn drift_dispersion(
    field: &CoefficientField,
    radii: &[f64],
    n_pairs: usize,
    seed: u64,
) -> Result<DispersionCurve> {
    let opts = SearchOptions {
        n_pairs,
        seed,
        ..SearchOptions::default()
    };
    drift_dispersion_with(field, radii, &opts)
}

fn tail_start(n: usize, tail_fraction: f64) -> usize {
    let k = (tail_fraction * n as f64).ceil() as usize;
    n - k.clamp(1, n)
}

/// Max of `κ` over the largest `⌈tail_fraction·n⌉` radii: a window-limited
/// surrogate for the limsup.
pub fn asymptotic_dispersion(curve: &DispersionCurve, tail_fraction: f64) -> Result<f64> {
    if curve.radii.len() < 10 {
        return Err(Error::Config(format!(
            "asymptotic dispersion needs at least 10 radii, got {}",
            curve.radii.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Config(format!("tail_fraction {tail_fraction} outside (0, 1]")));
    }
    let start = tail_start(curve.values.len(), tail_fraction);
    Ok(curve.values[start..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `2λ₀ − (d/2)(Λ₀ − λ₀)`.
pub fn theorem_threshold(bounds: &EllipticityBounds, dim: usize) -> f64 {
    2.0 * bounds.lambda0 - 0.5 * dim as f64 * (bounds.big_lambda0 - bounds.lambda0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicReport {
    pub n_pairs: usize,
    /// Max of `(1/2λ₀)‖q(x) − q(x+h)‖² + 2⟨b(x+h) − b(x), h⟩` over the pairs.
    pub max_value: f64,
    /// `(x, h)` attaining the max when it is positive.
    pub violating_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub holds: bool,
}

/// The classic monotonicity condition, evaluated on `(x, h)` pairs.
pub fn classic_condition_check(
    field: &CoefficientField,
    bounds: &EllipticityBounds,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<ClassicReport> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    for (x, h) in pairs {
        let xh: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
        let bx = field.eval_drift(x)?;
        let bxh = field.eval_drift(&xh)?;
        let db: Vec<f64> = bxh.iter().zip(&bx).map(|(a, b)| a - b).collect();
        let mut v = 2.0 * dot(&db, h);
        if field.constant_diffusion().is_none() {
            let dq = field.eval_diffusion(x)?.sub(&field.eval_diffusion(&xh)?);
            v += crate::matrix::hs_norm_sq(&dq) / (2.0 * bounds.lambda0);
        }
        if v > best {
            best = v;
            arg = Some((x.clone(), h.clone()));
        }
    }
    let holds = best <= 0.0;
    Ok(ClassicReport {
        n_pairs: pairs.len(),
        max_value: best,
        violating_pair: if holds { None } else { arg },
        holds,
    })
}

/// Seeded `(x, h)` pairs: `x` uniform in the ball, `|h|` log-uniform in
/// `[1e-3, radius]`, plus `x = 0, h = 0.1 e₁`.
pub fn classic_pairs(dim: usize, radius: f64, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut e1 = vec![0.0; dim];
    e1[0] = 0.1;
    let mut pairs = vec![(vec![0.0; dim], e1)];
    let mut r = rng::stream(seed, Stream::ClassicCheck, 0);
    let (lo, hi) = (1e-3f64.ln(), radius.max(1e-2).ln());
    for _ in 0..n {
        let x = rng::point_in_ball(&mut r, dim, radius);
        let u: f64 = rand::Rng::random(&mut r);
        let len = (lo + (hi - lo) * u).exp();
        let h = rng::unit_vector(&mut r, dim).into_iter().map(|c| c * len).collect();
        pairs.push((x, h));
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionConstants {
    pub mu: f64,
    pub s0: f64,
    pub s1: f64,
    /// `2 s₁ + d(Λ₀ − μ)`.
    pub s2: f64,
    /// `1/(4(λ₀ − μ))`, the weight of the diffusion term in ω.
    pub lambda: f64,
    /// `4μ − s₂`.
    pub margin: f64,
}

impl CriterionConstants {
    /// Checks `0 < μ < λ₀`, `s₀ > 0`, `s₁ < 2μ − ½d(Λ₀ − μ)`, `s₂ < 4μ`.
    pub fn is_admissible(&self, bounds: &EllipticityBounds, dim: usize) -> bool {
        let d = dim as f64;
        self.mu > 0.0
            && self.mu < bounds.lambda0
            && self.s0 > 0.0
            && self.s1 < 2.0 * self.mu - 0.5 * d * (bounds.big_lambda0 - self.mu)
            && self.s2 < 4.0 * self.mu
    }
}

/// All admissible constants on the μ grid, best margin first; equal margins
/// prefer the smaller μ.
///
/// `s₁` is the tail max of `κ` (the same surrogate as
/// [`asymptotic_dispersion`]) and `s₀` the smallest radius from which `κ`
/// stays at or below `s₁`.
pub fn admissible_constants(
    bounds: &EllipticityBounds,
    dim: usize,
    curve: &DispersionCurve,
    mu_grid: usize,
    tail_fraction: f64,
) -> Result<Vec<CriterionConstants>> {
    if curve.values.is_empty() {
        return Err(Error::Config("empty dispersion curve".into()));
    }
    if mu_grid == 0 {
        return Err(Error::Config("mu_grid must be at least 1".into()));
    }
    let n = curve.values.len();
    let start = tail_start(n, tail_fraction.clamp(f64::MIN_POSITIVE, 1.0));
    let s1 = curve.values[start..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // smallest index i with κ(s_j) ≤ s1 for all j ≥ i
    let mut first = n;
    while first > 0 && curve.values[first - 1] <= s1 {
        first -= 1;
    }
    let s0 = curve.radii[first.min(n - 1)];
    let d = dim as f64;

    let mut out: Vec<CriterionConstants> = (1..=mu_grid)
        .map(|k| {
            let mu = bounds.lambda0 * k as f64 / (mu_grid + 1) as f64;
            let s2 = 2.0 * s1 + d * (bounds.big_lambda0 - mu);
            CriterionConstants {
                mu,
                s0,
                s1,
                s2,
                lambda: 1.0 / (4.0 * (bounds.lambda0 - mu)),
                margin: 4.0 * mu - s2,
            }
        })
        .collect();
    let best_margin = out.iter().map(|c| c.margin).fold(f64::NEG_INFINITY, f64::max);
    out.retain(|c| c.margin > 0.0 && c.is_admissible(bounds, dim));
    if out.is_empty() {
        return Err(Error::NoAdmissibleConstants { best_margin });
    }
    out.sort_by(|a, b| b.margin.total_cmp(&a.margin).then(a.mu.total_cmp(&b.mu)));
    Ok(out)
}

/// Best admissible `(μ, s₀, s₁, s₂)` by margin `4μ − s₂`.
pub fn choose_constants(
    bounds: &EllipticityBounds,
    dim: usize,
    curve: &DispersionCurve,
    mu_grid: usize,
    tail_fraction: f64,
) -> Result<CriterionConstants> {
    admissible_constants(bounds, dim, curve, mu_grid, tail_fraction).map(|v| v[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiiGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub log_spaced: bool,
}

impl RadiiGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max > self.min) || self.points < 2 {
            return Err(Error::Config(format!("bad radii grid {self:?}")));
        }
        Ok(if self.log_spaced {
            log_grid(self.min, self.max, self.points)
        } else {
            (0..self.points)
                .map(|k| self.min + (self.max - self.min) * k as f64 / (self.points - 1) as f64)
                .collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionConfig {
    pub window_radius: f64,
    pub radii: RadiiGrid,
    pub n_pairs: usize,
    pub ellipticity_samples: usize,
    pub tail_fraction: f64,
    pub mu_grid: usize,
    pub modulus_grid: usize,
    pub s_min: f64,
    /// Escape-integral diagnostic runs to `r_max = s₀ · escape_r_factor`.
    pub escape_r_factor: f64,
    pub classic_pairs: usize,
    /// Candidate μ values tried for the Dini check when `q` is not constant.
    pub max_mu_candidates: usize,
    /// Taken from the run seed when loaded from a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            window_radius: crate::coefficients::DEFAULT_WINDOW_RADIUS,
            radii: RadiiGrid {
                min: 1.0,
                max: 1e12,
                points: 64,
                log_spaced: true,
            },
            n_pairs: 48,
            ellipticity_samples: 4096,
            tail_fraction: 0.3,
            mu_grid: 99,
            modulus_grid: 64,
            s_min: DEFAULT_S_MIN,
            escape_r_factor: 1e3,
            classic_pairs: 2000,
            max_mu_candidates: 8,
            seed: 0,
        }
    }
}

impl CriterionConfig {
    fn search(&self) -> SearchOptions {
        SearchOptions {
            window_radius: self.window_radius,
            n_pairs: self.n_pairs,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    LiouvilleGuaranteed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub field: String,
    pub dim: usize,
    pub bounds: EllipticityBounds,
    pub dispersion: DispersionCurve,
    /// Window-limited limsup surrogate; see `tail_fraction`.
    pub kappa_inf: f64,
    pub tail_fraction: f64,
    pub threshold: f64,
    pub classic: ClassicReport,
    pub constants: Option<CriterionConstants>,
    pub modulus: Option<ModulusProfile>,
    pub escape: Option<EscapeIntegral>,
    pub escape_divergent: Option<bool>,
    pub verdict: Verdict,
    /// Name of the first stage that did not pass, when inconclusive.
    pub failed_stage: Option<String>,
    pub diagnostics: Vec<String>,
}

/// Runs ellipticity → dispersion → threshold → constants → modulus → g →
/// escape integral. Only ellipticity failures abort; later stages record
/// their failure and return an inconclusive report.
pub fn evaluate_liouville_criterion(
    field: &CoefficientField,
    config: &CriterionConfig,
) -> Result<CriterionReport> {
    let d = field.dim();
    let bounds = estimate_ellipticity(field, config.window_radius, config.ellipticity_samples, config.seed)?;
    let radii = config.radii.values()?;
    let dispersion = drift_dispersion_with(field, &radii, &config.search())?;
    let kappa_inf = asymptotic_dispersion(&dispersion, config.tail_fraction)?;
    let threshold = theorem_threshold(&bounds, d);
    let classic = classic_condition_check(
        field,
        &bounds,
        &classic_pairs(d, config.window_radius, config.classic_pairs, config.seed),
    )?;

    let mut diagnostics = vec![
        format!(
            "sup estimates are confined to pair midpoints within radius {} and radii in [{}, {}]; \
             kappa_inf is the max over the largest {:.0}% of radii, a window-limited stand-in for the limsup",
            config.window_radius,
            config.radii.min,
            config.radii.max,
            100.0 * config.tail_fraction
        ),
        format!(
            "ellipticity bounds certified only on the ball of radius {} ({} random samples + {} grid points)",
            bounds.domain_radius, bounds.n_samples, bounds.n_grid
        ),
        "the modulus takes the sup over |x-y| <= s while the dispersion uses |x-y| = s; both are \
         estimated at |x-y| = s on a grid, the modulus then by running maximum"
            .into(),
    ];
    if field.lipschitz_suspect(config.window_radius.min(10.0)) {
        diagnostics.push(
            "field looks continuous but not locally Lipschitz near sampled points; \
             strong-solution accuracy of the simulator is unquantified"
                .into(),
        );
    }
    if !classic.holds {
        diagnostics.push(format!(
            "classic monotonicity condition fails (max {:.6e}); only the dispersion criterion can apply",
            classic.max_value
        ));
    }

    let mut report = CriterionReport {
        field: field.label().to_string(),
        dim: d,
        bounds: bounds.clone(),
        dispersion,
        kappa_inf,
        tail_fraction: config.tail_fraction,
        threshold,
        classic,
        constants: None,
        modulus: None,
        escape: None,
        escape_divergent: None,
        verdict: Verdict::Inconclusive,
        failed_stage: None,
        diagnostics,
    };

    if !(kappa_inf < threshold) {
        report.failed_stage = Some("dispersion".into());
        report.diagnostics.push(format!(
            "dispersion: kappa_inf = {kappa_inf:.6} is not below the threshold {threshold:.6}"
        ));
        return Ok(report);
    }

    let candidates = match admissible_constants(&bounds, d, &report.dispersion, config.mu_grid, config.tail_fraction) {
        Ok(c) => c,
        Err(e) => {
            report.failed_stage = Some("constants".into());
            report.diagnostics.push(format!("constants: {e}"));
            return Ok(report);
        }
    };

    // ω does not depend on μ when q is constant
    let tries = if field.constant_diffusion().is_some() {
        1
    } else {
        config.max_mu_candidates.max(1)
    };
    let mut accepted = None;
    for constants in candidates.iter().take(tries) {
        if constants.s0 <= config.s_min {
            report.diagnostics.push(format!(
                "modulus: s0 = {} is below s_min = {}; no modulus needed on an empty interval",
                constants.s0, config.s_min
            ));
        }
        let s0 = constants.s0.max(config.s_min * 10.0);
        let constants = CriterionConstants { s0, ..*constants };
        match modulus_with(field, constants.lambda, s0, config.s_min, config.modulus_grid, &config.search()) {
            Ok(profile) if profile.dini == DiniStatus::Holds => {
                accepted = Some((constants, profile));
                break;
            }
            Ok(profile) => {
                report.diagnostics.push(format!(
                    "modulus: Dini check failed for mu = {} (head exponent {:?})",
                    constants.mu, profile.head_exponent
                ));
                report.constants = Some(constants);
                report.modulus = Some(profile);
            }
            Err(e) => report.diagnostics.push(format!("modulus: {e}")),
        }
    }
    let Some((constants, profile)) = accepted else {
        report.failed_stage = Some("modulus".into());
        return Ok(report);
    };
    report.diagnostics.push(format!(
        "escape integral prefactor uses exp(-c/(4 mu)) with c = int_0^s0 g = {:.6e}",
        profile.dini_mass
    ));

    let outcome = build_g(&profile, &constants)
        .and_then(|g| escape_integral_divergent(&g, &constants, constants.s0 * config.escape_r_factor));
    report.constants = Some(constants);
    report.modulus = Some(profile);
    match outcome {
        Ok(esc) => {
            report.escape_divergent = Some(esc.divergent);
            let divergent = esc.divergent;
            report.escape = Some(esc);
            if divergent {
                report.verdict = Verdict::LiouvilleGuaranteed;
            } else {
                report.failed_stage = Some("escape_integral".into());
            }
        }
        Err(e) => {
            report.failed_stage = Some("escape_integral".into());
            report.diagnostics.push(format!("escape_integral: {e}"));
        }
    }
    Ok(report)
}
