//! Sup-estimation over pairs at a fixed distance: seeded multistart followed
//! by coordinate ascent on (midpoint, direction) with step halving.
//!
//! Pairs are parameterised as `x = m + (s/2)u`, `y = m − (s/2)u` with the
//! midpoint `m` confined to the window ball and `u` a unit vector. Every
//! start is refined, and the result for `n` starts is the maximum over the
//! first `n` refined starts, so adding starts never lowers the estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Radius of the ball the pair midpoints are confined to.
    pub window_radius: f64,
    /// Random starts per radius.
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            window_radius: crate::coefficients::DEFAULT_WINDOW_RADIUS,
            n_pairs: 64,
            seed: 0,
        }
    }
}

/// Relative improvement below which the step is halved.
const IMPROVEMENT_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-9;
const MAX_ROUNDS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMax {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

struct Candidate {
    value: f64,
    mid: Vec<f64>,
    dir: Vec<f64>,
}

fn endpoints(mid: &[f64], dir: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let x = mid.iter().zip(dir).map(|(m, u)| m + 0.5 * s * u).collect();
    let y = mid.iter().zip(dir).map(|(m, u)| m - 0.5 * s * u).collect();
    (x, y)
}

fn project_to_ball(p: &mut [f64], radius: f64) {
    let n = rng::norm(p);
    if n > radius {
        let f = radius / n;
        p.iter_mut().for_each(|c| *c *= f);
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = rng::norm(v);
    if n < 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|c| *c /= n);
    true
}

/// Objective evaluation that maps non-finite values to −∞ so the search
/// never moves toward them.
fn score<F: Fn(&[f64], &[f64]) -> f64>(f: &F, mid: &[f64], dir: &[f64], s: f64) -> f64 {
    let (x, y) = endpoints(mid, dir, s);
    let v = f(&x, &y);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn refine<F: Fn(&[f64], &[f64]) -> f64>(f: &F, mut c: Candidate, s: f64, window: f64) -> Candidate {
    let d = c.mid.len();
    let mut step_mid = 0.25 * window.max(f64::MIN_POSITIVE);
    let mut step_dir = 0.25;
    for _ in 0..MAX_ROUNDS {
        let start = c.value;
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut mid = c.mid.clone();
                mid[i] += sign * step_mid;
                project_to_ball(&mut mid, window);
                let v = score(f, &mid, &c.dir, s);
                if v > c.value {
                    c.value = v;
                    c.mid = mid;
                    break;
                }
            }
        }
        if d > 1 {
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut dir = c.dir.clone();
                    dir[i] += sign * step_dir;
                    if !normalize(&mut dir) {
                        continue;
                    }
                    let v = score(f, &c.mid, &dir, s);
                    if v > c.value {
                        c.value = v;
                        c.dir = dir;
                        break;
                    }
                }
            }
        }
        let gain = c.value - start;
        if !(gain >= IMPROVEMENT_TOL * (1.0 + start.abs())) {
            step_mid *= 0.5;
            step_dir *= 0.5;
            if step_mid < MIN_STEP * (1.0 + window) && step_dir < MIN_STEP {
                break;
            }
        }
    }
    c
}

/// Lower bound on `sup f(x, y)` over pairs with `|x − y| = s` and midpoint
/// in the window ball. `index` selects the RNG streams (one per start).
pub(crate) fn maximize_at_distance<F>(
    f: &F,
    dim: usize,
    s: f64,
    opts: &SearchOptions,
    tag: Stream,
    index: u64,
) -> PairMax
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let window = opts.window_radius;
    // Deterministic starts: centred pairs along each axis.
    let axis_starts = (0..dim).map(|i| {
        let mut dir = vec![0.0; dim];
        dir[i] = 1.0;
        (vec![0.0; dim], dir)
    });
    let random_starts = (0..opts.n_pairs as u64).map(|k| {
        let mut r = rng::stream(opts.seed, tag, (index << 24) | k);
        let mid = rng::point_in_ball(&mut r, dim, window);
        let dir = rng::unit_vector(&mut r, dim);
        (mid, dir)
    });
    let starts: Vec<(Vec<f64>, Vec<f64>)> = axis_starts.chain(random_starts).collect();

    let refined: Vec<Candidate> = starts
        .into_par_iter()
        .map(|(mid, dir)| {
            let value = score(f, &mid, &dir, s);
            refine(f, Candidate { value, mid, dir }, s, window)
        })
        .collect();

    // first maximum wins ties, independent of scheduling
    let best = refined
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start");
    let (x, y) = endpoints(&best.mid, &best.dir, s);
    PairMax {
        value: best.value,
        x,
        y,
    }
}
