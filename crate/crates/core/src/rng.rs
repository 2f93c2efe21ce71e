//! Seeded random streams. Every consumer derives its own ChaCha stream from
//! `(seed, tag, index)`, so results never depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream tags. Distinct consumers of the same seed never share a stream.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Ellipticity = 1,
    Dispersion = 2,
    Modulus = 3,
    Coupling = 4,
    Martingale = 5,
    ClassicCheck = 6,
    SigmaCheck = 7,
    GrowthBound = 8,
}

pub fn stream(seed: u64, tag: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 56) ^ index);
    rng
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Uniform point in the closed ball of the given radius.
pub fn point_in_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    unit_vector(rng, dim).into_iter().map(|c| c * r).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regular grid of the cube `[-radius, radius]^dim` clipped to the ball, with
/// at most `max_points` points before clipping.
pub fn ball_grid(dim: usize, radius: f64, max_points: usize) -> Vec<Vec<f64>> {
    let per_axis = (max_points as f64).powf(1.0 / dim as f64).floor() as usize;
    let half = per_axis.saturating_sub(1) / 2;
    if half == 0 {
        return vec![vec![0.0; dim]];
    }
    let step = radius / half as f64;
    let side = 2 * half + 1;
    let total = side.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut k in 0..total {
        let mut p = vec![0.0; dim];
        for c in p.iter_mut() {
            *c = ((k % side) as f64 - half as f64) * step;
            k /= side;
        }
        if norm(&p) <= radius * (1.0 + 1e-12) {
            out.push(p);
        }
    }
    out
}
