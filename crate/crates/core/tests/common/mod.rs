#![allow(dead_code)]

use normda::dataset::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Step of the central-difference gradient oracle.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;

/// Central-difference derivative of `f` along coordinate `i` of `theta`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, theta: &[f64], i: usize) -> f64 {
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    plus[i] += FD_STEP;
    minus[i] -= FD_STEP;
    (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Largest relative error over `coords` (all coordinates when fewer exist).
pub fn max_fd_error(
    f: &dyn Fn(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    coords: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, usize) {
    assert_eq!(theta.len(), analytic.len());
    let picks: Vec<usize> = if theta.len() <= coords {
        (0..theta.len()).collect()
    } else {
        rand::seq::index::sample(rng, theta.len(), coords).into_vec()
    };
    let mut worst: f64 = 0.0;
    for &i in &picks {
        worst = worst.max(relative_error(analytic[i], central_difference(f, theta, i)));
    }
    (worst, picks.len())
}

pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

/// Two Gaussian blobs in `d` dimensions, `n` rows each, centres at ±`gap/2` on
/// the first axis, then translated by `shift` on every axis.
pub fn blobs(n: usize, d: usize, gap: f64, shift: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(2 * n, d);
    let mut y = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let c = i % 2;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let centre = if j == 0 { (c as f64 - 0.5) * gap } else { 0.0 };
            x[(i, j)] = centre + z + shift;
        }
        y.push(c);
    }
    (x, y)
}

pub fn accuracy(pred: &[usize], actual: &[usize]) -> f64 {
    pred.iter().zip(actual).filter(|(a, b)| a == b).count() as f64 / actual.len() as f64
}
