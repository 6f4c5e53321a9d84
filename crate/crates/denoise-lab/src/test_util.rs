//! Helpers shared by unit tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric PSD matrix `scale * B B^T / d` (full rank a.s.).
pub(crate) fn random_psd(r: &mut ChaCha8Rng, d: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| -> f64 { StandardNormal.sample(r) });
    let mut m = &b * b.transpose();
    m *= scale / d as f64;
    linalg::mirror_lower(&mut m);
    m
}

/// Random diagonal PSD matrix with entries in `[lo, hi]`.
pub(crate) fn random_diagonal(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { r.random_range(lo..hi) } else { 0.0 })
}

/// Random orthogonal matrix via QR of a Gaussian matrix.
pub(crate) fn random_orthogonal(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| -> f64 { StandardNormal.sample(r) });
    g.qr().q()
}
