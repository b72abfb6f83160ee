//! Seeded sampling.
//!
//! All randomness flows through ChaCha8, a counter-based stream cipher
//! generator: `stream_rng(seed, k)` selects stream `k` of the key derived
//! from `seed`, so batch item `k` draws the same numbers no matter how a
//! batch is split across threads or platforms.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, ComplexMatrix, DensityMatrix, HermitianOperator};
use crate::{lit, Real};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = rng.sample(StandardNormal);
    lit(x)
}

pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    lit(rng.random::<f64>())
}

/// Matrix with i.i.d. standard complex Gaussian entries (unit variance).
pub fn ginibre<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix<T> {
    let half: T = lit(std::f64::consts::FRAC_1_SQRT_2);
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex::new(normal::<T, _>(rng) * half, normal::<T, _>(rng) * half)
    })
}

/// Complex matrix with unit Frobenius norm.
pub fn unit_matrix<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix<T> {
    let g = ginibre(rng, rows, cols);
    let norm = g.norm();
    g.unscale(norm)
}

pub fn unit_vector<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> nalgebra::DVector<Complex<T>> {
    let g = ginibre::<T, _>(rng, dim, 1);
    let norm = g.norm();
    g.unscale(norm).column(0).into_owned()
}

/// Hermitian matrix `(G + G^dagger)/2` with unit Frobenius norm.
pub fn hermitian<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator<T> {
    let g = ginibre::<T, _>(rng, dim, dim);
    let h = linalg::hermitian_part(&g);
    let norm = h.norm();
    HermitianOperator::from_hermitian_part(h.unscale(norm))
}

/// PSD matrix `G G^dagger / Tr` with `G` of shape `dim x rank`.
pub fn psd_of_rank<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> HermitianOperator<T> {
    let g = ginibre::<T, _>(rng, dim, rank.max(1));
    let p = &g * g.adjoint();
    let tr = p.trace().re;
    HermitianOperator::from_hermitian_part(p.unscale(tr))
}

/// Full-rank trace-one PSD matrix (Hilbert-Schmidt ensemble).
pub fn density<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityMatrix<T> {
    DensityMatrix::from_psd_unchecked(psd_of_rank(rng, dim, dim))
}

/// Density with `mix` weight on the maximally mixed state, so that its
/// smallest eigenvalue is at least `mix / dim`.
pub fn faithful_density<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize, mix: f64) -> DensityMatrix<T> {
    let w = psd_of_rank::<T, _>(rng, dim, dim);
    let mix: T = lit(mix);
    let id = ComplexMatrix::<T>::identity(dim, dim).scale(mix / lit(dim as f64));
    let m = w.matrix().scale(T::one() - mix) + id;
    DensityMatrix::from_psd_unchecked(HermitianOperator::from_hermitian_part(m))
}

/// Pure product-free state `|v><v|` for a random unit `v`.
pub fn pure_density<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityMatrix<T> {
    let v = unit_vector::<T, _>(rng, dim);
    DensityMatrix::from_psd_unchecked(HermitianOperator::from_hermitian_part(&v * v.adjoint()))
}
