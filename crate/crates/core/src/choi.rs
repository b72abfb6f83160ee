//! Choi correspondence between operators `H` on `H_A (x) H_B` and linear
//! maps `S_H: B(H_A) -> B(H_B)`, `S_H(E_xy) = V_x^* H V_y`, with the
//! convention `H = sum_ij E_ij (x) S_H(E_ij)`: the first tensor factor
//! carries the matrix units.

use nalgebra::DVector;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, BipartiteShape, ComplexMatrix, DensityMatrix, HermitianOperator, Subsystem};
use crate::optim::{self, PptSetSpec};
use crate::{lit, rng, Error, Real, Result, Tolerances};

/// A linear map `M_n -> M_m` by its values `B_ij = S(E_ij)` on matrix
/// units, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTable<T: Real> {
    dim_in: usize,
    dim_out: usize,
    blocks: Vec<ComplexMatrix<T>>,
}

impl<T: Real> MapTable<T> {
    pub fn new(dim_in: usize, dim_out: usize, blocks: Vec<ComplexMatrix<T>>) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::Shape("map dimensions must be positive".into()));
        }
        if blocks.len() != dim_in * dim_in {
            return Err(Error::Shape(format!("expected {} blocks, got {}", dim_in * dim_in, blocks.len())));
        }
        if let Some(b) = blocks.iter().find(|b| b.shape() != (dim_out, dim_out)) {
            return Err(Error::Shape(format!(
                "block of shape {}x{} in a map into M_{dim_out}",
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { dim_in, dim_out, blocks })
    }

    /// The identity map on `M_n`: `B_ij = E_ij`.
    pub fn identity(n: usize) -> Self {
        let blocks = (0..n * n).map(|k| linalg::matrix_unit(n, k / n, k % n)).collect();
        Self { dim_in: n, dim_out: n, blocks }
    }

    /// The transposition on `M_n`: `B_ij = E_ji`.
    pub fn transposition(n: usize) -> Self {
        let blocks = (0..n * n).map(|k| linalg::matrix_unit(n, k % n, k / n)).collect();
        Self { dim_in: n, dim_out: n, blocks }
    }

    pub fn zero(dim_in: usize, dim_out: usize) -> Self {
        Self { dim_in, dim_out, blocks: vec![ComplexMatrix::zeros(dim_out, dim_out); dim_in * dim_in] }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn shape(&self) -> BipartiteShape {
        BipartiteShape { dim_a: self.dim_in, dim_b: self.dim_out }
    }

    /// `B_ij = S(E_ij)`.
    pub fn block(&self, i: usize, j: usize) -> &ComplexMatrix<T> {
        &self.blocks[i * self.dim_in + j]
    }

    /// True iff `B_ji = B_ij^dagger` for all `i, j`, the condition for
    /// `S` to preserve Hermiticity.
    pub fn is_hermiticity_preserving(&self, tol: T) -> bool {
        let n = self.dim_in;
        (0..n).all(|i| (0..n).all(|j| linalg::max_abs(&(self.block(j, i) - self.block(i, j).adjoint())) <= tol))
    }
}

/// `B_ij[k, l] = h[(i m + k), (j m + l)]`.
pub fn map_from_choi<T: Real>(h: &HermitianOperator<T>, shape: BipartiteShape) -> Result<MapTable<T>> {
    map_from_choi_matrix(h.matrix(), shape)
}

/// As [`map_from_choi`] for an arbitrary (not necessarily Hermitian) `h`.
pub fn map_from_choi_matrix<T: Real>(h: &ComplexMatrix<T>, shape: BipartiteShape) -> Result<MapTable<T>> {
    let (n, m) = (shape.dim_a, shape.dim_b);
    if h.shape() != (n * m, n * m) {
        return Err(Error::Shape(format!("operator of shape {}x{} does not match {shape}", h.nrows(), h.ncols())));
    }
    let blocks = (0..n * n)
        .map(|k| h.view(((k / n) * m, (k % n) * m), (m, m)).into_owned())
        .collect();
    Ok(MapTable { dim_in: n, dim_out: m, blocks })
}

/// `h = sum_ij E_ij (x) B_ij`.
pub fn choi_matrix<T: Real>(t: &MapTable<T>) -> ComplexMatrix<T> {
    let (n, m) = (t.dim_in, t.dim_out);
    let mut h = ComplexMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            h.view_mut((i * m, j * m), (m, m)).copy_from(t.block(i, j));
        }
    }
    h
}

/// The Choi operator of a Hermiticity-preserving map.
pub fn choi_from_map<T: Real>(t: &MapTable<T>) -> Result<HermitianOperator<T>> {
    HermitianOperator::new(choi_matrix(t))
}

/// `S(a) = sum_ij a[i, j] B_ij`.
pub fn apply_map<T: Real>(t: &MapTable<T>, a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let n = t.dim_in;
    if a.shape() != (n, n) {
        return Err(Error::Shape(format!("map on M_{n} applied to a {}x{} matrix", a.nrows(), a.ncols())));
    }
    let mut out = ComplexMatrix::zeros(t.dim_out, t.dim_out);
    for i in 0..n {
        for j in 0..n {
            out += t.block(i, j).map(|z| z * a[(i, j)]);
        }
    }
    Ok(out)
}

/// `(id_{M_k} (x) S)(a)` for `a` on `C^k (x) H_A`, blockwise.
pub fn apply_ampliated<T: Real>(t: &MapTable<T>, k: usize, a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let (n, m) = (t.dim_in, t.dim_out);
    if a.shape() != (k * n, k * n) {
        return Err(Error::Shape(format!("expected a {0}x{0} operator", k * n)));
    }
    let mut out = ComplexMatrix::zeros(k * m, k * m);
    for i in 0..k {
        for j in 0..k {
            let block = a.view((i * n, j * n), (n, n)).into_owned();
            out.view_mut((i * m, j * m), (m, m)).copy_from(&apply_map(t, &block)?);
        }
    }
    Ok(out)
}

/// `h = h1 + partial_transpose(h2, shape, A)` with `h1, h2 >= 0`: the
/// Choi operator of `S_{h1} + S_{h2} o tau`.
#[derive(Debug, Clone)]
pub struct DecomposableWitness<T: Real> {
    pub h1: HermitianOperator<T>,
    pub h2: HermitianOperator<T>,
    pub h: HermitianOperator<T>,
    pub shape: BipartiteShape,
}

impl<T: Real> DecomposableWitness<T> {
    pub fn new(h1: HermitianOperator<T>, h2: HermitianOperator<T>, shape: BipartiteShape) -> Result<Self> {
        let tol = Tolerances::<T>::default().psd;
        for (name, op) in [("h1", &h1), ("h2", &h2)] {
            if op.dim() != shape.total() {
                return Err(Error::Shape(format!("{name} does not match {shape}")));
            }
            let (ok, min) = linalg::psd_check(op, tol);
            if !ok {
                return Err(Error::Contract(format!("{name} is not PSD (min eigenvalue {:e})", min.to_f64_lossy())));
            }
        }
        let h2_gamma = linalg::partial_transpose(h2.matrix(), shape, Subsystem::A)?;
        let h = HermitianOperator::from_hermitian_part(h1.matrix() + h2_gamma);
        Ok(Self { h1, h2, h, shape })
    }

    pub fn map(&self) -> MapTable<T> {
        map_from_choi(&self.h, self.shape).expect("shape checked on construction")
    }
}

/// `G^dagger G / Tr(G^dagger G)` for a complex Gaussian `G`.
pub fn random_psd<T: Real, R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator<T> {
    let g = rng::ginibre::<T, _>(rng, dim, dim);
    let p = g.adjoint() * g;
    let tr = p.trace().re;
    HermitianOperator::from_hermitian_part(p.unscale(tr))
}

pub fn random_decomposable<T: Real>(shape: BipartiteShape, seed: u64) -> DecomposableWitness<T> {
    let mut r = rng::seeded(seed);
    let h1 = random_psd(&mut r, shape.total());
    let h2 = random_psd(&mut r, shape.total());
    DecomposableWitness::new(h1, h2, shape).expect("Gram matrices are PSD")
}

/// Largest pairing value still counted as non-negative.
pub const PAIRING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPairingReport {
    pub samples: usize,
    pub seed: u64,
    /// `min Tr(D h)` over sampled PPT densities.
    pub min_sampled: f64,
    /// `min Tr(D h)` found by the optimizer, when requested.
    pub min_optimizer: Option<f64>,
    pub optimizer_spread: Option<f64>,
    pub optimizer_low_confidence: Option<bool>,
    pub min_value: f64,
    /// Largest feasibility residual among the evaluated densities.
    pub max_feasibility_residual: f64,
    /// A feasible `D` with `Tr(D h) < -PAIRING_TOL` was found, so `h` is
    /// not in the dual of the PPT states and `S_h` is not decomposable.
    pub certified_negative: bool,
}

/// Evaluates `Tr(D h)` over PPT densities: `samples` Dykstra projections of
/// random Hermitian matrices and, if `optimizer` is set, the minimizer of
/// [`optim::min_trace_over_ppt`].
pub fn dual_pairing_test<T: Real>(
    h: &HermitianOperator<T>,
    shape: BipartiteShape,
    samples: usize,
    seed: u64,
    optimizer: bool,
) -> Result<DualPairingReport> {
    if h.dim() != shape.total() {
        return Err(Error::Shape(format!("operator does not match {shape}")));
    }
    let spec = PptSetSpec::<T>::new(shape).with_seed(seed);
    let values = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<(f64, f64)> {
            let mut r = rng::stream_rng(seed, s as u64);
            let (d, trace) = optim::random_ppt_density(&mut r, &spec)?;
            Ok((linalg::hs_inner(d.matrix(), h.matrix()).re.to_f64_lossy(), trace.feasibility_residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_sampled = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let mut max_res = values.iter().map(|v| v.1).fold(0.0, f64::max);
    let (mut min_opt, mut spread, mut low) = (None, None, None);
    if optimizer {
        let res = optim::min_trace_over_ppt(h, &spec)?;
        min_opt = Some(res.value.to_f64_lossy());
        spread = Some(res.spread);
        low = Some(res.trace.low_confidence);
        max_res = max_res.max(res.trace.feasibility_residual);
    }
    let min_value = min_opt.map_or(min_sampled, |o| o.min(min_sampled));
    Ok(DualPairingReport {
        samples,
        seed,
        min_sampled,
        min_optimizer: min_opt,
        optimizer_spread: spread,
        optimizer_low_confidence: low,
        min_value,
        max_feasibility_residual: max_res,
        certified_negative: min_value < -PAIRING_TOL && max_res <= PAIRING_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormerReport {
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
    /// Smallest eigenvalue of `(id (x) S)(A)` over sampled PPT `A`.
    pub min_output_eigenvalue: f64,
    /// Smallest eigenvalue of `A` and of its partial transpose.
    pub min_input_eigenvalue: f64,
    pub passed: bool,
}

/// Applies `id_{M_k} (x) S` to PPT operators on `C^k (x) H_A`.
pub fn stormer_block_test<T: Real>(t: &MapTable<T>, k: usize, samples: usize, seed: u64) -> Result<StormerReport> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let shape = BipartiteShape::new(k, t.dim_in)?;
    let spec = PptSetSpec::<T>::new(shape);
    let results = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<(f64, f64)> {
            let mut r = rng::stream_rng(seed, s as u64);
            let (a, _) = optim::random_ppt_density(&mut r, &spec)?;
            let input = optim::feasibility_residual(a.matrix(), shape, T::one())?;
            let out = apply_ampliated(t, k, a.matrix())?;
            Ok((linalg::min_eigenvalue(&out).to_f64_lossy(), -input.to_f64_lossy()))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_out = results.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let min_in = results.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    Ok(StormerReport {
        k,
        samples,
        seed,
        min_output_eigenvalue: min_out,
        min_input_eigenvalue: min_in,
        passed: min_out >= -PAIRING_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaFiReport {
    pub samples: usize,
    /// `min psi(C)` over random PSD `C`.
    pub min_psi: f64,
    /// `min psi((tau (x) id)(C))` over the same `C`.
    pub min_psi_transposed: f64,
    /// Smallest eigenvalues of `Psi` and of its partial transpose on `H`.
    pub min_eig_psi: f64,
    pub min_eig_psi_transposed: f64,
    /// `max |Tr(Psi C) - <v, (A (x) C) v>|` with
    /// `v = sum_ip h_i (x) e_p (x) e_p (x) x_i`.
    pub kernel_residual: f64,
    pub passed: bool,
}

/// The functional
/// `psi(C) = sum_ij sum_pr <h_i (x) e_p, A h_j (x) e_r> <e_p (x) x_i, C e_r (x) x_j>`
/// on `B(H (x) K)`, returned as the operator `Psi` with `psi(C) = Tr(Psi C)`.
///
/// `a` acts on `C^k (x) H` with `dim H = n` and must be PPT on that split;
/// `xs` are `k` vectors of `K` and `hs` are `k` vectors of `C^k`.
pub fn lemma_fi_functional<T: Real>(
    a: &HermitianOperator<T>,
    k: usize,
    n: usize,
    xs: &[DVector<Complex<T>>],
    hs: &[DVector<Complex<T>>],
    seed: u64,
) -> Result<(HermitianOperator<T>, LemmaFiReport)> {
    let split = BipartiteShape::new(k, n)?;
    if a.dim() != split.total() {
        return Err(Error::Shape(format!("a must act on C^{k} (x) C^{n}")));
    }
    if xs.len() != k || hs.len() != k {
        return Err(Error::Shape(format!("need {k} vectors x_i and {k} vectors h_i")));
    }
    let m = xs.first().map_or(0, |x| x.len());
    if m == 0 || xs.iter().any(|x| x.len() != m) {
        return Err(Error::Shape("vectors x_i must share a positive dimension".into()));
    }
    if hs.iter().any(|h| h.len() != k) {
        return Err(Error::Shape(format!("vectors h_i must lie in C^{k}")));
    }
    let tol = Tolerances::<T>::default().psd;
    let min_a = linalg::min_eigenvalue(a.matrix());
    let min_g = linalg::min_eigenvalue(&linalg::partial_transpose(a.matrix(), split, Subsystem::A)?);
    if min_a < -tol || min_g < -tol {
        return Err(Error::Contract(format!(
            "a is not PPT on the {split} split (min eig {:e}, partial transpose {:e})",
            min_a.to_f64_lossy(),
            min_g.to_f64_lossy()
        )));
    }

    // alpha[(i, p), (j, r)] = <h_i (x) e_p, A h_j (x) e_r>
    let hp = |i: usize, p: usize| -> DVector<Complex<T>> {
        let mut e = DVector::zeros(n);
        e[p] = Complex::new(T::one(), T::zero());
        linalg::kron(&ComplexMatrix::from_column_slice(k, 1, hs[i].as_slice()), &ComplexMatrix::from_column_slice(n, 1, e.as_slice()))
            .expect("small")
            .column(0)
            .into_owned()
    };
    let vecs: Vec<DVector<Complex<T>>> = (0..k * n).map(|ip| hp(ip / n, ip % n)).collect();
    let alpha = |i: usize, p: usize, j: usize, r: usize| vecs[i * n + p].dotc(&(a.matrix() * &vecs[j * n + r]));

    // W[(p, s), (r, t)] = sum_ij alpha[(i,p),(j,r)] conj(x_i[s]) x_j[t]; Psi = W^T.
    let dim = n * m;
    let mut w = ComplexMatrix::<T>::zeros(dim, dim);
    for i in 0..k {
        for j in 0..k {
            for p in 0..n {
                for r in 0..n {
                    let c = alpha(i, p, j, r);
                    for s in 0..m {
                        for t in 0..m {
                            w[(p * m + s, r * m + t)] += c * xs[i][s].conj() * xs[j][t];
                        }
                    }
                }
            }
        }
    }
    let psi = HermitianOperator::from_hermitian_part(w.transpose());
    let target = BipartiteShape::new(n, m)?;

    // Kernel cross-check through the vector v of the positivity argument.
    let big = k * n * n * m;
    let mut v = DVector::<Complex<T>>::zeros(big);
    for i in 0..k {
        for p in 0..n {
            for (a_idx, &ha) in hs[i].iter().enumerate() {
                for (s, &xs_) in xs[i].iter().enumerate() {
                    v[((a_idx * n + p) * n + p) * m + s] += ha * xs_;
                }
            }
        }
    }

    let mut r = rng::seeded(seed);
    let samples = 100;
    let mut min_psi = T::max_value().expect("bounded");
    let mut min_psi_t = min_psi;
    let mut kernel_residual = T::zero();
    for s in 0..samples {
        let c = random_psd::<T, _>(&mut r, dim).into_matrix();
        let val = linalg::hs_inner(&psi.matrix().adjoint(), &c).re;
        let ct = linalg::partial_transpose(&c, target, Subsystem::A)?;
        let val_t = linalg::hs_inner(&psi.matrix().adjoint(), &ct).re;
        if val < min_psi {
            min_psi = val;
        }
        if val_t < min_psi_t {
            min_psi_t = val_t;
        }
        if s < 10 {
            let ac = linalg::kron(a.matrix(), &c)?;
            let direct = v.dotc(&(ac * &v));
            let via_psi = (psi.matrix() * &c).trace();
            let d = linalg::modulus(direct - via_psi);
            if d > kernel_residual {
                kernel_residual = d;
            }
        }
    }
    let min_eig_psi = linalg::min_eigenvalue(psi.matrix());
    let min_eig_psi_t = linalg::min_eigenvalue(&linalg::partial_transpose(psi.matrix(), target, Subsystem::A)?);
    let scale = T::one() + psi.matrix().norm();
    let tol9: T = lit(1e-9);
    let passed = min_psi >= -tol9 * scale
        && min_psi_t >= -tol9 * scale
        && kernel_residual <= tol9 * scale
        && min_eig_psi >= -tol9 * scale
        && min_eig_psi_t >= -tol9 * scale;
    Ok((
        psi,
        LemmaFiReport {
            samples,
            min_psi: min_psi.to_f64_lossy(),
            min_psi_transposed: min_psi_t.to_f64_lossy(),
            min_eig_psi: min_eig_psi.to_f64_lossy(),
            min_eig_psi_transposed: min_eig_psi_t.to_f64_lossy(),
            kernel_residual: kernel_residual.to_f64_lossy(),
            passed,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub shape: BipartiteShape,
    pub seed: u64,
    /// Smallest eigenvalue of the Choi operator (SWAP) of the transposition
    /// on `M_{dim_a}`: positive but not completely positive.
    pub transposition_choi_min_eig: f64,
    /// Stormer test of random CP maps `M_{dim_a} -> M_{dim_b}`.
    pub cp_stormer_min_eig: f64,
    pub separable_samples: usize,
    /// Smallest partial-transpose eigenvalue over random separable densities.
    pub separable_min_pt_eig: f64,
    pub separable_all_ppt: bool,
    /// Smallest partial-transpose eigenvalue of the singlet on the first two
    /// levels of each factor.
    pub singlet_pt_min_eig: f64,
    pub passed: bool,
}

/// Evidence for `P_C < P_D < P` and `S_sep < S_tau < S`.
pub fn hierarchy_report<T: Real>(shape: BipartiteShape, seed: u64) -> Result<HierarchyReport> {
    let tol = PAIRING_TOL;
    let swap = choi_matrix(&MapTable::<T>::transposition(shape.dim_a));
    let transposition_min = linalg::min_eigenvalue(&swap).to_f64_lossy();

    let mut r = rng::seeded(seed);
    let mut cp_min = f64::INFINITY;
    for s in 0..5 {
        let h = random_psd::<T, _>(&mut r, shape.total());
        let t = map_from_choi(&h, shape)?;
        let rep = stormer_block_test(&t, 2, 20, seed.wrapping_add(s))?;
        cp_min = cp_min.min(rep.min_output_eigenvalue);
    }

    let separable_samples = 200;
    let mut sep_min = f64::INFINITY;
    for _ in 0..separable_samples {
        let mut d = ComplexMatrix::<T>::zeros(shape.total(), shape.total());
        let weights: Vec<T> = (0..10).map(|_| rng::uniform::<T, _>(&mut r)).collect();
        let total = weights.iter().fold(T::zero(), |a, &b| a + b);
        for w in weights {
            let a = rng::pure_density::<T, _>(&mut r, shape.dim_a);
            let b = rng::pure_density::<T, _>(&mut r, shape.dim_b);
            d += linalg::kron(a.matrix(), b.matrix())?.scale(w / total);
        }
        let g = linalg::partial_transpose(&d, shape, Subsystem::B)?;
        sep_min = sep_min.min(linalg::min_eigenvalue(&g).to_f64_lossy());
    }

    let singlet_min = if shape.dim_a >= 2 && shape.dim_b >= 2 {
        let mut psi = DVector::<Complex<T>>::zeros(shape.total());
        let s: T = lit(0.5f64.sqrt());
        psi[shape.index(0, 1)] = Complex::new(s, T::zero());
        psi[shape.index(1, 0)] = Complex::new(-s, T::zero());
        let singlet = DensityMatrix::pure(&psi);
        let g = linalg::partial_transpose(singlet.matrix(), shape, Subsystem::B)?;
        linalg::min_eigenvalue(&g).to_f64_lossy()
    } else {
        f64::NAN
    };

    let separable_all_ppt = sep_min >= -tol;
    Ok(HierarchyReport {
        shape,
        seed,
        transposition_choi_min_eig: transposition_min,
        cp_stormer_min_eig: cp_min,
        separable_samples,
        separable_min_pt_eig: sep_min,
        separable_all_ppt,
        singlet_pt_min_eig: singlet_min,
        passed: transposition_min < -tol && cp_min >= -tol && separable_all_ppt && singlet_min < -tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, max_abs, matrix_unit};

    type C = Complex<f64>;

    fn shape(a: usize, b: usize) -> BipartiteShape {
        BipartiteShape::new(a, b).unwrap()
    }

    fn swap(n: usize) -> ComplexMatrix<f64> {
        choi_matrix(&MapTable::<f64>::transposition(n))
    }

    fn sorted_eigs(m: &ComplexMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = linalg::hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    }

    #[test]
    fn identity_operator_gives_trace_map() {
        let t = map_from_choi(&HermitianOperator::<f64>::identity(6), shape(2, 3)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { ComplexMatrix::identity(3, 3) } else { ComplexMatrix::zeros(3, 3) };
                assert_eq!(t.block(i, j), &expected);
            }
        }
        let out = apply_map(&t, &matrix_unit(2, 0, 1)).unwrap();
        assert_eq!(out, ComplexMatrix::zeros(3, 3));
    }

    #[test]
    fn swap_is_the_transposition() {
        let t = map_from_choi_matrix(&swap(2), shape(2, 2)).unwrap();
        assert_eq!(t, MapTable::transposition(2));
        let mut r = rng::seeded(1);
        let a = rng::ginibre::<f64, _>(&mut r, 2, 2);
        assert_eq!(apply_map(&t, &a).unwrap(), a.transpose());
        assert_eq!(sorted_eigs(&swap(2)), vec![1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn identity_map_choi_is_rank_one() {
        let h = choi_matrix(&MapTable::<f64>::identity(2));
        let e = sorted_eigs(&h);
        assert!((e[0] - 2.0).abs() < 1e-12 && e[1..].iter().all(|x| x.abs() < 1e-12));
        let mut r = rng::seeded(2);
        let a = rng::ginibre::<f64, _>(&mut r, 2, 2);
        assert_eq!(apply_map(&MapTable::identity(2), &a).unwrap(), a);
        assert_eq!(choi_matrix(&MapTable::<f64>::zero(2, 3)), ComplexMatrix::zeros(6, 6));
    }

    #[test]
    fn round_trips_are_bit_exact() {
        let mut r = rng::seeded(3);
        for (a, b) in [(2, 2), (2, 3), (3, 2)] {
            let h = rng::ginibre::<f64, _>(&mut r, a * b, a * b);
            let t = map_from_choi_matrix(&h, shape(a, b)).unwrap();
            assert_eq!(choi_matrix(&t), h);
            let again = map_from_choi_matrix(&choi_matrix(&t), shape(a, b)).unwrap();
            assert_eq!(again, t);
        }
    }

    #[test]
    fn linearity_and_hermiticity() {
        let mut r = rng::seeded(4);
        let sh = shape(2, 3);
        for _ in 0..100 {
            let h = rng::ginibre::<f64, _>(&mut r, 6, 6);
            let t = map_from_choi_matrix(&h, sh).unwrap();
            let (x, y) = (rng::ginibre::<f64, _>(&mut r, 2, 2), rng::ginibre::<f64, _>(&mut r, 2, 2));
            let c = C::new(0.3, -1.2);
            let lhs = apply_map(&t, &(&x + y.map(|z| z * c))).unwrap();
            let rhs = apply_map(&t, &x).unwrap() + apply_map(&t, &y).unwrap().map(|z| z * c);
            assert!(max_abs(&(lhs - rhs)) <= 1e-12);
            assert!(!t.is_hermiticity_preserving(1e-12));

            let herm = linalg::hermitian_part(&h);
            let th = map_from_choi_matrix(&herm, sh).unwrap();
            assert!(th.is_hermiticity_preserving(0.0));
            let hx = linalg::hermitian_part(&x);
            let out = apply_map(&th, &hx).unwrap();
            assert!(linalg::hermiticity_defect(&out) <= 1e-14);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(map_from_choi(&HermitianOperator::<f64>::identity(5), shape(2, 2)).is_err());
        assert!(MapTable::<f64>::new(2, 2, vec![ComplexMatrix::zeros(2, 2); 3]).is_err());
        assert!(apply_map(&MapTable::<f64>::identity(2), &ComplexMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn decomposable_examples() {
        let sh = shape(2, 2);
        let a = random_decomposable::<f64>(sh, 7);
        let b = random_decomposable::<f64>(sh, 7);
        assert_eq!(a.h.matrix(), b.h.matrix());

        let mut r = rng::seeded(8);
        let h1 = random_psd::<f64, _>(&mut r, 4);
        let cp = DecomposableWitness::new(h1.clone(), HermitianOperator::zeros(4), sh).unwrap();
        assert_eq!(cp.h.matrix(), h1.matrix());
        assert!(linalg::min_eigenvalue(cp.h.matrix()) >= -1e-12);

        let s = 0.5f64.sqrt();
        let phi = DVector::from_vec(vec![C::new(s, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(s, 0.0)]);
        let proj = HermitianOperator::new(linalg::outer(&phi, &phi)).unwrap();
        let w = DecomposableWitness::new(HermitianOperator::zeros(4), proj, sh).unwrap();
        assert!((linalg::min_eigenvalue(w.h.matrix()) + 0.5).abs() < 1e-12);
        // Positive: PSD inputs go to PSD outputs.
        let map = w.map();
        for _ in 0..50 {
            let p = rng::psd_of_rank::<f64, _>(&mut r, 2, 1);
            assert!(linalg::min_eigenvalue(&apply_map(&map, p.matrix()).unwrap()) >= -1e-12);
        }
    }

    #[test]
    fn dual_pairing_examples() {
        let sh = shape(2, 2);
        let rep = dual_pairing_test(&HermitianOperator::<f64>::identity(4), sh, 20, 1, false).unwrap();
        assert!((rep.min_value - 1.0).abs() < 1e-9);

        let h = HermitianOperator::new(swap(2)).unwrap();
        let rep = dual_pairing_test(&h, sh, 50, 2, true).unwrap();
        assert!(rep.min_sampled >= -1e-8);
        assert!(rep.min_optimizer.unwrap().abs() <= 1e-4, "{rep:?}");
        let d = kron(&linalg::real_diagonal(&[1.0, 0.0]), &linalg::real_diagonal(&[0.0, 1.0])).unwrap();
        assert_eq!(linalg::hs_inner(&d, h.matrix()).re, 0.0);

        let w = random_decomposable::<f64>(sh, 3);
        let rep = dual_pairing_test(&w.h, sh, 100, 4, true).unwrap();
        assert!(rep.min_value >= -1e-8 && !rep.certified_negative, "{rep:?}");
    }

    #[test]
    fn stormer_examples() {
        let id = stormer_block_test(&MapTable::<f64>::identity(2), 2, 20, 1).unwrap();
        assert!(id.passed);
        let tr = stormer_block_test(&MapTable::<f64>::transposition(2), 2, 20, 2).unwrap();
        assert!(tr.passed, "{tr:?}");
        for k in [2, 3] {
            let w = random_decomposable::<f64>(shape(2, 2), 10 + k as u64);
            let rep = stormer_block_test(&w.map(), k, 50, 11).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn lemma_fi_scalar_case() {
        let a = HermitianOperator::<f64>::identity(2);
        let x = vec![DVector::from_vec(vec![C::new(0.6, 0.0), C::new(0.0, 0.8)])];
        let h = vec![DVector::from_vec(vec![C::new(1.0, 0.0)])];
        let (psi, rep) = lemma_fi_functional(&a, 1, 2, &x, &h, 1).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(psi.trace() >= 0.0);
    }

    #[test]
    fn lemma_fi_identity_and_ppt() {
        let mut r = rng::seeded(5);
        let (k, n, m) = (2, 2, 2);
        let xs: Vec<_> = (0..k).map(|_| rng::unit_vector::<f64, _>(&mut r, m)).collect();
        let hs: Vec<_> = (0..k).map(|_| rng::unit_vector::<f64, _>(&mut r, k)).collect();
        let (_, rep) = lemma_fi_functional(&HermitianOperator::identity(k * n), k, n, &xs, &hs, 2).unwrap();
        assert!(rep.passed, "{rep:?}");

        let spec = PptSetSpec::<f64>::new(shape(k, n));
        for s in 0..10 {
            let (a, _) = optim::random_ppt_density(&mut rng::stream_rng(6, s), &spec).unwrap();
            let (_, rep) = lemma_fi_functional(a.operator(), k, n, &xs, &hs, s).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.kernel_residual <= 1e-12);
        }
    }

    #[test]
    fn lemma_fi_rejects_npt_input() {
        let s = 0.5f64.sqrt();
        let phi = DVector::from_vec(vec![C::new(s, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(s, 0.0)]);
        let a = HermitianOperator::new(linalg::outer(&phi, &phi)).unwrap();
        let xs = vec![DVector::from_element(2, C::new(1.0, 0.0)); 2];
        let hs = xs.clone();
        assert!(matches!(lemma_fi_functional(&a, 2, 2, &xs, &hs, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn hierarchy() {
        let rep = hierarchy_report::<f64>(shape(3, 3), 1).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!((rep.transposition_choi_min_eig + 1.0).abs() < 1e-12);
        assert!((rep.singlet_pt_min_eig + 0.5).abs() < 1e-12);
    }
}
