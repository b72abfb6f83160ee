//! Dense complex linear algebra: tensor structure, partial transpose and
//! trace, Hermitian spectral routines with a deterministic eigenbasis, and
//! the block Schur-complement positivity test.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::{lit, Error, Real, Result, Tolerances};

/// Dense complex matrix, row/column indices as in nalgebra.
pub type ComplexMatrix<T> = DMatrix<Complex<T>>;

pub const DEFAULT_MAX_DIM: usize = 4096;

/// Largest admissible composite dimension. `MODULAR_PPT_MAX_DIM` overrides
/// the default of 4096.
pub fn max_dim() -> usize {
    std::env::var("MODULAR_PPT_MAX_DIM")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&v: &usize| v > 0)
        .unwrap_or(DEFAULT_MAX_DIM)
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    let max = max_dim();
    if dim > max {
        return Err(Error::DimensionLimit { dim, max });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

/// Dimensions of `H (x) K`. Basis vector `e_i (x) f_j` has index
/// `i * dim_b + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BipartiteShape {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl BipartiteShape {
    pub fn new(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::Shape(format!("empty factor in {dim_a}x{dim_b}")));
        }
        let total = dim_a
            .checked_mul(dim_b)
            .ok_or(Error::DimensionLimit { dim: usize::MAX, max: max_dim() })?;
        check_dim(total)?;
        Ok(Self { dim_a, dim_b })
    }

    pub fn total(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.dim_b + j
    }

    pub fn swapped(&self) -> Self {
        Self { dim_a: self.dim_b, dim_b: self.dim_a }
    }

    fn check(&self, m_rows: usize, m_cols: usize) -> Result<()> {
        if m_rows != self.total() || m_cols != self.total() {
            return Err(Error::Shape(format!(
                "matrix is {m_rows}x{m_cols}, shape {}x{} needs {}x{}",
                self.dim_a,
                self.dim_b,
                self.total(),
                self.total()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for BipartiteShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.dim_a, self.dim_b)
    }
}

impl std::str::FromStr for BipartiteShape {
    type Err = Error;

    /// Parses `NxM`; a bare `N` means `N x 1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse { field: "dims".into(), message: format!("{msg}: {s:?}") };
        let mut parts = s.trim().split(['x', 'X']);
        let a: usize = parts
            .next()
            .ok_or_else(|| bad("missing dimension"))?
            .trim()
            .parse()
            .map_err(|_| bad("not an integer"))?;
        let b: usize = match parts.next() {
            Some(p) => p.trim().parse().map_err(|_| bad("not an integer"))?,
            None => 1,
        };
        if parts.next().is_some() {
            return Err(bad("expected NxM"));
        }
        BipartiteShape::new(a, b)
    }
}

// ---------------------------------------------------------------------------
// Hermitian and density operators

/// Square complex matrix equal to its adjoint within `tol_herm`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T: Real> {
    m: ComplexMatrix<T>,
}

impl<T: Real> HermitianOperator<T> {
    pub fn new(m: ComplexMatrix<T>) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::default().herm)
    }

    pub fn with_tolerance(m: ComplexMatrix<T>, tol: T) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!("Hermitian operator must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if !all_finite(&m) {
            return Err(Error::Contract("matrix has non-finite entries".into()));
        }
        let defect = hermiticity_defect(&m);
        if defect > tol {
            return Err(Error::Contract(format!(
                "matrix is not Hermitian: max |M - M^dagger| = {:e} > {:e}",
                defect.to_f64_lossy(),
                tol.to_f64_lossy()
            )));
        }
        Ok(Self { m })
    }

    /// Replaces `m` by its Hermitian part `(m + m^dagger)/2`.
    pub fn from_hermitian_part(m: ComplexMatrix<T>) -> Self {
        Self { m: hermitian_part(&m) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: ComplexMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: ComplexMatrix::zeros(dim, dim) }
    }

    pub fn from_real_diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self { m: DMatrix::from_fn(n, n, |i, j| if i == j { Complex::new(d[i], T::zero()) } else { Complex::new(T::zero(), T::zero()) }) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.m
    }

    pub fn trace(&self) -> T {
        self.m.trace().re
    }

    pub fn scale(&self, s: T) -> Self {
        Self { m: self.m.scale(s) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { m: &self.m + &other.m }
    }

    pub fn eig(&self) -> Eigen<T> {
        herm_eig(self)
    }

    pub fn min_eigenvalue(&self) -> T {
        min_eigenvalue(&self.m)
    }
}

/// Positive semidefinite trace-one Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    op: HermitianOperator<T>,
    faithful: bool,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(m: ComplexMatrix<T>) -> Result<Self> {
        Self::with_tolerances(m, &Tolerances::default())
    }

    pub fn with_tolerances(m: ComplexMatrix<T>, tol: &Tolerances<T>) -> Result<Self> {
        let op = HermitianOperator::with_tolerance(m, tol.herm)?;
        let tr = op.m.trace();
        if (tr.re - T::one()).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::Contract(format!(
                "density matrix trace is {} (residual {:e} > {:e})",
                tr.re.to_f64_lossy(),
                (tr.re - T::one()).abs().to_f64_lossy(),
                tol.trace.to_f64_lossy()
            )));
        }
        let min = op.min_eigenvalue();
        if min < -tol.psd {
            return Err(Error::Contract(format!(
                "density matrix is not positive: min eigenvalue {:e}",
                min.to_f64_lossy()
            )));
        }
        Ok(Self { faithful: min >= tol.faithful, op })
    }

    /// Normalizes a PSD operator to unit trace without re-checking
    /// positivity. Used by samplers that build `G G^dagger`.
    pub fn from_psd_unchecked(op: HermitianOperator<T>) -> Self {
        let tr = op.trace();
        let op = op.scale(T::one() / tr);
        let faithful = op.min_eigenvalue() >= Tolerances::<T>::default().faithful;
        Self { op, faithful }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let op = HermitianOperator::identity(dim).scale(T::one() / lit(dim as f64));
        Self { op, faithful: true }
    }

    pub fn pure(v: &DVector<Complex<T>>) -> Self {
        let norm = v.norm();
        let v = v.unscale(norm);
        Self::from_psd_unchecked(HermitianOperator::from_hermitian_part(&v * v.adjoint()))
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &HermitianOperator<T> {
        &self.op
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.op.m
    }

    pub fn into_operator(self) -> HermitianOperator<T> {
        self.op
    }
}

// ---------------------------------------------------------------------------
// Elementwise helpers

pub fn all_finite<T: Real>(m: &ComplexMatrix<T>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `|z|` for a generic complex scalar.
#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

pub fn hermitian_part<T: Real>(m: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let half: T = lit(0.5);
    (m + m.adjoint()).scale(half)
}

pub fn hermiticity_defect<T: Real>(m: &ComplexMatrix<T>) -> T {
    max_abs(&(m - m.adjoint()))
}

pub fn max_abs<T: Real>(m: &ComplexMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| {
        let a = modulus(*z);
        if a > acc {
            a
        } else {
            acc
        }
    })
}

/// Hilbert-Schmidt inner product `Tr(a^dagger b)`, antilinear in `a`.
pub fn hs_inner<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Complex<T> {
    a.iter().zip(b.iter()).fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

pub fn matrix_unit<T: Real>(n: usize, i: usize, j: usize) -> ComplexMatrix<T> {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] = Complex::new(T::one(), T::zero());
    m
}

pub fn real_diagonal<T: Real>(d: &[T]) -> ComplexMatrix<T> {
    HermitianOperator::from_real_diagonal(d).into_matrix()
}

pub fn outer<T: Real>(u: &DVector<Complex<T>>, v: &DVector<Complex<T>>) -> ComplexMatrix<T> {
    u * v.adjoint()
}

/// Entrywise complex conjugate.
pub fn conj<T: Real>(m: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    m.map(|z| z.conj())
}

// ---------------------------------------------------------------------------
// Tensor structure

/// Kronecker product: `out[(i*rb + k, j*cb + l)] = a[(i,j)] * b[(k,l)]`.
pub fn kron<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let rows = ra.checked_mul(rb).ok_or(Error::DimensionLimit { dim: usize::MAX, max: max_dim() })?;
    let cols = ca.checked_mul(cb).ok_or(Error::DimensionLimit { dim: usize::MAX, max: max_dim() })?;
    check_dim(rows.max(cols))?;
    Ok(a.kronecker(b))
}

/// Applies the transpose to one tensor factor, in the fixed product basis.
///
/// For `Subsystem::B` every `dim_b x dim_b` block is transposed in place;
/// for `Subsystem::A` block `(i, j)` is moved to `(j, i)`.
pub fn partial_transpose<T: Real>(m: &ComplexMatrix<T>, shape: BipartiteShape, sys: Subsystem) -> Result<ComplexMatrix<T>> {
    shape.check(m.nrows(), m.ncols())?;
    let (na, nb) = (shape.dim_a, shape.dim_b);
    let mut out = ComplexMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..na {
        for j in 0..na {
            for k in 0..nb {
                for l in 0..nb {
                    let src = m[(i * nb + k, j * nb + l)];
                    let (r, c) = match sys {
                        Subsystem::B => (i * nb + l, j * nb + k),
                        Subsystem::A => (j * nb + k, i * nb + l),
                    };
                    out[(r, c)] = src;
                }
            }
        }
    }
    Ok(out)
}

pub fn partial_trace<T: Real>(m: &ComplexMatrix<T>, shape: BipartiteShape, keep: Subsystem) -> Result<ComplexMatrix<T>> {
    shape.check(m.nrows(), m.ncols())?;
    let (na, nb) = (shape.dim_a, shape.dim_b);
    let zero = Complex::new(T::zero(), T::zero());
    Ok(match keep {
        Subsystem::A => DMatrix::from_fn(na, na, |i, j| (0..nb).fold(zero, |acc, k| acc + m[(i * nb + k, j * nb + k)])),
        Subsystem::B => DMatrix::from_fn(nb, nb, |k, l| (0..na).fold(zero, |acc, i| acc + m[(i * nb + k, i * nb + l)])),
    })
}

// ---------------------------------------------------------------------------
// Spectral routines

/// Eigen-decomposition `m = sum_k values[k] |v_k><v_k|` with values in
/// descending order and eigenvectors as columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> Eigen<T> {
    /// `sum_k f(values[k]) |v_k><v_k|`.
    pub fn map(&self, f: impl Fn(T) -> T) -> ComplexMatrix<T> {
        let d: Vec<T> = self.values.iter().map(|&x| f(x)).collect();
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |r, c| self.vectors[(r, c)] * d[c]);
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        self.map(|x| x)
    }

    pub fn min(&self) -> T {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn vector(&self, k: usize) -> DVector<Complex<T>> {
        self.vectors.column(k).into_owned()
    }
}

/// Gap below which neighbouring eigenvalues are treated as one cluster.
fn cluster_gap<T: Real>(scale: T) -> T {
    let base: T = lit(1e-9);
    let floor = T::default_epsilon() * lit(1e3) * scale;
    if floor > base {
        floor
    } else {
        base
    }
}

/// Hermitian eigen-decomposition with a deterministic basis.
///
/// Eigenvalues are sorted in descending order. Inside every cluster of
/// eigenvalues closer than `1e-9` the eigenvectors are replaced by the
/// pivoted Gram-Schmidt orthonormalization of the canonical unit vectors
/// projected onto the cluster's eigenspace, so the identity matrix yields
/// the canonical basis. Each eigenvector is then rotated so that its
/// largest-magnitude entry (lowest index among ties) is real positive.
pub fn herm_eig<T: Real>(m: &HermitianOperator<T>) -> Eigen<T> {
    herm_eig_matrix(m.matrix())
}

/// As [`herm_eig`], after checking Hermiticity.
pub fn herm_eig_checked<T: Real>(m: &ComplexMatrix<T>, tol: T) -> Result<Eigen<T>> {
    let op = HermitianOperator::with_tolerance(m.clone(), tol)?;
    Ok(herm_eig(&op))
}

pub(crate) fn herm_eig_matrix<T: Real>(m: &ComplexMatrix<T>) -> Eigen<T> {
    let n = m.nrows();
    let sym = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sym.eigenvalues[b]
            .partial_cmp(&sym.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values: Vec<T> = order.iter().map(|&k| sym.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &sym.eigenvectors.column(src));
    }

    let scale = values.iter().fold(T::one(), |acc, v| if v.abs() > acc { v.abs() } else { acc });
    let gap = cluster_gap(scale);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end - 1] - values[end] < gap {
            end += 1;
        }
        if end - start > 1 {
            canonicalize_cluster(&mut vectors, start, end);
        }
        start = end;
    }
    for k in 0..n {
        fix_phase(&mut vectors, k);
    }
    Eigen { values, vectors }
}

fn canonicalize_cluster<T: Real>(vectors: &mut ComplexMatrix<T>, start: usize, end: usize) {
    let n = vectors.nrows();
    let basis = vectors.columns(start, end - start).into_owned();
    let projector = &basis * basis.adjoint();
    let mut chosen: Vec<DVector<Complex<T>>> = Vec::with_capacity(end - start);
    let mut used = vec![false; n];
    while chosen.len() < end - start {
        // Candidate residuals of P e_k after removing the chosen directions.
        let mut best: Option<(usize, DVector<Complex<T>>, T)> = None;
        for k in (0..n).filter(|&k| !used[k]) {
            let mut w: DVector<Complex<T>> = projector.column(k).into_owned();
            for _ in 0..2 {
                for q in &chosen {
                    let c = q.dotc(&w);
                    w -= q * c;
                }
            }
            let norm = w.norm();
            let better = match &best {
                None => true,
                Some((_, _, b)) => norm > *b * (T::one() + lit(1e-9)),
            };
            if better {
                best = Some((k, w, norm));
            }
        }
        let (k, w, norm) = best.expect("cluster spans a subspace of the right size");
        used[k] = true;
        chosen.push(w.unscale(norm));
    }
    for (offset, q) in chosen.into_iter().enumerate() {
        vectors.set_column(start + offset, &q);
    }
}

fn fix_phase<T: Real>(vectors: &mut ComplexMatrix<T>, k: usize) {
    let col = vectors.column(k);
    let max = col.iter().fold(T::zero(), |acc, z| if modulus(*z) > acc { modulus(*z) } else { acc });
    if max == T::zero() {
        return;
    }
    let threshold = max * (T::one() - lit(1e-9));
    let pivot = col.iter().position(|z| modulus(*z) >= threshold).expect("max attained");
    let z = col[pivot];
    let phase = z.conj().unscale(modulus(z));
    let mut col = vectors.column_mut(k);
    col *= phase;
    col[pivot] = Complex::new(modulus(col[pivot]), T::zero());
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue<T: Real>(m: &ComplexMatrix<T>) -> T {
    let vals = hermitian_part(m).symmetric_eigenvalues();
    vals.iter().fold(T::max_value().expect("bounded scalar"), |acc, &v| if v < acc { v } else { acc })
}

/// `(is_psd, min_eig)` with `is_psd <=> min_eig >= -tol`.
pub fn psd_check<T: Real>(m: &HermitianOperator<T>, tol: T) -> (bool, T) {
    let min = m.min_eigenvalue();
    (min >= -tol, min)
}

/// PSD square root; eigenvalues in `[-tol_psd, tol_psd)` are clamped to 0.
pub fn mat_sqrt_psd<T: Real>(m: &HermitianOperator<T>) -> Result<HermitianOperator<T>> {
    let tol = Tolerances::<T>::default().psd;
    let (root, min) = spectral_map(m.matrix(), |x| if x < tol { T::zero() } else { x.sqrt() });
    if min < -tol {
        return Err(Error::Contract(format!(
            "square root of a non-PSD operator (min eigenvalue {:e})",
            min.to_f64_lossy()
        )));
    }
    Ok(HermitianOperator::from_hermitian_part(root))
}

/// Real power `m^p` of a positive definite operator.
pub fn mat_power_pd<T: Real>(m: &HermitianOperator<T>, p: T) -> Result<HermitianOperator<T>> {
    let (out, min) = spectral_map(m.matrix(), |x| x.powf(p));
    if min <= T::zero() {
        return Err(Error::Contract(format!(
            "power of a singular operator (min eigenvalue {:e})",
            min.to_f64_lossy()
        )));
    }
    Ok(HermitianOperator::from_hermitian_part(out))
}

/// `f(m)` for the Hermitian part of `m`, with the smallest eigenvalue.
///
/// Uses the solver's eigenvectors as they come: the canonical basis of
/// [`herm_eig`] merges nearly degenerate eigenvalues into one cluster,
/// which would perturb `f(m)` by the cluster width.
pub fn spectral_map<T: Real>(m: &ComplexMatrix<T>, f: impl Fn(T) -> T) -> (ComplexMatrix<T>, T) {
    let e = SymmetricEigen::new(hermitian_part(m));
    let min = e.eigenvalues.iter().fold(T::max_value().expect("bounded scalar"), |acc, &v| if v < acc { v } else { acc });
    let mut v = e.eigenvectors.clone();
    for (k, &x) in e.eigenvalues.iter().enumerate() {
        v.column_mut(k).scale_mut(f(x));
    }
    (hermitian_part(&(v * e.eigenvectors.adjoint())), min)
}

/// Block Schur-complement positivity test.
///
/// `m` is split into `n x n` blocks of size `block_dim`. The last block row
/// and column are eliminated through `m_ij - m_in m_nn^{-1} m_nj`, after
/// lifting the pivot block `m_nn` to smallest eigenvalue `eps` when it is
/// nearly singular. A pivot with eigenvalue below `-10 eps` decides
/// non-positivity immediately.
pub fn schur_positivity<T: Real>(m: &HermitianOperator<T>, block_dim: usize, eps: T) -> Result<bool> {
    let dim = m.dim();
    if block_dim == 0 || !dim.is_multiple_of(block_dim) {
        return Err(Error::Shape(format!("dimension {dim} is not a multiple of block size {block_dim}")));
    }
    let neg_tol = eps * lit(10.0);
    let mut cur = m.matrix().clone();
    loop {
        let size = cur.nrows();
        let last = size - block_dim;
        let pivot = hermitian_part(&cur.view((last, last), (block_dim, block_dim)).into_owned());
        let e = herm_eig_matrix(&pivot);
        if e.min() < -neg_tol {
            return Ok(false);
        }
        if last == 0 {
            return Ok(true);
        }
        let lift = if e.min() < eps { eps - e.min().min(T::zero()) } else { T::zero() };
        let inv = e.map(|x| T::one() / (x + lift));
        let upper = cur.view((0, last), (last, block_dim)).into_owned();
        let lower = cur.view((last, 0), (block_dim, last)).into_owned();
        let head = cur.view((0, 0), (last, last)).into_owned();
        cur = hermitian_part(&(head - upper * inv * lower));
    }
}
