//! GNS triple of `(B(H), omega)` for a faithful state `omega = Tr(rho .)`
//! and the operators of modular theory on it.
//!
//! The GNS space is the matrix space `M_n` with `(a, b) = Tr(a^dagger b)`,
//! the cyclic vector is `Omega = rho^{1/2}` and `pi(a)` is left
//! multiplication. With `x_i` the eigenvectors of `rho` (fixed by the
//! deterministic convention of [`crate::linalg::herm_eig`]) the matrix
//! units `E_ij = |x_i><x_j|` form an orthonormal basis; a vector's
//! *coordinates* are `c_ij = (E_ij, xi) = <x_i, xi x_j>`, flattened
//! row-major as `i * n + j`. In these coordinates
//!
//! * `Delta^beta` multiplies `c_ij` by `(lambda_i / lambda_j)^beta`,
//! * `J_m` maps `c` to `c^dagger`, `J` maps `c` to `conj(c)`,
//! * `U` maps `c` to `c^T`.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, ComplexMatrix, DensityMatrix, Eigen, HermitianOperator};
use crate::{lit, rng, Error, Real, Result, Tolerances};

/// Largest `|beta * log(lambda_i / lambda_j)|` accepted before `exp` is
/// considered to overflow.
pub const MAX_LOG_SCALE: f64 = 700.0;

/// `lambda_min / lambda_max` below which reports carry a condition warning.
pub const CONDITION_WARNING_RATIO: f64 = 1e-6;

/// Element of the GNS space, stored as the matrix `a rho^{1/2}` in the
/// canonical basis of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnsVector<T: Real> {
    mat: ComplexMatrix<T>,
    context_id: u64,
}

impl<T: Real> GnsVector<T> {
    pub fn mat(&self) -> &ComplexMatrix<T> {
        &self.mat
    }

    pub fn into_mat(self) -> ComplexMatrix<T> {
        self.mat
    }

    pub fn context_id(&self) -> u64 {
        self.context_id
    }

    /// `(self, other) = Tr(self^dagger other)`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        linalg::hs_inner(&self.mat, &other.mat)
    }

    pub fn norm(&self) -> T {
        self.mat.norm()
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        self.with_mat(self.mat.map(|z| z * c))
    }

    pub fn add(&self, other: &Self) -> Self {
        self.with_mat(&self.mat + &other.mat)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.with_mat(&self.mat - &other.mat)
    }

    pub fn distance(&self, other: &Self) -> T {
        (&self.mat - &other.mat).norm()
    }

    pub fn normalized(&self) -> Self {
        self.with_mat(self.mat.unscale(self.norm()))
    }

    /// Density of the vector state `omega_xi(a) = (xi, a xi)`, i.e.
    /// `mat mat^dagger`.
    pub fn density(&self) -> ComplexMatrix<T> {
        &self.mat * self.mat.adjoint()
    }

    fn with_mat(&self, mat: ComplexMatrix<T>) -> Self {
        Self { mat, context_id: self.context_id }
    }
}

/// Permutation of GNS coordinates: `out[k] = in[source[k]]`. This is the
/// linear part of every conjugation and unitary used here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordPermutation {
    source: Vec<usize>,
}

impl CoordPermutation {
    pub fn identity(len: usize) -> Self {
        Self { source: (0..len).collect() }
    }

    /// Index permutation realizing `c -> c^T` on `n x n` coordinates.
    pub fn transpose(n: usize) -> Self {
        Self { source: (0..n * n).map(|k| (k % n) * n + k / n).collect() }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn apply<T: Real>(&self, coords: &[Complex<T>]) -> Vec<Complex<T>> {
        self.source.iter().map(|&s| coords[s]).collect()
    }

    /// Dense permutation matrix.
    pub fn to_dense<T: Real>(&self) -> ComplexMatrix<T> {
        let n = self.len();
        let mut m = ComplexMatrix::zeros(n, n);
        for (k, &s) in self.source.iter().enumerate() {
            m[(k, s)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn compose(&self, inner: &Self) -> Self {
        Self { source: self.source.iter().map(|&s| inner.source[s]).collect() }
    }

    pub fn is_involution(&self) -> bool {
        self.source.iter().enumerate().all(|(k, &s)| self.source[s] == k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConjugationKind {
    /// `J_m a rho^{1/2} = rho^{1/2} a^*`.
    Modular,
    /// `J`: complex conjugation of the `E_ij` coordinates.
    Basis,
    /// `J_c` on `H`: complex conjugation of the eigenbasis coordinates.
    Hilbert,
}

/// Antilinear operator `xi -> L conj(coords(xi))` where `L` is a
/// coordinate permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct AntilinearOp {
    kind: ConjugationKind,
    linear_part: CoordPermutation,
    involution: bool,
    context_id: u64,
}

impl AntilinearOp {
    pub fn kind(&self) -> ConjugationKind {
        self.kind
    }

    pub fn linear_part(&self) -> &CoordPermutation {
        &self.linear_part
    }

    pub fn linear_part_matrix<T: Real>(&self) -> ComplexMatrix<T> {
        self.linear_part.to_dense()
    }

    pub fn is_involution(&self) -> bool {
        self.involution
    }
}

/// GNS data of a faithful state together with `Delta`, `J_m`, `J`, `J_c`
/// and `U`. Immutable once built.
#[derive(Debug, Clone)]
pub struct GnsContext<T: Real> {
    rho: DensityMatrix<T>,
    eigvals: Vec<T>,
    eigvecs: ComplexMatrix<T>,
    sqrt_rho: ComplexMatrix<T>,
    inv_sqrt_rho: ComplexMatrix<T>,
    omega: GnsVector<T>,
    log_ratio: DMatrix<T>,
    u_op: CoordPermutation,
    jm: AntilinearOp,
    j: AntilinearOp,
    jc: AntilinearOp,
    id: u64,
}

/// Builds the GNS context of `rho`, which must be faithful.
pub fn build_gns<T: Real>(rho: &DensityMatrix<T>) -> Result<GnsContext<T>> {
    let eig = rho.operator().eig();
    GnsContext::from_eigen(rho.clone(), eig)
}

impl<T: Real> GnsContext<T> {
    /// Builds a context from a prescribed orthonormal eigenbasis of `rho`.
    /// Composite contexts use this to keep the product basis.
    pub(crate) fn from_eigen(rho: DensityMatrix<T>, eig: Eigen<T>) -> Result<Self> {
        let n = rho.dim();
        linalg::check_dim(n * n)?;
        let threshold = Tolerances::<T>::default().faithful;
        if let Some((index, &eigenvalue)) = eig
            .values
            .iter()
            .enumerate()
            .find(|(_, &v)| v < threshold)
        {
            return Err(Error::NotFaithful {
                index,
                eigenvalue: eigenvalue.to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
        let sqrt_rho = eig.map(|x| x.sqrt());
        let inv_sqrt_rho = eig.map(|x| T::one() / x.sqrt());
        let log_ratio = DMatrix::from_fn(n, n, |i, j| eig.values[i].ln() - eig.values[j].ln());
        let id = fingerprint(&rho, &eig);
        let omega = GnsVector { mat: sqrt_rho.clone(), context_id: id };
        let transpose = CoordPermutation::transpose(n);
        Ok(Self {
            jm: AntilinearOp { kind: ConjugationKind::Modular, linear_part: transpose.clone(), involution: true, context_id: id },
            j: AntilinearOp {
                kind: ConjugationKind::Basis,
                linear_part: CoordPermutation::identity(n * n),
                involution: true,
                context_id: id,
            },
            jc: AntilinearOp {
                kind: ConjugationKind::Hilbert,
                linear_part: CoordPermutation::identity(n),
                involution: true,
                context_id: id,
            },
            u_op: transpose,
            rho,
            eigvals: eig.values,
            eigvecs: eig.vectors,
            sqrt_rho,
            inv_sqrt_rho,
            omega,
            log_ratio,
            id,
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn rho(&self) -> &DensityMatrix<T> {
        &self.rho
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigvals
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix<T> {
        &self.eigvecs
    }

    pub fn omega(&self) -> &GnsVector<T> {
        &self.omega
    }

    pub fn sqrt_rho(&self) -> &ComplexMatrix<T> {
        &self.sqrt_rho
    }

    pub fn inv_sqrt_rho(&self) -> &ComplexMatrix<T> {
        &self.inv_sqrt_rho
    }

    /// `log(lambda_i / lambda_j)`.
    pub fn log_ratio(&self) -> &DMatrix<T> {
        &self.log_ratio
    }

    pub fn u_op(&self) -> &CoordPermutation {
        &self.u_op
    }

    pub fn jm(&self) -> &AntilinearOp {
        &self.jm
    }

    pub fn j(&self) -> &AntilinearOp {
        &self.j
    }

    pub fn jc(&self) -> &AntilinearOp {
        &self.jc
    }

    /// `lambda_min / lambda_max`.
    pub fn condition_ratio(&self) -> T {
        let max = self.eigvals.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
        let min = self.eigvals.iter().copied().fold(max, |a, b| if b < a { b } else { a });
        min / max
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.condition_ratio() < lit(CONDITION_WARNING_RATIO)
    }

    /// `rho^p` for real `p`, from the eigen-data.
    pub fn rho_power(&self, p: T) -> ComplexMatrix<T> {
        Eigen { values: self.eigvals.clone(), vectors: self.eigvecs.clone() }.map(|x| x.powf(p))
    }

    /// Wraps an `n x n` matrix as a vector of this GNS space.
    pub fn vector(&self, mat: ComplexMatrix<T>) -> Result<GnsVector<T>> {
        let n = self.dim();
        if mat.shape() != (n, n) {
            return Err(Error::Shape(format!("GNS vector must be {n}x{n}, got {}x{}", mat.nrows(), mat.ncols())));
        }
        Ok(GnsVector { mat, context_id: self.id })
    }

    /// `a Omega`.
    pub fn vector_of_operator(&self, a: &ComplexMatrix<T>) -> Result<GnsVector<T>> {
        self.check_operator(a)?;
        Ok(GnsVector { mat: a * &self.sqrt_rho, context_id: self.id })
    }

    /// The unique `a` with `xi = a Omega`, namely `mat(xi) rho^{-1/2}`.
    pub fn operator_of(&self, xi: &GnsVector<T>) -> Result<ComplexMatrix<T>> {
        self.ensure(xi)?;
        Ok(&xi.mat * &self.inv_sqrt_rho)
    }

    /// `pi(a) xi = a xi`.
    pub fn pi(&self, a: &ComplexMatrix<T>, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        self.check_operator(a)?;
        self.ensure(xi)?;
        Ok(xi.with_mat(a * &xi.mat))
    }

    /// `omega(a) = Tr(rho a)`.
    pub fn state(&self, a: &ComplexMatrix<T>) -> Complex<T> {
        (self.rho.matrix() * a).trace()
    }

    pub fn coords(&self, xi: &GnsVector<T>) -> Result<ComplexMatrix<T>> {
        self.ensure(xi)?;
        Ok(self.eigvecs.adjoint() * &xi.mat * &self.eigvecs)
    }

    pub fn from_coords(&self, c: &ComplexMatrix<T>) -> Result<GnsVector<T>> {
        let n = self.dim();
        if c.shape() != (n, n) {
            return Err(Error::Shape(format!("coordinates must be {n}x{n}")));
        }
        Ok(GnsVector { mat: &self.eigvecs * c * self.eigvecs.adjoint(), context_id: self.id })
    }

    pub(crate) fn ensure(&self, xi: &GnsVector<T>) -> Result<()> {
        if xi.context_id != self.id {
            return Err(Error::Contract(format!(
                "vector belongs to GNS context {:#x}, not {:#x}",
                xi.context_id, self.id
            )));
        }
        Ok(())
    }

    fn check_operator(&self, a: &ComplexMatrix<T>) -> Result<()> {
        let n = self.dim();
        if a.shape() != (n, n) {
            return Err(Error::Shape(format!("operator must be {n}x{n}, got {}x{}", a.nrows(), a.ncols())));
        }
        Ok(())
    }

    fn check_log_scale(&self, beta: T) -> Result<()> {
        let limit: T = lit(MAX_LOG_SCALE);
        let worst = self.log_ratio.iter().fold(T::zero(), |acc, &l| {
            let s = (beta * l).abs();
            if s > acc {
                s
            } else {
                acc
            }
        });
        if worst > limit {
            return Err(Error::Condition(format!(
                "|beta log(lambda_i/lambda_j)| = {:e} exceeds {MAX_LOG_SCALE} (beta = {}, condition ratio {:e})",
                worst.to_f64_lossy(),
                beta.to_f64_lossy(),
                self.condition_ratio().to_f64_lossy()
            )));
        }
        Ok(())
    }

    /// `Delta^beta xi`: coordinate `c_ij` is scaled by `(lambda_i/lambda_j)^beta`.
    pub fn apply_delta_power(&self, beta: T, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        self.check_log_scale(beta)?;
        let mut c = self.coords(xi)?;
        for ((i, j), z) in c.iter_mut().enumerate().map(|(k, z)| ((k % self.dim(), k / self.dim()), z)) {
            *z *= (beta * self.log_ratio[(i, j)]).exp();
        }
        self.from_coords(&c)
    }

    /// Applies `J_m` or `J` by its defining formula.
    ///
    /// `J_m` is evaluated as `rho^{1/2} a^*` with `a = mat(xi) rho^{-1/2}`;
    /// `J` conjugates the `E_ij` coordinates.
    pub fn apply_conjugation(&self, op: &AntilinearOp, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        self.ensure(xi)?;
        if op.context_id != self.id {
            return Err(Error::Contract("conjugation belongs to another GNS context".into()));
        }
        match op.kind {
            ConjugationKind::Modular => {
                let a = self.operator_of(xi)?;
                Ok(xi.with_mat(&self.sqrt_rho * a.adjoint()))
            }
            ConjugationKind::Basis => {
                let c = self.coords(xi)?;
                self.from_coords(&linalg::conj(&c))
            }
            ConjugationKind::Hilbert => Err(Error::Contract("J_c acts on H, not on the GNS space".into())),
        }
    }

    /// Applies an antilinear operator through its coordinate
    /// representation `L conj(coords)`.
    pub fn apply_conjugation_coordinates(&self, op: &AntilinearOp, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        if op.context_id != self.id {
            return Err(Error::Contract("conjugation belongs to another GNS context".into()));
        }
        if op.kind == ConjugationKind::Hilbert {
            return Err(Error::Contract("J_c acts on H, not on the GNS space".into()));
        }
        let c = self.coords(xi)?;
        self.from_coords(&self.permute_coords(&op.linear_part, &linalg::conj(&c)))
    }

    /// `J_c f = sum_i conj(<x_i, f>) x_i` for `f` in `H`.
    pub fn apply_jc(&self, f: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        let c = self.eigvecs.adjoint() * f;
        &self.eigvecs * c.map(|z| z.conj())
    }

    fn permute_coords(&self, p: &CoordPermutation, c: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        let n = self.dim();
        let flat: Vec<Complex<T>> = (0..n * n).map(|k| c[(k / n, k % n)]).collect();
        let out = p.apply(&flat);
        DMatrix::from_fn(n, n, |i, j| out[i * n + j])
    }

    /// `U E_ij = E_ji`.
    pub fn apply_u(&self, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        let c = self.coords(xi)?;
        self.from_coords(&c.transpose())
    }

    /// `U` through its permutation matrix on the flattened coordinates.
    pub fn apply_u_coordinates(&self, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        let c = self.coords(xi)?;
        self.from_coords(&self.permute_coords(&self.u_op, &c))
    }

    /// `a^t = J_c a^* J_c`, evaluated column by column from the definition
    /// of `J_c`.
    pub fn transpose_operator(&self, a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        self.check_operator(a)?;
        let n = self.dim();
        let a_star = a.adjoint();
        let mut out = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = Complex::new(T::one(), T::zero());
            let col = self.apply_jc(&(&a_star * self.apply_jc(&e)));
            out.set_column(k, &col);
        }
        Ok(out)
    }

    /// `tau(a Omega) = a^t Omega`.
    pub fn apply_tau(&self, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        let a = self.operator_of(xi)?;
        let at = self.transpose_operator(&a)?;
        Ok(xi.with_mat(at * &self.sqrt_rho))
    }

    /// `alpha(pi(a)) xi = U a U xi`.
    pub fn apply_alpha(&self, a: &ComplexMatrix<T>, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        let inner = self.pi(a, &self.apply_u(xi)?)?;
        self.apply_u(&inner)
    }

    /// Checks the modular identities on `samples` random vectors and
    /// operators.
    pub fn verify_modular_identities(&self, samples: usize, seed: u64) -> Result<ModularReport> {
        let mut res = Residuals::default();
        let omega = &self.omega;
        let j = &self.j;
        let jm = &self.jm;

        res.record("omega_j_fixed", self.apply_conjugation(j, omega)?.distance(omega));
        res.record("omega_jm_fixed", self.apply_conjugation(jm, omega)?.distance(omega));
        res.record("omega_u_fixed", self.apply_u(omega)?.distance(omega));
        res.record("omega_delta_fixed", self.apply_delta_power(T::one(), omega)?.distance(omega));
        res.record(
            "u_permutation_involution",
            if self.u_op.is_involution() { T::zero() } else { T::one() },
        );

        let mut negative_control = T::zero();
        let half: T = lit(0.5);
        for s in 0..samples.max(1) {
            let mut r = rng::stream_rng(seed, s as u64);
            let n = self.dim();
            let xi = self.vector(rng::unit_matrix(&mut r, n, n))?;
            let eta = self.vector(rng::unit_matrix(&mut r, n, n))?;
            let a = rng::unit_matrix::<T, _>(&mut r, n, n);
            let b = rng::unit_matrix::<T, _>(&mut r, n, n);
            let c = Complex::new(rng::normal::<T, _>(&mut r), rng::normal::<T, _>(&mut r));

            let u_xi = self.apply_u(&xi)?;
            let u_eta = self.apply_u(&eta)?;
            let j_xi = self.apply_conjugation(j, &xi)?;
            let jm_xi = self.apply_conjugation(jm, &xi)?;

            res.record("u_squared", self.apply_u(&u_xi)?.distance(&xi));
            res.record("u_selfadjoint", linalg::modulus(xi.inner(&u_eta) - u_xi.inner(&eta)));
            res.record("u_coordinate_route", self.apply_u_coordinates(&xi)?.distance(&u_xi));
            res.record("j_involution", self.apply_conjugation(j, &j_xi)?.distance(&xi));
            res.record("jm_involution", self.apply_conjugation(jm, &jm_xi)?.distance(&xi));
            res.record("jm_coordinate_route", self.apply_conjugation_coordinates(jm, &xi)?.distance(&jm_xi));
            res.record("jm_is_adjoint", (&jm_xi.mat - xi.mat.adjoint()).norm());
            res.record("j_equals_u_jm", self.apply_u(&jm_xi)?.distance(&j_xi));
            res.record(
                "j_antilinear",
                self.apply_conjugation(j, &xi.scale(c))?.distance(&j_xi.scale(c.conj())),
            );
            res.record("commute_j_jm", {
                let lhs = self.apply_conjugation(j, &jm_xi)?;
                let rhs = self.apply_conjugation(jm, &j_xi)?;
                lhs.distance(&rhs)
            });
            res.record("commute_j_u", self.apply_conjugation(j, &u_xi)?.distance(&self.apply_u(&j_xi)?));
            res.record("commute_jm_u", self.apply_conjugation(jm, &u_xi)?.distance(&self.apply_u(&jm_xi)?));

            let dh_xi = self.apply_delta_power(half, &xi)?;
            res.record(
                "j_delta_half",
                self.apply_delta_power(half, &j_xi)?.distance(&self.apply_conjugation(j, &dh_xi)?),
            );
            for (label, beta) in [("u_delta_quarter", 0.25), ("u_delta_half", 0.5), ("u_delta", 1.0)] {
                let beta: T = lit(beta);
                let lhs = self.apply_u(&self.apply_delta_power(beta, &xi)?)?;
                let rhs = self.apply_delta_power(-beta, &u_xi)?;
                res.record(label, lhs.distance(&rhs));
            }
            res.record(
                "delta_inverse",
                self.apply_delta_power(-half, &dh_xi)?.distance(&xi),
            );

            // alpha(pi(a)) lies in the commutant of pi(B(H)).
            let alpha_then_b = self.pi(&b, &self.apply_alpha(&a, &xi)?)?;
            let b_then_alpha = self.apply_alpha(&a, &self.pi(&b, &xi)?)?;
            res.record("alpha_commutant", alpha_then_b.distance(&b_then_alpha));
            let plain = self.pi(&b, &self.pi(&a, &xi)?)?.distance(&self.pi(&a, &self.pi(&b, &xi)?)?);
            if plain > negative_control {
                negative_control = plain;
            }

            // Transposition: tau = U Delta^{1/2} and a^t xi = J a^* J xi.
            let a_omega = self.vector_of_operator(&a)?;
            let tau = self.apply_tau(&a_omega)?;
            let polar = self.apply_u(&self.apply_delta_power(half, &a_omega)?)?;
            res.record("polar_decomposition", tau.distance(&polar));
            let at = self.transpose_operator(&a)?;
            let lhs = self.pi(&at, &xi)?;
            let rhs = self.apply_conjugation(j, &self.pi(&a.adjoint(), &j_xi)?)?;
            res.record("transposition", lhs.distance(&rhs));

            let state = self.state(&a);
            res.record("gns_state", linalg::modulus(state - omega.inner(&self.pi(&a, omega)?)));
        }

        let tolerance = 1e-10;
        let max_residual = res.max();
        Ok(ModularReport {
            dim: self.dim(),
            samples,
            seed,
            condition_ratio: self.condition_ratio().to_f64_lossy(),
            condition_warning: self.is_ill_conditioned(),
            residuals: res.into_map(),
            negative_control_commutant: negative_control.to_f64_lossy(),
            max_residual,
            tolerance,
            passed: max_residual <= tolerance,
        })
    }
}

/// Running maxima of named residuals.
#[derive(Debug, Default)]
pub(crate) struct Residuals {
    map: BTreeMap<String, f64>,
}

impl Residuals {
    pub(crate) fn record<T: Real>(&mut self, name: &str, value: T) {
        let v = value.to_f64_lossy();
        let entry = self.map.entry(name.to_string()).or_insert(0.0);
        if v > *entry || v.is_nan() {
            *entry = v;
        }
    }

    pub(crate) fn max(&self) -> f64 {
        self.map.values().fold(0.0, |a, &b| if b > a || b.is_nan() { b } else { a })
    }

    pub(crate) fn into_map(self) -> BTreeMap<String, f64> {
        self.map
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularReport {
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub condition_ratio: f64,
    pub condition_warning: bool,
    /// Maximum over samples of each identity's residual.
    pub residuals: BTreeMap<String, f64>,
    /// `max ||[pi(a), pi(b)] xi||`: the commutant check with `alpha`
    /// replaced by the identity. Expected to be far from zero.
    pub negative_control_commutant: f64,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn fingerprint<T: Real>(rho: &DensityMatrix<T>, eig: &Eigen<T>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    rho.dim().hash(&mut h);
    for z in rho.matrix().iter().chain(eig.vectors.iter()) {
        z.re.to_f64_lossy().to_bits().hash(&mut h);
        z.im.to_f64_lossy().to_bits().hash(&mut h);
    }
    h.finish()
}

/// Random faithful density with smallest eigenvalue at least
/// `mix / n`, as used by the sampling suites.
pub fn random_faithful<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityMatrix<T> {
    rng::faithful_density(rng, n, 0.3)
}

/// `rho = diag(values)` in the canonical basis.
pub fn diagonal_density<T: Real>(values: &[f64]) -> Result<DensityMatrix<T>> {
    let d: Vec<T> = values.iter().map(|&v| lit(v)).collect();
    DensityMatrix::new(HermitianOperator::from_real_diagonal(&d).into_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matrix_unit, max_abs};

    type C = Complex<f64>;

    fn ctx_diag() -> GnsContext<f64> {
        build_gns(&diagonal_density(&[2.0 / 3.0, 1.0 / 3.0]).unwrap()).unwrap()
    }

    #[test]
    fn tracial_state() {
        let ctx = build_gns(&DensityMatrix::<f64>::maximally_mixed(2)).unwrap();
        assert_eq!(ctx.eigenvalues(), &[0.5, 0.5]);
        let expected = ComplexMatrix::<f64>::identity(2, 2).scale(0.5f64.sqrt());
        assert!(max_abs(&(ctx.omega().mat() - expected)) < 1e-15);
        let mut r = rng::seeded(1);
        let xi = ctx.vector(rng::unit_matrix(&mut r, 2, 2)).unwrap();
        assert!(ctx.apply_delta_power(1.0, &xi).unwrap().distance(&xi) < 1e-15);
    }

    #[test]
    fn delta_on_matrix_units() {
        let ctx = ctx_diag();
        let e12 = ctx.vector(matrix_unit(2, 0, 1)).unwrap();
        let e21 = ctx.vector(matrix_unit(2, 1, 0)).unwrap();
        let d12 = ctx.apply_delta_power(1.0, &e12).unwrap();
        let d21 = ctx.apply_delta_power(1.0, &e21).unwrap();
        assert!(max_abs(&(d12.mat() - matrix_unit::<f64>(2, 0, 1).scale(2.0))) < 1e-14);
        assert!(max_abs(&(d21.mat() - matrix_unit::<f64>(2, 1, 0).scale(0.5))) < 1e-14);

        let half = ctx.apply_delta_power(0.5, &e12).unwrap();
        assert!(max_abs(&(half.mat() - matrix_unit::<f64>(2, 0, 1).scale(2f64.sqrt()))) < 1e-14);
        assert_eq!(ctx.apply_delta_power(0.0, &e12).unwrap().mat(), e12.mat());
        let id_omega = ctx.vector_of_operator(&ComplexMatrix::identity(2, 2)).unwrap();
        assert!(ctx.apply_delta_power(0.25, &id_omega).unwrap().distance(ctx.omega()) < 1e-15);
    }

    #[test]
    fn non_faithful_is_rejected() {
        let rho = diagonal_density::<f64>(&[1.0, 0.0]).unwrap();
        match build_gns(&rho) {
            Err(Error::NotFaithful { index, eigenvalue, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(eigenvalue, 0.0);
            }
            other => panic!("expected faithfulness error, got {other:?}"),
        }
    }

    #[test]
    fn delta_overflow_is_reported() {
        let rho = diagonal_density::<f64>(&[1.0 - 1e-10, 1e-10]).unwrap();
        let ctx = build_gns(&rho).unwrap();
        assert!(ctx.is_ill_conditioned());
        let xi = ctx.omega().clone();
        assert!(matches!(ctx.apply_delta_power(40.0, &xi), Err(Error::Condition(_))));
        assert!(ctx.apply_delta_power(1.0, &xi).is_ok());
    }

    #[test]
    fn conjugations_on_omega_and_scalars() {
        let ctx = ctx_diag();
        let omega = ctx.omega();
        assert!(ctx.apply_conjugation(ctx.jm(), omega).unwrap().distance(omega) < 1e-15);
        assert!(ctx.apply_conjugation(ctx.j(), omega).unwrap().distance(omega) < 1e-15);
        let c = C::new(0.3, -1.7);
        let lhs = ctx.apply_conjugation(ctx.j(), &omega.scale(c)).unwrap();
        assert!(lhs.distance(&omega.scale(c.conj())) < 1e-15);
    }

    #[test]
    fn modular_conjugation_of_matrix_unit() {
        // J_m(E_12 Omega) = rho^{1/2} E_21, computed by hand.
        let ctx = ctx_diag();
        let a = matrix_unit::<f64>(2, 0, 1);
        let xi = ctx.vector_of_operator(&a).unwrap();
        let out = ctx.apply_conjugation(ctx.jm(), &xi).unwrap();
        let expected = matrix_unit::<f64>(2, 1, 0).scale((1.0f64 / 3.0).sqrt());
        assert!(max_abs(&(out.mat() - &expected)) < 1e-15, "{}", out.mat());
        assert!(max_abs(&(ctx.sqrt_rho() * a.adjoint() - expected)) < 1e-15);
    }

    #[test]
    fn context_mismatch_is_a_contract_error() {
        let a = ctx_diag();
        let b = build_gns(&DensityMatrix::<f64>::maximally_mixed(2)).unwrap();
        assert!(matches!(a.apply_u(b.omega()), Err(Error::Contract(_))));
        assert!(matches!(a.apply_conjugation(b.j(), a.omega()), Err(Error::Contract(_))));
    }

    #[test]
    fn u_examples() {
        let ctx = ctx_diag();
        let e12 = ctx.vector(matrix_unit(2, 0, 1)).unwrap();
        assert_eq!(ctx.apply_u(&e12).unwrap().mat(), &matrix_unit(2, 1, 0));
        assert!(ctx.apply_u(ctx.omega()).unwrap().distance(ctx.omega()) < 1e-15);
        let mut r = rng::seeded(4);
        for _ in 0..20 {
            let xi = ctx.vector(rng::unit_matrix(&mut r, 2, 2)).unwrap();
            let eta = ctx.vector(rng::unit_matrix(&mut r, 2, 2)).unwrap();
            let lhs = xi.inner(&ctx.apply_u(&eta).unwrap());
            let rhs = ctx.apply_u(&xi).unwrap().inner(&eta);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn u_in_rotated_eigenbasis() {
        let mut r = rng::seeded(21);
        let ctx = build_gns(&random_faithful::<f64, _>(&mut r, 3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let x = ctx.eigenvectors();
                let eij = x.column(i) * x.column(j).adjoint();
                let eji = x.column(j) * x.column(i).adjoint();
                let out = ctx.apply_u(&ctx.vector(eij).unwrap()).unwrap();
                assert!(max_abs(&(out.mat() - eji)) < 1e-13);
            }
        }
        let dense: ComplexMatrix<f64> = ctx.u_op().to_dense();
        assert_eq!(&dense * &dense, ComplexMatrix::identity(9, 9));
        assert_eq!(dense.adjoint(), dense);
    }

    #[test]
    fn transpose_operator_examples() {
        let ctx = ctx_diag();
        let id = ComplexMatrix::<f64>::identity(2, 2);
        assert!(max_abs(&(ctx.transpose_operator(&id).unwrap() - &id)) < 1e-15);
        let e12 = matrix_unit::<f64>(2, 0, 1);
        assert!(max_abs(&(ctx.transpose_operator(&e12).unwrap() - matrix_unit(2, 1, 0))) < 1e-15);

        let mut r = rng::seeded(9);
        let ctx = build_gns(&random_faithful::<f64, _>(&mut r, 4)).unwrap();
        for _ in 0..50 {
            let a = rng::hermitian::<f64, _>(&mut r, 4);
            let at = ctx.transpose_operator(a.matrix()).unwrap();
            let ea = linalg::herm_eig(&a).values;
            let et = linalg::herm_eig(&HermitianOperator::new(at.clone()).unwrap()).values;
            for (x, y) in ea.iter().zip(&et) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!(max_abs(&(ctx.transpose_operator(&at).unwrap() - a.matrix())) < 1e-13);
            let b = rng::unit_matrix::<f64, _>(&mut r, 4, 4);
            let lhs = ctx.transpose_operator(&(a.matrix() * &b)).unwrap();
            let rhs = ctx.transpose_operator(&b).unwrap() * at;
            assert!(max_abs(&(lhs - rhs)) < 1e-13);
        }
    }

    #[test]
    fn tau_examples() {
        let ctx = ctx_diag();
        assert!(ctx.apply_tau(ctx.omega()).unwrap().distance(ctx.omega()) < 1e-15);
        let a = matrix_unit::<f64>(2, 0, 1);
        let xi = ctx.vector_of_operator(&a).unwrap();
        let tau = ctx.apply_tau(&xi).unwrap();
        let expected = matrix_unit::<f64>(2, 1, 0) * ctx.sqrt_rho();
        assert!(max_abs(&(tau.mat() - &expected)) < 1e-15);
        let polar = ctx.apply_u(&ctx.apply_delta_power(0.5, &xi).unwrap()).unwrap();
        assert!(max_abs(&(polar.mat() - expected)) < 1e-14);
    }

    #[test]
    fn tau_matches_polar_decomposition_on_random_operators() {
        for n in 2..=4 {
            let mut r = rng::seeded(100 + n as u64);
            let ctx = build_gns(&random_faithful::<f64, _>(&mut r, n)).unwrap();
            for _ in 0..200 {
                let a = rng::unit_matrix::<f64, _>(&mut r, n, n);
                let xi = ctx.vector_of_operator(&a).unwrap();
                let lhs = ctx.apply_tau(&xi).unwrap();
                let rhs = ctx.apply_u(&ctx.apply_delta_power(0.5, &xi).unwrap()).unwrap();
                assert!(lhs.distance(&rhs) <= 1e-10);
            }
        }
    }

    #[test]
    fn gns_state_matches_trace() {
        let mut r = rng::seeded(17);
        let ctx = build_gns(&random_faithful::<f64, _>(&mut r, 3)).unwrap();
        for _ in 0..50 {
            let a = rng::unit_matrix::<f64, _>(&mut r, 3, 3);
            let lhs = ctx.state(&a);
            let rhs = ctx.omega().inner(&ctx.pi(&a, ctx.omega()).unwrap());
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn modular_identities_tracial_and_diagonal() {
        let ctx = build_gns(&DensityMatrix::<f64>::maximally_mixed(2)).unwrap();
        let rep = ctx.verify_modular_identities(20, 0).unwrap();
        assert!(rep.max_residual <= 1e-12, "{rep:?}");

        let rep = ctx_diag().verify_modular_identities(100, 1).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.negative_control_commutant > 0.1, "{rep:?}");
    }

    #[test]
    fn linear_parts_are_involutions() {
        let ctx = ctx_diag();
        for op in [ctx.j(), ctx.jm(), ctx.jc()] {
            assert!(op.is_involution());
            assert!(op.linear_part().is_involution());
        }
        let jm: ComplexMatrix<f64> = ctx.jm().linear_part_matrix();
        assert_eq!(&jm * &jm, ComplexMatrix::identity(4, 4));
    }

    #[test]
    fn single_precision_context() {
        let mut r = rng::seeded(2);
        let ctx = build_gns(&random_faithful::<f32, _>(&mut r, 3)).unwrap();
        let rep = ctx.verify_modular_identities(10, 3).unwrap();
        assert!(rep.max_residual < 1e-4, "{rep:?}");
    }
}
