//! Constructive recipes and experiments on top of the cone and optimizer
//! layers: the anticommutator criterion on `C^2 (x) C^m`, PPT states built
//! from the cone intersection, and the square-root probe.
//!
//! # Anticommutator criterion
//!
//! For `rho` on `C^2 (x) C^m`, a unit `f in C^2` and Hermitian `A` on `C^2`
//! the hypothesis `<f (x) y, {A (x) 1, rho} f (x) y> = 0` for all `y` is
//! the vanishing of the `m x m` compression
//!
//! ```text
//! M(A) = (f^dagger (x) 1) {A (x) 1, rho} (f (x) 1)
//!      = sum_ij (conj(g_i) f_j + conj(f_i) g_j) rho_ij,   g = A f,
//! ```
//!
//! which is real-linear in the four Pauli coordinates of `A`. The
//! projection `A = 1 - f f^dagger` has `g = 0` and always solves it, so
//! instances with `A f = 0` are called degenerate and tallied separately.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{self, CompositeGnsContext, MembershipVerdict};
use crate::gns;
use crate::io::{MatrixFile, MatrixKind};
use crate::linalg::{self, BipartiteShape, ComplexMatrix, DensityMatrix, HermitianOperator, Subsystem};
use crate::optim::{self, PptSetSpec};
use crate::rng;
use crate::separable::{self, SeparableSummary};
use crate::{lit, Error, Real, Result};

/// Singular values below this span the solution space.
pub const NULLSPACE_TOL: f64 = 1e-9;
/// Largest accepted residual of a valid instance.
pub const INSTANCE_TOL: f64 = 1e-9;
/// `rho^Gamma` eigenvalues below `-PPT_TOL` count as a falsification.
pub const PPT_TOL: f64 = 1e-9;
/// Counterexamples kept per report.
pub const MAX_COUNTEREXAMPLES: usize = 10;
/// Largest joint dimension accepted by [`construct_ppt_from_cone`].
pub const MAX_CONSTRUCTION_DIM: usize = 81;
/// Iterations of the separable approximation in constructions.
pub const SEPARABLE_ITERS: usize = 60;

#[derive(Debug, Clone)]
pub struct AnticommutatorInstance<T: Real> {
    pub rho: DensityMatrix<T>,
    pub f: DVector<Complex<T>>,
    pub a_op: HermitianOperator<T>,
    /// `max_y |<f (x) y, {A (x) 1, rho} f (x) y>|` over a polarization set
    /// of `y`, with `||A||_F = 1`.
    pub residual: T,
    pub shape: BipartiteShape,
}

impl<T: Real> AnticommutatorInstance<T> {
    /// Validates the instance, recomputing the residual from the full
    /// anticommutator.
    pub fn new(rho: DensityMatrix<T>, f: DVector<Complex<T>>, a_op: HermitianOperator<T>) -> Result<Self> {
        let shape = qubit_shape(&rho)?;
        check_unit(&f)?;
        if a_op.dim() != 2 {
            return Err(Error::Shape(format!("A must act on C^2, has dimension {}", a_op.dim())));
        }
        if a_op.matrix().norm() == T::zero() {
            return Err(Error::Contract("A must be nonzero".into()));
        }
        let residual = basis_residual(&rho, &f, &a_op, shape)?;
        Ok(Self { rho, f, a_op, residual, shape })
    }

    /// `||A f|| <= 1e-9 ||A||`: the hypothesis holds for every `rho`.
    pub fn is_degenerate(&self) -> bool {
        is_degenerate(&self.a_op, &self.f)
    }

    pub fn record(&self) -> InstanceRecord {
        InstanceRecord {
            rho: MatrixFile::new(self.rho.matrix(), Some(self.shape), Some(MatrixKind::Density)),
            f: MatrixFile::new(&ComplexMatrix::from_column_slice(2, 1, self.f.as_slice()), None, Some(MatrixKind::Generic)),
            a_op: MatrixFile::new(self.a_op.matrix(), None, Some(MatrixKind::Hermitian)),
            residual: self.residual.to_f64_lossy(),
            degenerate: self.is_degenerate(),
        }
    }
}

/// Serialized instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub rho: MatrixFile,
    pub f: MatrixFile,
    pub a_op: MatrixFile,
    pub residual: f64,
    pub degenerate: bool,
}

impl InstanceRecord {
    pub fn instance<T: Real>(&self) -> Result<AnticommutatorInstance<T>> {
        let rho = DensityMatrix::new(self.rho.matrix_as())?;
        let f = self.f.matrix_as::<T>().column(0).into_owned();
        let a = HermitianOperator::new(self.a_op.matrix_as())?;
        AnticommutatorInstance::new(rho, f, a)
    }
}

/// Solution space of the linear system `M(A) = 0`.
#[derive(Debug, Clone)]
pub struct AnticommutatorSystem<T: Real> {
    /// Singular values of the real `2 m^2 x 4` system, descending.
    pub singular_values: Vec<T>,
    pub nullity: usize,
    /// Minimal-residual solution, preferring `A f != 0` when the solution
    /// space allows it.
    pub solution: Option<HermitianOperator<T>>,
    pub degenerate: bool,
    /// `max |M(A)|` of the returned solution.
    pub residual: T,
}

fn qubit_shape<T: Real>(rho: &DensityMatrix<T>) -> Result<BipartiteShape> {
    let n = rho.dim();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::Contract(format!("state of dimension {n} is not on C^2 (x) C^m")));
    }
    BipartiteShape::new(2, n / 2)
}

fn check_unit<T: Real>(f: &DVector<Complex<T>>) -> Result<()> {
    if f.len() != 2 {
        return Err(Error::Shape(format!("f must lie in C^2, has length {}", f.len())));
    }
    let norm = f.norm();
    if (norm - T::one()).abs() > lit(1e-10) {
        return Err(Error::Contract(format!("f must be a unit vector, has norm {}", norm.to_f64_lossy())));
    }
    Ok(())
}

fn is_degenerate<T: Real>(a: &HermitianOperator<T>, f: &DVector<Complex<T>>) -> bool {
    (a.matrix() * f).norm() <= lit::<T>(NULLSPACE_TOL) * a.matrix().norm()
}

/// `1, sigma_x, sigma_y, sigma_z`.
fn pauli<T: Real>(k: usize) -> ComplexMatrix<T> {
    let (o, z, i) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()), Complex::new(T::zero(), T::one()));
    let entries = match k {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, -i, i, z],
        _ => [o, z, z, -o],
    };
    ComplexMatrix::from_row_slice(2, 2, &entries)
}

fn from_pauli<T: Real>(x: &[T]) -> ComplexMatrix<T> {
    (0..4).fold(ComplexMatrix::zeros(2, 2), |acc, k| acc + pauli::<T>(k).scale(x[k]))
}

fn compression<T: Real>(rho: &ComplexMatrix<T>, m: usize, f: &DVector<Complex<T>>, g: &DVector<Complex<T>>) -> ComplexMatrix<T> {
    let mut out = ComplexMatrix::zeros(m, m);
    for i in 0..2 {
        for j in 0..2 {
            let w = g[i].conj() * f[j] + f[i].conj() * g[j];
            out += rho.view((i * m, j * m), (m, m)) * w;
        }
    }
    out
}

/// Solves `M(A) = 0` for Hermitian `A` on `C^2`.
pub fn anticommutator_system<T: Real>(rho: &DensityMatrix<T>, f: &DVector<Complex<T>>) -> Result<AnticommutatorSystem<T>> {
    let shape = qubit_shape(rho)?;
    check_unit(f)?;
    let m = shape.dim_b;
    let rows = (2 * m * m).max(4);
    let mut sys = DMatrix::<T>::zeros(rows, 4);
    for k in 0..4 {
        let g = pauli::<T>(k) * f;
        let c = compression(rho.matrix(), m, f, &g);
        for (idx, z) in c.iter().enumerate() {
            sys[(idx, k)] = z.re;
            sys[(m * m + idx, k)] = z.im;
        }
    }
    let svd = sys.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Condition("singular value decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let singular_values: Vec<T> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let null: Vec<DVector<T>> = order
        .iter()
        .filter(|&&k| svd.singular_values[k] < lit(NULLSPACE_TOL))
        .map(|&k| v_t.row(k).transpose())
        .collect();
    let nullity = null.len();
    if nullity == 0 {
        return Ok(AnticommutatorSystem { singular_values, nullity, solution: None, degenerate: false, residual: T::zero() });
    }

    // Pauli coordinates of 1 - f f^dagger, the degenerate solution.
    let r = f[0].conj() * f[1];
    let two: T = lit(2.0);
    let bloch = [two * r.re, two * r.im, f[0].norm_sqr() - f[1].norm_sqr()];
    let half: T = lit(0.5);
    let mut trivial = DVector::from_vec(vec![half, -bloch[0] * half, -bloch[1] * half, -bloch[2] * half]);
    trivial.unscale_mut(trivial.norm());

    // Largest column of the solution basis projected orthogonally to the
    // trivial direction. Squared column norms sum to `nullity - 1`, so one
    // of them exceeds 1/2 whenever a nondegenerate solution exists.
    let basis = DMatrix::from_columns(&null);
    let projected = &basis - &trivial * (trivial.transpose() * &basis);
    let best = (0..nullity)
        .map(|k| projected.column(k).into_owned())
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal))
        .filter(|v| v.norm() > half);
    let x = best.unwrap_or_else(|| null[nullity - 1].clone());
    let mut x = x.unscale(x.norm() * two.sqrt());
    // Deterministic sign: largest coordinate positive.
    let lead = x.iter().copied().fold(T::zero(), |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if lead < T::zero() {
        x.neg_mut();
    }
    let residual = (&sys * &x).amax();
    let a = HermitianOperator::from_hermitian_part(from_pauli(x.as_slice()));
    let degenerate = is_degenerate(&a, f);
    Ok(AnticommutatorSystem { singular_values, nullity, solution: Some(a), degenerate, residual })
}

/// A nonzero Hermitian `A` with `<f (x) y, {A (x) 1, rho} f (x) y> = 0` for
/// all `y`, normalized to `||A||_F = 1`, or `None` if only `A = 0` solves.
pub fn find_anticommutator_solution<T: Real>(
    rho: &DensityMatrix<T>,
    f: &DVector<Complex<T>>,
) -> Result<Option<HermitianOperator<T>>> {
    Ok(anticommutator_system(rho, f)?.solution)
}

/// Residual over `y in {e_k, (e_k + e_l)/sqrt2, (e_k + i e_l)/sqrt2}` using
/// the full `2m x 2m` anticommutator.
fn basis_residual<T: Real>(
    rho: &DensityMatrix<T>,
    f: &DVector<Complex<T>>,
    a: &HermitianOperator<T>,
    shape: BipartiteShape,
) -> Result<T> {
    let m = shape.dim_b;
    let big = linalg::kron(a.matrix(), &ComplexMatrix::identity(m, m))?;
    let anti = &big * rho.matrix() + rho.matrix() * &big;
    let s: T = lit(std::f64::consts::FRAC_1_SQRT_2);
    let unit = |k: usize| DVector::<Complex<T>>::from_fn(m, |i, _| if i == k { Complex::new(T::one(), T::zero()) } else { Complex::default() });
    let mut ys = Vec::new();
    for k in 0..m {
        ys.push(unit(k));
        for l in k + 1..m {
            ys.push((unit(k) + unit(l)) * Complex::new(s, T::zero()));
            ys.push((unit(k) + unit(l) * Complex::new(T::zero(), T::one())) * Complex::new(s, T::zero()));
        }
    }
    let mut worst = T::zero();
    for y in ys {
        let v = linalg::kron(&ComplexMatrix::from_column_slice(2, 1, f.as_slice()), &ComplexMatrix::from_column_slice(m, 1, y.as_slice()))?;
        let value = (v.adjoint() * &anti * &v)[(0, 0)];
        worst = worst.max(linalg::modulus(value));
    }
    Ok(worst)
}

/// Solves for `A` and packages a validated instance.
pub fn make_instance<T: Real>(rho: DensityMatrix<T>, f: DVector<Complex<T>>) -> Result<Option<AnticommutatorInstance<T>>> {
    match find_anticommutator_solution(&rho, &f)? {
        Some(a) => Ok(Some(AnticommutatorInstance::new(rho, f, a)?)),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticommutatorVerdict {
    pub min_eig_gamma: f64,
    pub residual: f64,
    pub degenerate: bool,
    /// `rho^Gamma` has an eigenvalue below `-1e-9`.
    pub falsified: bool,
}

/// Checks the conclusion `rho^Gamma >= 0` on a valid instance.
pub fn verify_anticommutator_ppt<T: Real>(inst: &AnticommutatorInstance<T>) -> Result<AnticommutatorVerdict> {
    let residual = basis_residual(&inst.rho, &inst.f, &inst.a_op, inst.shape)?;
    if residual > lit(INSTANCE_TOL) {
        return Err(Error::Contract(format!(
            "instance residual {:e} exceeds {:e}",
            residual.to_f64_lossy(),
            INSTANCE_TOL
        )));
    }
    let gamma = linalg::partial_transpose(inst.rho.matrix(), inst.shape, Subsystem::A)?;
    let min = linalg::min_eigenvalue(&gamma).to_f64_lossy();
    Ok(AnticommutatorVerdict {
        min_eig_gamma: min,
        residual: residual.to_f64_lossy(),
        degenerate: inst.is_degenerate(),
        falsified: min < -PPT_TOL,
    })
}

/// Instance families of [`generate_instances`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceClass {
    /// Random density and random `f`. The solver falls back to the
    /// degenerate solution unless a nondegenerate one exists.
    RandomState,
    /// States built to admit a solution with `A f != 0`.
    Nondegenerate,
}

impl InstanceClass {
    pub fn label(self) -> &'static str {
        match self {
            Self::RandomState => "random_state",
            Self::Nondegenerate => "nondegenerate",
        }
    }
}

/// State on `C^2 (x) C^m` whose compression condition at `f` has a solution
/// with `A f != 0`.
///
/// In the basis `(f, f_perp)` a nondegenerate solution exists exactly when
/// `Herm(e^{i theta} rho_12) = c rho_11 / 2` for some real `c` and phase;
/// this draws such a state by shearing a PSD matrix with anti-Hermitian
/// off-diagonal block.
pub fn nondegenerate_state<T: Real, R: rand::Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    f: &DVector<Complex<T>>,
) -> Result<DensityMatrix<T>> {
    check_unit(f)?;
    let n = 2 * m;
    let mut x = rng::density::<T, _>(rng, n).into_operator().into_matrix();
    let off = x.view((0, m), (m, m)).into_owned();
    let anti = (&off - off.adjoint()).scale(lit(0.5));
    x.view_mut((0, m), (m, m)).copy_from(&anti);
    x.view_mut((m, 0), (m, m)).copy_from(&anti.adjoint());
    let min = linalg::min_eigenvalue(&x);
    let floor: T = lit(0.05 / n as f64);
    if min < floor {
        x += ComplexMatrix::identity(n, n).scale(floor - min);
    }
    let c: T = rng::normal(rng);
    let theta: T = rng::uniform::<T, _>(rng) * lit(std::f64::consts::TAU);
    let one = Complex::new(T::one(), T::zero());
    let zero = Complex::default();
    let shear = ComplexMatrix::from_row_slice(2, 2, &[one, zero, Complex::new(c * lit(0.5), T::zero()), one]);
    let phase = ComplexMatrix::from_row_slice(2, 2, &[one, zero, zero, Complex::new(theta.cos(), -theta.sin())]);
    let rotation = ComplexMatrix::from_row_slice(2, 2, &[f[0], -f[1].conj(), f[1], f[0].conj()]);
    let local = rotation * phase * shear;
    let big = linalg::kron(&local, &ComplexMatrix::identity(m, m))?;
    let z = &big * x * big.adjoint();
    let tr = z.trace().re;
    Ok(DensityMatrix::from_psd_unchecked(HermitianOperator::from_hermitian_part(z.unscale(tr))))
}

/// `count` instances on `C^2 (x) C^m`, alternating [`InstanceClass`]es.
/// Draws without a solution are skipped.
pub fn generate_instances<T: Real>(m: usize, count: usize, seed: u64) -> Result<Vec<(InstanceClass, AnticommutatorInstance<T>)>> {
    BipartiteShape::new(2, m)?;
    let mut out = Vec::with_capacity(count);
    let mut stream = 0u64;
    while out.len() < count {
        let class = if out.len() % 2 == 0 { InstanceClass::RandomState } else { InstanceClass::Nondegenerate };
        let mut r = rng::stream_rng(seed, stream);
        stream += 1;
        let f = rng::unit_vector::<T, _>(&mut r, 2);
        let rho = match class {
            InstanceClass::RandomState => rng::density::<T, _>(&mut r, 2 * m),
            InstanceClass::Nondegenerate => nondegenerate_state(&mut r, m, &f)?,
        };
        if let Some(inst) = make_instance(rho, f)? {
            if inst.residual <= lit(INSTANCE_TOL) {
                out.push((class, inst));
            }
        }
        if stream > 100 * count as u64 + 100 {
            return Err(Error::Condition(format!("generated only {} of {count} valid instances", out.len())));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub instances: usize,
    pub degenerate: usize,
    pub falsifications: usize,
    pub falsifications_degenerate: usize,
    pub min_eig_gamma: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnticommutatorReport {
    pub dims: BipartiteShape,
    pub seed: u64,
    pub instances: usize,
    pub falsifications: usize,
    pub by_class: BTreeMap<String, ClassTally>,
    pub max_residual: f64,
    pub counterexamples: Vec<InstanceRecord>,
}

/// Generates `count` instances and checks the conclusion on each.
pub fn anticommutator_suite<T: Real>(m: usize, count: usize, seed: u64) -> Result<AnticommutatorReport> {
    let instances = generate_instances::<T>(m, count, seed)?;
    let mut by_class: BTreeMap<String, ClassTally> = BTreeMap::new();
    let mut counterexamples = Vec::new();
    let (mut falsifications, mut max_residual) = (0, 0.0f64);
    for (class, inst) in &instances {
        let v = verify_anticommutator_ppt(inst)?;
        let t = by_class
            .entry(class.label().into())
            .or_insert_with(|| ClassTally { min_eig_gamma: f64::INFINITY, ..Default::default() });
        t.instances += 1;
        t.degenerate += v.degenerate as usize;
        t.min_eig_gamma = t.min_eig_gamma.min(v.min_eig_gamma);
        t.max_residual = t.max_residual.max(v.residual);
        max_residual = max_residual.max(v.residual);
        if v.falsified {
            t.falsifications += 1;
            t.falsifications_degenerate += v.degenerate as usize;
            falsifications += 1;
            if counterexamples.len() < MAX_COUNTEREXAMPLES {
                counterexamples.push(inst.record());
            }
        }
    }
    Ok(AnticommutatorReport {
        dims: BipartiteShape::new(2, m)?,
        seed,
        instances: instances.len(),
        falsifications,
        by_class,
        max_residual,
        counterexamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub dims: BipartiteShape,
    pub seed: u64,
    /// Both routes of the `P_n /\ P_n^tau` test for `xi`.
    pub cone_verdict: MembershipVerdict,
    /// Smallest eigenvalue of `D^Gamma` for `D = mat(xi)^2 / Tr`.
    pub density_min_eig_gamma: f64,
    pub density_ppt: bool,
    pub separable: SeparableSummary,
    /// PPT at the vector level while the separable approximation stays
    /// above `1e-3`.
    pub candidate: bool,
    pub projection_residual: f64,
    pub low_confidence: bool,
}

fn check_construction<T: Real>(c: &CompositeGnsContext<T>) -> Result<()> {
    let n = c.shape().total();
    if n > MAX_CONSTRUCTION_DIM {
        return Err(Error::DimensionLimit { dim: n, max: MAX_CONSTRUCTION_DIM });
    }
    Ok(())
}

/// Draws a PPT operator `a` by projection and builds `xi = Delta^{1/4} a
/// Omega` with its state density.
pub fn construct_ppt_from_cone<T: Real>(c: &CompositeGnsContext<T>, seed: u64) -> Result<(DensityMatrix<T>, ConstructionReport)> {
    construct_ppt_from_cone_with(c, seed, SEPARABLE_ITERS)
}

/// [`construct_ppt_from_cone`] with `iters` refinement steps for the
/// separable distance bound.
pub fn construct_ppt_from_cone_with<T: Real>(
    c: &CompositeGnsContext<T>,
    seed: u64,
    iters: usize,
) -> Result<(DensityMatrix<T>, ConstructionReport)> {
    check_construction(c)?;
    let spec = PptSetSpec::new(c.shape()).with_seed(seed);
    let mut r = rng::seeded(seed);
    let (a, trace) = optim::random_ppt_density(&mut r, &spec)?;
    let (d, mut report) = construct_ppt_from_operator(c, a.matrix(), iters, seed)?;
    report.projection_residual = trace.feasibility_residual;
    report.low_confidence = !trace.converged || trace.low_confidence;
    Ok((d, report))
}

/// [`construct_ppt_from_cone`] for a given operator `a`.
pub fn construct_ppt_from_operator<T: Real>(
    c: &CompositeGnsContext<T>,
    a: &ComplexMatrix<T>,
    iters: usize,
    seed: u64,
) -> Result<(DensityMatrix<T>, ConstructionReport)> {
    check_construction(c)?;
    let shape = c.shape();
    let xi = c.cone_vector_of(a)?;
    let cone_verdict = cones::pn_intersection_membership(c, &xi)?;
    let dm = xi.density();
    let tr = dm.trace().re;
    if tr <= T::zero() {
        return Err(Error::Contract("operator yields the zero vector".into()));
    }
    let d = DensityMatrix::from_psd_unchecked(HermitianOperator::from_hermitian_part(dm.unscale(tr)));
    let gamma = linalg::partial_transpose(d.matrix(), shape, Subsystem::B)?;
    let min = linalg::min_eigenvalue(&gamma).to_f64_lossy();
    let sep = separable::separable_cone_distance(c, &xi.normalized(), iters, seed)?.summary();
    let candidate = cone_verdict.inside && sep.upper_bound > 1e-3;
    let report = ConstructionReport {
        dims: shape,
        seed,
        cone_verdict,
        density_min_eig_gamma: min,
        density_ppt: min >= -PPT_TOL,
        separable: sep,
        candidate,
        projection_residual: 0.0,
        low_confidence: false,
    };
    Ok((d, report))
}

/// One serialized outcome of [`sqrt_ppt_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sample: usize,
    /// `ppt_and_sqrt_npt` or `ppt_and_square_npt`.
    pub kind: String,
    pub matrix: MatrixFile,
    /// Smallest eigenvalue of the partial transpose of the derived matrix.
    pub derived_min_eig_gamma: f64,
}

impl Counterexample {
    /// Recomputes `derived_min_eig_gamma` from the stored matrix; returns
    /// the discrepancy.
    pub fn reverify(&self) -> Result<f64> {
        let file = MatrixFile::from_json(&self.matrix.to_json()?)?;
        let shape = file.shape.ok_or_else(|| Error::Contract("counterexample without shape".into()))?;
        let m = HermitianOperator::new(file.matrix())?;
        let derived = derived_matrix(&self.kind, &m)?;
        let value = linalg::min_eigenvalue(&linalg::partial_transpose(&derived, shape, Subsystem::B)?);
        Ok((value - self.derived_min_eig_gamma).abs())
    }
}

fn derived_matrix<T: Real>(kind: &str, m: &HermitianOperator<T>) -> Result<ComplexMatrix<T>> {
    match kind {
        "ppt_and_sqrt_npt" => Ok(linalg::mat_sqrt_psd(m)?.into_matrix()),
        "ppt_and_square_npt" => Ok(m.matrix() * m.matrix()),
        other => Err(Error::Contract(format!("unknown counterexample kind {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub samples: usize,
    pub dims: BipartiteShape,
    pub seed: u64,
    /// PPT draws `D` split by whether `D^{1/2}` is PPT. Sums to `samples`.
    pub counts: BTreeMap<String, usize>,
    /// PPT draws `X`, read as `mat(xi)`, split by whether `X^2` is PPT.
    /// Sums to `samples`.
    pub reverse_counts: BTreeMap<String, usize>,
    pub positive_control_failures: usize,
    /// `max ||density(U xi_D) - D^t||_max`.
    pub max_positive_control_residual: f64,
    pub min_sqrt_eig_gamma: f64,
    pub min_square_eig_gamma: f64,
    pub low_confidence_draws: usize,
    /// `||density((1 (x) U_B) xi_D) - D^(T_B)||_max`, with `T_B` taken in
    /// the eigenbasis of the `B` reference state. Reported, not asserted.
    pub state_partial_transpose: ResidualStats,
    pub counterexamples: Vec<Counterexample>,
}

/// Range of a residual over the samples and how many fell below
/// [`POSITIVE_CONTROL_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub min: f64,
    pub max: f64,
    pub within_tolerance: usize,
}

pub const POSITIVE_CONTROL_TOL: f64 = 1e-10;

struct SampleOutcome {
    forward: &'static str,
    reverse: &'static str,
    control: f64,
    sqrt_min: f64,
    square_min: f64,
    state_pt: f64,
    low_confidence: bool,
    examples: Vec<Counterexample>,
}

fn experiment_sample<T: Real>(
    composite: &CompositeGnsContext<T>,
    seed: u64,
    sample: usize,
) -> Result<SampleOutcome> {
    let shape = composite.shape();
    let mut r = rng::stream_rng(seed, sample as u64);
    let spec = PptSetSpec::<T>::new(shape).with_seed(seed ^ sample as u64);
    let tol: T = lit(PPT_TOL);
    let min_gamma = |m: &ComplexMatrix<T>| -> Result<T> {
        Ok(linalg::min_eigenvalue(&linalg::partial_transpose(m, shape, Subsystem::B)?))
    };
    let mut examples = Vec::new();

    let (d, t1) = optim::random_ppt_density(&mut r, &spec)?;
    let sqrt = linalg::mat_sqrt_psd(d.operator())?;
    let sqrt_min = min_gamma(sqrt.matrix())?;
    let forward = if min_gamma(d.matrix())? < -tol {
        "draw_not_ppt"
    } else if sqrt_min < -tol * sqrt.trace() {
        examples.push(Counterexample {
            sample,
            kind: "ppt_and_sqrt_npt".into(),
            matrix: MatrixFile::new(d.matrix(), Some(shape), Some(MatrixKind::Density)),
            derived_min_eig_gamma: sqrt_min.to_f64_lossy(),
        });
        "ppt_and_sqrt_npt"
    } else {
        "ppt_and_sqrt_ppt"
    };

    let (x, t2) = optim::random_ppt_density(&mut r, &spec)?;
    let square = x.matrix() * x.matrix();
    let square_min = min_gamma(&square)?;
    let reverse = if min_gamma(x.matrix())? < -tol {
        "draw_not_ppt"
    } else if square_min < -tol * square.trace().re {
        examples.push(Counterexample {
            sample,
            kind: "ppt_and_square_npt".into(),
            matrix: MatrixFile::new(x.matrix(), Some(shape), Some(MatrixKind::Density)),
            derived_min_eig_gamma: square_min.to_f64_lossy(),
        });
        "ppt_and_square_npt"
    } else {
        "ppt_and_square_ppt"
    };

    let ctx = gns::build_gns(&gns::random_faithful::<T, _>(&mut r, shape.total()))?;
    let xi = cones::state_to_cone_vector(&ctx, &d)?;
    let lhs = ctx.apply_u(&xi)?.density();
    let rhs = ctx.transpose_operator(d.matrix())?;
    let control = linalg::max_abs(&(lhs - rhs)).to_f64_lossy();

    let joint = composite.joint();
    let eta = composite.apply_u_b(&cones::state_to_cone_vector(joint, &d)?)?;
    let w = linalg::kron(&ComplexMatrix::identity(shape.dim_a, shape.dim_a), composite.ctx_b().eigenvectors())?;
    let expected = &w * linalg::partial_transpose(&(w.adjoint() * d.matrix() * &w), shape, Subsystem::B)? * w.adjoint();
    let state_pt = linalg::max_abs(&(eta.density() - expected)).to_f64_lossy();

    Ok(SampleOutcome {
        forward,
        reverse,
        control,
        sqrt_min: sqrt_min.to_f64_lossy(),
        square_min: square_min.to_f64_lossy(),
        state_pt,
        low_confidence: t1.low_confidence || t2.low_confidence || !t1.converged || !t2.converged,
        examples,
    })
}

/// Tallies whether PPT survives `D -> D^{1/2}` and `X -> X^2` on random
/// PPT draws. Asserts nothing about either implication; the only checked
/// property is the positive control `density(U xi_D) = D^t`.
pub fn sqrt_ppt_experiment<T: Real>(shape: BipartiteShape, samples: usize, seed: u64) -> Result<ExperimentReport> {
    if samples == 0 {
        return Err(Error::Contract("at least one sample is required".into()));
    }
    let composite = cones::random_composite::<T>(shape, seed)?;
    let outcomes: Vec<SampleOutcome> = (0..samples)
        .into_par_iter()
        .map(|i| experiment_sample(&composite, seed, i))
        .collect::<Result<_>>()?;
    let mut counts = BTreeMap::new();
    let mut reverse_counts = BTreeMap::new();
    for key in ["ppt_and_sqrt_ppt", "ppt_and_sqrt_npt"] {
        counts.insert(key.to_string(), 0);
    }
    for key in ["ppt_and_square_ppt", "ppt_and_square_npt"] {
        reverse_counts.insert(key.to_string(), 0);
    }
    let mut report = ExperimentReport {
        samples,
        dims: shape,
        seed,
        counts,
        reverse_counts,
        positive_control_failures: 0,
        max_positive_control_residual: 0.0,
        min_sqrt_eig_gamma: f64::INFINITY,
        min_square_eig_gamma: f64::INFINITY,
        low_confidence_draws: 0,
        state_partial_transpose: ResidualStats { min: f64::INFINITY, max: 0.0, within_tolerance: 0 },
        counterexamples: Vec::new(),
    };
    for o in outcomes {
        *report.counts.entry(o.forward.into()).or_insert(0) += 1;
        *report.reverse_counts.entry(o.reverse.into()).or_insert(0) += 1;
        report.positive_control_failures += (o.control > POSITIVE_CONTROL_TOL) as usize;
        report.max_positive_control_residual = report.max_positive_control_residual.max(o.control);
        report.min_sqrt_eig_gamma = report.min_sqrt_eig_gamma.min(o.sqrt_min);
        report.min_square_eig_gamma = report.min_square_eig_gamma.min(o.square_min);
        report.low_confidence_draws += o.low_confidence as usize;
        let pt = &mut report.state_partial_transpose;
        pt.min = pt.min.min(o.state_pt);
        pt.max = pt.max.max(o.state_pt);
        pt.within_tolerance += (o.state_pt <= POSITIVE_CONTROL_TOL) as usize;
        for e in o.examples {
            if report.counterexamples.len() < MAX_COUNTEREXAMPLES {
                report.counterexamples.push(e);
            }
        }
    }
    Ok(report)
}
