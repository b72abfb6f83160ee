//! First-order machinery over the PPT spectrahedron
//! `{D : D >= 0, D^Gamma >= 0, Tr D = t}`: Dykstra projection, linear
//! minimization by projected subgradient, and NPT witnesses.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, BipartiteShape, ComplexMatrix, DensityMatrix, HermitianOperator, Subsystem};
use crate::{lit, rng, Error, Real, Result};

/// Feasible set and solver thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PptSetSpec<T> {
    pub shape: BipartiteShape,
    pub trace_target: T,
    /// Largest accepted constraint violation on success.
    pub tol_feas: T,
    /// Dykstra sweeps per projection.
    pub max_iters: usize,
    /// Sweep-to-sweep change below which Dykstra is considered stalled.
    pub step_tol: T,
    /// Subgradient iterations per restart of [`min_trace_over_ppt`].
    pub outer_iters: usize,
    /// Dykstra sweeps per subgradient step. The duals are carried from one
    /// step to the next, so the projection keeps converging along the
    /// trajectory; every iterate is pulled to feasibility before it is
    /// evaluated.
    pub inner_sweeps: usize,
    /// Stop a restart when the best objective improved by less than
    /// `stall_tol` over `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tol: T,
    pub restarts: usize,
    pub seed: u64,
}

impl<T: Real> PptSetSpec<T> {
    pub fn new(shape: BipartiteShape) -> Self {
        Self {
            shape,
            trace_target: T::one(),
            tol_feas: lit(1e-8),
            max_iters: 5000,
            step_tol: lit(1e-12),
            outer_iters: 3000,
            inner_sweeps: 10,
            stall_window: 50,
            stall_tol: lit(1e-10),
            restarts: 5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self, m: &HermitianOperator<T>) -> Result<()> {
        if m.dim() != self.shape.total() {
            return Err(Error::Shape(format!(
                "operator of dimension {} does not match shape {}",
                m.dim(),
                self.shape
            )));
        }
        if self.trace_target <= T::zero() {
            return Err(Error::Contract("trace target must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterates: usize,
    pub objective_history: Vec<f64>,
    /// `max(-min eig D, -min eig D^Gamma, |Tr D - target|)` of the returned point.
    pub feasibility_residual: f64,
    /// The same quantity before the final interior shift.
    pub raw_residual: f64,
    pub step_rule: String,
    pub converged: bool,
    pub low_confidence: bool,
}

/// `max(-min eig D, -min eig D^Gamma, |Tr D - target|, 0)`.
pub fn feasibility_residual<T: Real>(d: &ComplexMatrix<T>, shape: BipartiteShape, target: T) -> Result<T> {
    let min_d = linalg::min_eigenvalue(d);
    let min_g = linalg::min_eigenvalue(&linalg::partial_transpose(d, shape, Subsystem::B)?);
    let tr = (d.trace().re - target).abs();
    Ok([-min_d, -min_g, tr].into_iter().fold(T::zero(), |a, b| if b > a { b } else { a }))
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn project_psd<T: Real>(m: &HermitianOperator<T>) -> HermitianOperator<T> {
    HermitianOperator::from_hermitian_part(psd_part(m.matrix()))
}

fn psd_part<T: Real>(m: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    // The projection does not depend on the eigenbasis, so the raw solver
    // output is used without canonicalization.
    let h = linalg::hermitian_part(m);
    let e = SymmetricEigen::new(h.clone());
    if e.eigenvalues.iter().all(|&x| x >= T::zero()) {
        return h;
    }
    let mut v = e.eigenvectors.clone();
    for (k, &x) in e.eigenvalues.iter().enumerate() {
        let w = if x > T::zero() { x } else { T::zero() };
        v.column_mut(k).scale_mut(w);
    }
    linalg::hermitian_part(&(v * e.eigenvectors.adjoint()))
}

fn gamma_psd_part<T: Real>(m: &ComplexMatrix<T>, shape: BipartiteShape) -> ComplexMatrix<T> {
    let g = linalg::partial_transpose(m, shape, Subsystem::B).expect("shape checked");
    linalg::partial_transpose(&psd_part(&g), shape, Subsystem::B).expect("shape checked")
}

fn trace_shift<T: Real>(m: &ComplexMatrix<T>, target: T) -> ComplexMatrix<T> {
    let n = m.nrows();
    let shift = (target - m.trace().re) / lit(n as f64);
    m + ComplexMatrix::identity(n, n).scale(shift)
}

/// Sweeps between feasibility evaluations in [`project_ppt`].
const RESIDUAL_EVERY: usize = 25;

/// Frobenius projection onto the PPT set by Dykstra's algorithm over the
/// PSD cone, the partially transposed PSD cone and the trace hyperplane.
///
/// The Dykstra limit is finally pulled towards `t I / N` by the least
/// amount that removes any remaining constraint violation, so the returned
/// operator is feasible up to rounding.
pub fn project_ppt<T: Real>(m: &HermitianOperator<T>, spec: &PptSetSpec<T>) -> Result<(HermitianOperator<T>, SolveTrace)> {
    spec.check(m)?;
    let n = spec.shape.total();
    let mut duals = Duals { p: ComplexMatrix::zeros(n, n), q: ComplexMatrix::zeros(n, n) };
    dykstra(m.matrix(), spec, &mut duals)
}

/// Correction terms of the two cone projections in Dykstra's algorithm.
struct Duals<T: Real> {
    p: ComplexMatrix<T>,
    q: ComplexMatrix<T>,
}

/// Dykstra's algorithm started from the correction terms in `duals`.
///
/// Dykstra's iteration is cyclic block ascent on the dual problem with
/// `x = z - p - q - r`, so it converges to the projection of `z` from any
/// starting duals; zero duals give the textbook algorithm. The trace
/// correction `r` is a multiple of the identity and is absorbed by the
/// affine projection, which therefore comes first in each sweep.
fn dykstra<T: Real>(z: &ComplexMatrix<T>, spec: &PptSetSpec<T>, duals: &mut Duals<T>) -> Result<(HermitianOperator<T>, SolveTrace)> {
    let shape = spec.shape;
    let n = shape.total();
    let target = spec.trace_target;
    let Duals { p, q } = duals;

    let mut x = z - &*p - &*q;
    let mut history = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < spec.max_iters.max(1) {
        sweeps += 1;
        let prev = x.clone();

        x = linalg::hermitian_part(&trace_shift(&x, target));

        let y = psd_part(&(&x + &*p));
        *p = &x + &*p - &y;
        x = y;

        let y = gamma_psd_part(&(&x + &*q), shape);
        *q = &x + &*q - &y;
        x = y;

        // The residual costs two eigendecompositions, so it is evaluated
        // only once the step is small and every RESIDUAL_EVERY sweeps.
        let small_step = (&x - &prev).norm() <= spec.step_tol * (T::one() + x.norm());
        if small_step || sweeps % RESIDUAL_EVERY == 0 {
            let residual = feasibility_residual(&x, shape, target)?;
            history.push(residual.to_f64_lossy());
            if small_step && residual <= spec.tol_feas {
                converged = true;
                break;
            }
        }
    }
    x = trace_shift(&x, target);

    let raw = feasibility_residual(&x, shape, target)?;
    if raw > T::zero() {
        // Convex combination with the interior point t I / N.
        let c = target / lit(n as f64);
        let s = raw / (raw + c);
        x = x.scale(T::one() - s) + ComplexMatrix::identity(n, n).scale(s * c);
        x = trace_shift(&x, target);
    }
    let final_residual = feasibility_residual(&x, shape, target)?;
    let ok = raw <= spec.tol_feas;
    Ok((
        HermitianOperator::from_hermitian_part(x),
        SolveTrace {
            iterates: sweeps,
            objective_history: history,
            feasibility_residual: final_residual.to_f64_lossy(),
            raw_residual: raw.to_f64_lossy(),
            step_rule: "dykstra(trace, psd, gamma-psd)".into(),
            converged: converged || ok,
            low_confidence: !ok,
        },
    ))
}

/// Result of [`min_trace_over_ppt`].
#[derive(Debug, Clone)]
pub struct MinTrace<T: Real> {
    /// Best objective found; an upper bound on the true minimum since it is
    /// attained at a feasible point.
    pub value: T,
    pub minimizer: DensityMatrix<T>,
    pub trace: SolveTrace,
    /// Best value of each restart, in restart order.
    pub restart_values: Vec<f64>,
    pub spread: f64,
}

/// `min { Tr(D h) : D PPT, Tr D = t }` by projected subgradient.
///
/// Each restart iterates `D <- P(D - eta_k h)` with
/// `eta_k = eta_0 / sqrt(k + 1)`, `eta_0 = 1 / ||h||_F`, and tracks both
/// the iterates and their running average. `P` is Dykstra's projection
/// run for `inner_sweeps` sweeps from the previous step's duals, followed
/// by the interior pull of [`project_ppt`]. Restart 0 starts from
/// `t I / N`; the others from projected random densities. Restarts run in
/// parallel and are merged by best objective; a spread above `1e-3` sets
/// the low-confidence flag.
pub fn min_trace_over_ppt<T: Real>(h: &HermitianOperator<T>, spec: &PptSetSpec<T>) -> Result<MinTrace<T>> {
    spec.check(h)?;
    let runs: Vec<Result<RestartOutcome<T>>> = (0..spec.restarts.max(1))
        .into_par_iter()
        .map(|r| run_restart(h, spec, r))
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let restart_values: Vec<f64> = runs.iter().map(|r| r.value.to_f64_lossy()).collect();
    let spread = restart_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - restart_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].value.partial_cmp(&runs[b].value).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one restart");
    let mut run = runs.swap_remove(best);
    run.trace.low_confidence |= spread > 1e-3;
    let minimizer = DensityMatrix::from_psd_unchecked(HermitianOperator::from_hermitian_part(
        run.point.scale(T::one() / spec.trace_target),
    ));
    Ok(MinTrace { value: run.value, minimizer, trace: run.trace, restart_values, spread })
}

struct RestartOutcome<T: Real> {
    value: T,
    point: ComplexMatrix<T>,
    trace: SolveTrace,
}

fn objective<T: Real>(d: &ComplexMatrix<T>, h: &ComplexMatrix<T>) -> T {
    linalg::hs_inner(d, h).re
}

fn run_restart<T: Real>(h: &HermitianOperator<T>, spec: &PptSetSpec<T>, restart: usize) -> Result<RestartOutcome<T>> {
    let n = spec.shape.total();
    let hm = h.matrix();
    let start = if restart == 0 {
        ComplexMatrix::identity(n, n).scale(spec.trace_target / lit(n as f64))
    } else {
        let mut r = rng::stream_rng(spec.seed, restart as u64);
        let d = rng::density::<T, _>(&mut r, n);
        project_ppt(&d.operator().scale(spec.trace_target), spec)?.0.into_matrix()
    };

    let hnorm = hm.norm();
    let mut best_value = objective(&start, hm);
    let mut best_point = start.clone();
    if hnorm == T::zero() {
        return Ok(RestartOutcome {
            value: best_value,
            point: best_point,
            trace: SolveTrace {
                iterates: 0,
                objective_history: vec![best_value.to_f64_lossy()],
                feasibility_residual: feasibility_residual(&start, spec.shape, spec.trace_target)?.to_f64_lossy(),
                raw_residual: 0.0,
                step_rule: "zero objective".into(),
                converged: true,
                low_confidence: false,
            },
        });
    }
    let eta0 = T::one() / hnorm;
    // Successive projections are warm-started from the previous duals.
    let inner = PptSetSpec { max_iters: spec.inner_sweeps.max(1), ..*spec };
    let mut duals = Duals { p: ComplexMatrix::zeros(n, n), q: ComplexMatrix::zeros(n, n) };
    let mut d = start.clone();
    let mut avg = start;
    let mut history = vec![best_value.to_f64_lossy()];
    let mut window_start = best_value;
    let mut iters = 0;
    let mut converged = false;
    for k in 0..spec.outer_iters {
        iters = k + 1;
        let eta = eta0 / lit::<T>((k + 1) as f64).sqrt();
        let step = linalg::hermitian_part(&(&d - hm.scale(eta)));
        let (next, _) = dykstra(&step, &inner, &mut duals)?;
        d = next.into_matrix();
        let w: T = T::one() / lit((k + 2) as f64);
        avg = avg.scale(T::one() - w) + d.scale(w);
        for cand in [&d, &avg] {
            let v = objective(cand, hm);
            if v < best_value {
                best_value = v;
                best_point = cand.clone();
            }
        }
        history.push(best_value.to_f64_lossy());
        if iters % spec.stall_window.max(1) == 0 {
            if window_start - best_value < spec.stall_tol {
                converged = true;
                break;
            }
            window_start = best_value;
        }
    }
    let feas = feasibility_residual(&best_point, spec.shape, spec.trace_target)?;
    Ok(RestartOutcome {
        value: best_value,
        point: best_point,
        trace: SolveTrace {
            iterates: iters,
            objective_history: history,
            feasibility_residual: feas.to_f64_lossy(),
            raw_residual: feas.to_f64_lossy(),
            step_rule: "projected subgradient, eta0/sqrt(k+1), eta0 = 1/||h||_F, iterate averaging, warm-started dykstra".into(),
            converged,
            low_confidence: feas > spec.tol_feas,
        },
    })
}

/// Decomposable witness `W = (|v><v|)^Gamma` from the most negative
/// eigenvector `v` of `D^Gamma`, or `None` when `D` is PPT within
/// `tol_psd`. `Tr(W D) = <v|D^Gamma|v> < 0` while `Tr(W sigma) >= 0` for
/// every PPT `sigma`; `||W||_F = 1`.
pub fn npt_witness<T: Real>(d: &DensityMatrix<T>, shape: BipartiteShape) -> Result<Option<HermitianOperator<T>>> {
    let tol = crate::Tolerances::<T>::default().psd;
    let g = linalg::partial_transpose(d.matrix(), shape, Subsystem::B)?;
    let e = linalg::herm_eig_matrix(&g);
    if e.min() >= -tol {
        return Ok(None);
    }
    let v = e.vector(e.values.len() - 1);
    let proj = linalg::outer(&v, &v);
    let w = linalg::partial_transpose(&proj, shape, Subsystem::B)?;
    Ok(Some(HermitianOperator::from_hermitian_part(w)))
}

/// Draws a PPT density by projecting a random trace-one Hermitian matrix.
pub fn random_ppt_density<T: Real, R: rand::Rng + ?Sized>(
    rng: &mut R,
    spec: &PptSetSpec<T>,
) -> Result<(DensityMatrix<T>, SolveTrace)> {
    let n = spec.shape.total();
    let h = rng::hermitian::<T, _>(rng, n);
    let shifted = trace_shift(h.matrix(), T::one());
    let (p, trace) = project_ppt(&HermitianOperator::from_hermitian_part(shifted), spec)?;
    Ok((DensityMatrix::from_psd_unchecked(p), trace))
}
