//! Distance from a joint GNS vector to the product cone `P_A (x) P_B`,
//! the closed convex cone generated by `x (x) y` with `x in P_A`,
//! `y in P_B`. Its normalized elements are the cone vectors of separable
//! states.
//!
//! Deciding membership is hard in general, so this is a heuristic:
//! Gilbert-style fully corrective conditional gradient. Each step adds
//! the product atom best aligned with the residual, found by alternating
//! maximization over the two factors, then refits the weights by
//! non-negative least squares and the factors by alternating least
//! squares. The distance to the produced feasible
//! point is a certified upper bound; a decomposable witness gives a lower
//! bound.

use serde::{Deserialize, Serialize};

use crate::cones::CompositeGnsContext;
use crate::gns::GnsVector;
use crate::linalg::{self, BipartiteShape, ComplexMatrix, Subsystem};
use crate::{rng, Error, Real, Result};

/// Random restarts of the atom search.
pub const ATOM_RESTARTS: usize = 10;
/// Alternating sweeps per restart.
const ALTERNATING_SWEEPS: usize = 30;
const NNLS_SWEEPS: usize = 500;
/// Alternating least-squares passes over all atoms per iteration.
const ALS_SWEEPS: usize = 3;

#[derive(Debug, Clone)]
pub struct SeparableApprox<T: Real> {
    /// `||xi - best_approx||`, an upper bound on the distance to the cone.
    pub upper_bound: T,
    /// Lower bound from the Hermitian defect and the PSD / partial
    /// transpose witnesses.
    pub lower_bound: T,
    pub best_approx: GnsVector<T>,
    /// Upper bound after each iteration; nonincreasing.
    pub log: Vec<f64>,
    pub atoms: usize,
    /// True when no atom improves the residual any more.
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableSummary {
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub atoms: usize,
    pub stationary: bool,
    pub log: Vec<f64>,
}

impl<T: Real> SeparableApprox<T> {
    pub fn summary(&self) -> SeparableSummary {
        SeparableSummary {
            upper_bound: self.upper_bound.to_f64_lossy(),
            lower_bound: self.lower_bound.to_f64_lossy(),
            iterations: self.log.len(),
            atoms: self.atoms,
            stationary: self.stationary,
            log: self.log.clone(),
        }
    }
}

/// Upper-bounds `dist(xi, P_A (x) P_B)`; `xi` must be normalized.
pub fn separable_cone_distance<T: Real>(
    c: &CompositeGnsContext<T>,
    xi: &GnsVector<T>,
    iters: usize,
    seed: u64,
) -> Result<SeparableApprox<T>> {
    let j = c.joint();
    j.ensure(xi)?;
    let norm = xi.norm();
    if (norm - T::one()).abs() > crate::lit(1e-8) {
        return Err(Error::Contract(format!("vector must be normalized, has norm {}", norm.to_f64_lossy())));
    }
    let shape = c.shape();
    let n = shape.total();
    let target = xi.mat();
    let cap = n * n;

    let mut atoms: Vec<(ComplexMatrix<T>, ComplexMatrix<T>)> = Vec::new();
    let mut weights: Vec<T> = Vec::new();
    let mut approx = ComplexMatrix::<T>::zeros(n, n);
    let mut best = approx.clone();
    let mut best_bound = norm;
    let mut log = Vec::with_capacity(iters);
    let mut stationary = false;
    let mut r = rng::seeded(seed);
    let eps = T::default_epsilon() * crate::lit(100.0);

    for _ in 0..iters {
        let residual = target - &approx;
        let (atom, value) = best_atom(&residual, shape, &mut r);
        if value <= eps * norm {
            stationary = true;
            log.push(best_bound.to_f64_lossy());
            break;
        }
        if atoms.len() == cap {
            let (drop, _) = weights
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .expect("non-empty");
            atoms.swap_remove(drop);
            weights.swap_remove(drop);
        }
        atoms.push(atom);
        weights.push(T::zero());
        refit(&mut atoms, &mut weights, target, shape);
        approx = combination(&atoms, &weights, n);
        let bound = (target - &approx).norm();
        if bound < best_bound {
            best_bound = bound;
            best = approx.clone();
        }
        log.push(best_bound.to_f64_lossy());
        if best_bound <= eps {
            stationary = true;
            break;
        }
    }

    Ok(SeparableApprox {
        upper_bound: best_bound,
        lower_bound: witness_lower_bound(target, shape)?,
        best_approx: j.vector(best)?,
        log,
        atoms: atoms.len(),
        stationary,
    })
}

/// `sqrt(||anti-Hermitian part||^2 + m^2)` with
/// `m = max(0, -min eig H, -min eig H^Gamma)` and `H` the Hermitian part.
///
/// The cone consists of Hermitian matrices, so the anti-Hermitian part is
/// orthogonal to it. For the Hermitian part, `W = |v><v|` and
/// `W = (|v><v|)^Gamma` (with `v` a lowest eigenvector of `H` or
/// `H^Gamma`) are unit-norm and non-negative on every product atom, hence
/// `dist >= -<W, H>`.
pub fn witness_lower_bound<T: Real>(m: &ComplexMatrix<T>, shape: BipartiteShape) -> Result<T> {
    let h = linalg::hermitian_part(m);
    let anti = (m - &h).norm();
    let min_h = linalg::min_eigenvalue(&h);
    let min_g = linalg::min_eigenvalue(&linalg::partial_transpose(&h, shape, Subsystem::B)?);
    let neg = [T::zero(), -min_h, -min_g].into_iter().fold(T::zero(), |a, b| if b > a { b } else { a });
    Ok((anti * anti + neg * neg).sqrt())
}

/// Unit-norm PSD `x (x) y` approximately maximizing `Re <x (x) y, r>`.
fn best_atom<T: Real, R: rand::Rng + ?Sized>(
    r: &ComplexMatrix<T>,
    shape: BipartiteShape,
    rng: &mut R,
) -> ((ComplexMatrix<T>, ComplexMatrix<T>), T) {
    let (na, nb) = (shape.dim_a, shape.dim_b);
    let mut best: Option<(ComplexMatrix<T>, ComplexMatrix<T>, T)> = None;
    for _ in 0..ATOM_RESTARTS {
        let mut y = rng::psd_of_rank::<T, _>(rng, nb, 1).into_matrix();
        y = y.unscale(y.norm());
        let mut x = ComplexMatrix::<T>::zeros(na, na);
        let mut value = T::min_value().expect("bounded scalar");
        for _ in 0..ALTERNATING_SWEEPS {
            x = positive_direction(&contract_b(r, &y, shape));
            y = positive_direction(&contract_a(r, &x, shape));
            let v = (linalg::kron(&x, &y).expect("dimension already checked").adjoint() * r).trace().re;
            if v <= value + value.abs() * crate::lit(1e-12) {
                value = if v > value { v } else { value };
                break;
            }
            value = v;
        }
        if best.as_ref().is_none_or(|b| value > b.2) {
            best = Some((x, y, value));
        }
    }
    let (x, y, value) = best.expect("at least one restart");
    ((x, y), value)
}

/// `G[i, j] = sum_kl y[l, k] r[(i k), (j l)]`, so `Tr((x (x) y) r) = Tr(x G)`.
fn contract_b<T: Real>(r: &ComplexMatrix<T>, y: &ComplexMatrix<T>, shape: BipartiteShape) -> ComplexMatrix<T> {
    let (na, nb) = (shape.dim_a, shape.dim_b);
    ComplexMatrix::from_fn(na, na, |i, j| {
        let mut s = num_complex::Complex::new(T::zero(), T::zero());
        for k in 0..nb {
            for l in 0..nb {
                s += y[(l, k)] * r[(i * nb + k, j * nb + l)];
            }
        }
        s
    })
}

/// `H[k, l] = sum_ij x[j, i] r[(i k), (j l)]`, so `Tr((x (x) y) r) = Tr(y H)`.
fn contract_a<T: Real>(r: &ComplexMatrix<T>, x: &ComplexMatrix<T>, shape: BipartiteShape) -> ComplexMatrix<T> {
    let (na, nb) = (shape.dim_a, shape.dim_b);
    ComplexMatrix::from_fn(nb, nb, |k, l| {
        let mut s = num_complex::Complex::new(T::zero(), T::zero());
        for i in 0..na {
            for j in 0..na {
                s += x[(j, i)] * r[(i * nb + k, j * nb + l)];
            }
        }
        s
    })
}

/// Unit-norm PSD `x` maximizing `Re Tr(x g)`: the normalized positive part
/// of the Hermitian part of `g`, or the top eigenprojector when that part
/// vanishes.
fn positive_direction<T: Real>(g: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let e = linalg::herm_eig_matrix(&linalg::hermitian_part(g));
    let p = e.map(|v| if v > T::zero() { v } else { T::zero() });
    let norm = p.norm();
    if norm > T::zero() {
        p.unscale(norm)
    } else {
        let v = e.vector(0);
        linalg::outer(&v, &v)
    }
}

fn combination<T: Real>(atoms: &[(ComplexMatrix<T>, ComplexMatrix<T>)], w: &[T], n: usize) -> ComplexMatrix<T> {
    atoms.iter().zip(w).fold(ComplexMatrix::zeros(n, n), |acc, ((x, y), &c)| {
        acc + linalg::kron(x, y).expect("dimension already checked").scale(c)
    })
}

/// Weights by NNLS, then alternating least squares on each atom's factors
/// against the residual of the others, then NNLS again. Every stage
/// decreases the residual. Atoms with zero weight are dropped.
fn refit<T: Real>(
    atoms: &mut Vec<(ComplexMatrix<T>, ComplexMatrix<T>)>,
    w: &mut Vec<T>,
    target: &ComplexMatrix<T>,
    shape: BipartiteShape,
) {
    let n = shape.total();
    let products = |atoms: &[(ComplexMatrix<T>, ComplexMatrix<T>)]| -> Vec<ComplexMatrix<T>> {
        atoms.iter().map(|(x, y)| linalg::kron(x, y).expect("dimension already checked")).collect()
    };
    nnls(&products(atoms), target, w);
    prune(atoms, w);

    for _ in 0..ALS_SWEEPS {
        let mut approx = combination(atoms, w, n);
        for k in 0..atoms.len() {
            let (x, y) = &atoms[k];
            let own = linalg::kron(x, y).expect("dimension already checked").scale(w[k]);
            let rest = target - (&approx - &own);
            // Unnormalized factors: x <- (G_y)_+ / ||y||^2, then y likewise.
            let mut x = x.scale(w[k]);
            let mut y = y.clone();
            for _ in 0..2 {
                x = positive_part(&contract_b(&rest, &y, shape)).unscale(y.norm_squared());
                let nx = x.norm_squared();
                if nx == T::zero() {
                    break;
                }
                y = positive_part(&contract_a(&rest, &x, shape)).unscale(nx);
            }
            let (nx, ny) = (x.norm(), y.norm());
            let updated = if nx > T::zero() && ny > T::zero() {
                (x.unscale(nx), y.unscale(ny), nx * ny)
            } else {
                (atoms[k].0.clone(), atoms[k].1.clone(), T::zero())
            };
            let candidate = linalg::kron(&updated.0, &updated.1).expect("dimension already checked").scale(updated.2);
            // Keep the update only if it does not increase the residual.
            if (&rest - &candidate).norm() <= (&rest - &own).norm() {
                approx = &approx - &own + &candidate;
                atoms[k] = (updated.0, updated.1);
                w[k] = updated.2;
            }
        }
        nnls(&products(atoms), target, w);
        prune(atoms, w);
    }
}

fn prune<T: Real>(atoms: &mut Vec<(ComplexMatrix<T>, ComplexMatrix<T>)>, w: &mut Vec<T>) {
    let mut k = 0;
    while k < atoms.len() {
        if w[k] <= T::zero() {
            atoms.swap_remove(k);
            w.swap_remove(k);
        } else {
            k += 1;
        }
    }
}

fn positive_part<T: Real>(g: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    linalg::herm_eig_matrix(&linalg::hermitian_part(g)).map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Non-negative least squares `min ||target - sum w_k a_k||` by cyclic
/// projected coordinate descent on the real Gram system.
fn nnls<T: Real>(atoms: &[ComplexMatrix<T>], target: &ComplexMatrix<T>, w: &mut [T]) {
    let k = atoms.len();
    let gram: Vec<Vec<T>> = (0..k)
        .map(|a| (0..k).map(|b| linalg::hs_inner(&atoms[a], &atoms[b]).re).collect())
        .collect();
    let rhs: Vec<T> = atoms.iter().map(|a| linalg::hs_inner(a, target).re).collect();
    let tol = T::default_epsilon() * crate::lit(10.0);
    for _ in 0..NNLS_SWEEPS {
        let mut change = T::zero();
        for a in 0..k {
            if gram[a][a] <= T::zero() {
                continue;
            }
            let grad = (0..k).fold(-rhs[a], |acc, b| acc + gram[a][b] * w[b]);
            let next = w[a] - grad / gram[a][a];
            let next = if next > T::zero() { next } else { T::zero() };
            let d = (next - w[a]).abs();
            if d > change {
                change = d;
            }
            w[a] = next;
        }
        if change <= tol {
            break;
        }
    }
}
