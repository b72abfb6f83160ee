//! Cones in the GNS space: `V_beta = closure{Delta^beta a Omega : a >= 0}`,
//! the natural cone `P = V_{1/4}`, the transposed cone `(1 (x) U_B) P` of a
//! composite system and the natural cone `P'` of `B(H_A) (x) B(H_B)'`.
//!
//! Membership is decided by an explicit PSD certificate: the smallest
//! eigenvalue of the Hermitian part of a reconstructed matrix, lowered to
//! minus the Hermiticity defect when that defect exceeds the tolerance.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::gns::{self, GnsContext, GnsVector, Residuals};
use crate::linalg::{self, BipartiteShape, ComplexMatrix, DensityMatrix, Eigen, HermitianOperator, Subsystem};
use crate::{lit, rng, Error, Real, Result, Tolerances};

/// Default certificate tolerance.
pub const CONE_TOL: f64 = 1e-10;

/// `V_beta` with a certificate tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeQuery<T> {
    beta: T,
    tol: T,
}

impl<T: Real> ConeQuery<T> {
    pub fn new(beta: T, tol: T) -> Result<Self> {
        check_beta(beta)?;
        if tol.partial_cmp(&T::zero()).is_none_or(|o| o.is_lt()) {
            return Err(Error::Contract("cone tolerance must be non-negative".into()));
        }
        Ok(Self { beta, tol })
    }

    /// The natural cone at the default tolerance.
    pub fn natural() -> Self {
        Self { beta: lit(0.25), tol: default_tol() }
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn tol(&self) -> T {
        self.tol
    }
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if !(beta >= T::zero() && beta <= lit(0.5)) {
        return Err(Error::Contract(format!("beta = {} is outside [0, 1/2]", beta.to_f64_lossy())));
    }
    Ok(())
}

fn default_tol<T: Real>() -> T {
    Tolerances::<T>::default().psd
}

/// Outcome of one membership test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub inside: bool,
    pub certificate: f64,
    pub route: String,
    /// `||(w - w^dagger)/2||_max` of the witnessing matrix.
    pub hermiticity_defect: f64,
    /// Per-route certificates when several routes were evaluated.
    pub routes: BTreeMap<String, f64>,
}

impl MembershipVerdict {
    fn single(route: &str, certificate: f64, defect: f64, tol: f64) -> Self {
        let mut routes = BTreeMap::new();
        routes.insert(route.to_string(), certificate);
        Self { inside: certificate >= -tol, certificate, route: route.into(), hermiticity_defect: defect, routes }
    }
}

/// Certificate of `w`: smallest eigenvalue of its Hermitian part, or minus
/// the Hermiticity defect if that is larger than `tol`.
fn certificate<T: Real>(w: &ComplexMatrix<T>, tol: T) -> (T, T) {
    let defect = linalg::hermiticity_defect(w);
    let min = linalg::min_eigenvalue(w);
    let cert = if defect > tol && -defect < min { -defect } else { min };
    (cert, defect)
}

/// Combines verdicts of independent routes. A route that clearly excludes
/// (`< -10 tol`) while another clearly includes (`>= -tol`) is reported as
/// an internal consistency error.
fn combine(name: &str, verdicts: &[MembershipVerdict], tol: f64) -> Result<MembershipVerdict> {
    let clear_out = verdicts.iter().find(|v| v.certificate < -10.0 * tol);
    let clear_in = verdicts.iter().find(|v| v.certificate >= -tol);
    if let (Some(o), Some(i)) = (clear_out, clear_in) {
        return Err(Error::Consistency(format!(
            "{name}: route {} gives certificate {:e} but route {} gives {:e}",
            o.route, o.certificate, i.route, i.certificate
        )));
    }
    let certificate = verdicts.iter().map(|v| v.certificate).fold(f64::INFINITY, f64::min);
    let defect = verdicts.iter().map(|v| v.hermiticity_defect).fold(0.0, f64::max);
    let mut routes = BTreeMap::new();
    for v in verdicts {
        for (k, c) in &v.routes {
            routes.insert(k.clone(), *c);
        }
    }
    Ok(MembershipVerdict { inside: certificate >= -tol, certificate, route: name.into(), hermiticity_defect: defect, routes })
}

/// `xi in V_beta` iff `a = mat(Delta^{-beta} xi) rho^{-1/2}` is PSD.
pub fn v_beta_membership<T: Real>(ctx: &GnsContext<T>, q: &ConeQuery<T>, xi: &GnsVector<T>) -> Result<MembershipVerdict> {
    check_beta(q.beta)?;
    let back = ctx.apply_delta_power(-q.beta, xi)?;
    let a = ctx.operator_of(&back)?;
    let (cert, defect) = certificate(&a, q.tol);
    Ok(MembershipVerdict::single(
        &format!("v_beta({})", q.beta.to_f64_lossy()),
        cert.to_f64_lossy(),
        defect.to_f64_lossy(),
        q.tol.to_f64_lossy(),
    ))
}

/// Natural-cone membership, decided twice: as `V_{1/4}` membership and by
/// the spectral test `mat(xi) >= 0`, which is equivalent because
/// `Delta^{1/4} a Omega = rho^{1/4} a rho^{1/4}`.
pub fn natural_cone_membership<T: Real>(ctx: &GnsContext<T>, xi: &GnsVector<T>) -> Result<MembershipVerdict> {
    natural_cone_membership_tol(ctx, xi, default_tol())
}

pub fn natural_cone_membership_tol<T: Real>(ctx: &GnsContext<T>, xi: &GnsVector<T>, tol: T) -> Result<MembershipVerdict> {
    ctx.ensure(xi)?;
    let q = ConeQuery::new(lit(0.25), tol)?;
    let mut via_beta = v_beta_membership(ctx, &q, xi)?;
    via_beta.route = "v_quarter".into();
    via_beta.routes = BTreeMap::from([("v_quarter".to_string(), via_beta.certificate)]);
    let (cert, defect) = certificate(xi.mat(), tol);
    let spectral = MembershipVerdict::single("spectral", cert.to_f64_lossy(), defect.to_f64_lossy(), tol.to_f64_lossy());
    combine("natural_cone", &[via_beta, spectral], tol.to_f64_lossy())
}

/// `Delta^beta a Omega` for a random full-rank PSD `a` of unit trace.
pub fn sample_v_beta<T: Real, R: rand::Rng + ?Sized>(ctx: &GnsContext<T>, beta: T, rng: &mut R) -> Result<GnsVector<T>> {
    let a = rng::psd_of_rank::<T, _>(rng, ctx.dim(), ctx.dim());
    ctx.apply_delta_power(beta, &ctx.vector_of_operator(a.matrix())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub beta: f64,
    pub samples: usize,
    pub seed: u64,
    /// Smallest real part of `(eta, xi)` over sampled `xi in V_beta`,
    /// `eta in V_{1/2-beta}`.
    pub min_pairing: f64,
    /// Largest `|Im (eta, xi)|` over the same pairs.
    pub max_imaginary: f64,
    pub outside_samples: usize,
    /// Outside samples for which the eigen-directed `eta` separates.
    pub separated: usize,
    /// Largest pairing value attained by a separating `eta` (negative when
    /// every separation succeeded).
    pub worst_separation: f64,
    pub passed: bool,
}

/// Samples the duality `V_beta = {xi : (eta, xi) >= 0 for eta in V_{1/2-beta}}`.
///
/// For `xi` outside `V_beta` the separating vector is
/// `eta = Delta^{1/2-beta} b Omega` with `b = rho^{-1/2} |v><v| rho^{-1/2}`
/// and `v` the most negative eigenvector of the Hermitian part of the
/// membership witness `a`, so that `(eta, xi) = <v, a v>`. When that
/// Hermitian part is PSD but `a` is not Hermitian, `v` is taken from the
/// anti-Hermitian part and the pairing is non-real.
pub fn duality_check<T: Real>(ctx: &GnsContext<T>, beta: T, samples: usize, seed: u64) -> Result<DualityReport> {
    check_beta(beta)?;
    let tol = default_tol::<T>().to_f64_lossy();
    let dual = lit::<T>(0.5) - beta;
    let n = ctx.dim();
    let mut min_pairing = f64::INFINITY;
    let mut max_imag = 0.0f64;
    let mut outside = 0;
    let mut separated = 0;
    let mut worst = f64::NEG_INFINITY;
    for s in 0..samples {
        let mut r = rng::stream_rng(seed, s as u64);
        let xi = sample_v_beta(ctx, beta, &mut r)?;
        let eta = sample_v_beta(ctx, dual, &mut r)?;
        let p = eta.inner(&xi);
        min_pairing = min_pairing.min(p.re.to_f64_lossy());
        max_imag = max_imag.max(p.im.abs().to_f64_lossy());

        // Alternate between Hermitian-indefinite witnesses and generic vectors.
        let out = if s % 2 == 0 {
            let h = rng::hermitian::<T, _>(&mut r, n);
            ctx.apply_delta_power(beta, &ctx.vector_of_operator(h.matrix())?)?
        } else {
            ctx.vector(rng::unit_matrix(&mut r, n, n))?
        };
        let q = ConeQuery::new(beta, default_tol())?;
        if v_beta_membership(ctx, &q, &out)?.inside {
            continue;
        }
        outside += 1;
        let eta = separating_vector(ctx, beta, &out)?;
        let p = eta.inner(&out);
        let (re, im) = (p.re.to_f64_lossy(), p.im.to_f64_lossy());
        if re < -tol || im.abs() > tol {
            separated += 1;
        }
        worst = worst.max(if im.abs() > tol { -im.abs() } else { re });
    }
    Ok(DualityReport {
        beta: beta.to_f64_lossy(),
        samples,
        seed,
        min_pairing,
        max_imaginary: max_imag,
        outside_samples: outside,
        separated,
        worst_separation: worst,
        passed: min_pairing >= -CONE_TOL && max_imag <= CONE_TOL && separated == outside,
    })
}

/// Vector of `V_{1/2-beta}` pairing negatively (or non-really) with `xi`.
pub fn separating_vector<T: Real>(ctx: &GnsContext<T>, beta: T, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
    check_beta(beta)?;
    let a = ctx.operator_of(&ctx.apply_delta_power(-beta, xi)?)?;
    let h = linalg::hermitian_part(&a);
    let e = linalg::herm_eig_matrix(&h);
    let v = if e.min() < -default_tol::<T>() {
        e.vector(e.values.len() - 1)
    } else {
        // Anti-Hermitian part K = (a - a^dagger)/(2i); its extreme
        // eigenvector makes <v, a v> non-real.
        let i2 = Complex::new(T::zero(), lit(2.0));
        let k = (&a - a.adjoint()).map(|z| z / i2);
        let ek = linalg::herm_eig_matrix(&linalg::hermitian_part(&k));
        let last = ek.values.len() - 1;
        if ek.values[0].abs() >= ek.values[last].abs() {
            ek.vector(0)
        } else {
            ek.vector(last)
        }
    };
    let b = ctx.inv_sqrt_rho() * linalg::outer(&v, &v) * ctx.inv_sqrt_rho();
    ctx.apply_delta_power(lit::<T>(0.5) - beta, &ctx.vector_of_operator(&b)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UMapReport {
    pub beta: f64,
    pub samples: usize,
    pub seed: u64,
    /// Smallest certificate of `U xi in V_{1/2-beta}` over `xi in V_beta`.
    pub min_certificate_u: f64,
    /// Smallest certificate of `U Delta^{1/2} xi in V_0` over `xi in V_0`.
    pub min_certificate_polar: f64,
    /// `max ||U Delta^{1/2} a Omega - a^t Omega||`.
    pub polar_residual: f64,
    pub failures: usize,
    pub passed: bool,
}

/// Checks that `U` maps `V_beta` into `V_{1/2-beta}` and `U Delta^{1/2}`
/// maps `V_0` into itself.
pub fn u_maps_cones<T: Real>(ctx: &GnsContext<T>, beta: T, samples: usize, seed: u64) -> Result<UMapReport> {
    check_beta(beta)?;
    let tol = default_tol::<T>();
    let target = ConeQuery::new(lit::<T>(0.5) - beta, tol)?;
    let v0 = ConeQuery::new(T::zero(), tol)?;
    let mut min_u = f64::INFINITY;
    let mut min_polar = f64::INFINITY;
    let mut polar_residual = T::zero();
    let mut failures = 0;
    for s in 0..samples {
        let mut r = rng::stream_rng(seed, s as u64);
        let xi = sample_v_beta(ctx, beta, &mut r)?;
        let vu = v_beta_membership(ctx, &target, &ctx.apply_u(&xi)?)?;
        min_u = min_u.min(vu.certificate);

        let a = rng::psd_of_rank::<T, _>(&mut r, ctx.dim(), ctx.dim());
        let x0 = ctx.vector_of_operator(a.matrix())?;
        let image = ctx.apply_u(&ctx.apply_delta_power(lit(0.5), &x0)?)?;
        let vp = v_beta_membership(ctx, &v0, &image)?;
        min_polar = min_polar.min(vp.certificate);
        let expected = ctx.vector_of_operator(&ctx.transpose_operator(a.matrix())?)?;
        let d = image.distance(&expected);
        if d > polar_residual {
            polar_residual = d;
        }
        if !vu.inside || !vp.inside {
            failures += 1;
        }
    }
    Ok(UMapReport {
        beta: beta.to_f64_lossy(),
        samples,
        seed,
        min_certificate_u: min_u,
        min_certificate_polar: min_polar,
        polar_residual: polar_residual.to_f64_lossy(),
        failures,
        passed: failures == 0 && polar_residual.to_f64_lossy() <= CONE_TOL,
    })
}

/// The cone vector of `sigma`: the unique `xi in P` with
/// `(xi, a xi) = Tr(sigma a)`, namely `mat(xi) = sigma^{1/2}`.
pub fn state_to_cone_vector<T: Real>(ctx: &GnsContext<T>, sigma: &DensityMatrix<T>) -> Result<GnsVector<T>> {
    if sigma.dim() != ctx.dim() {
        return Err(Error::Shape(format!(
            "state of dimension {} in a GNS space over dimension {}",
            sigma.dim(),
            ctx.dim()
        )));
    }
    // Unlike mat_sqrt_psd, small positive eigenvalues are kept: the state
    // of the returned vector must reproduce sigma, not a truncation of it.
    let tol = Tolerances::<T>::default().psd;
    let (root, min) = linalg::spectral_map(sigma.matrix(), |x| if x > T::zero() { x.sqrt() } else { T::zero() });
    if min < -tol {
        return Err(Error::Contract(format!(
            "square root of a non-PSD operator (min eigenvalue {:e})",
            min.to_f64_lossy()
        )));
    }
    ctx.vector(root)
}

/// `max |Tr(sigma a) - (xi, a xi)|` over `samples` random `a`.
pub fn connes_residual<T: Real>(sigma: &DensityMatrix<T>, xi: &GnsVector<T>, samples: usize, seed: u64) -> T {
    let mut r = rng::seeded(seed);
    let n = sigma.dim();
    let mut worst = T::zero();
    for _ in 0..samples {
        let a = rng::ginibre::<T, _>(&mut r, n, n);
        let lhs = (sigma.matrix() * &a).trace();
        let rhs = linalg::hs_inner(xi.mat(), &(&a * xi.mat()));
        let d = linalg::modulus(lhs - rhs);
        if d > worst {
            worst = d;
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransposeReport {
    /// `max |density(U xi) - density(xi)^t|` entrywise.
    pub residual: f64,
    pub cone_certificate: f64,
    pub passed: bool,
}

/// `U xi`, the cone vector of the transposed state `omega_xi o tau`.
pub fn transpose_state_vector<T: Real>(ctx: &GnsContext<T>, xi: &GnsVector<T>) -> Result<(GnsVector<T>, TransposeReport)> {
    let v = natural_cone_membership(ctx, xi)?;
    if !v.inside {
        return Err(Error::Contract(format!(
            "vector is not in the natural cone (certificate {:e})",
            v.certificate
        )));
    }
    let out = ctx.apply_u(xi)?;
    let expected = ctx.transpose_operator(&xi.density())?;
    let residual = linalg::max_abs(&(out.density() - expected)).to_f64_lossy();
    Ok((out, TransposeReport { residual, cone_certificate: v.certificate, passed: residual <= CONE_TOL }))
}

/// GNS data of `rho_A (x) rho_B` with `H = H_A (x) H_B`,
/// `pi = pi_A (x) pi_B` and `Omega = Omega_A (x) Omega_B`.
///
/// The joint eigenbasis is the product basis `x_i (x) y_k` in product
/// order, so that joint coordinates are tensor products of factor
/// coordinates and `1 (x) U_B` is the partial transpose of coordinates.
#[derive(Debug, Clone)]
pub struct CompositeGnsContext<T: Real> {
    ctx_a: GnsContext<T>,
    ctx_b: GnsContext<T>,
    joint: GnsContext<T>,
    shape: BipartiteShape,
    factorization: BTreeMap<String, f64>,
}

/// Number of sampled vectors in the factorization check.
const FACTORIZATION_SAMPLES: usize = 50;

pub fn build_composite<T: Real>(ctx_a: &GnsContext<T>, ctx_b: &GnsContext<T>) -> Result<CompositeGnsContext<T>> {
    let shape = BipartiteShape::new(ctx_a.dim(), ctx_b.dim())?;
    linalg::check_dim(shape.total() * shape.total())?;
    let rho = linalg::kron(ctx_a.rho().matrix(), ctx_b.rho().matrix())?;
    let (la, lb) = (ctx_a.eigenvalues(), ctx_b.eigenvalues());
    let values: Vec<T> = la.iter().flat_map(|&x| lb.iter().map(move |&y| x * y)).collect();
    let vectors = linalg::kron(ctx_a.eigenvectors(), ctx_b.eigenvectors())?;
    let joint = GnsContext::from_eigen(
        DensityMatrix::from_psd_unchecked(HermitianOperator::from_hermitian_part(rho)),
        Eigen { values, vectors },
    )?;
    let mut c = CompositeGnsContext {
        ctx_a: ctx_a.clone(),
        ctx_b: ctx_b.clone(),
        joint,
        shape,
        factorization: BTreeMap::new(),
    };
    let res = c.check_factorization(FACTORIZATION_SAMPLES, 0x5eed)?;
    let tol = Tolerances::<T>::default().herm.to_f64_lossy();
    let max = res.max();
    c.factorization = res.into_map();
    if max > tol {
        return Err(Error::Consistency(format!("joint modular data does not factorize (residual {max:e})")));
    }
    Ok(c)
}

impl<T: Real> CompositeGnsContext<T> {
    pub fn ctx_a(&self) -> &GnsContext<T> {
        &self.ctx_a
    }

    pub fn ctx_b(&self) -> &GnsContext<T> {
        &self.ctx_b
    }

    pub fn joint(&self) -> &GnsContext<T> {
        &self.joint
    }

    pub fn shape(&self) -> BipartiteShape {
        self.shape
    }

    /// Residuals of `J_m = J_A (x) J_B`, `Delta = Delta_A (x) Delta_B` and
    /// `Omega = Omega_A (x) Omega_B` measured at construction.
    pub fn factorization_residuals(&self) -> &BTreeMap<String, f64> {
        &self.factorization
    }

    /// `xi_A (x) xi_B`.
    pub fn product_vector(&self, xa: &GnsVector<T>, xb: &GnsVector<T>) -> Result<GnsVector<T>> {
        self.ctx_a.ensure(xa)?;
        self.ctx_b.ensure(xb)?;
        self.joint.vector(linalg::kron(xa.mat(), xb.mat())?)
    }

    /// `(1 (x) U_B) xi`.
    pub fn apply_u_b(&self, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        let c = self.joint.coords(xi)?;
        self.joint.from_coords(&linalg::partial_transpose(&c, self.shape, Subsystem::B)?)
    }

    /// `(U_A (x) 1) xi`.
    pub fn apply_u_a(&self, xi: &GnsVector<T>) -> Result<GnsVector<T>> {
        let c = self.joint.coords(xi)?;
        self.joint.from_coords(&linalg::partial_transpose(&c, self.shape, Subsystem::A)?)
    }

    fn check_factorization(&self, samples: usize, seed: u64) -> Result<Residuals> {
        let mut res = Residuals::default();
        let (a, b, j) = (&self.ctx_a, &self.ctx_b, &self.joint);
        let omega = self.product_vector(a.omega(), b.omega())?;
        res.record("omega", omega.distance(j.omega()));
        for s in 0..samples {
            let mut r = rng::stream_rng(seed, s as u64);
            let xa = a.vector(rng::unit_matrix(&mut r, a.dim(), a.dim()))?;
            let xb = b.vector(rng::unit_matrix(&mut r, b.dim(), b.dim()))?;
            let x = self.product_vector(&xa, &xb)?;

            let lhs = j.apply_conjugation(j.jm(), &x)?;
            let rhs = self.product_vector(&a.apply_conjugation(a.jm(), &xa)?, &b.apply_conjugation(b.jm(), &xb)?)?;
            res.record("jm", lhs.distance(&rhs));

            let lhs = j.apply_conjugation(j.j(), &x)?;
            let rhs = self.product_vector(&a.apply_conjugation(a.j(), &xa)?, &b.apply_conjugation(b.j(), &xb)?)?;
            res.record("j", lhs.distance(&rhs));

            let lhs = j.apply_delta_power(T::one(), &x)?;
            let rhs = self.product_vector(&a.apply_delta_power(T::one(), &xa)?, &b.apply_delta_power(T::one(), &xb)?)?;
            res.record("delta", lhs.distance(&rhs) / (T::one() + rhs.norm()));

            let lhs = self.apply_u_b(&x)?;
            let rhs = self.product_vector(&xa, &b.apply_u(&xb)?)?;
            res.record("u_b", lhs.distance(&rhs));
        }
        Ok(res)
    }

    /// `Delta^{1/4} a Omega` on the joint space.
    pub fn cone_vector_of(&self, a: &ComplexMatrix<T>) -> Result<GnsVector<T>> {
        self.joint.apply_delta_power(lit(0.25), &self.joint.vector_of_operator(a)?)
    }
}

/// Membership in `P_n  /\  P_n^tau`, with `P_n^tau = (1 (x) U_B) P_n`.
///
/// Route (i): `xi in P` and `(1 (x) U_B) xi in P` on the joint space.
/// Route (ii): `a = rho^{-1/4} mat(xi) rho^{-1/4}` and its partial
/// transpose on `B` are both PSD.
pub fn pn_intersection_membership<T: Real>(c: &CompositeGnsContext<T>, xi: &GnsVector<T>) -> Result<MembershipVerdict> {
    let tol = default_tol::<T>();
    let j = &c.joint;
    let natural = natural_cone_membership(j, xi)?;
    let transposed = natural_cone_membership(j, &c.apply_u_b(xi)?)?;
    let cert_i = natural.certificate.min(transposed.certificate);
    let defect_i = natural.hermiticity_defect.max(transposed.hermiticity_defect);
    let route_i = MembershipVerdict::single("cone_and_transposed_cone", cert_i, defect_i, tol.to_f64_lossy());

    let q = j.rho_power(lit(-0.25));
    let a = &q * xi.mat() * &q;
    let (ca, da) = certificate(&a, tol);
    let (cg, dg) = certificate(&linalg::partial_transpose(&a, c.shape, Subsystem::B)?, tol);
    let route_ii = MembershipVerdict::single(
        "ppt_of_a",
        if ca < cg { ca } else { cg }.to_f64_lossy(),
        if da > dg { da } else { dg }.to_f64_lossy(),
        tol.to_f64_lossy(),
    );
    combine("pn_intersection", &[route_i, route_ii], tol.to_f64_lossy())
}

/// Basis `y_(p,q,r,s) = L_{E_pq (x) 1} R_{1 (x) E_rs}` of the algebra
/// `B(H_A) (x) B(H_B)'` acting on the joint GNS space.
fn commutant_action<T: Real>(
    shape: BipartiteShape,
    a: &ComplexMatrix<T>,
    c: &ComplexMatrix<T>,
    xi: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    let left = linalg::kron(a, &ComplexMatrix::identity(shape.dim_b, shape.dim_b))?;
    let right = linalg::kron(&ComplexMatrix::identity(shape.dim_a, shape.dim_a), c)?;
    Ok(left * xi * right)
}

/// Membership in the natural cone `P'` of `(B(H_A) (x) B(H_B)', Omega)`,
/// decided without reference to `U_B`: by self-duality `xi in P'` iff
/// `(y J_m y Omega, xi) >= 0` for every `y` in the algebra, i.e. iff the
/// Hermitian form `Q[s, t] = (y_s J_m(y_t Omega), xi)` over a basis of the
/// algebra is PSD.
pub fn commutant_cone_membership<T: Real>(c: &CompositeGnsContext<T>, xi: &GnsVector<T>) -> Result<MembershipVerdict> {
    let j = &c.joint;
    j.ensure(xi)?;
    let (na, nb) = (c.shape.dim_a, c.shape.dim_b);
    let mut basis = Vec::with_capacity(na * na * nb * nb);
    for p in 0..na {
        for q in 0..na {
            for r in 0..nb {
                for s in 0..nb {
                    basis.push((linalg::matrix_unit::<T>(na, p, q), linalg::matrix_unit::<T>(nb, r, s)));
                }
            }
        }
    }
    let omega = j.omega().mat();
    let mut w = Vec::with_capacity(basis.len());
    let mut v = Vec::with_capacity(basis.len());
    for (a, b) in &basis {
        let y_omega = j.vector(commutant_action(c.shape, a, b, omega)?)?;
        w.push(j.apply_conjugation(j.jm(), &y_omega)?.into_mat());
        v.push(commutant_action(c.shape, &a.adjoint(), &b.adjoint(), xi.mat())?);
    }
    let d = basis.len();
    let q = DMatrix::from_fn(d, d, |s, t| linalg::hs_inner(&w[t], &v[s]));
    let tol = default_tol::<T>();
    let (cert, defect) = certificate(&q, tol);
    Ok(MembershipVerdict::single("commutant_form", cert.to_f64_lossy(), defect.to_f64_lossy(), tol.to_f64_lossy()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutantReport {
    pub samples: usize,
    pub seed: u64,
    /// `max ||(1 (x) U_B)[x J_m x Omega] - x' J_m x' Omega||` with
    /// `x = sum a_k (x) b_k` and `x' = sum a_k (x) alpha(b_k)`.
    pub generator_residual: f64,
    /// Smallest pairing of `(1 (x) U_B) P` samples with `P'` generators.
    pub min_pairing_transposed_vs_commutant: f64,
    /// Smallest certificate of `(1 (x) U_B) g in P` over `P'` generators `g`.
    pub min_certificate_commutant_in_transposed: f64,
    /// Smallest certificate of `P'` membership of `(1 (x) U_B) P` samples.
    pub min_certificate_transposed_in_commutant: f64,
    /// Smallest `P'` certificate of rank-one `P` samples, which are
    /// generically entangled; expected to be negative.
    pub negative_control_certificate: f64,
    /// Random vectors for which `P /\ P^tau` and `P /\ P'` membership agree.
    pub intersection_agreements: usize,
    pub intersection_trials: usize,
    pub intersection_inside: usize,
    pub passed: bool,
}

/// Checks `(1 (x) U_B) P = P'` on generators, by cross-membership and by
/// agreement of `P /\ P^tau` with `P /\ P'`.
pub fn commutant_cone_check<T: Real>(c: &CompositeGnsContext<T>, samples: usize, seed: u64) -> Result<CommutantReport> {
    if samples == 0 {
        return Err(Error::Contract("commutant_cone_check needs at least one sample".into()));
    }
    let j = &c.joint;
    let (na, nb) = (c.shape.dim_a, c.shape.dim_b);
    let n = c.shape.total();
    let omega = j.omega().mat().clone();
    let mut generator_residual = T::zero();
    let mut min_pair = f64::INFINITY;
    let mut min_in_transposed = f64::INFINITY;
    let mut min_in_commutant = f64::INFINITY;
    let mut negative_control = f64::INFINITY;
    let mut agreements = 0;
    let mut inside = 0;

    for s in 0..samples {
        let mut r = rng::stream_rng(seed, s as u64);
        let terms: Vec<(ComplexMatrix<T>, ComplexMatrix<T>)> = (0..2)
            .map(|_| (rng::ginibre::<T, _>(&mut r, na, na), rng::ginibre::<T, _>(&mut r, nb, nb)))
            .collect();

        // Lemma computation on the generator x J_m x Omega.
        let x = terms.iter().try_fold(ComplexMatrix::<T>::zeros(n, n), |acc, (a, b)| {
            linalg::kron(a, b).map(|k| acc + k)
        })?;
        let x_omega = j.vector(&x * &omega)?;
        let gen = j.vector(&x * j.apply_conjugation(j.jm(), &x_omega)?.mat())?;
        let lhs = c.apply_u_b(&gen)?;
        let x_prime = |v: &GnsVector<T>| -> Result<GnsVector<T>> {
            let t = c.apply_u_b(v)?;
            c.apply_u_b(&j.vector(&x * t.mat())?)
        };
        let xp_omega = x_prime(j.omega())?;
        let rhs = x_prime(&j.apply_conjugation(j.jm(), &xp_omega)?)?;
        let d = lhs.distance(&rhs) / (T::one() + lhs.norm());
        if d > generator_residual {
            generator_residual = d;
        }

        // A P' generator y J_m y Omega, y = sum (a_k (x) 1) . (1 (x) c_k) on the right.
        let y = |v: &ComplexMatrix<T>| -> Result<ComplexMatrix<T>> {
            terms.iter().try_fold(ComplexMatrix::<T>::zeros(n, n), |acc, (a, b)| {
                commutant_action(c.shape, a, b, v).map(|m| acc + m)
            })
        };
        let y_omega = j.vector(y(&omega)?)?;
        let g_prime = j.vector(y(j.apply_conjugation(j.jm(), &y_omega)?.mat())?)?;

        // A (1 (x) U_B) P sample and a P sample.
        let z = rng::psd_of_rank::<T, _>(&mut r, n, n);
        let p_sample = j.vector(z.into_matrix())?;
        let transposed = c.apply_u_b(&p_sample)?;

        min_pair = min_pair.min(g_prime.inner(&transposed).re.to_f64_lossy());
        let edge = j.vector(rng::psd_of_rank::<T, _>(&mut r, n, 1).into_matrix())?;
        negative_control = negative_control.min(commutant_cone_membership(c, &edge)?.certificate);
        min_in_transposed = min_in_transposed.min(natural_cone_membership(j, &c.apply_u_b(&g_prime)?)?.certificate);
        min_in_commutant = min_in_commutant.min(commutant_cone_membership(c, &transposed)?.certificate);

        // P /\ P^tau versus P /\ P'.
        let h = rng::hermitian::<T, _>(&mut r, n);
        let radius: T = rng::uniform(&mut r);
        let trial = j.vector(h.matrix().scale(radius) + ComplexMatrix::identity(n, n).scale(T::one() / lit(n as f64)))?;
        let via_tau = pn_intersection_membership(c, &trial)?;
        let via_commutant = natural_cone_membership(j, &trial)?.inside && commutant_cone_membership(c, &trial)?.inside;
        if via_tau.inside == via_commutant {
            agreements += 1;
        }
        if via_tau.inside {
            inside += 1;
        }
    }
    let tol = CONE_TOL;
    let generator_residual = generator_residual.to_f64_lossy();
    Ok(CommutantReport {
        samples,
        seed,
        generator_residual,
        min_pairing_transposed_vs_commutant: min_pair,
        min_certificate_commutant_in_transposed: min_in_transposed,
        min_certificate_transposed_in_commutant: min_in_commutant,
        negative_control_certificate: negative_control,
        intersection_agreements: agreements,
        intersection_trials: samples,
        intersection_inside: inside,
        passed: generator_residual <= tol
            && min_pair >= -tol
            && min_in_transposed >= -tol
            && min_in_commutant >= -tol
            && agreements == samples,
    })
}

/// Random faithful composite context with factor dimensions `shape`.
pub fn random_composite<T: Real>(shape: BipartiteShape, seed: u64) -> Result<CompositeGnsContext<T>> {
    let mut r = rng::seeded(seed);
    let a = gns::build_gns(&gns::random_faithful::<T, _>(&mut r, shape.dim_a))?;
    let b = gns::build_gns(&gns::random_faithful::<T, _>(&mut r, shape.dim_b))?;
    build_composite(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gns::{build_gns, diagonal_density, random_faithful};
    use crate::linalg::max_abs;
    use crate::optim::{project_ppt, PptSetSpec};
    use nalgebra::DVector;

    type C = Complex<f64>;

    fn ctx(n: usize, seed: u64) -> GnsContext<f64> {
        build_gns(&random_faithful::<f64, _>(&mut rng::seeded(seed), n)).unwrap()
    }

    fn shape(a: usize, b: usize) -> BipartiteShape {
        BipartiteShape::new(a, b).unwrap()
    }

    #[test]
    fn omega_is_in_every_v_beta() {
        let g = ctx(3, 1);
        for beta in [0.0, 0.125, 0.25, 0.375, 0.5] {
            let q = ConeQuery::new(beta, 1e-10).unwrap();
            let v = v_beta_membership(&g, &q, g.omega()).unwrap();
            assert!(v.inside && (v.certificate - 1.0).abs() < 1e-10, "{beta}: {v:?}");
        }
    }

    #[test]
    fn beta_out_of_range() {
        assert!(ConeQuery::<f64>::new(0.6, 1e-10).is_err());
        assert!(ConeQuery::<f64>::new(-0.1, 1e-10).is_err());
        let g = ctx(2, 1);
        assert!(duality_check(&g, 0.7, 1, 0).is_err());
    }

    #[test]
    fn negative_operator_is_outside() {
        let g = ctx(3, 2);
        let xi = g.vector(-ComplexMatrix::<f64>::identity(3, 3)).unwrap();
        let v = v_beta_membership(&g, &ConeQuery::natural(), &xi).unwrap();
        assert!(!v.inside);
        // a = -rho^{-1/2}, so the certificate is -1/sqrt(lambda_min).
        let expected = -1.0 / g.eigenvalues()[2].sqrt();
        assert!((v.certificate - expected).abs() < 1e-9);
    }

    #[test]
    fn constructive_samples_are_inside() {
        let g = ctx(3, 3);
        let mut r = rng::seeded(4);
        for beta in [0.0, 0.125, 0.25, 0.375, 0.5] {
            let q = ConeQuery::new(beta, 1e-10).unwrap();
            for _ in 0..100 {
                let xi = sample_v_beta(&g, beta, &mut r).unwrap();
                assert!(v_beta_membership(&g, &q, &xi).unwrap().inside);
            }
        }
    }

    #[test]
    fn natural_cone_routes_agree() {
        let g = ctx(2, 5);
        assert!(natural_cone_membership(&g, g.omega()).unwrap().inside);
        let mut r = rng::seeded(6);
        for _ in 0..100 {
            let p = rng::psd_of_rank::<f64, _>(&mut r, 2, 2);
            let v = natural_cone_membership(&g, &g.vector(p.into_matrix()).unwrap()).unwrap();
            assert!(v.inside && v.routes.len() == 2);
        }
        let neg = g.vector(linalg::real_diagonal(&[1.0, -0.5])).unwrap();
        let v = natural_cone_membership(&g, &neg).unwrap();
        assert!(!v.inside);
        assert!(v.routes.values().all(|&c| c < 0.0));
    }

    #[test]
    fn duality() {
        let g = ctx(3, 7);
        for beta in [0.0, 0.125, 0.25, 0.375, 0.5] {
            let rep = duality_check(&g, beta, 100, 8).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.outside_samples > 10);
        }
    }

    #[test]
    fn u_maps_cones_examples() {
        let g = ctx(3, 9);
        for beta in [0.0, 0.125, 0.25] {
            let rep = u_maps_cones(&g, beta, 50, 10).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn cone_vector_of_states() {
        let g = ctx(2, 11);
        let xi = state_to_cone_vector(&g, g.rho()).unwrap();
        assert!(xi.distance(g.omega()) < 1e-12);

        let eps = 0.01;
        let sigma = diagonal_density::<f64>(&[(1.0 + eps) / (1.0 + 2.0 * eps), eps / (1.0 + 2.0 * eps)]).unwrap();
        let xi = state_to_cone_vector(&g, &sigma).unwrap();
        let expected = linalg::real_diagonal(&[
            ((1.0 + eps) / (1.0 + 2.0 * eps)).sqrt(),
            (eps / (1.0 + 2.0 * eps)).sqrt(),
        ]);
        assert!(max_abs(&(xi.mat() - expected)) < 1e-12);
        assert!(connes_residual(&sigma, &xi, 50, 1) < 1e-9);

        let v = DVector::from_vec(vec![C::new(0.6, 0.0), C::new(0.0, 0.8)]);
        let pure = DensityMatrix::pure(&v);
        let xi = state_to_cone_vector(&g, &pure).unwrap();
        assert!(max_abs(&(xi.mat() - pure.matrix())) < 1e-7);
        assert!(connes_residual(&pure, &xi, 50, 2) < 1e-7);
        assert!(natural_cone_membership(&g, &xi).unwrap().inside);
    }

    #[test]
    fn transposed_states() {
        let g = ctx(3, 12);
        let (out, rep) = transpose_state_vector(&g, g.omega()).unwrap();
        assert!(out.distance(g.omega()) < 1e-12 && rep.passed);

        let mut r = rng::seeded(13);
        let pure = rng::pure_density::<f64, _>(&mut r, 3);
        let xi = state_to_cone_vector(&g, &pure).unwrap();
        let (out, rep) = transpose_state_vector(&g, &xi).unwrap();
        assert!(rep.residual < 1e-10, "{rep:?}");
        let t = g.transpose_operator(pure.matrix()).unwrap();
        assert!(max_abs(&(out.density() - &t)) < 1e-10);
        assert!(max_abs(&(t - pure.matrix())) > 1e-3);

        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let sigma = rng::density::<f64, _>(&mut r, 3);
            let xi = state_to_cone_vector(&g, &sigma).unwrap();
            worst = worst.max(transpose_state_vector(&g, &xi).unwrap().1.residual);
        }
        assert!(worst <= 1e-10, "{worst}");

        let bad = g.vector(linalg::real_diagonal(&[1.0, -1.0, 1.0])).unwrap();
        assert!(matches!(transpose_state_vector(&g, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn composite_tracial() {
        let a = build_gns(&DensityMatrix::<f64>::maximally_mixed(2)).unwrap();
        let c = build_composite(&a, &a).unwrap();
        let direct = build_gns(&DensityMatrix::<f64>::maximally_mixed(4)).unwrap();
        assert!(max_abs(&(c.joint().omega().mat() - direct.omega().mat())) < 1e-15);
        assert_eq!(c.joint().eigenvalues(), &[0.25; 4]);
        assert!(c.factorization_residuals().values().all(|&r| r < 1e-12));
    }

    #[test]
    fn composite_delta_table_is_outer_product() {
        let a = build_gns(&diagonal_density::<f64>(&[2.0 / 3.0, 1.0 / 3.0]).unwrap()).unwrap();
        let b = build_gns(&diagonal_density::<f64>(&[0.75, 0.25]).unwrap()).unwrap();
        let c = build_composite(&a, &b).unwrap();
        let (la, lb) = (a.log_ratio(), b.log_ratio());
        let lj = c.joint().log_ratio();
        for i in 0..2 {
            for k in 0..2 {
                for jj in 0..2 {
                    for l in 0..2 {
                        let expected = la[(i, jj)] + lb[(k, l)];
                        assert!((lj[(i * 2 + k, jj * 2 + l)] - expected).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn composite_matches_direct_gns_on_basis_free_operators() {
        let c = random_composite::<f64>(shape(2, 3), 14).unwrap();
        let direct = build_gns(c.joint().rho()).unwrap();
        let mut r = rng::seeded(15);
        for _ in 0..20 {
            let m = rng::unit_matrix::<f64, _>(&mut r, 6, 6);
            let (x, y) = (c.joint().vector(m.clone()).unwrap(), direct.vector(m).unwrap());
            let jx = c.joint().apply_conjugation(c.joint().jm(), &x).unwrap();
            let jy = direct.apply_conjugation(direct.jm(), &y).unwrap();
            assert!(max_abs(&(jx.mat() - jy.mat())) < 1e-10);
            let dx = c.joint().apply_delta_power(0.5, &x).unwrap();
            let dy = direct.apply_delta_power(0.5, &y).unwrap();
            assert!(max_abs(&(dx.mat() - dy.mat())) < 1e-10);
        }
        // Product-order eigenbasis stays valid for the joint rho.
        let e = c.joint().eigenvectors();
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            6,
            c.joint().eigenvalues().iter().map(|&l| C::new(l, 0.0)),
        ));
        assert!(max_abs(&(e * lam * e.adjoint() - c.joint().rho().matrix())) < 1e-12);
    }

    #[test]
    fn u_b_is_an_involution() {
        let c = random_composite::<f64>(shape(2, 2), 16).unwrap();
        let mut r = rng::seeded(17);
        let x = c.joint().vector(rng::unit_matrix(&mut r, 4, 4)).unwrap();
        let back = c.apply_u_b(&c.apply_u_b(&x).unwrap()).unwrap();
        assert!(back.distance(&x) < 1e-12);
    }

    #[test]
    fn pn_examples() {
        let c = random_composite::<f64>(shape(2, 2), 18).unwrap();
        let v = pn_intersection_membership(&c, c.joint().omega()).unwrap();
        assert!(v.inside);

        let spec = PptSetSpec::new(shape(2, 2));
        let mut r = rng::seeded(19);
        for _ in 0..20 {
            let h = rng::psd_of_rank::<f64, _>(&mut r, 4, 2);
            let (p, _) = project_ppt(&h, &spec).unwrap();
            let xi = c.cone_vector_of(p.matrix()).unwrap();
            assert!(pn_intersection_membership(&c, &xi).unwrap().inside);
        }

        let s = 0.5f64.sqrt();
        let phi = DVector::from_vec(vec![C::new(s, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(s, 0.0)]);
        let xi = c.cone_vector_of(&linalg::outer(&phi, &phi)).unwrap();
        let v = pn_intersection_membership(&c, &xi).unwrap();
        assert!(!v.inside);
        assert!((v.routes["ppt_of_a"] + 0.5).abs() < 1e-10, "{v:?}");
    }

    #[test]
    fn commutant_generators() {
        for (a, b) in [(2, 2), (2, 3)] {
            let c = random_composite::<f64>(shape(a, b), 20 + a as u64).unwrap();
            let rep = commutant_cone_check(&c, 20, 21).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.negative_control_certificate < -1e-3, "{rep:?}");
            assert!(rep.intersection_inside > 0 && rep.intersection_inside < rep.intersection_trials, "{rep:?}");
        }
    }

    #[test]
    fn commutant_single_term_with_identity() {
        let c = random_composite::<f64>(shape(2, 2), 22).unwrap();
        let mut r = rng::seeded(23);
        let a = rng::ginibre::<f64, _>(&mut r, 2, 2);
        let x = linalg::kron(&a, &ComplexMatrix::identity(2, 2)).unwrap();
        let j = c.joint();
        let x_omega = j.vector(&x * j.omega().mat()).unwrap();
        let gen = j.vector(&x * j.apply_conjugation(j.jm(), &x_omega).unwrap().mat()).unwrap();
        // b = 1: the generator lies in both cones.
        assert!(commutant_cone_membership(&c, &gen).unwrap().inside);
        assert!(natural_cone_membership(j, &gen).unwrap().inside);
    }
}
