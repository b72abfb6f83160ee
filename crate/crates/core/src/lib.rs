//! Positive-partial-transpose (PPT) states of finite-dimensional bipartite
//! systems, seen from two directions:
//!
//! * the Choi correspondence `H <-> S_H` between operators on `H (x) K` and
//!   linear maps `B(H) -> B(K)`, under which the Choi operators of
//!   decomposable maps form the dual cone of the PPT states;
//! * the Tomita-Takesaki picture, in which transposition is the polar map
//!   `U Delta^{1/2}` on the GNS space of a faithful state and PPT states
//!   correspond to the intersection of the natural cone with its
//!   "transposed" image `(1 (x) U_B) P`.
//!
//! Every numerical routine is generic over the real scalar `T: Real`
//! (`f32` or `f64`); the aliases at the bottom of this file fix `T = f64`,
//! which is what the tolerances in the test suites are calibrated for.

pub mod choi;
pub mod cones;
pub mod constructions;
mod error;
pub mod gns;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod rng;
mod scalar;
pub mod separable;

pub use error::{Error, Result};
pub use scalar::{lit, Real, Tolerances};

pub use linalg::{BipartiteShape, ComplexMatrix, DensityMatrix, HermitianOperator, Subsystem};

pub use num_complex::Complex;

/// Double-precision complex matrix.
pub type CMatrix = ComplexMatrix<f64>;
pub type Hermitian64 = HermitianOperator<f64>;
pub type Density64 = DensityMatrix<f64>;
pub type Gns64 = gns::GnsContext<f64>;
pub type GnsVector64 = gns::GnsVector<f64>;
pub type Composite64 = cones::CompositeGnsContext<f64>;
pub type MapTable64 = choi::MapTable<f64>;

pub type CMatrix32 = ComplexMatrix<f32>;
pub type Hermitian32 = HermitianOperator<f32>;
pub type Density32 = DensityMatrix<f32>;
pub type Gns32 = gns::GnsContext<f32>;
