use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the numerical core is generic over.
///
/// `RealField` brings in the `num-traits` arithmetic bounds (`Num`,
/// `FromPrimitive`, ...) together with what nalgebra's spectral routines
/// need for `Complex<T>` matrices.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default {
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Contract tolerances. Defaults are the double-precision values, raised to
/// a small multiple of machine epsilon for coarser scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub herm: T,
    pub psd: T,
    pub trace: T,
    pub faithful: T,
    pub reconstruction: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        let eps = T::default_epsilon();
        let floor = |x: f64, mult: f64| {
            let x: T = lit(x);
            let e = eps * lit(mult);
            if e > x {
                e
            } else {
                x
            }
        };
        Self {
            herm: floor(1e-10, 64.0),
            psd: floor(1e-10, 64.0),
            trace: floor(1e-10, 64.0),
            faithful: floor(1e-12, 8.0),
            reconstruction: floor(1e-9, 256.0),
        }
    }
}
