use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the whole laboratory is generic over: f32 or f64.
///
/// All algorithms are written against this trait; the crate root exports
/// f64 aliases, which is what the CLI and the acceptance suite use.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert an f64 constant (tolerances, grid sizes, frozen values).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert to scalar")
    }

    /// Lossy view as f64, for reporting and serialization.
    fn to64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert to scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
