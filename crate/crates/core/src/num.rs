//! Scalar abstractions shared by the numeric parts of the crate.
//!
//! Embeddings are generic over [`Real`] (f32 or f64). Cost and latency
//! arithmetic is generic over [`Quantity`], which also admits integer
//! types so that the cost model and the pipeline latency law can be
//! evaluated exactly.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumCast, ToPrimitive};

/// Floating point scalar used for embedding arithmetic.
pub trait Real: Float + FromPrimitive + NumCast + Sum + Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Additive/multiplicative quantity: token counts, cost units, latencies.
pub trait Quantity:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count does not fit the quantity type")
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Quantity for f32 {}
impl Quantity for f64 {}
impl Quantity for i64 {}
impl Quantity for u64 {}
impl Quantity for i128 {}

/// Formats a number the way values appear in prompts and snippet output:
/// integral values without a fractional part, everything else in the
/// shortest round-trip form.
pub fn format_number(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
