//! Numeric abstractions shared by the feature, engine and aggregation code.
//!
//! Indicator arithmetic only needs field operations, so it is written against
//! [`Scalar`], which exact rationals satisfy. Anything that evaluates a
//! logistic, a square root or a clamp to the unit interval needs [`Real`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, Num};

/// Field-like scalar: floats and exact rationals.
pub trait Scalar: Num + Copy + PartialOrd + Debug + FromPrimitive + Send + Sync + 'static {
    /// Exact conversion of a small count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar")
    }

    /// `num / den`, with `0` when the denominator is zero.
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            Self::from_count(num) / Self::from_count(den)
        }
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + Debug + FromPrimitive + Send + Sync + 'static {}

/// Floating-point scalar used by the stochastic engine.
pub trait Real: Scalar + Float + Display {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn clamp01(self) -> Self {
        self.max(Self::zero()).min(Self::one())
    }

    fn logistic(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// Log-odds of a probability; saturates at the float range for 0 and 1.
    fn logit(self) -> Self {
        let eps = Self::epsilon();
        let p = self.max(eps).min(Self::one() - eps);
        (p / (Self::one() - p)).ln()
    }
}

impl Real for f32 {}
impl Real for f64 {}
