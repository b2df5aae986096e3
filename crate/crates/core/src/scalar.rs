//! Floating-point scalar abstraction shared by every diagnostic.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use std::cell::RefCell;

use num_traits::{Float, FloatConst};
use rustfft::{FftNum, FftPlanner};

/// Real scalar the diagnostics are generic over (`f32` or `f64`).
///
/// Special functions (normal quantile, incomplete beta) are evaluated in
/// `f64` regardless of `Self` and cast back, so `f32` draws lose nothing
/// beyond their own storage precision.
pub trait Scalar:
    Float + FloatConst + FftNum + Sum + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; never fails for the supported types.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Runs `f` with this thread's cached FFT planner.
    fn with_fft_planner<R>(f: impl FnOnce(&mut FftPlanner<Self>) -> R) -> R;
}

thread_local! {
    static PLANNER_F32: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
    static PLANNER_F64: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

impl Scalar for f32 {
    fn with_fft_planner<R>(f: impl FnOnce(&mut FftPlanner<Self>) -> R) -> R {
        PLANNER_F32.with(|p| f(&mut p.borrow_mut()))
    }
}

impl Scalar for f64 {
    fn with_fft_planner<R>(f: impl FnOnce(&mut FftPlanner<Self>) -> R) -> R {
        PLANNER_F64.with(|p| f(&mut p.borrow_mut()))
    }
}

/// Total order on scalars with NaN sorted last; used for pooled sorts.
#[inline]
pub(crate) fn cmp_scalar<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.as_f64().total_cmp(&b.as_f64())
}
