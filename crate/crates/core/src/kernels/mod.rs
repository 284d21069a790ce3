//! Numeric primitives with hand-written forward and backward passes.
//!
//! Every kernel works on caller-owned, row-major buffers and never keeps
//! state between calls. Kernels are generic over [`Real`] so the same code
//! path trains in `f32` and is gradient-checked in `f64`.

mod adam;
mod conv;
mod dense;
mod lstm;
mod pool;
mod softmax;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use adam::{adam_step, AdamState, ParameterTensor};
pub use conv::{conv1d_backward, conv1d_valid, ConvShape};
pub use dense::{dense_backward, dense_forward};
pub use lstm::{lstm_cell, LstmCell, LstmStep};
pub use pool::{maxpool_backward, maxpool_time};
pub use softmax::{cross_entropy, softmax, softmax_cross_entropy_backward, LOSS_FLOOR};

/// Floating point element type accepted by every kernel.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> crate::Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(crate::Error::Shape(format!(
            "{what}: expected length {want}, got {got}"
        )))
    }
}
