use super::{axpy, check_len, dot, Real};
use crate::{Error, Result};

/// Geometry of a valid (unpadded) 1-D convolution over the time axis.
///
/// Input is `len × depth`, filters are `filters × kernel × depth`, output is
/// `(len - kernel + 1) × filters`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub len: usize,
    pub depth: usize,
    pub kernel: usize,
    pub filters: usize,
}

impl ConvShape {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.depth == 0 || self.filters == 0 {
            return Err(Error::Shape(format!("degenerate convolution {self:?}")));
        }
        if self.len < self.kernel {
            return Err(Error::Shape(format!(
                "input length {} shorter than kernel {}",
                self.len, self.kernel
            )));
        }
        Ok(())
    }

    pub fn out_len(&self) -> usize {
        self.len + 1 - self.kernel
    }

    fn check(&self, input: usize, filters: usize, bias: usize, out: usize) -> Result<()> {
        self.validate()?;
        check_len("conv input", input, self.len * self.depth)?;
        check_len("conv filters", filters, self.filters * self.kernel * self.depth)?;
        check_len("conv bias", bias, self.filters)?;
        check_len("conv output", out, self.out_len() * self.filters)
    }
}

/// `out[t][f] = bias[f] + Σ_{k,e} input[t+k][e] · filters[f][k][e]`
pub fn conv1d_valid<T: Real>(shape: ConvShape, input: &[T], filters: &[T], bias: &[T], out: &mut [T]) -> Result<()> {
    shape.check(input.len(), filters.len(), bias.len(), out.len())?;
    let window = shape.kernel * shape.depth;
    for (t, row) in out.chunks_exact_mut(shape.filters).enumerate() {
        // rows t..t+K of a row-major matrix are contiguous
        let patch = &input[t * shape.depth..t * shape.depth + window];
        for ((o, w), b) in row.iter_mut().zip(filters.chunks_exact(window)).zip(bias) {
            *o = *b + dot(patch, w);
        }
    }
    Ok(())
}

/// Accumulates gradients of a valid convolution.
///
/// `d_filters` and `d_bias` are accumulated into; `d_input`, when given, is
/// accumulated into as well. Zero entries of `d_out` are skipped, which makes
/// the pass cheap after max-pooling.
pub fn conv1d_backward<T: Real>(
    shape: ConvShape,
    input: &[T],
    filters: &[T],
    d_out: &[T],
    d_filters: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) -> Result<()> {
    shape.check(input.len(), filters.len(), d_bias.len(), d_out.len())?;
    check_len("conv filter grad", d_filters.len(), filters.len())?;
    if let Some(d) = d_input.as_deref() {
        check_len("conv input grad", d.len(), input.len())?;
    }
    let window = shape.kernel * shape.depth;
    for (t, row) in d_out.chunks_exact(shape.filters).enumerate() {
        let start = t * shape.depth;
        for (f, &g) in row.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            d_bias[f] += g;
            let w = &filters[f * window..(f + 1) * window];
            axpy(
                g,
                &input[start..start + window],
                &mut d_filters[f * window..(f + 1) * window],
            );
            if let Some(d) = d_input.as_deref_mut() {
                axpy(g, w, &mut d[start..start + window]);
            }
        }
    }
    Ok(())
}
