use super::{axpy, check_len, dot, Real};
use crate::Result;

/// `out = W·x + b` with `W` stored `K × D` row-major.
pub fn dense_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], out: &mut [T]) -> Result<()> {
    check_len("dense weight", weight.len(), bias.len() * x.len())?;
    check_len("dense output", out.len(), bias.len())?;
    if x.is_empty() {
        out.copy_from_slice(bias);
        return Ok(());
    }
    for ((o, row), b) in out.iter_mut().zip(weight.chunks_exact(x.len())).zip(bias) {
        *o = *b + dot(row, x);
    }
    Ok(())
}

/// Accumulates `dW += dy ⊗ x`, `db += dy`; overwrites `dx = Wᵀ·dy`.
pub fn dense_backward<T: Real>(
    x: &[T],
    weight: &[T],
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    dx: &mut [T],
) -> Result<()> {
    let d = x.len();
    check_len("dense weight", weight.len(), d_out.len() * d)?;
    check_len("dense weight grad", d_weight.len(), weight.len())?;
    check_len("dense bias grad", d_bias.len(), d_out.len())?;
    check_len("dense input grad", dx.len(), d)?;
    dx.fill(T::zero());
    for (k, &g) in d_out.iter().enumerate() {
        d_bias[k] += g;
        axpy(g, x, &mut d_weight[k * d..(k + 1) * d]);
        axpy(g, &weight[k * d..(k + 1) * d], dx);
    }
    Ok(())
}
