use super::{check_len, Real};
use crate::{Error, Result};

/// Column-wise maximum of an `len × width` matrix.
///
/// `argmax[f]` receives the row holding the maximum of column `f`; ties go
/// to the earliest row.
pub fn maxpool_time<T: Real>(input: &[T], width: usize, out: &mut [T], argmax: &mut [usize]) -> Result<()> {
    if width == 0 || input.is_empty() {
        return Err(Error::Shape("max-pool over an empty sequence".into()));
    }
    if !input.len().is_multiple_of(width) {
        return Err(Error::Shape(format!(
            "max-pool input of {} values is not a multiple of width {width}",
            input.len()
        )));
    }
    check_len("max-pool output", out.len(), width)?;
    check_len("max-pool argmax", argmax.len(), width)?;
    out.copy_from_slice(&input[..width]);
    argmax.fill(0);
    for (t, row) in input.chunks_exact(width).enumerate().skip(1) {
        for ((o, a), &v) in out.iter_mut().zip(argmax.iter_mut()).zip(row) {
            if v > *o {
                *o = v;
                *a = t;
            }
        }
    }
    Ok(())
}

/// Routes each output gradient to the row that produced the maximum.
/// `d_input` (`len × width`) is accumulated into.
pub fn maxpool_backward<T: Real>(d_out: &[T], argmax: &[usize], d_input: &mut [T]) -> Result<()> {
    let width = d_out.len();
    check_len("max-pool argmax", argmax.len(), width)?;
    if width == 0 || !d_input.len().is_multiple_of(width) {
        return Err(Error::Shape("max-pool gradient shape mismatch".into()));
    }
    let rows = d_input.len() / width;
    for (f, (&g, &t)) in d_out.iter().zip(argmax).enumerate() {
        if t >= rows {
            return Err(Error::Index { index: t, len: rows });
        }
        d_input[t * width + f] += g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn singleton_sequence_is_identity() {
        let (mut out, mut arg) = ([0.0f32; 3], [9usize; 3]);
        maxpool_time(&[1.0, -2.0, 3.5], 3, &mut out, &mut arg).unwrap();
        assert_eq!(out, [1.0, -2.0, 3.5]);
        assert_eq!(arg, [0, 0, 0]);
    }

    #[test]
    fn column_wise_max() {
        let (mut out, mut arg) = ([0.0f64; 2], [0usize; 2]);
        maxpool_time(&[1.0, 4.0, 3.0, 2.0], 2, &mut out, &mut arg).unwrap();
        assert_eq!(out, [3.0, 4.0]);
        assert_eq!(arg, [1, 0]);
    }

    #[test]
    fn constant_matrix_pools_to_constant_with_first_index() {
        let (mut out, mut arg) = ([0.0f32; 2], [7usize; 2]);
        maxpool_time(&[0.25; 8], 2, &mut out, &mut arg).unwrap();
        assert_eq!(out, [0.25, 0.25]);
        assert_eq!(arg, [0, 0]);
    }

    #[test]
    fn empty_input_is_a_shape_error() {
        let (mut out, mut arg) = ([0.0f32; 2], [0usize; 2]);
        assert!(matches!(maxpool_time(&[], 2, &mut out, &mut arg), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn backward_routes_one_unit_per_column(
            rows in 1usize..8, width in 1usize..6, seed in any::<u64>()
        ) {
            let input: Vec<f64> = (0..rows * width)
                .map(|i| ((i as u64).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f64)
                .collect();
            let (mut out, mut arg) = (vec![0.0; width], vec![0usize; width]);
            maxpool_time(&input, width, &mut out, &mut arg).unwrap();
            let d_out: Vec<f64> = (0..width).map(|f| f as f64 + 0.5).collect();
            let mut d_in = vec![0.0; rows * width];
            maxpool_backward(&d_out, &arg, &mut d_in).unwrap();
            for f in 0..width {
                let col: f64 = (0..rows).map(|t| d_in[t * width + f]).sum();
                prop_assert_eq!(col, d_out[f]);
                let nonzero = (0..rows).filter(|&t| d_in[t * width + f] != 0.0).count();
                prop_assert_eq!(nonzero, 1);
                prop_assert_eq!(input[arg[f] * width + f], out[f]);
            }
        }
    }
}
