use super::{axpy, check_len, dot, sigmoid, Real};
use crate::Result;

/// Dimensions of a single LSTM layer.
///
/// Weights are fused into one `4H × (D + H)` row-major matrix whose row
/// blocks are the input, forget, cell-candidate and output gates (in that
/// order); columns `0..D` multiply the input and `D..D+H` the previous
/// hidden state. The bias has `4H` entries in the same gate order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
}

/// Values saved by [`LstmCell::forward`] that the backward pass needs.
#[derive(Clone, Copy, Debug)]
pub struct LstmStep<'a, T> {
    pub x: &'a [T],
    pub h_prev: &'a [T],
    pub c_prev: &'a [T],
    /// Activated gates, `4H`.
    pub gates: &'a [T],
    pub c: &'a [T],
}

impl LstmCell {
    pub fn weight_len(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden)
    }

    pub fn bias_len(&self) -> usize {
        4 * self.hidden
    }

    fn check_weights(&self, weight: usize, bias: usize) -> Result<()> {
        check_len("lstm weight", weight, self.weight_len())?;
        check_len("lstm bias", bias, self.bias_len())
    }

    /// One time step. `gates` (4H) receives the activated gate values for
    /// the backward pass.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Real>(
        &self,
        weight: &[T],
        bias: &[T],
        x: &[T],
        h_prev: &[T],
        c_prev: &[T],
        gates: &mut [T],
        c: &mut [T],
        h: &mut [T],
    ) -> Result<()> {
        let (d, hd) = (self.input, self.hidden);
        self.check_weights(weight.len(), bias.len())?;
        check_len("lstm input", x.len(), d)?;
        check_len("lstm h_prev", h_prev.len(), hd)?;
        check_len("lstm c_prev", c_prev.len(), hd)?;
        check_len("lstm gates", gates.len(), 4 * hd)?;
        check_len("lstm c", c.len(), hd)?;
        check_len("lstm h", h.len(), hd)?;

        for (r, (z, row)) in gates.iter_mut().zip(weight.chunks_exact(d + hd)).enumerate() {
            let pre = bias[r] + dot(&row[..d], x) + dot(&row[d..], h_prev);
            *z = if (2 * hd..3 * hd).contains(&r) {
                pre.tanh()
            } else {
                sigmoid(pre)
            };
        }
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        Ok(())
    }

    /// Backward through one step.
    ///
    /// `dh`/`dc` are the gradients arriving at this step's outputs.
    /// `d_weight`/`d_bias` are accumulated into; `dx`, `dh_prev`, `dc_prev`
    /// are overwritten. `dz` is 4H scratch.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        weight: &[T],
        step: LstmStep<'_, T>,
        dh: &[T],
        dc: &[T],
        d_weight: &mut [T],
        d_bias: &mut [T],
        dx: &mut [T],
        dh_prev: &mut [T],
        dc_prev: &mut [T],
        dz: &mut [T],
    ) -> Result<()> {
        let (d, hd) = (self.input, self.hidden);
        self.check_weights(weight.len(), d_bias.len())?;
        check_len("lstm weight grad", d_weight.len(), weight.len())?;
        check_len("lstm gates", step.gates.len(), 4 * hd)?;
        check_len("lstm dx", dx.len(), d)?;
        check_len("lstm dh", dh.len(), hd)?;
        check_len("lstm dc", dc.len(), hd)?;
        check_len("lstm dh_prev", dh_prev.len(), hd)?;
        check_len("lstm dc_prev", dc_prev.len(), hd)?;
        check_len("lstm dz", dz.len(), 4 * hd)?;

        let one = T::one();
        let gates = step.gates;
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let tc = step.c[j].tanh();
            let dct = dc[j] + dh[j] * o * (one - tc * tc);
            dz[j] = dct * g * i * (one - i);
            dz[hd + j] = dct * step.c_prev[j] * f * (one - f);
            dz[2 * hd + j] = dct * i * (one - g * g);
            dz[3 * hd + j] = dh[j] * tc * o * (one - o);
            dc_prev[j] = dct * f;
        }

        dx.fill(T::zero());
        dh_prev.fill(T::zero());
        let width = d + hd;
        for (r, &g) in dz.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            d_bias[r] += g;
            let row = &weight[r * width..(r + 1) * width];
            let d_row = &mut d_weight[r * width..(r + 1) * width];
            axpy(g, step.x, &mut d_row[..d]);
            axpy(g, step.h_prev, &mut d_row[d..]);
            axpy(g, &row[..d], dx);
            axpy(g, &row[d..], dh_prev);
        }
        Ok(())
    }
}

/// Allocating convenience wrapper around [`LstmCell::forward`]; returns
/// `(h, c)`.
pub fn lstm_cell<T: Real>(x: &[T], h_prev: &[T], c_prev: &[T], weight: &[T], bias: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let hidden = h_prev.len();
    let cell = LstmCell { input: x.len(), hidden };
    let mut gates = vec![T::zero(); 4 * hidden];
    let (mut h, mut c) = (vec![T::zero(); hidden], vec![T::zero(); hidden]);
    cell.forward(weight, bias, x, h_prev, c_prev, &mut gates, &mut c, &mut h)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::Error;
    use proptest::prelude::*;

    #[test]
    fn zero_weights_keep_zero_state() {
        let cell = LstmCell { input: 3, hidden: 4 };
        let w = vec![0.0f32; cell.weight_len()];
        let b = vec![0.0f32; cell.bias_len()];
        let (mut h, mut c) = (vec![0.0f32; 4], vec![0.0f32; 4]);
        for x in [[1.0, -2.0, 0.5], [3.0, 3.0, 3.0]] {
            let (h2, c2) = lstm_cell(&x, &h, &c, &w, &b).unwrap();
            h = h2;
            c = c2;
            assert!(h.iter().chain(&c).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_hand_evaluation() {
        // D = H = 1, all weights one, zero bias, x = 1, zero state
        let (h, c) = lstm_cell(&[1.0f64], &[0.0], &[0.0], &[1.0; 8], &[0.0; 4]).unwrap();
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        let g = 1.0f64.tanh();
        assert!((s - 0.7311).abs() < 1e-4 && (g - 0.7616).abs() < 1e-4);
        assert!((c[0] - s * g).abs() < 1e-12);
        assert!((h[0] - s * (s * g).tanh()).abs() < 1e-12);
        assert!((c[0] - 0.5568).abs() < 1e-4);
        assert!((h[0] - 0.369606).abs() < 1e-6);
    }

    #[test]
    fn mismatched_input_is_a_shape_error() {
        let cell = LstmCell { input: 2, hidden: 2 };
        let w = vec![0.0f32; cell.weight_len()];
        let err = lstm_cell(&[1.0f32; 3], &[0.0; 2], &[0.0; 2], &w, &[0.0; 8]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(11);
        let cell = LstmCell { input: 3, hidden: 2 };
        let w = random_vec(&mut r, cell.weight_len());
        let b = random_vec(&mut r, cell.bias_len());
        let x = random_vec(&mut r, 3);
        let h0 = random_vec(&mut r, 2);
        let c0 = random_vec(&mut r, 2);
        let (wh, wc) = (random_vec(&mut r, 2), random_vec(&mut r, 2));
        let loss = |w: &[f64], b: &[f64], x: &[f64], h0: &[f64], c0: &[f64]| {
            let (h, c) = lstm_cell(x, h0, c0, w, b).unwrap();
            h.iter().zip(&wh).map(|(a, k)| a * k).sum::<f64>() + c.iter().zip(&wc).map(|(a, k)| a * k).sum::<f64>()
        };

        let mut gates = vec![0.0; 8];
        let (mut h, mut c) = (vec![0.0; 2], vec![0.0; 2]);
        cell.forward(&w, &b, &x, &h0, &c0, &mut gates, &mut c, &mut h).unwrap();
        let (mut dw, mut db) = (vec![0.0; w.len()], vec![0.0; 8]);
        let (mut dx, mut dh0, mut dc0, mut dz) = (vec![0.0; 3], vec![0.0; 2], vec![0.0; 2], vec![0.0; 8]);
        let step = LstmStep {
            x: &x,
            h_prev: &h0,
            c_prev: &c0,
            gates: &gates,
            c: &c,
        };
        cell.backward(
            &w, step, &wh, &wc, &mut dw, &mut db, &mut dx, &mut dh0, &mut dc0, &mut dz,
        )
        .unwrap();

        assert_grad_close(&dw, &numeric_grad(&w, |v| loss(v, &b, &x, &h0, &c0)), "weight");
        assert_grad_close(&db, &numeric_grad(&b, |v| loss(&w, v, &x, &h0, &c0)), "bias");
        assert_grad_close(&dx, &numeric_grad(&x, |v| loss(&w, &b, v, &h0, &c0)), "x");
        assert_grad_close(&dh0, &numeric_grad(&h0, |v| loss(&w, &b, &x, v, &c0)), "h_prev");
        assert_grad_close(&dc0, &numeric_grad(&c0, |v| loss(&w, &b, &x, &h0, v)), "c_prev");
    }

    proptest! {
        #[test]
        fn cell_state_grows_by_at_most_one(
            seed in any::<u64>(), scale in 0.1f64..10.0
        ) {
            let mut r = rng(seed);
            let cell = LstmCell { input: 4, hidden: 3 };
            let w: Vec<f64> = random_vec(&mut r, cell.weight_len()).iter().map(|v| v * scale).collect();
            let b = random_vec(&mut r, cell.bias_len());
            let x: Vec<f64> = random_vec(&mut r, 4).iter().map(|v| v * scale).collect();
            let h0 = random_vec(&mut r, 3);
            let c0: Vec<f64> = random_vec(&mut r, 3).iter().map(|v| v * 5.0).collect();
            let mut gates = vec![0.0; 12];
            let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
            cell.forward(&w, &b, &x, &h0, &c0, &mut gates, &mut c, &mut h).unwrap();
            for j in 0..3 {
                prop_assert!(c[j].abs() <= c0[j].abs() + 1.0);
                prop_assert!(h[j].abs() <= 1.0);
            }
            for (k, g) in gates.iter().enumerate() {
                if (6..9).contains(&k) {
                    prop_assert!(g.abs() <= 1.0);
                } else {
                    prop_assert!(*g >= 0.0 && *g <= 1.0);
                }
            }
        }
    }
}
