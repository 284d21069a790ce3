use crate::network::ModelParameters;
use crate::{Error, Result};

/// Per-tensor affine int8 encoding: `value ≈ scale · (q − zero_point)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<i8>,
    pub scale: f32,
    pub zero_point: i32,
}

impl QuantizedTensor {
    pub fn dequantize(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.values.len()];
        self.dequantize_into(&mut out);
        out
    }

    pub fn dequantize_into(&self, out: &mut [f32]) {
        assert_eq!(out.len(), self.values.len());
        for (o, &q) in out.iter_mut().zip(&self.values) {
            *o = self.scale * (i32::from(q) - self.zero_point) as f32;
        }
    }

    /// Value represented by element `i`, evaluated in double precision.
    pub fn dequantized_f64(&self, i: usize) -> f64 {
        f64::from(self.scale) * f64::from(i32::from(self.values[i]) - self.zero_point)
    }
}

/// Quantizes one tensor.
///
/// The range is `[min(w, 0), max(w, 0)]` so the zero point always lies in
/// int8 range; `scale = range / 255`, rounded up to the next `f32` when
/// needed so the range still spans at most 255 steps, which keeps every
/// element within `scale / 2` of its original value. An all-zero tensor gets
/// `scale = 1`, `zero_point = 0`.
pub fn quantize_tensor(name: &str, shape: &[usize], values: &[f32]) -> Result<QuantizedTensor> {
    if shape.iter().product::<usize>() != values.len() {
        return Err(Error::Shape(format!(
            "{name}: shape {shape:?} does not match {} values",
            values.len()
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Data(format!("{name}: non-finite weight {v} at index {i}")));
        }
        lo = lo.min(f64::from(v));
        hi = hi.max(f64::from(v));
    }
    let range = hi - lo;
    if range == 0.0 {
        return Ok(QuantizedTensor {
            name: name.to_owned(),
            shape: shape.to_vec(),
            values: vec![0; values.len()],
            scale: 1.0,
            zero_point: 0,
        });
    }

    let mut scale = ((range / 255.0) as f32).max(f32::from_bits(1));
    while range / f64::from(scale) > 255.0 {
        scale = scale.next_up();
    }
    let s = f64::from(scale);
    let zero_point = (-128.0 - lo / s).round().clamp(-128.0, 127.0) as i32;
    let q = values
        .iter()
        .map(|&v| ((f64::from(v) / s).round() + f64::from(zero_point)).clamp(-128.0, 127.0) as i8)
        .collect();
    Ok(QuantizedTensor {
        name: name.to_owned(),
        shape: shape.to_vec(),
        values: q,
        scale,
        zero_point,
    })
}

/// Quantizes every tensor of a trained parameter set, in canonical order.
pub fn quantize(params: &ModelParameters<f32>) -> Result<Vec<QuantizedTensor>> {
    params
        .tensors
        .iter()
        .map(|t| quantize_tensor(&t.name, &t.shape, &t.values))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_error(values: &[f32], q: &QuantizedTensor) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (f64::from(v) - q.dequantized_f64(i)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn unit_range() {
        let values: Vec<f32> = (0..=200).map(|i| -1.0 + i as f32 / 100.0).collect();
        let q = quantize_tensor("t", &[201], &values).unwrap();
        assert!((f64::from(q.scale) - 2.0 / 255.0).abs() < 1e-9, "{}", q.scale);
        assert!((-128..=127).contains(&q.zero_point));
        let half_step = f64::from(q.scale) / 2.0;
        assert!(half_step < 0.0039216);
        assert!(max_error(&values, &q) <= half_step);
    }

    #[test]
    fn all_zero_round_trips_exactly() {
        let q = quantize_tensor("z", &[2, 3], &[0.0; 6]).unwrap();
        assert_eq!((q.scale, q.zero_point), (1.0, 0));
        assert_eq!(q.dequantize(), vec![0.0; 6]);
    }

    #[test]
    fn one_signed_tensors_stay_in_range() {
        for values in [vec![1.0f32, 1.5, 2.0], vec![-3.0, -2.5, -2.0], vec![0.7; 4]] {
            let q = quantize_tensor("t", &[values.len()], &values).unwrap();
            assert!((-128..=127).contains(&q.zero_point));
            assert!(max_error(&values, &q) <= f64::from(q.scale) / 2.0);
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(matches!(
            quantize_tensor("t", &[2], &[1.0, f32::NAN]),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            quantize_tensor("t", &[2], &[f32::INFINITY, 0.0]),
            Err(Error::Data(_))
        ));
        assert!(matches!(quantize_tensor("t", &[3], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    fn tensor_values() -> impl Strategy<Value = Vec<f32>> {
        (prop::collection::vec(-1.0f32..1.0, 1..300), -6i32..6, -2.0f32..2.0)
            .prop_map(|(v, exp, shift)| v.into_iter().map(|x| x * 10f32.powi(exp) + shift).collect())
    }

    proptest! {
        #[test]
        fn reconstruction_error_is_at_most_half_a_step(values in tensor_values()) {
            let q = quantize_tensor("p", &[values.len()], &values).unwrap();
            prop_assert!((-128..=127).contains(&q.zero_point));
            let err = max_error(&values, &q);
            prop_assert!(err <= f64::from(q.scale) / 2.0, "error {} scale {}", err, q.scale);
        }

        #[test]
        fn requantizing_moves_each_weight_at_most_one_step(values in tensor_values()) {
            let q1 = quantize_tensor("p", &[values.len()], &values).unwrap();
            let d1 = q1.dequantize();
            let q2 = quantize_tensor("p", &[values.len()], &d1).unwrap();
            for (i, &a) in d1.iter().enumerate() {
                prop_assert!((f64::from(a) - q2.dequantized_f64(i)).abs() <= f64::from(q1.scale));
            }
        }
    }
}
