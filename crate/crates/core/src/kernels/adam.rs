use super::Real;
use crate::{Error, Result};

/// A named trainable tensor together with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
    pub adam_m: Vec<T>,
    pub adam_v: Vec<T>,
}

impl<T: Real> ParameterTensor<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![T::zero(); n],
            grad: vec![T::zero(); n],
            adam_m: vec![T::zero(); n],
            adam_v: vec![T::zero(); n],
        }
    }

    pub fn from_values(name: impl Into<String>, shape: &[usize], values: Vec<T>) -> Result<Self> {
        let mut t = Self::zeros(name, shape);
        if values.len() != t.values.len() {
            return Err(Error::Shape(format!(
                "tensor {} with shape {:?} needs {} values, got {}",
                t.name,
                shape,
                t.values.len(),
                values.len()
            )));
        }
        t.values = values;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Optimizer hyperparameters plus the shared step counter `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.001)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.beta1) || !in_unit(self.beta2) || self.epsilon <= 0.0 || self.lr <= 0.0 {
            return Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }

    /// Starts a new optimizer step; call once before updating the tensors
    /// of that step.
    pub fn advance(&mut self) {
        self.step_count += 1;
    }
}

/// Applies one Adam update to `tensor` using its accumulated gradient, then
/// zeroes the gradient.
pub fn adam_step<T: Real>(tensor: &mut ParameterTensor<T>, state: &AdamState) -> Result<()> {
    if state.step_count == 0 {
        return Err(Error::Protocol(
            "adam_step called with step_count 0; call AdamState::advance first".into(),
        ));
    }
    state.validate()?;
    let t = state.step_count.min(i32::MAX as u64) as i32;
    let bc1 = T::lit(1.0 - state.beta1.powi(t));
    let bc2 = T::lit(1.0 - state.beta2.powi(t));
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let (lr, eps) = (T::lit(state.lr), T::lit(state.epsilon));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);

    let ParameterTensor {
        values,
        grad,
        adam_m,
        adam_v,
        ..
    } = tensor;
    for (((theta, g), m), v) in values
        .iter_mut()
        .zip(grad.iter_mut())
        .zip(adam_m.iter_mut())
        .zip(adam_v.iter_mut())
    {
        *m = b1 * *m + one_b1 * *g;
        *v = b2 * *v + one_b2 * *g * *g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        *g = T::zero();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(values: &[f64], grad: &[f64]) -> ParameterTensor<f64> {
        let mut t = ParameterTensor::from_values("p", &[values.len()], values.to_vec()).unwrap();
        t.grad.copy_from_slice(grad);
        t
    }

    #[test]
    fn fresh_tensor_has_zero_moments() {
        let t = ParameterTensor::<f32>::zeros("w", &[3, 4]);
        assert_eq!(t.len(), 12);
        assert!(t.adam_m.iter().chain(&t.adam_v).all(|&v| v == 0.0));
        assert!(ParameterTensor::from_values("w", &[2, 2], vec![0.0f32; 3]).is_err());
    }

    #[test]
    fn step_zero_is_a_protocol_error() {
        let mut t = tensor(&[1.0], &[1.0]);
        assert!(matches!(
            adam_step(&mut t, &AdamState::default()),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut t = tensor(&[0.5, -2.0], &[0.0, 0.0]);
        let mut s = AdamState::default();
        s.advance();
        adam_step(&mut t, &s).unwrap();
        assert_eq!(t.values, vec![0.5, -2.0]);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let mut t = tensor(&[0.0, 0.0, 0.0], &[3.0, -0.02, 1e-3]);
        let mut s = AdamState::default();
        s.advance();
        adam_step(&mut t, &s).unwrap();
        // m_hat = g, v_hat = g^2  =>  delta = lr * |g| / (|g| + eps)
        for (theta, g) in t.values.iter().zip([3.0f64, -0.02, 1e-3]) {
            let expect = -0.001 * g / (g.abs() + 1e-8);
            assert!((theta - expect).abs() < 1e-15);
            assert!((theta.abs() - 0.001).abs() < 1e-7);
        }
        assert!(t.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn two_step_trace_matches_hand_computation() {
        let (b1, b2, lr, eps) = (0.9f64, 0.999f64, 0.001, 1e-8);
        // hand trace with g = 1 at both steps
        let m1 = (1.0 - b1) * 1.0;
        let v1 = (1.0 - b2) * 1.0;
        let theta1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1);
        let v2 = b2 * v1 + (1.0 - b2);
        let theta2 = theta1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);

        let mut t = tensor(&[1.0], &[1.0]);
        let mut s = AdamState::default();
        s.advance();
        adam_step(&mut t, &s).unwrap();
        assert!((t.values[0] - theta1).abs() < 1e-12);
        assert!((1.0 - t.values[0] - 0.001).abs() < 1e-9);
        t.grad[0] = 1.0;
        s.advance();
        adam_step(&mut t, &s).unwrap();
        assert!((t.values[0] - theta2).abs() < 1e-12);
        assert!((theta1 - t.values[0] - 0.001).abs() < 1e-9);
        assert_eq!(s.step_count, 2);
    }

    proptest! {
        #[test]
        fn deterministic_for_identical_inputs(
            values in prop::collection::vec(-5.0f32..5.0, 1..16),
            seed in any::<u32>(),
            steps in 1u64..5,
        ) {
            let grad: Vec<f32> = values.iter().enumerate()
                .map(|(i, v)| v * 0.3 + ((seed as usize + i) % 7) as f32 - 3.0).collect();
            let run = || {
                let mut t = ParameterTensor::from_values("p", &[values.len()], values.clone()).unwrap();
                let mut s = AdamState::default();
                for _ in 0..steps {
                    t.grad.copy_from_slice(&grad);
                    s.advance();
                    adam_step(&mut t, &s).unwrap();
                }
                t
            };
            let (a, b) = (run(), run());
            let bits = |t: &ParameterTensor<f32>| t.values.iter().chain(&t.adam_m).chain(&t.adam_v)
                .map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }
}
