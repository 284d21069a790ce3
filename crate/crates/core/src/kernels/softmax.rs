use super::{check_len, Real};
use crate::{Error, Result};

/// Floor added to the true-class probability before taking the log.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(logits: &[T], out: &mut [T]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Shape("softmax over zero classes".into()));
    }
    check_len("softmax output", out.len(), logits.len())?;
    if let Some(bad) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit at index {bad}")));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = 0.0f64;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += o.to_f64().unwrap_or(0.0);
    }
    let total = T::lit(total);
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// `-ln(probs[label] + 1e-12)`
pub fn cross_entropy<T: Real>(probs: &[T], label: usize) -> Result<T> {
    let p = probs.get(label).ok_or(Error::Index {
        index: label,
        len: probs.len(),
    })?;
    Ok(-(*p + T::lit(LOSS_FLOOR)).ln())
}

/// Gradient of `scale · cross_entropy(softmax(z), label)` with respect to
/// the logits: `scale · (probs − onehot)`.
pub fn softmax_cross_entropy_backward<T: Real>(probs: &[T], label: usize, scale: T, d_logits: &mut [T]) -> Result<()> {
    if label >= probs.len() {
        return Err(Error::Index {
            index: label,
            len: probs.len(),
        });
    }
    check_len("logit gradient", d_logits.len(), probs.len())?;
    for (k, (d, &p)) in d_logits.iter_mut().zip(probs).enumerate() {
        let target = if k == label { T::one() } else { T::zero() };
        *d = scale * (p - target);
    }
    Ok(())
}
