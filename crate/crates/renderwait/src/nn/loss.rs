//! Binary cross-entropy over logits.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean BCE of sigmoid(logits) against {0,1} targets, evaluated in the
/// stable `max(z,0) - z*t + ln(1 + exp(-|z|))` form. Returns the scalar loss
/// and the gradient with respect to the logits, `(sigmoid(z) - t) / N`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() {
        return Err(Error::invalid(format!(
            "logit shape {:?} does not match target shape {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let n = logits.numel();
    if n == 0 {
        return Err(Error::invalid("bce over an empty batch"));
    }
    if targets.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::invalid("bce targets must be exactly 0 or 1"));
    }

    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(logits.shape());
    for (i, (&z, &t)) in logits.data().iter().zip(targets.data()).enumerate() {
        let z = z as f64;
        let t = t as f64;
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        let sig = 1.0 / (1.0 + (-z).exp());
        grad.data_mut()[i] = ((sig - t) / n as f64) as f32;
    }
    Ok((loss / n as f64, grad))
}

/// Scalar sigmoid used for prediction confidence.
pub fn sigmoid_scalar(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(vals: &[f32]) -> Tensor {
        Tensor::from_vec(&[vals.len(), 1], vals.to_vec()).unwrap()
    }

    #[test]
    fn zero_logit_against_one_is_ln_two() {
        let (loss, grad) = bce_with_logits(&t(&[0.0]), &t(&[1.0])).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // sigma(0) - 1 = -0.5, batch of one.
        assert!((grad.data()[0] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn large_logit_is_stable() {
        let (loss, _) = bce_with_logits(&t(&[20.0]), &t(&[1.0])).unwrap();
        let expected = (-20.0f64).exp().ln_1p(); // ~2.061e-9
        assert!(loss.is_finite());
        assert!((loss - expected).abs() < 1e-15, "{loss} vs {expected}");
        let (loss_neg, _) = bce_with_logits(&t(&[-40.0]), &t(&[0.0])).unwrap();
        assert!(loss_neg.is_finite() && loss_neg < 1e-12);
    }

    #[test]
    fn non_binary_targets_are_rejected() {
        assert!(bce_with_logits(&t(&[0.0]), &t(&[0.5])).is_err());
    }

    #[test]
    fn gradient_is_scaled_by_batch_size() {
        let (_, grad) = bce_with_logits(&t(&[0.0, 0.0]), &t(&[1.0, 1.0])).unwrap();
        assert!((grad.data()[0] + 0.25).abs() < 1e-7);
    }
}
