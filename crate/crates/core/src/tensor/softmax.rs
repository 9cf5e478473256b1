use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean cross-entropy over a `batch x classes` logit matrix.
///
/// Returns the loss and its gradient with respect to the logits, i.e.
/// `(softmax - one_hot) / batch`. Uses max subtraction so large logits do
/// not overflow.
pub fn softmax_cross_entropy_batch<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (batch, classes) = match *logits.shape() {
        [k] => (1, k),
        [n, k] => (n, k),
        _ => {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits must be rank 1 or batch x classes, got {:?}", logits.shape()),
            ))
        }
    };
    if labels.len() != batch {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for logits {:?}", labels.len(), logits.shape()),
        ));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.data().chunks(classes).zip(labels) {
        if label >= classes {
            return Err(Error::InvalidArgument(format!("label {label} out of range for {classes} classes")));
        }
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.wide()));
        let exps: Vec<f64> = row.iter().map(|v| (v.wide() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() - (row[label].wide() - max);
        for (k, e) in exps.iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push((e / z - target) / batch as f64);
        }
    }
    let grad = Tensor::from_wide("softmax_cross_entropy", logits.shape().to_vec(), &grad)?;
    Ok((loss / batch as f64, grad))
}

pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(f64, Tensor<T>)> {
    softmax_cross_entropy_batch(logits, &[label])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_k() {
        for k in [2usize, 5, 10] {
            let logits = Tensor::<f32>::full(&[k], 0.3).unwrap();
            let (loss, grad) = softmax_cross_entropy(&logits, 1).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-6);
            assert!(grad.sum().abs() < 1e-6);
        }
    }

    #[test]
    fn dominant_logit_does_not_overflow() {
        let logits = Tensor::<f32>::from_f64(&[2], &[1000.0, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, 0).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.max_abs() < 1e-12);
        let (loss, _) = softmax_cross_entropy(&logits, 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::<f32>::zeros(&[3]).unwrap();
        assert!(softmax_cross_entropy(&logits, 3).is_err());
    }
}
