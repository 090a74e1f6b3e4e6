use crate::scalar::Scalar;
use crate::tape::row_cross_entropy;

/// Cross-entropy of `softmax(logits)` against a one-hot target.
///
/// Returns the loss and its gradient with respect to the logits,
/// `softmax(logits) - y`. Panics if `one_hot` is not a one-hot vector of the
/// same length.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], one_hot: &[T]) -> (T, Vec<T>) {
    assert_eq!(logits.len(), one_hot.len(), "logits and target lengths differ");
    let target = one_hot
        .iter()
        .position(|&v| v == T::one())
        .expect("target must be one-hot");
    assert!(
        one_hot.iter().filter(|&&v| v != T::zero()).count() == 1,
        "target must be one-hot"
    );
    let mut probs = logits.to_vec();
    let (loss, _) = row_cross_entropy(&mut probs, target);
    let grad = probs.iter().zip(one_hot).map(|(&p, &y)| p - y).collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_m() {
        let (loss, grad) = softmax_cross_entropy(&[0.3f64; 5], &[0., 0., 1., 0., 0.]);
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_small_loss() {
        let (loss, _) = softmax_cross_entropy(&[50.0f64, 0.0, 0.0], &[1., 0., 0.]);
        assert!(loss < 1e-20);
    }

    #[test]
    fn gradient_is_probs_minus_target() {
        let (_, g) = softmax_cross_entropy(&[1.0f64, 2.0], &[0., 1.]);
        let p0 = 1.0 / (1.0 + 1f64.exp());
        assert!((g[0] - p0).abs() < 1e-15);
        assert!((g[1] - (1.0 - p0 - 1.0)).abs() < 1e-15);
    }
}
