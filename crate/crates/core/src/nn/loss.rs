use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    /// Gradient with respect to the prediction / logits.
    pub grad: Tensor,
}

/// Mean over all elements of `(prediction − target)²`.
pub fn mse_loss(prediction: &Tensor, target: &Tensor) -> Result<LossValue> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape("mse_loss", prediction.shape(), target.shape()));
    }
    let n = prediction.len() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossValue {
        value: sum / n,
        grad: Tensor::new(prediction.shape(), grad)?,
    })
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`, computed
/// with log-sum-exp. Gradient is `(softmax − one_hot) / B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossValue> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::shape("softmax_cross_entropy", logits.shape(), &[labels.len()]));
    }
    let (b, m) = (logits.rows(), logits.shape()[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
        return Err(Error::Param(format!("label {bad} out of range for {m} classes")));
    }
    let mut grad = vec![0.0; b * m];
    let mut total = 0.0;
    for ((row, g), &label) in logits.data().chunks(m).zip(grad.chunks_mut(m)).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += lse - row[label];
        for (gi, z) in g.iter_mut().zip(row) {
            *gi = (z - lse).exp() / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok(LossValue {
        value: total / b as f64,
        grad: Tensor::new(&[b, m], grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;
    use crate::tensor::SeededRng;

    #[test]
    fn mse_cases() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap().value, 0.0);
        let b = a.map(|x| x + 1.0);
        assert_eq!(mse_loss(&b, &a).unwrap().value, 1.0);
        assert!(mse_loss(&a, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn mse_gradient_finite_difference() {
        let mut rng = SeededRng::new(1);
        let p = random(&mut rng, &[3, 4], 1.0);
        let t = random(&mut rng, &[3, 4], 1.0);
        let l = mse_loss(&p, &t).unwrap();
        let n = numeric_grad(&p, 1e-5, |pp| mse_loss(pp, &t).unwrap().value);
        assert!(rel_err(&l.grad, &n) < 1e-7);
    }

    #[test]
    fn cross_entropy_uniform() {
        let l = softmax_cross_entropy(&Tensor::zeros(&[1, 2]), &[0]).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_stable() {
        let logits = Tensor::new(&[1, 2], vec![1000.0, 0.0]).unwrap();
        let l = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(l.value.abs() < 1e-12 && l.value >= 0.0);
        assert!(l.grad.all_finite());
        let l = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((l.value - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_label_range() {
        assert!(matches!(
            softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[3]),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_finite_difference() {
        let mut rng = SeededRng::new(2);
        let z = random(&mut rng, &[4, 5], 2.0);
        let labels = [0, 3, 4, 1];
        let l = softmax_cross_entropy(&z, &labels).unwrap();
        let n = numeric_grad(&z, 1e-5, |zp| softmax_cross_entropy(zp, &labels).unwrap().value);
        assert!(rel_err(&l.grad, &n) < 1e-6);
    }
}
