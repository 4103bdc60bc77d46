use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / B` w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (b, c) = match logits.shape().dims() {
        &[b, c] if b == labels.len() => (b, c),
        _ => {
            return Err(Error::InvalidShape {
                shape: logits.shape().clone(),
                reason: format!("cross_entropy expects ({}, classes) logits", labels.len()),
            })
        }
    };
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b * c);
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() - (row[label].as_f64() - max);
        for (k, e) in exps.iter().enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            grad.push(T::of((e / z - onehot) / b as f64));
        }
    }
    Ok((loss / b as f64, Tensor::new(logits.shape().clone(), grad)?))
}

/// Index of the largest logit in each row; ties go to the lowest index.
pub fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    let c = logits.shape().dims().last().copied().unwrap_or(1);
    logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, rel_error};
    use crate::shape;

    #[test]
    fn uniform_logits_give_ln_c() {
        let (loss, _) = cross_entropy(&Tensor::<f64>::zeros(shape![3, 4]), &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_true_class_saturates() {
        let logits = Tensor::new(shape![1, 3], vec![50.0, 0.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[0]).unwrap();
        assert!(loss < 1e-20);
        let huge = Tensor::new(shape![1, 2], vec![1e4f32, -1e4]).unwrap();
        let (loss, grad) = cross_entropy(&huge, &[1]).unwrap();
        assert!(loss.is_finite() && grad.all_finite());
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(cross_entropy(&Tensor::<f64>::zeros(shape![1, 4]), &[4]).is_err());
        assert!(cross_entropy(&Tensor::<f64>::zeros(shape![2, 4]), &[0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = Tensor::from_fn(shape![3, 4], |i| ((i * 37 % 11) as f64 - 5.0) / 3.0);
        let labels = [2, 0, 3];
        let (_, grad) = cross_entropy(&logits, &labels).unwrap();
        let numeric = central_difference(logits.len(), 1e-5, |i, h| {
            let mut l = logits.clone();
            l.data_mut()[i] += h;
            cross_entropy(&l, &labels).unwrap().0
        });
        assert!(rel_error(grad.data(), &numeric) < 1e-8);
    }

    #[test]
    fn argmax_picks_first_maximum() {
        let t = Tensor::new(shape![2, 3], vec![1.0, 3.0, 3.0, -1.0, -2.0, -3.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }
}
