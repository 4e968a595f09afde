//! Loss functions returning the value together with its gradient in the output.

use crate::error::{check_dims, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Mse,
    CrossEntropy,
}

impl LossKind {
    pub fn evaluate(self, y: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Mse => mse_loss(y, target),
            LossKind::CrossEntropy => cross_entropy_loss(y, target),
        }
    }
}

/// `Σ (yᵢ − tᵢ)² / (2K)`.
pub fn mse_loss(y: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dims(y.len(), target.len())?;
    if y.is_empty() {
        return Err(Error::Domain("empty output".into()));
    }
    let k = y.len() as f64;
    let value = y
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (2.0 * k);
    let grad = y.iter().zip(target).map(|(a, b)| (a - b) / k).collect();
    Ok((value, grad))
}

/// Softmax cross-entropy of `logits` against a target distribution.
pub fn cross_entropy_loss(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dims(logits.len(), target.len())?;
    if logits.is_empty() {
        return Err(Error::Domain("empty output".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let value = -target
        .iter()
        .zip(logits)
        .map(|(t, z)| t * (z - log_z))
        .sum::<f64>();
    let total: f64 = target.iter().sum();
    let grad = logits
        .iter()
        .zip(target)
        .map(|(z, t)| total * (z - log_z).exp() - t)
        .collect();
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(mse_loss(&[0.5, -1.0], &[0.5, -1.0]).unwrap().0, 0.0);
        let (v, _) = cross_entropy_loss(&[0.3; 4], &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
        let (v, _) = cross_entropy_loss(&[1000.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    fn check_fd(
        f: impl Fn(&[f64]) -> (f64, Vec<f64>),
        y: &[f64],
    ) -> std::result::Result<(), TestCaseError> {
        let (_, g) = f(y);
        for i in 0..y.len() {
            let h = 1e-6;
            let mut up = y.to_vec();
            let mut down = y.to_vec();
            up[i] += h;
            down[i] -= h;
            let fd = (f(&up).0 - f(&down).0) / (2.0 * h);
            let scale = g[i].abs().max(1.0);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * scale, "{} vs {}", fd, g[i]);
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(
            pairs in prop::collection::vec((-3.0f64..3.0, 0.0f64..1.0), 1..6),
        ) {
            let (y, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            check_fd(|y| mse_loss(y, &t).unwrap(), &y)?;
            let total: f64 = t.iter().sum::<f64>().max(1e-9);
            let dist: Vec<f64> = t.iter().map(|x| x / total).collect();
            check_fd(|y| cross_entropy_loss(y, &dist).unwrap(), &y)?;
        }
    }
}
