use crate::error::{Error, Result};
use crate::numerics::{check_simplex_rows, DenseMatrix};
use crate::objectives::LossResult;
use crate::scalar::Real;

/// Lower clamp on the probability inside the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// `−mean_i ln p_i[y_i]`, used for source pretraining. Composed with the
/// softmax the gradient becomes `(P − onehot(y)) / n`.
pub fn cross_entropy_loss<T: Real>(preds: &DenseMatrix<T>, labels: &[usize]) -> Result<LossResult<T>> {
    let (n, classes) = preds.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Label(format!("label {bad} outside [0, {classes})")));
    }
    check_simplex_rows(preds)?;
    let inv_n = T::one() / T::of_usize(n);
    let clamp = T::lit(LOG_CLAMP);
    let mut value = T::zero();
    let mut grad = DenseMatrix::zeros(n, classes);
    for (i, &y) in labels.iter().enumerate() {
        let p = preds.get(i, y);
        if p > clamp {
            value -= p.ln();
            grad.set(i, y, -inv_n / p);
        } else {
            value -= clamp.ln();
        }
    }
    Ok(LossResult {
        value: value * inv_n,
        grad,
    })
}
