//! Central finite differences, used as the independent oracle for every
//! hand-derived gradient in the crate.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default step for [`finite_diff_grad`].
pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor for [`max_relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// `(f(x + h e_k) − f(x − h e_k)) / 2h` for every coordinate `k`.
pub fn finite_diff_grad<T, F>(f: F, x: &[T], h: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let two_h = h + h;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let up = f(&probe);
        probe[k] = orig - h;
        let down = f(&probe);
        probe[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::OracleFailure(format!(
                "objective not finite around coordinate {k}"
            )));
        }
        grad.push((up - down) / two_h);
    }
    Ok(grad)
}

/// `max_k |a_k − b_k| / max(|a_k|, |b_k|, floor)`.
pub fn max_relative_error<T: Real>(analytic: &[T], numeric: &[T], floor: T) -> T {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), T::max)
}
