use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dispersion weight decay: `λ = (1 + 10·iter/max_iter)^(−β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub beta: f64,
    pub max_iter: usize,
}

impl ScheduleParams {
    pub fn new(beta: f64, max_iter: usize) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("β must be finite and ≥ 0, got {beta}")));
        }
        if max_iter == 0 {
            return Err(Error::Config("max_iter must be ≥ 1".into()));
        }
        Ok(Self { beta, max_iter })
    }

    pub fn lambda<T: Real>(&self, iter: usize) -> Result<T> {
        lambda_schedule(iter, self.max_iter, T::lit(self.beta))
    }
}

pub fn lambda_schedule<T: Real>(iter: usize, max_iter: usize, beta: T) -> Result<T> {
    if !(beta >= T::zero()) {
        return Err(Error::Config(format!("β must be ≥ 0, got {beta}")));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be ≥ 1".into()));
    }
    if iter > max_iter {
        return Err(Error::InvalidInput(format!("iter {iter} beyond max_iter {max_iter}")));
    }
    if beta == T::zero() {
        return Ok(T::one());
    }
    let progress = T::of_usize(iter) / T::of_usize(max_iter);
    Ok((T::one() + T::lit(10.0) * progress).powf(-beta))
}
