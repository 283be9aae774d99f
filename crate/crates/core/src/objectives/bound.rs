//! The likelihood-ratio form of the attraction/dispersion objective over a
//! whole dataset, and the Jensen upper bound that motivates the mini-batch
//! loss. These need every prediction at once, so they serve as test
//! oracles and analysis tools rather than training losses.

use crate::error::{Error, Result};
use crate::numerics::{check_simplex_rows, dot, DenseMatrix};
use crate::scalar::Real;

fn check_indices<T: Real>(
    anchor: usize,
    all_preds: &DenseMatrix<T>,
    close: &[usize],
    background: &[usize],
) -> Result<()> {
    let n = all_preds.rows();
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 predictions, got {n}")));
    }
    if anchor >= n {
        return Err(Error::Index(format!("anchor {anchor} of {n}")));
    }
    if let Some(&bad) = close.iter().chain(background).find(|&&k| k >= n) {
        return Err(Error::Index(format!("index {bad} of {n}")));
    }
    if close.contains(&anchor) {
        return Err(Error::Precondition(format!(
            "anchor {anchor} appears in its close set"
        )));
    }
    check_simplex_rows(all_preds)
}

fn similarities<T: Real>(anchor: usize, all_preds: &DenseMatrix<T>) -> Vec<T> {
    let p = all_preds.row(anchor);
    all_preds.row_iter().map(|q| dot(p, q)).collect()
}

/// `−log(P(𝒞)/P(ℬ))` with `p_ij = exp(p_iᵀp_j) / Σ_{k=1}^{N} exp(p_iᵀp_k)`.
///
/// The partition function runs over every row, the anchor included.
pub fn exact_aad_nll<T: Real>(
    anchor: usize,
    all_preds: &DenseMatrix<T>,
    close: &[usize],
    background: &[usize],
) -> Result<T> {
    check_indices(anchor, all_preds, close, background)?;
    let s = similarities(anchor, all_preds);
    let max = s.iter().copied().fold(T::neg_infinity(), T::max);
    let log_z = max + s.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    let log_close: T = close.iter().map(|&j| s[j] - log_z).sum();
    let log_back: T = background.iter().map(|&m| s[m] - log_z).sum();
    Ok(log_back - log_close)
}

/// `−Σ_𝒞 p_iᵀp_j + Σ_ℬ p_iᵀp_m + (N_𝒞 − N_ℬ)(mean_k p_iᵀp_k + ln N)`,
/// which dominates [`exact_aad_nll`] whenever `N_𝒞 < N_ℬ`.
pub fn jensen_upper_bound<T: Real>(
    anchor: usize,
    all_preds: &DenseMatrix<T>,
    close: &[usize],
    background: &[usize],
) -> Result<T> {
    if close.len() >= background.len() {
        return Err(Error::Precondition(format!(
            "bound needs |close| < |background|, got {} and {}",
            close.len(),
            background.len()
        )));
    }
    check_indices(anchor, all_preds, close, background)?;
    let s = similarities(anchor, all_preds);
    let n = T::of_usize(s.len());
    let mean = s.iter().copied().sum::<T>() / n;
    let attract: T = close.iter().map(|&j| s[j]).sum();
    let disperse: T = background.iter().map(|&m| s[m]).sum();
    let gap = T::of_usize(close.len()) - T::of_usize(background.len());
    Ok(disperse - attract + gap * (mean + n.ln()))
}

/// The bound with the full-dataset mean replaced by the background mean:
/// `−Σ_𝒞 p_iᵀp_j + (N_𝒞/N_ℬ) Σ_ℬ p_iᵀp_m + (N_𝒞 − N_ℬ) ln N`.
///
/// This is an estimate, not a bound, and is not guaranteed to dominate
/// [`exact_aad_nll`].
pub fn minibatch_bound_estimate<T: Real>(
    anchor: usize,
    all_preds: &DenseMatrix<T>,
    close: &[usize],
    background: &[usize],
) -> Result<T> {
    if close.len() >= background.len() {
        return Err(Error::Precondition(format!(
            "estimate needs |close| < |background|, got {} and {}",
            close.len(),
            background.len()
        )));
    }
    check_indices(anchor, all_preds, close, background)?;
    let s = similarities(anchor, all_preds);
    let nc = T::of_usize(close.len());
    let nb = T::of_usize(background.len());
    let attract: T = close.iter().map(|&j| s[j]).sum();
    let disperse: T = background.iter().map(|&m| s[m]).sum();
    Ok(nc / nb * disperse - attract + (nc - nb) * T::of_usize(s.len()).ln())
}
