//! Objectives that split into a discriminability term and a diversity term:
//! mutual information, batch nuclear-norm maximization, neighborhood
//! clustering and InfoNCE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::simplex::{check_unit_rows, entropy_unchecked};
use crate::numerics::{check_simplex_rows, dot, thin_svd, DenseMatrix};
use crate::objectives::LossResult;
use crate::scalar::Real;

// ln clamped so zero probabilities keep the gradient finite.
fn safe_ln<T: Real>(v: T) -> T {
    v.max(T::min_positive_value()).ln()
}

/// `mean_i H(p_i) − H(mean_i p_i)`, the marginal entropy estimated on the batch.
pub fn mi_loss<T: Real>(preds: &DenseMatrix<T>) -> Result<LossResult<T>> {
    check_simplex_rows(preds)?;
    let (n, classes) = preds.shape();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let inv_n = T::one() / T::of_usize(n);
    let mean: Vec<T> = preds.column_sums().into_iter().map(|s| s * inv_n).collect();
    let conditional = preds.row_iter().map(entropy_unchecked).sum::<T>() * inv_n;
    let marginal = entropy_unchecked(&mean);

    let mut grad = DenseMatrix::zeros(n, classes);
    for i in 0..n {
        let p = preds.row(i);
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (safe_ln(mean[c]) - safe_ln(p[c])) * inv_n;
        }
    }
    Ok(LossResult {
        value: conditional - marginal,
        grad,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnmVariant {
    /// `−‖P‖_F`
    FNorm,
    /// `−‖P‖_*`
    Nuclear,
}

/// Batch nuclear-norm maximization. The nuclear-norm gradient is the
/// subgradient `−U Vᵀ` of a thin SVD, which is not unique when singular
/// values repeat.
pub fn bnm_loss<T: Real>(preds: &DenseMatrix<T>, variant: BnmVariant) -> Result<LossResult<T>> {
    check_simplex_rows(preds)?;
    if preds.rows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    match variant {
        BnmVariant::FNorm => {
            let f = preds.frobenius_norm();
            Ok(LossResult {
                value: -f,
                grad: preds.scale(-T::one() / f),
            })
        }
        BnmVariant::Nuclear => {
            let svd = thin_svd(preds)?;
            let value = -svd.sigma.iter().copied().sum::<T>();
            let grad = svd.u.matmul_t(&svd.v)?.scale(-T::one());
            Ok(LossResult { value, grad })
        }
    }
}

/// Link applied to the weighted neighbor affinity in [`nc_loss`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NcMode {
    Identity,
    Log,
}

/// Neighborhood clustering with a uniform-prior diversity term:
///
/// `(1/n) Σ_i −Σ_j g(W_ij p_iᵀ n_ij) + Σ_c p̄_c ln(p̄_c C)`
///
/// `weights[i][j]` pairs with row `j` of `neighbor_preds[i]`; neighbor
/// predictions are constants.
pub fn nc_loss<T: Real>(
    preds: &DenseMatrix<T>,
    neighbor_preds: &[DenseMatrix<T>],
    weights: &[Vec<T>],
    mode: NcMode,
) -> Result<LossResult<T>> {
    nc_loss_terms(preds, neighbor_preds, weights, mode, true)
}

pub(crate) fn nc_loss_terms<T: Real>(
    preds: &DenseMatrix<T>,
    neighbor_preds: &[DenseMatrix<T>],
    weights: &[Vec<T>],
    mode: NcMode,
    with_kl: bool,
) -> Result<LossResult<T>> {
    check_simplex_rows(preds)?;
    let (n, classes) = preds.shape();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if neighbor_preds.len() != n || weights.len() != n {
        return Err(Error::Shape(format!(
            "{n} anchors, {} neighbor sets, {} weight rows",
            neighbor_preds.len(),
            weights.len()
        )));
    }
    let inv_n = T::one() / T::of_usize(n);
    let mut value = T::zero();
    let mut grad = DenseMatrix::zeros(n, classes);
    for i in 0..n {
        let nb = &neighbor_preds[i];
        let w = &weights[i];
        if nb.cols() != classes || nb.rows() != w.len() {
            return Err(Error::Shape(format!(
                "anchor {i}: {}x{} neighbor predictions with {} weights",
                nb.rows(),
                nb.cols(),
                w.len()
            )));
        }
        check_simplex_rows(nb)?;
        let p = preds.row(i);
        for (j, n_row) in nb.row_iter().enumerate() {
            let wij = w[j];
            if !(wij > T::zero()) {
                return Err(Error::InvalidInput(format!(
                    "weight W[{i}][{j}] = {wij} must be > 0"
                )));
            }
            let s = dot(p, n_row);
            let g_row = grad.row_mut(i);
            match mode {
                NcMode::Identity => {
                    value -= wij * s;
                    for (g, &q) in g_row.iter_mut().zip(n_row) {
                        *g -= wij * q * inv_n;
                    }
                }
                NcMode::Log => {
                    if !(s > T::zero()) {
                        return Err(Error::Domain(format!(
                            "log of non-positive affinity {s} at anchor {i}, neighbor {j}"
                        )));
                    }
                    value -= (wij * s).ln();
                    for (g, &q) in g_row.iter_mut().zip(n_row) {
                        *g -= q / s * inv_n;
                    }
                }
            }
        }
    }
    value *= inv_n;

    if with_kl {
        let mean: Vec<T> = preds.column_sums().into_iter().map(|s| s * inv_n).collect();
        let c = T::of_usize(classes);
        let kl: T = mean
            .iter()
            .filter(|&&m| m > T::zero())
            .map(|&m| m * (m * c).ln())
            .sum();
        value += kl;
        let d_mean: Vec<T> = mean
            .iter()
            .map(|&m| (safe_ln(m) + c.ln() + T::one()) * inv_n)
            .collect();
        for i in 0..n {
            for (g, &d) in grad.row_mut(i).iter_mut().zip(&d_mean) {
                *g += d;
            }
        }
    }
    Ok(LossResult { value, grad })
}

/// Alignment plus uniformity form of InfoNCE over unit-norm features:
///
/// `(1/n) Σ_i [ −a_iᵀy_i/τ + ln(e^{1/τ} + Σ_m e^{a_iᵀx⁻_m/τ}) ]`
///
/// The negatives are shared by every anchor. The gradient is taken with
/// respect to the anchors only.
pub fn infonce_loss<T: Real>(
    anchors: &DenseMatrix<T>,
    positives: &DenseMatrix<T>,
    negatives: &DenseMatrix<T>,
    tau: T,
) -> Result<LossResult<T>> {
    if !(tau > T::zero()) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    if anchors.shape() != positives.shape() {
        return Err(Error::Shape(format!(
            "anchors {:?} vs positives {:?}",
            anchors.shape(),
            positives.shape()
        )));
    }
    if negatives.rows() > 0 && negatives.cols() != anchors.cols() {
        return Err(Error::Shape(format!(
            "negatives have {} dims, anchors {}",
            negatives.cols(),
            anchors.cols()
        )));
    }
    check_unit_rows(anchors, "anchor")?;
    check_unit_rows(positives, "positive")?;
    check_unit_rows(negatives, "negative")?;

    let (n, h) = anchors.shape();
    if n == 0 {
        return Err(Error::InvalidInput("no anchors".into()));
    }
    let inv_n = T::one() / T::of_usize(n);
    let inv_tau = T::one() / tau;
    let mut value = T::zero();
    let mut grad = DenseMatrix::zeros(n, h);
    for i in 0..n {
        let a = anchors.row(i);
        let y = positives.row(i);
        // logits of the uniformity term; the constant e^{1/τ} sits first
        let mut logits = Vec::with_capacity(negatives.rows() + 1);
        logits.push(inv_tau);
        logits.extend(negatives.row_iter().map(|x| dot(a, x) * inv_tau));
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let weights: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: T = weights.iter().copied().sum();
        value += -dot(a, y) * inv_tau + max + total.ln();

        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = -y[k] * inv_tau * inv_n;
        }
        for (m, x) in negatives.row_iter().enumerate() {
            let w = weights[m + 1] / total * inv_tau * inv_n;
            for (gk, &xk) in g.iter_mut().zip(x) {
                *gk += w * xk;
            }
        }
    }
    Ok(LossResult {
        value: value * inv_n,
        grad,
    })
}
