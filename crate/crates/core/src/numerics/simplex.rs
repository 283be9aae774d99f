use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, norm, DenseMatrix};
use crate::scalar::Real;

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexVector<T> {
    probs: Vec<T>,
}

impl<T: Real> SimplexVector<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(classes: usize) -> Self {
        let p = T::one() / T::of_usize(classes);
        Self {
            probs: vec![p; classes],
        }
    }

    pub fn one_hot(classes: usize, class: usize) -> Self {
        let mut probs = vec![T::zero(); classes];
        probs[class] = T::one();
        Self { probs }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn entropy(&self) -> T {
        entropy_unchecked(&self.probs)
    }
}

/// Checks that `p` is non-empty, non-negative, finite, and sums to one.
pub fn check_simplex<T: Real>(p: &[T]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidInput("empty probability vector".into()));
    }
    if p.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::InvalidInput(
            "probability entries must be finite and non-negative".into(),
        ));
    }
    let total: T = p.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(T::SIMPLEX_TOL) {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

pub fn check_simplex_rows<T: Real>(m: &DenseMatrix<T>) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        check_simplex(row).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::InvalidInput(format!("row {i}: {msg}")),
            other => other,
        })?;
    }
    Ok(())
}

pub fn check_unit_rows<T: Real>(m: &DenseMatrix<T>, what: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        let n = norm(row);
        if !n.is_finite() || (n - T::one()).abs() > T::lit(T::UNIT_NORM_TOL) {
            return Err(Error::InvalidInput(format!(
                "{what} row {i} has norm {n}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Real>(logits: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if !logits.is_finite() {
        return Err(Error::InvalidInput("non-finite logits".into()));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Pulls `∂L/∂P` back through `P = softmax(Z)` row by row:
/// `∂L/∂z_c = p_c (∂L/∂p_c − Σ_k p_k ∂L/∂p_k)`.
pub fn softmax_backward<T: Real>(
    probs: &DenseMatrix<T>,
    grad_probs: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if probs.shape() != grad_probs.shape() {
        return Err(Error::Shape(format!(
            "softmax output {:?} vs gradient {:?}",
            probs.shape(),
            grad_probs.shape()
        )));
    }
    let mut out = DenseMatrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let g = grad_probs.row(r);
        let inner = dot(p, g);
        for ((o, &pc), &gc) in out.row_mut(r).iter_mut().zip(p).zip(g) {
            *o = pc * (gc - inner);
        }
    }
    Ok(out)
}

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn entropy<T: Real>(p: &[T]) -> Result<T> {
    check_simplex(p)?;
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked<T: Real>(p: &[T]) -> T {
    -p.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| v * v.ln())
        .sum::<T>()
}

/// Scales each non-zero row to unit Euclidean norm; zero rows pass through.
pub fn l2_normalize_rows<T: Real>(m: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = norm(row);
        if n > T::zero() {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }
    out
}

/// Pulls a gradient back through [`l2_normalize_rows`]:
/// `∂L/∂x = (g − y (yᵀg)) / ‖x‖` with `y = x/‖x‖`. Zero rows get zero gradient.
pub fn l2_normalize_backward<T: Real>(
    raw: &DenseMatrix<T>,
    grad_normalized: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if raw.shape() != grad_normalized.shape() {
        return Err(Error::Shape(format!(
            "input {:?} vs gradient {:?}",
            raw.shape(),
            grad_normalized.shape()
        )));
    }
    let mut out = DenseMatrix::zeros(raw.rows(), raw.cols());
    for r in 0..raw.rows() {
        let x = raw.row(r);
        let n = norm(x);
        if n == T::zero() {
            continue;
        }
        let g = grad_normalized.row(r);
        let yg = dot(x, g) / n;
        for ((o, &xc), &gc) in out.row_mut(r).iter_mut().zip(x).zip(g) {
            *o = (gc - xc / n * yg) / n;
        }
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows<T: Real>(m: &DenseMatrix<T>) -> Vec<usize> {
    m.row_iter().map(argmax).collect()
}
