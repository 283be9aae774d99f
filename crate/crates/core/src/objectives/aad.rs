use crate::error::{Error, Result};
use crate::numerics::{check_simplex_rows, dot, DenseMatrix};
use crate::objectives::LossResult;
use crate::scalar::Real;

/// Attraction/dispersion loss over a mini-batch:
///
/// `L = (1/bs) Σ_i [ −Σ_{j∈𝒞_i} p_iᵀ n_ij + λ Σ_{m≠i} p_iᵀ p_m ]`
///
/// where `n_ij` are the rows of `neighbor_preds[i]` (bank snapshots,
/// treated as constants) and the second sum runs over the rest of the batch.
/// The gradient counts every in-batch row both as an anchor and as a
/// background element of the other anchors.
pub fn aad_loss<T: Real>(
    preds: &DenseMatrix<T>,
    neighbor_preds: &[DenseMatrix<T>],
    lambda: T,
) -> Result<LossResult<T>> {
    aad_loss_terms(preds, neighbor_preds, T::one(), lambda)
}

/// [`aad_loss`] with an explicit weight on the attraction term, so the
/// single-term ablations share one code path.
pub fn aad_loss_terms<T: Real>(
    preds: &DenseMatrix<T>,
    neighbor_preds: &[DenseMatrix<T>],
    attraction: T,
    dispersion: T,
) -> Result<LossResult<T>> {
    let (bs, classes) = preds.shape();
    if bs < 2 {
        return Err(Error::BatchSize(format!(
            "need at least 2 rows for a background set, got {bs}"
        )));
    }
    if !(dispersion >= T::zero()) || !(attraction >= T::zero()) {
        return Err(Error::InvalidInput("term weights must be ≥ 0".into()));
    }
    if neighbor_preds.len() != bs {
        return Err(Error::Shape(format!(
            "{} neighbor sets for {bs} anchors",
            neighbor_preds.len()
        )));
    }
    check_simplex_rows(preds)?;
    for (i, nb) in neighbor_preds.iter().enumerate() {
        if nb.cols() != classes {
            return Err(Error::Shape(format!(
                "neighbor predictions of anchor {i} have {} classes, expected {classes}",
                nb.cols()
            )));
        }
        check_simplex_rows(nb)?;
    }

    let total = preds.column_sums();
    let inv_bs = T::one() / T::of_usize(bs);
    let two = T::lit(2.0);
    let mut value = T::zero();
    let mut grad = DenseMatrix::zeros(bs, classes);
    for (i, nb) in neighbor_preds.iter().enumerate() {
        let p = preds.row(i);
        let attract: T = nb.row_iter().map(|n| dot(p, n)).sum();
        // Σ_{m≠i} p_m = column total minus own row
        let others: Vec<T> = total.iter().zip(p).map(|(&t, &v)| t - v).collect();
        let disperse = dot(p, &others);
        value += dispersion * disperse - attraction * attract;

        let nb_sum = nb.column_sums();
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = (two * dispersion * others[c] - attraction * nb_sum[c]) * inv_bs;
        }
    }
    Ok(LossResult {
        value: value * inv_bs,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn one_hot_example() {
        let p = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let nb = vec![m(&[&[1.0, 0.0]]); 3];
        let r = aad_loss(&p, &nb, 1.0).unwrap();
        // L_0 = −1 + (1 + 0) = 0, L_1 = 0, L_2 = −0 + (0 + 0) = 0
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn zero_lambda_is_pure_attraction() {
        let p = m(&[&[0.2, 0.8], &[0.6, 0.4], &[0.5, 0.5]]);
        let nb = vec![
            m(&[&[1.0, 0.0], &[0.3, 0.7]]),
            m(&[&[0.1, 0.9], &[0.5, 0.5]]),
            m(&[&[0.0, 1.0], &[0.9, 0.1]]),
        ];
        let r = aad_loss(&p, &nb, 0.0).unwrap();
        let direct: f64 = (0..3)
            .map(|i| nb[i].row_iter().map(|n| dot(p.row(i), n)).sum::<f64>())
            .sum::<f64>()
            / 3.0;
        assert!((r.value + direct).abs() < 1e-15);
    }

    #[test]
    fn rejects_single_row() {
        let p = m(&[&[1.0, 0.0]]);
        assert!(matches!(
            aad_loss(&p, &[m(&[&[1.0, 0.0]])], 1.0),
            Err(Error::BatchSize(_))
        ));
    }

    #[test]
    fn rejects_off_simplex() {
        let p = m(&[&[0.9, 0.2], &[1.0, 0.0]]);
        let nb = vec![m(&[&[1.0, 0.0]]); 2];
        assert!(matches!(aad_loss(&p, &nb, 1.0), Err(Error::InvalidInput(_))));
    }
}
