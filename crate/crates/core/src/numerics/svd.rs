use crate::error::{Error, Result};
use crate::numerics::matrix::DenseMatrix;
use crate::scalar::Real;

/// Largest row or column count accepted by the SVD routines.
pub const MAX_SVD_DIM: usize = 512;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `M = U diag(σ) Vᵀ` with `k = min(rows, cols)` components.
#[derive(Clone, Debug)]
pub struct ThinSvd<T> {
    /// rows × k; columns for zero singular values are zero.
    pub u: DenseMatrix<T>,
    /// Descending, non-negative.
    pub sigma: Vec<T>,
    /// cols × k
    pub v: DenseMatrix<T>,
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(m: &DenseMatrix<T>) -> Result<Vec<T>> {
    Ok(thin_svd(m)?.sigma)
}

/// One-sided Jacobi (Hestenes) SVD.
pub fn thin_svd<T: Real>(m: &DenseMatrix<T>) -> Result<ThinSvd<T>> {
    let (rows, cols) = m.shape();
    if rows > MAX_SVD_DIM || cols > MAX_SVD_DIM {
        return Err(Error::Size(format!(
            "{rows}x{cols} exceeds the {MAX_SVD_DIM} limit"
        )));
    }
    if rows == 0 || cols == 0 {
        return Ok(ThinSvd {
            u: DenseMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(cols, 0),
        });
    }
    if rows < cols {
        let t = thin_svd(&m.transpose())?;
        return Ok(ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    // Work on columns: store Aᵀ so each column of A is a contiguous row.
    let n = cols;
    let mut a = m.transpose();
    let mut v = DenseMatrix::<T>::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&x, &y) in a.row(p).iter().zip(a.row(q)) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(T, usize)> = (0..n)
        .map(|j| (a.row(j).iter().map(|&x| x * x).sum::<T>().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));

    let scale = order.first().map_or(T::zero(), |o| o.0);
    let cutoff = scale * eps * T::of_usize(rows.max(cols));
    let mut u = DenseMatrix::zeros(rows, n);
    let mut vt = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &(s, j)) in order.iter().enumerate() {
        sigma.push(s);
        for r in 0..n {
            vt.set(r, k, v.get(j, r));
        }
        if s > cutoff {
            for r in 0..rows {
                u.set(r, k, a.get(j, r) / s);
            }
        }
    }
    Ok(ThinSvd { u, sigma, v: vt })
}

// Rows p and q of `m` hold columns of the working matrix.
fn rotate_rows<T: Real>(m: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.cols();
    let data = m.data_mut();
    for k in 0..cols {
        let x = data[p * cols + k];
        let y = data[q * cols + k];
        data[p * cols + k] = c * x - s * y;
        data[q * cols + k] = s * x + c * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    // Determinant by Gaussian elimination with partial pivoting.
    fn det(mut m: DenseMatrix<f64>) -> f64 {
        let n = m.rows();
        let mut d = 1.0;
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&a, &b| m.get(a, k).abs().partial_cmp(&m.get(b, k).abs()).unwrap())
                .unwrap();
            if m.get(piv, k) == 0.0 {
                return 0.0;
            }
            if piv != k {
                for c in 0..n {
                    let t = m.get(k, c);
                    m.set(k, c, m.get(piv, c));
                    m.set(piv, c, t);
                }
                d = -d;
            }
            d *= m.get(k, k);
            for r in (k + 1)..n {
                let f = m.get(r, k) / m.get(k, k);
                for c in k..n {
                    let v = m.get(r, c) - f * m.get(k, c);
                    m.set(r, c, v);
                }
            }
        }
        d
    }

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(
            singular_values(&DenseMatrix::<f64>::identity(2)).unwrap(),
            vec![1.0, 1.0]
        );
        let d = DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(singular_values(&d).unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn squared_product_matches_gram_determinant() {
        let m = random(8, 4, 11);
        let s = singular_values(&m).unwrap();
        let prod: f64 = s.iter().map(|x| x * x).product();
        let gram_det = det(m.t_matmul(&m).unwrap());
        assert!((prod - gram_det).abs() < 1e-8, "{prod} vs {gram_det}");
    }

    #[test]
    fn energy_matches_frobenius_and_reconstructs() {
        for (seed, (r, c)) in [(3usize, 5usize), (5, 3), (7, 7), (1, 4), (16, 2)]
            .into_iter()
            .enumerate()
        {
            let m = random(r, c, seed as u64);
            let svd = thin_svd(&m).unwrap();
            let energy: f64 = svd.sigma.iter().map(|x| x * x).sum();
            assert!((energy - m.frobenius_norm().powi(2)).abs() < 1e-8);
            assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
            let us = DenseMatrix::from_fn(r, svd.sigma.len(), |i, k| svd.u.get(i, k) * svd.sigma[k]);
            let back = us.matmul_t(&svd.v).unwrap();
            for (a, b) in back.data().iter().zip(m.data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_oversized() {
        let m = DenseMatrix::<f64>::zeros(513, 2);
        assert!(matches!(singular_values(&m), Err(Error::Size(_))));
    }
}
