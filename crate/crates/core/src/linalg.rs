//! Small dense Hermitian helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::{CMat, Error, Result, C64};

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
///
/// Column `k` of the returned matrix is the eigenvector for eigenvalue `k`.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(hermitian_part(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// `A^{-1/2}` for a Hermitian positive-definite `A`.
pub fn inverse_sqrt_hermitian(a: &CMat) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(a);
    let max = values.last().copied().unwrap_or(0.0);
    if values.first().map_or(true, |&v| v <= 1e-14 * max.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularCombiner);
    }
    let scaled = CMat::from_fn(vectors.nrows(), vectors.ncols(), |r, c| {
        vectors[(r, c)] / values[c].sqrt()
    });
    Ok(hermitian_part(&(&scaled * vectors.adjoint())))
}

/// Cholesky factor of the Hermitian part of `a`.
pub fn cholesky(a: &CMat) -> Result<Cholesky<C64, Dyn>> {
    Cholesky::new(hermitian_part(a)).ok_or(Error::NotPositiveDefinite)
}

/// `log det A` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<C64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// Real part of `tr(A B)` without forming the product.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Moore–Penrose pseudoinverse via SVD.
///
/// Singular values below `rcond * σ_max` are dropped. Returns the inverse and
/// the numerical rank.
pub fn pseudo_inverse(a: &CMat, rcond: f64) -> (CMat, usize) {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return (CMat::zeros(cols, rows), 0);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rcond * s_max;
    let mut out = CMat::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        let inv = 1.0 / s;
        for c in 0..cols {
            let vc = v_t[(k, c)].conj() * inv;
            for r in 0..rows {
                out[(c, r)] += vc * u[(r, k)].conj();
            }
        }
    }
    (out, rank)
}

/// Real symmetric SVD pseudoinverse with relative truncation, also reporting
/// which singular directions were dropped.
pub struct TruncatedInverse {
    pub inverse: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// Right-singular vectors of the dropped directions.
    pub dropped: Vec<Vec<f64>>,
}

pub fn truncated_pinv_real(a: &DMatrix<f64>, rel_tol: f64) -> TruncatedInverse {
    let n = a.nrows();
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * s_max;
    let mut inverse = DMatrix::zeros(n, n);
    let mut dropped = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s < cutoff || s == 0.0 {
            dropped.push(v_t.row(k).iter().copied().collect());
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vi = v_t[(k, i)] * inv;
            for j in 0..n {
                inverse[(i, j)] += vi * u[(j, k)];
            }
        }
    }
    TruncatedInverse {
        inverse,
        singular_values: svd.singular_values.iter().copied().collect(),
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hpd(n: usize, seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a * a.adjoint() + CMat::identity(n, n) * C64::new(0.1, 0.0)
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = random_hpd(6, 1);
        let t = inverse_sqrt_hermitian(&a).unwrap();
        let should_be_identity = &t * &a * &t;
        assert!((should_be_identity - CMat::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = random_hpd(5, 2);
        let (values, vectors) = hermitian_eigen(&a);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            5,
            values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let back = &vectors * diag * vectors.adjoint();
        assert!((back - a).norm() < 1e-10);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let a = random_hpd(4, 3);
        let chol = cholesky(&a).unwrap();
        let expected: f64 = hermitian_eigenvalues(&a).iter().map(|v| v.ln()).sum();
        assert!((log_det(&chol) - expected).abs() < 1e-10);
    }

    #[test]
    fn pinv_of_tall_full_rank_is_left_inverse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = CMat::from_fn(8, 3, |_, _| C64::new(rng.random::<f64>(), rng.random::<f64>()));
        let (p, rank) = pseudo_inverse(&a, 1e-12);
        assert_eq!(rank, 3);
        assert!((p * a - CMat::identity(3, 3)).norm() < 1e-10);
    }
}
