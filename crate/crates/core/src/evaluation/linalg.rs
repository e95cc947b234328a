//! Symmetric eigen-decomposition and the PSD square root.

use ndarray::{Array1, Array2, ArrayView2};

use crate::{Error, Real, Result};

/// Allowed asymmetry, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues down to `-NEGATIVE_TOL` (relative to the largest) are
/// treated as rounding and clipped to zero.
pub const NEGATIVE_TOL: f64 = 1e-8;

fn check_symmetric<T: Real>(m: &ArrayView2<'_, T>) -> Result<T> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::InvalidInput(format!("{r}x{c} matrix is not square")));
    }
    let scale = m.iter().fold(T::one(), |a, &v| a.max(v.abs()));
    for i in 0..r {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > T::lit(SYMMETRY_TOL) * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric: entries ({i}, {j}) and ({j}, {i}) differ by {}",
                    (m[[i, j]] - m[[j, i]]).abs()
                )));
            }
        }
    }
    Ok(scale)
}

/// Eigenvalues and eigenvectors (as columns) of a symmetric matrix by cyclic
/// Jacobi rotations.
pub fn symmetric_eigen<T: Real>(m: ArrayView2<'_, T>) -> Result<(Array1<T>, Array2<T>)> {
    check_symmetric(&m)?;
    let n = m.nrows();
    let mut a = m.to_owned();
    // average the two triangles so rotations see an exactly symmetric matrix
    for i in 0..n {
        for j in 0..i {
            let v = (a[[i, j]] + a[[j, i]]) / T::lit(2.0);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    let mut v = Array2::eye(n);
    let eps = T::epsilon();
    // entries at rounding level of the whole matrix are dropped
    let floor = eps * a.iter().map(|&x| x * x).sum::<T>().sqrt();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= eps * (a[[p, p]] * a[[q, q]]).abs().sqrt() || apq.abs() <= floor {
                    a[[p, q]] = T::zero();
                    a[[q, p]] = T::zero();
                    continue;
                }
                rotated = true;
                let theta = (a[[q, q]] - a[[p, p]]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            let values = Array1::from_iter((0..n).map(|i| a[[i, i]]));
            return Ok((values, v));
        }
    }
    Err(Error::Numeric(format!("Jacobi eigen-decomposition of a {n}x{n} matrix did not converge")))
}

/// Clips small negative eigenvalues; errors on clearly negative ones.
fn clip_spectrum<T: Real>(values: &mut Array1<T>, what: &str) -> Result<()> {
    let top = values.iter().fold(T::one(), |a, &v| a.max(v.abs()));
    let floor = -T::lit(NEGATIVE_TOL) * top;
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| v < floor) {
        return Err(Error::Numeric(format!(
            "{what} is not positive semidefinite: eigenvalue {i} is {v} (tolerance {floor}, largest magnitude {top})"
        )));
    }
    values.mapv_inplace(|v| v.max(T::zero()));
    Ok(())
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn matrix_sqrt_psd<T: Real>(m: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let (mut values, vectors) = symmetric_eigen(m)?;
    clip_spectrum(&mut values, "matrix")?;
    let scaled = &vectors * &values.mapv(T::sqrt);
    Ok(scaled.dot(&vectors.t()))
}

/// `Tr((A B)^{1/2})` for PSD `A`, `B`, computed as the trace of the root of
/// the symmetric `A^{1/2} B A^{1/2}`, which has the same spectrum as `A B`.
pub fn trace_sqrt_product<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("shapes {:?} and {:?}", a.dim(), b.dim())));
    }
    check_symmetric(&b)?;
    let root = matrix_sqrt_psd(a)?;
    let mut m = root.dot(&b).dot(&root);
    let half = T::lit(0.5);
    let mt = m.t().to_owned();
    m.zip_mut_with(&mt, |x, &y| *x = (*x + y) * half);
    let (mut values, _) = symmetric_eigen(m.view())?;
    clip_spectrum(&mut values, "covariance product")?;
    Ok(values.iter().map(|v| v.sqrt()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::arr2;
    use rand::Rng;

    fn random_psd(n: usize, rank: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeded(seed);
        let x = Array2::from_shape_simple_fn((n, rank), || rng.random_range(-1.0..1.0));
        x.dot(&x.t())
    }

    fn spectral_norm(m: &Array2<f64>) -> f64 {
        let (values, _) = symmetric_eigen(m.dot(&m.t()).view()).unwrap();
        values.iter().fold(0.0f64, |a, &v| a.max(v)).sqrt()
    }

    #[test]
    fn root_examples() {
        let id = Array2::<f64>::eye(4);
        assert!((matrix_sqrt_psd(id.view()).unwrap() - &id).iter().all(|d| d.abs() < 1e-15));
        let r = matrix_sqrt_psd(arr2(&[[4.0, 0.0], [0.0, 9.0]]).view()).unwrap();
        assert!((r - arr2(&[[2.0, 0.0], [0.0, 3.0]])).iter().all(|d: &f64| d.abs() < 1e-14));
    }

    #[test]
    fn root_squares_back() {
        for seed in 0..10 {
            let m = random_psd(8, 8, seed);
            let r = matrix_sqrt_psd(m.view()).unwrap();
            assert!(spectral_norm(&(r.dot(&r) - &m)) < 1e-10);
            // rank-deficient input still squares back
            let m = random_psd(8, 3, seed + 100);
            let r = matrix_sqrt_psd(m.view()).unwrap();
            assert!(spectral_norm(&(r.dot(&r) - &m)) < 1e-10);
        }
    }

    #[test]
    fn eigenvectors_diagonalise() {
        let m = random_psd(6, 6, 3) - 1.5 * Array2::<f64>::eye(6);
        let (values, vectors) = symmetric_eigen(m.view()).unwrap();
        let back = (&vectors * &values).dot(&vectors.t());
        assert!((back - &m).iter().all(|d| d.abs() < 1e-12));
        let gram = vectors.t().dot(&vectors);
        assert!((gram - Array2::<f64>::eye(6)).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn converges_on_large_rank_deficient_covariance() {
        // 64 features, a quarter of them constant zero
        let mut rng = seeded(11);
        let x = Array2::from_shape_fn((200, 64), |(_, j)| if j % 4 == 0 { 0.0 } else { rng.random_range(0.0..5.0f64) });
        let centred = &x - &x.mean_axis(ndarray::Axis(0)).unwrap();
        let cov = centred.t().dot(&centred) / 199.0;
        let (values, vectors) = symmetric_eigen(cov.view()).unwrap();
        let back = (&vectors * &values).dot(&vectors.t());
        assert!((back - &cov).iter().all(|d| d.abs() < 1e-11));
        let r = matrix_sqrt_psd(cov.view()).unwrap();
        assert!(spectral_norm(&(r.dot(&r) - &cov)) < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matrix_sqrt_psd(arr2(&[[1.0, 2.0], [0.0, 1.0]]).view()).is_err());
        assert!(matches!(matrix_sqrt_psd(arr2(&[[1.0, 0.0], [0.0, -0.5]]).view()), Err(Error::Numeric(_))));
        assert!(matrix_sqrt_psd(Array2::<f64>::zeros((2, 3)).view()).is_err());
        // tiny negatives from rounding are clipped
        let r = matrix_sqrt_psd(arr2(&[[1.0, 0.0], [0.0, -1e-12]]).view()).unwrap();
        assert_eq!(r[[1, 1]], 0.0);
    }

    #[test]
    fn trace_root_matches_nonsymmetric_oracle() {
        // independent route: eigenvalues of the nonsymmetric product A B
        for seed in 0..20 {
            let a = random_psd(5, 5, 2 * seed);
            let b = random_psd(5, 5, 2 * seed + 1);
            let ours = trace_sqrt_product(a.view(), b.view()).unwrap();
            let ab = a.dot(&b);
            let na = nalgebra::DMatrix::from_fn(5, 5, |i, j| ab[[i, j]]);
            let oracle: f64 = na.complex_eigenvalues().iter().map(|z| z.sqrt().re).sum();
            assert!((ours - oracle).abs() < 1e-8, "{ours} vs {oracle}");
        }
    }
}
