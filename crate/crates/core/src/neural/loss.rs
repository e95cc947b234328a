//! Losses and their gradients, averaged over the batch.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::{Error, Real, Result};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-12;

fn same_shape<T>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!("shape {:?} against {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

fn check_targets<T>(y: &ArrayView2<'_, T>, targets: &[usize]) -> Result<()> {
    if targets.len() != y.nrows() {
        return Err(Error::InvalidInput(format!("{} targets for {} rows", targets.len(), y.nrows())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= y.ncols()) {
        return Err(Error::InvalidInput(format!("class {t} out of range for {} outputs", y.ncols())));
    }
    Ok(())
}

fn clamp<T: Real>(p: T) -> T {
    let eps = T::lit(CLAMP);
    p.max(eps).min(T::one() - eps)
}

/// Mean over all entries of `(y - t)^2`.
pub fn mean_squared_error<T: Real>(y: ArrayView2<'_, T>, t: ArrayView2<'_, T>) -> Result<T> {
    same_shape(&y, &t)?;
    let n = T::lit(y.len() as f64);
    Ok(Zip::from(&y).and(&t).fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a - b)) / n)
}

pub fn mean_squared_error_grad<T: Real>(y: ArrayView2<'_, T>, t: ArrayView2<'_, T>) -> Result<Array2<T>> {
    same_shape(&y, &t)?;
    let scale = T::lit(2.0 / y.len() as f64);
    Ok(Zip::from(&y).and(&t).map_collect(|&a, &b| (a - b) * scale))
}

/// Mean of `-[t ln p + (1 - t) ln(1 - p)]` with clamped `p`.
pub fn binary_cross_entropy<T: Real>(p: ArrayView1<'_, T>, labels: ArrayView1<'_, T>) -> Result<T> {
    if p.len() != labels.len() || p.is_empty() {
        return Err(Error::InvalidInput(format!("{} probabilities for {} labels", p.len(), labels.len())));
    }
    let total = Zip::from(&p).and(&labels).fold(T::zero(), |acc, &p, &t| {
        let p = clamp(p);
        acc - (t * p.ln() + (T::one() - t) * (T::one() - p).ln())
    });
    Ok(total / T::lit(p.len() as f64))
}

/// Gradient of [`binary_cross_entropy`] with respect to the logit of a
/// sigmoid output: `(p - t) / n`, shaped as an `n × 1` column.
pub fn binary_cross_entropy_logit_grad<T: Real>(p: ArrayView1<'_, T>, labels: ArrayView1<'_, T>) -> Result<Array2<T>> {
    if p.len() != labels.len() || p.is_empty() {
        return Err(Error::InvalidInput(format!("{} probabilities for {} labels", p.len(), labels.len())));
    }
    let n = T::lit(p.len() as f64);
    let g = Zip::from(&p).and(&labels).map_collect(|&p, &t| (p - t) / n);
    Ok(g.insert_axis(ndarray::Axis(1)))
}

/// Mean of `-ln y[target]` over rows of a probability matrix.
pub fn cross_entropy<T: Real>(y: ArrayView2<'_, T>, targets: &[usize]) -> Result<T> {
    check_targets(&y, targets)?;
    let total = targets.iter().enumerate().fold(T::zero(), |acc, (i, &t)| acc - clamp(y[[i, t]]).ln());
    Ok(total / T::lit(targets.len() as f64))
}

/// `dL/dy` of [`cross_entropy`].
pub fn cross_entropy_output_grad<T: Real>(y: ArrayView2<'_, T>, targets: &[usize]) -> Result<Array2<T>> {
    check_targets(&y, targets)?;
    let n = T::lit(targets.len() as f64);
    let mut g = Array2::zeros(y.dim());
    for (i, &t) in targets.iter().enumerate() {
        g[[i, t]] = -T::one() / (clamp(y[[i, t]]) * n);
    }
    Ok(g)
}

/// `dL/dz` of [`cross_entropy`] after a softmax: `(y - onehot) / n`.
pub fn softmax_cross_entropy_grad<T: Real>(y: ArrayView2<'_, T>, targets: &[usize]) -> Result<Array2<T>> {
    check_targets(&y, targets)?;
    let n = T::lit(targets.len() as f64);
    let mut g = y.to_owned();
    for (i, &t) in targets.iter().enumerate() {
        g[[i, t]] -= T::one();
    }
    g.mapv_inplace(|v| v / n);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn binary_cross_entropy_values() {
        let v = binary_cross_entropy(arr1(&[0.5, 0.5]).view(), arr1(&[1.0, 0.0]).view()).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let clamped: f64 = binary_cross_entropy(arr1(&[0.0]).view(), arr1(&[1.0]).view()).unwrap();
        assert!(clamped.is_finite() && clamped > 27.0);
        assert!(binary_cross_entropy(arr1(&[0.5]).view(), arr1(&[1.0, 0.0]).view()).is_err());
        let g = binary_cross_entropy_logit_grad(arr1(&[0.75, 0.25]).view(), arr1(&[1.0, 0.0]).view()).unwrap();
        assert_eq!(g, arr2(&[[-0.125], [0.125]]));
    }

    #[test]
    fn cross_entropy_values() {
        let y = arr2(&[[0.25, 0.75], [0.5, 0.5]]);
        let v = cross_entropy(y.view(), &[1, 0]).unwrap();
        assert!((v - (-(0.75f64).ln() - (0.5f64).ln()) / 2.0).abs() < 1e-15);
        assert!(cross_entropy(y.view(), &[2, 0]).is_err());
        assert!(cross_entropy(y.view(), &[0]).is_err());
        let g = softmax_cross_entropy_grad(y.view(), &[1, 0]).unwrap();
        assert_eq!(g, arr2(&[[0.125, -0.125], [-0.25, 0.25]]));
    }

    #[test]
    fn mse_gradient_matches_difference_quotient() {
        let y = arr2(&[[0.3, -1.0], [2.0, 0.5]]);
        let t = arr2(&[[0.0, 1.0], [1.5, 0.5]]);
        let g = mean_squared_error_grad(y.view(), t.view()).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut up = y.clone();
                up[[i, j]] += h;
                let mut down = y.clone();
                down[[i, j]] -= h;
                let fd: f64 = (mean_squared_error(up.view(), t.view()).unwrap() - mean_squared_error(down.view(), t.view()).unwrap()) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
