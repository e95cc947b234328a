//! Continuous relaxation of latent spins.
//!
//! The density `p(x) = α e^{-α(1-x)} / (1 - e^{-2α})` on `(-1, 1]` rises
//! exponentially towards `x = 1`. A spin `s` becomes `s·x` with `x ~ p`, so
//! each spin maps to a continuous value concentrated near its own sign.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::{Error, Real, Result};

pub const DEFAULT_ALPHA: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReparamConfig<T> {
    pub alpha: T,
}

impl<T: Real> ReparamConfig<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha.is_finite() && alpha > T::zero()) {
            return Err(Error::InvalidParameter(format!("alpha must be finite and positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

impl<T: Real> Default for ReparamConfig<T> {
    fn default() -> Self {
        Self { alpha: T::lit(DEFAULT_ALPHA) }
    }
}

/// `1 - e^{-2α}`, computed without cancellation for small `α`.
fn norm<T: Real>(alpha: T) -> T {
    -(-(alpha + alpha)).exp_m1()
}

/// Density on `(-1, 1]`, zero elsewhere.
pub fn pdf<T: Real>(x: T, alpha: T) -> T {
    if x <= -T::one() || x > T::one() {
        return T::zero();
    }
    alpha * (-alpha * (T::one() - x)).exp() / norm(alpha)
}

pub fn cdf<T: Real>(z: T, alpha: T) -> T {
    if z <= -T::one() {
        T::zero()
    } else if z >= T::one() {
        T::one()
    } else {
        let two_alpha = alpha + alpha;
        ((-alpha * (T::one() - z)).exp() - (-two_alpha).exp()) / norm(alpha)
    }
}

/// Inverse of [`cdf`] for `u` in `(0, 1]`.
pub fn inverse_cdf<T: Real>(u: T, alpha: T) -> T {
    let floor = (-(alpha + alpha)).exp();
    T::one() + (u * norm(alpha) + floor).ln() / alpha
}

/// Mean of `p`: `1 - (1 - e^{-2α}(1 + 2α)) / (α (1 - e^{-2α}))`.
pub fn analytic_mean<T: Real>(alpha: T) -> T {
    let two_alpha = alpha + alpha;
    T::one() - (T::one() - (-two_alpha).exp() * (T::one() + two_alpha)) / (alpha * norm(alpha))
}

/// `spin · x` with `x` drawn from `p` by inverse CDF.
pub fn sample_continuous<T: Real, R: Rng + ?Sized>(spin: i8, alpha: T, rng: &mut R) -> T {
    // random() is in [0, 1); flip it to (0, 1]
    let u = T::lit(1.0 - rng.random::<f64>());
    let x = inverse_cdf(u, alpha).max(-T::one()).min(T::one());
    if spin > 0 {
        x
    } else {
        -x
    }
}

/// Reparametrises a batch of spin rows.
pub fn reparametrize<T: Real, R: Rng + ?Sized>(spins: ArrayView2<'_, i8>, config: &ReparamConfig<T>, rng: &mut R) -> Array2<T> {
    spins.map(|&s| sample_continuous(s, config.alpha, rng))
}
