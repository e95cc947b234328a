use ndarray::{Array1, Array2, Zip};

use super::{Gradients, Network};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { rate: 2e-4, beta1: 0.5, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rate.is_finite()
            && self.rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon.is_finite()
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("bad Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub(super) steps: u64,
    pub(super) first: Vec<(Array2<T>, Array1<T>)>,
    pub(super) second: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Network<T>, config: AdamConfig) -> Self {
        let zeros: Vec<_> = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self { config, steps: 0, first: zeros.clone(), second: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn matches(&self, net: &Network<T>) -> bool {
        self.first.len() == net.n_layers()
            && self
                .first
                .iter()
                .zip(net.layers())
                .all(|((w, b), l)| w.dim() == l.weights.dim() && b.len() == l.bias.len())
    }

    /// One bias-corrected Adam update. Parameters stay untouched when the
    /// gradient is zero, since the update is proportional to the first
    /// moment.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        if !self.matches(net) || grads.layers.len() != net.n_layers() {
            return Err(Error::InvalidState("optimiser state does not match the network".into()));
        }
        for ((gw, gb), l) in grads.layers.iter().zip(net.layers()) {
            if gw.dim() != l.weights.dim() || gb.len() != l.bias.len() {
                return Err(Error::InvalidState("gradient shapes do not match the network".into()));
            }
        }
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let eps = T::lit(c.epsilon);
        let step_size = T::lit(c.rate / (1.0 - c.beta1.powi(t)));
        let correction2 = T::lit(1.0 - c.beta2.powi(t));
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p -= step_size * *m / ((*v / correction2).sqrt() + eps);
        };
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.first[k];
            let (vw, vb) = &mut self.second[k];
            Zip::from(&mut layer.weights).and(mw).and(vw).and(gw).for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias).and(mb).and(vb).and(gb).for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
