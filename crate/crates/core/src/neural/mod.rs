//! Dense feed-forward networks with manual backpropagation.
//!
//! Weights are stored `inputs × outputs` so a batch of row vectors maps
//! through `x · W + b`. [`Network::forward`] keeps every layer output; those
//! activations double as the cache for [`Network::backward`].

mod adam;
mod checkpoint;
pub mod loss;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::{Error, Real, Result};

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_adam, load_network, read_network, save_adam, save_network, write_network};

/// Slope of the leaky ReLU on negative inputs.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softmax,
        Activation::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::LeakyRelu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
            Activation::Softmax => 4,
            Activation::Identity => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    fn apply<T: Real>(self, z: &mut Array2<T>) {
        let slope = T::lit(LEAKY_SLOPE);
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(T::zero())),
            Activation::LeakyRelu => z.mapv_inplace(|v| if v > T::zero() { v } else { v * slope }),
            Activation::Tanh => z.mapv_inplace(T::tanh),
            Activation::Sigmoid => z.mapv_inplace(crate::scalar::sigmoid),
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let total = row.sum();
                    row.mapv_inplace(|v| v / total);
                }
            }
            Activation::Identity => {}
        }
    }

    /// Turns `dL/dy` into `dL/dz` in place, given the layer output `y`.
    fn chain<T: Real>(self, grad: &mut Array2<T>, y: &Array2<T>) {
        let slope = T::lit(LEAKY_SLOPE);
        match self {
            Activation::Relu => Zip::from(grad).and(y).for_each(|g, &y| {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }),
            Activation::LeakyRelu => Zip::from(grad).and(y).for_each(|g, &y| {
                if y <= T::zero() {
                    *g *= slope;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(y).for_each(|g, &y| *g *= T::one() - y * y),
            Activation::Sigmoid => Zip::from(grad).and(y).for_each(|g, &y| *g *= y * (T::one() - y)),
            Activation::Softmax => {
                for (mut g, y) in grad.rows_mut().into_iter().zip(y.rows()) {
                    let dot = g.iter().zip(y.iter()).fold(T::zero(), |acc, (&g, &y)| acc + g * y);
                    Zip::from(&mut g).and(&y).for_each(|g, &y| *g = y * (*g - dot));
                }
            }
            Activation::Identity => {}
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown activation {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Ordered stack of dense layers.
///
/// Every parameter change assigns a new version tag, so a cache from an
/// earlier forward pass is rejected by [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    version: u64,
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Layer outputs of one forward pass; index 0 is the input batch.
///
/// With dropout, `activations` holds the masked outputs that fed the next
/// layer and `unmasked` the outputs before masking.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    activations: Vec<Array2<T>>,
    masks: Vec<Option<(Array2<T>, Array2<T>)>>,
    version: u64,
}

impl<T: Real> Forward<T> {
    pub fn activations(&self) -> &[Array2<T>] {
        &self.activations
    }

    /// Output of layer `k` (1-based; 0 is the input).
    pub fn layer(&self, k: usize) -> &Array2<T> {
        &self.activations[k]
    }

    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("forward pass holds the input")
    }

    pub fn into_output(mut self) -> Array2<T> {
        self.activations.pop().expect("forward pass holds the input")
    }
}

/// Loss gradient handed to [`Network::backward`].
#[derive(Clone, Debug)]
pub enum OutputGrad<T> {
    /// `dL/dy` for the network output.
    Output(Array2<T>),
    /// `dL/dz` for the final pre-activation, e.g. the `y - t` form of
    /// cross-entropy after sigmoid or softmax.
    PreActivation(Array2<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
    pub input: Array2<T>,
}

impl<T: Real> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSize("network needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.inputs() == 0 || layer.outputs() == 0 {
                return Err(Error::InvalidSize(format!("layer {k} has an empty dimension")));
            }
            if layer.bias.len() != layer.outputs() {
                return Err(Error::InvalidSize(format!(
                    "layer {k}: bias length {} for {} outputs",
                    layer.bias.len(),
                    layer.outputs()
                )));
            }
            if k > 0 && layers[k - 1].outputs() != layer.inputs() {
                return Err(Error::InvalidSize(format!(
                    "layer {k} takes {} inputs but layer {} emits {}",
                    layer.inputs(),
                    k - 1,
                    layers[k - 1].outputs()
                )));
            }
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(Self { layers, version: fresh_version() })
    }

    /// Glorot-uniform weights and zero biases. `widths` lists every layer
    /// width including the input; `activations` has one entry per layer.
    pub fn glorot<R: Rng + ?Sized>(widths: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::InvalidSize(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || T::lit(rng.random_range(-limit..limit))),
                    bias: Array1::zeros(w[1]),
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to the parameters; invalidates earlier caches.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: l.weights.mapv(|v| U::lit(v.as_f64())),
                bias: l.bias.mapv(|v| U::lit(v.as_f64())),
                activation: l.activation,
            })
            .collect();
        Network { layers, version: fresh_version() }
    }

    pub fn forward(&self, batch: ArrayView2<'_, T>) -> Result<Forward<T>> {
        self.forward_impl(batch, None::<(&[f64], &mut crate::rng::SeededRng)>)
    }

    /// Forward pass with inverted dropout: each output of layer `k` is zeroed
    /// with probability `rates[k]` and the survivors scaled by
    /// `1 / (1 - rates[k])`. The output layer takes no dropout.
    pub fn forward_dropout<R: Rng + ?Sized>(&self, batch: ArrayView2<'_, T>, rates: &[f64], rng: &mut R) -> Result<Forward<T>> {
        let n = self.layers.len();
        if rates.len() != n || rates[n - 1] != 0.0 || !rates.iter().all(|r| (0.0..1.0).contains(r)) {
            return Err(Error::InvalidInput(format!(
                "dropout rates {rates:?}: need {n} values in [0, 1) with none on the output layer"
            )));
        }
        self.forward_impl(batch, Some((rates, rng)))
    }

    fn forward_impl<R: Rng + ?Sized>(&self, batch: ArrayView2<'_, T>, mut dropout: Option<(&[f64], &mut R)>) -> Result<Forward<T>> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "batch width {} but network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = vec![None];
        activations.push(batch.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().expect("input pushed above");
            let mut z = prev.dot(&layer.weights);
            z += &layer.bias;
            layer.activation.apply(&mut z);
            match dropout.as_mut() {
                Some((rates, rng)) if rates[k] > 0.0 => {
                    let (p, keep) = (rates[k], T::lit(1.0 / (1.0 - rates[k])));
                    let mask = Array2::from_shape_simple_fn(z.dim(), || if rng.random::<f64>() < p { T::zero() } else { keep });
                    let masked = &z * &mask;
                    masks.push(Some((mask, z)));
                    activations.push(masked);
                }
                _ => {
                    masks.push(None);
                    activations.push(z);
                }
            }
        }
        Ok(Forward { activations, masks, version: self.version })
    }

    /// Network output only.
    pub fn predict(&self, batch: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward(batch)?.into_output())
    }

    /// Gradients of the loss with respect to every parameter and the input.
    pub fn backward(&self, cache: &Forward<T>, grad: OutputGrad<T>) -> Result<Gradients<T>> {
        if cache.version != self.version {
            return Err(Error::InvalidState("forward cache is stale: parameters changed since it was computed".into()));
        }
        let n = self.layers.len();
        let batch = cache.activations[0].nrows();
        let mut delta = match grad {
            OutputGrad::Output(mut g) => {
                self.check_grad_shape(&g, batch)?;
                self.layers[n - 1].activation.chain(&mut g, &cache.activations[n]);
                g
            }
            OutputGrad::PreActivation(g) => {
                self.check_grad_shape(&g, batch)?;
                g
            }
        };
        let mut layers = Vec::with_capacity(n);
        for k in (0..n).rev() {
            let input = &cache.activations[k];
            layers.push((input.t().dot(&delta), delta.sum_axis(Axis(0))));
            let mut back = delta.dot(&self.layers[k].weights.t());
            if k > 0 {
                self.chain_hidden(cache, k, &mut back);
            }
            delta = back;
        }
        layers.reverse();
        Ok(Gradients { layers, input: delta })
    }

    /// Gradient with respect to the input only, skipping weight gradients.
    pub fn input_gradient(&self, cache: &Forward<T>, grad: OutputGrad<T>) -> Result<Array2<T>> {
        if cache.version != self.version {
            return Err(Error::InvalidState("forward cache is stale: parameters changed since it was computed".into()));
        }
        let n = self.layers.len();
        let batch = cache.activations[0].nrows();
        let mut delta = match grad {
            OutputGrad::Output(mut g) => {
                self.check_grad_shape(&g, batch)?;
                self.layers[n - 1].activation.chain(&mut g, &cache.activations[n]);
                g
            }
            OutputGrad::PreActivation(g) => {
                self.check_grad_shape(&g, batch)?;
                g
            }
        };
        for k in (0..n).rev() {
            let mut back = delta.dot(&self.layers[k].weights.t());
            if k > 0 {
                self.chain_hidden(cache, k, &mut back);
            }
            delta = back;
        }
        Ok(delta)
    }

    /// Carries `back`, the gradient at the output of layer `k` (1-based),
    /// through its dropout mask and activation.
    fn chain_hidden(&self, cache: &Forward<T>, k: usize, back: &mut Array2<T>) {
        match &cache.masks[k] {
            Some((mask, unmasked)) => {
                *back *= mask;
                self.layers[k - 1].activation.chain(back, unmasked);
            }
            None => self.layers[k - 1].activation.chain(back, &cache.activations[k]),
        }
    }

    fn check_grad_shape(&self, g: &Array2<T>, batch: usize) -> Result<()> {
        if g.dim() != (batch, self.output_dim()) {
            return Err(Error::InvalidInput(format!(
                "loss gradient is {:?}, expected ({batch}, {})",
                g.dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Backward pass followed by one Adam update.
    pub fn backward_step(&mut self, cache: &Forward<T>, grad: OutputGrad<T>, adam: &mut AdamState<T>) -> Result<Gradients<T>> {
        let grads = self.backward(cache, grad)?;
        adam.step(self, &grads)?;
        Ok(grads)
    }
}

/// `+1` where the activation exceeds `threshold`, `-1` otherwise.
pub fn binarize_features<T: Real>(activations: ArrayView2<'_, T>, threshold: T) -> Array2<i8> {
    activations.mapv(|v| if v > threshold { 1 } else { -1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::{arr2, Array};
    use proptest::prelude::*;
    use rand::Rng;

    fn net(widths: &[usize], acts: &[Activation], seed: u64) -> Network<f64> {
        let mut rng = seeded(seed);
        let mut net = Network::glorot(widths, acts, &mut rng).unwrap();
        for layer in net.layers_mut() {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        net
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeded(seed);
        Array::from_shape_simple_fn((rows, cols), || rng.random_range(-1.5..1.5))
    }

    /// Weighted sum of outputs, so every output unit gets a distinct
    /// upstream gradient.
    fn probe_loss(net: &Network<f64>, x: &Array2<f64>, weights: &Array2<f64>) -> f64 {
        (net.predict(x.view()).unwrap() * weights).sum()
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
    }

    fn gradient_check(mut net: Network<f64>, x: Array2<f64>, seed: u64) -> f64 {
        let weights = random_batch(x.nrows(), net.output_dim(), seed);
        let cache = net.forward(x.view()).unwrap();
        let grads = net.backward(&cache, OutputGrad::Output(weights.clone())).unwrap();
        let h = 1e-6;
        let mut worst = 0.0f64;
        for k in 0..net.n_layers() {
            let (rows, cols) = net.layers()[k].weights.dim();
            for i in 0..rows {
                for j in 0..cols {
                    let orig = net.layers()[k].weights[[i, j]];
                    net.layers_mut()[k].weights[[i, j]] = orig + h;
                    let up = probe_loss(&net, &x, &weights);
                    net.layers_mut()[k].weights[[i, j]] = orig - h;
                    let down = probe_loss(&net, &x, &weights);
                    net.layers_mut()[k].weights[[i, j]] = orig;
                    worst = worst.max(relative_error((up - down) / (2.0 * h), grads.layers[k].0[[i, j]]));
                }
            }
            for j in 0..cols {
                let orig = net.layers()[k].bias[j];
                net.layers_mut()[k].bias[j] = orig + h;
                let up = probe_loss(&net, &x, &weights);
                net.layers_mut()[k].bias[j] = orig - h;
                let down = probe_loss(&net, &x, &weights);
                net.layers_mut()[k].bias[j] = orig;
                worst = worst.max(relative_error((up - down) / (2.0 * h), grads.layers[k].1[j]));
            }
        }
        let mut xp = x.clone();
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                xp[[i, j]] = x[[i, j]] + h;
                let up = probe_loss(&net, &xp, &weights);
                xp[[i, j]] = x[[i, j]] - h;
                let down = probe_loss(&net, &xp, &weights);
                xp[[i, j]] = x[[i, j]];
                worst = worst.max(relative_error((up - down) / (2.0 * h), grads.input[[i, j]]));
            }
        }
        worst
    }

    #[test]
    fn gradient_check_every_activation() {
        for (s, &a) in Activation::ALL.iter().enumerate() {
            for &b in &Activation::ALL {
                let net = net(&[5, 4, 3], &[a, b], 10 + s as u64);
                let worst = gradient_check(net, random_batch(6, 5, 99), 7);
                assert!(worst < 1e-5, "{}/{}: {worst}", a.name(), b.name());
            }
        }
    }

    #[test]
    fn dropout_gradients_match_finite_differences() {
        let mut net = net(&[5, 4, 4, 3], &[Activation::Tanh, Activation::LeakyRelu, Activation::Identity], 8);
        let rates = [0.5, 0.3, 0.0];
        let masks = crate::rng::stream(1, "masks", 0);
        let x = random_batch(6, 5, 2);
        let w = random_batch(6, 3, 3);
        let loss = |n: &Network<f64>| (n.forward_dropout(x.view(), &rates, &mut masks.clone()).unwrap().into_output() * &w).sum();
        let cache = net.forward_dropout(x.view(), &rates, &mut masks.clone()).unwrap();
        let grads = net.backward(&cache, OutputGrad::Output(w.clone())).unwrap();
        let dropped = cache.layer(1).iter().filter(|&&v| v == 0.0).count();
        assert!(dropped > 0 && dropped < 24, "{dropped} of 24 dropped");
        let h = 1e-6;
        for k in 0..3 {
            let (rows, cols) = net.layers()[k].weights.dim();
            for (i, j) in (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))) {
                let orig = net.layers()[k].weights[[i, j]];
                net.layers_mut()[k].weights[[i, j]] = orig + h;
                let up = loss(&net);
                net.layers_mut()[k].weights[[i, j]] = orig - h;
                let down = loss(&net);
                net.layers_mut()[k].weights[[i, j]] = orig;
                let err = relative_error((up - down) / (2.0 * h), grads.layers[k].0[[i, j]]);
                assert!(err < 1e-5, "layer {k} ({i}, {j}): {err}");
            }
        }
    }

    #[test]
    fn dropout_scales_survivors_and_zero_rate_is_plain() {
        let net = net(&[4, 8, 2], &[Activation::Tanh, Activation::Identity], 1);
        let x = random_batch(50, 4, 5);
        let mut rng = crate::rng::seeded(0);
        let plain = net.forward(x.view()).unwrap();
        let none = net.forward_dropout(x.view(), &[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(plain.activations(), none.activations());
        let half = net.forward_dropout(x.view(), &[0.5, 0.0], &mut rng).unwrap();
        for (&d, &p) in half.layer(1).iter().zip(plain.layer(1)) {
            assert!(d == 0.0 || d == 2.0 * p);
        }
        assert!(net.forward_dropout(x.view(), &[0.5, 0.5], &mut rng).is_err());
        assert!(net.forward_dropout(x.view(), &[1.0, 0.0], &mut rng).is_err());
        assert!(net.forward_dropout(x.view(), &[0.5], &mut rng).is_err());
    }

    #[test]
    fn preactivation_gradient_matches_composed_loss() {
        // softmax + cross-entropy through the y - t shortcut
        let net = net(&[5, 4, 3], &[Activation::Tanh, Activation::Softmax], 4);
        let x = random_batch(6, 5, 5);
        let targets: Vec<usize> = vec![0, 1, 2, 2, 1, 0];
        let cache = net.forward(x.view()).unwrap();
        let g = loss::softmax_cross_entropy_grad(cache.output().view(), &targets).unwrap();
        let via_shortcut = net.backward(&cache, OutputGrad::PreActivation(g)).unwrap();
        let dy = loss::cross_entropy_output_grad(cache.output().view(), &targets).unwrap();
        let via_chain = net.backward(&cache, OutputGrad::Output(dy)).unwrap();
        for (a, b) in via_shortcut.layers.iter().zip(&via_chain.layers) {
            assert!((&a.0 - &b.0).iter().all(|d| d.abs() < 1e-10));
            assert!((&a.1 - &b.1).iter().all(|d| d.abs() < 1e-10));
        }
    }

    #[test]
    fn forward_examples() {
        let layer = Layer { weights: Array2::eye(3), bias: Array1::zeros(3), activation: Activation::Identity };
        let net = Network::new(vec![layer]).unwrap();
        let x = arr2(&[[1.0, -2.0, 3.5], [0.0, 0.25, -7.0]]);
        assert_eq!(net.predict(x.view()).unwrap(), x);

        let tanh = self::net(&[4, 6, 3], &[Activation::Relu, Activation::Tanh], 1);
        let y = tanh.predict((random_batch(20, 4, 2) * 50.0).view()).unwrap();
        assert!(y.iter().all(|v| v.abs() <= 1.0));

        let soft = self::net(&[4, 6, 5], &[Activation::Relu, Activation::Softmax], 1);
        let y = soft.predict(random_batch(20, 4, 3).view()).unwrap();
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let cache = soft.forward(random_batch(2, 4, 3).view()).unwrap();
        assert_eq!(cache.activations().len(), 3);
        assert_eq!(cache.layer(1).dim(), (2, 6));
        assert!(matches!(soft.forward(random_batch(2, 3, 3).view()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn construction_validates_shapes() {
        let bad = vec![
            Layer { weights: Array2::<f64>::zeros((3, 4)), bias: Array1::zeros(4), activation: Activation::Relu },
            Layer { weights: Array2::zeros((5, 2)), bias: Array1::zeros(2), activation: Activation::Relu },
        ];
        assert!(Network::new(bad).is_err());
        let bias = vec![Layer { weights: Array2::<f64>::zeros((3, 4)), bias: Array1::zeros(3), activation: Activation::Relu }];
        assert!(Network::new(bias).is_err());
        let nan = vec![Layer { weights: Array2::from_elem((1, 1), f64::NAN), bias: Array1::zeros(1), activation: Activation::Relu }];
        assert!(Network::new(nan).is_err());
        assert!(Network::<f64>::new(vec![]).is_err());
        assert!(Network::<f64>::glorot(&[3, 4], &[], &mut seeded(0)).is_err());
        assert_eq!("leaky_relu".parse::<Activation>().unwrap(), Activation::LeakyRelu);
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = net(&[3, 2], &[Activation::Sigmoid], 0);
        let x = random_batch(4, 3, 0);
        let cache = net.forward(x.view()).unwrap();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        let g = Array2::ones((4, 2));
        net.backward_step(&cache, OutputGrad::Output(g.clone()), &mut adam).unwrap();
        let err = net.backward(&cache, OutputGrad::Output(g.clone())).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
        assert!(net.backward(&cache, OutputGrad::Output(Array2::ones((4, 3)))).is_err());
        let fresh = net.forward(x.view()).unwrap();
        assert!(net.backward(&fresh, OutputGrad::Output(Array2::ones((3, 2)))).is_err());
        let input_only = net.input_gradient(&fresh, OutputGrad::Output(g.clone())).unwrap();
        assert_eq!(input_only, net.backward(&fresh, OutputGrad::Output(g)).unwrap().input);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = net(&[3, 4, 2], &[Activation::Relu, Activation::Identity], 2);
        let before = net.clone();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        for _ in 0..3 {
            let cache = net.forward(random_batch(5, 3, 1).view()).unwrap();
            net.backward_step(&cache, OutputGrad::Output(Array2::zeros((5, 2))), &mut adam).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn identical_steps_are_bit_identical() {
        let run = || {
            let mut net = net(&[4, 8, 2], &[Activation::LeakyRelu, Activation::Sigmoid], 8);
            let mut adam = AdamState::new(&net, AdamConfig::default());
            for s in 0..5 {
                let x = random_batch(16, 4, s);
                let cache = net.forward(x.view()).unwrap();
                let g = random_batch(16, 2, 100 + s);
                net.backward_step(&cache, OutputGrad::Output(g), &mut adam).unwrap();
            }
            (net, adam)
        };
        let (a, adam_a) = run();
        let (b, adam_b) = run();
        assert_eq!(a, b);
        assert_eq!(adam_a, adam_b);
    }

    #[test]
    fn regression_loss_decreases_under_adam() {
        let mut net = net(&[3, 16, 1], &[Activation::Tanh, Activation::Identity], 12);
        let x = random_batch(64, 3, 13);
        let target = x.map_axis(Axis(1), |r| (r[0] - 0.5 * r[1] * r[2]).sin()).insert_axis(Axis(1));
        let mut adam = AdamState::new(&net, AdamConfig { rate: 1e-3, ..AdamConfig::default() });
        let mut losses = Vec::new();
        for _ in 0..100 {
            let cache = net.forward(x.view()).unwrap();
            losses.push(loss::mean_squared_error(cache.output().view(), target.view()).unwrap());
            let g = loss::mean_squared_error_grad(cache.output().view(), target.view()).unwrap();
            net.backward_step(&cache, OutputGrad::Output(g), &mut adam).unwrap();
        }
        assert!(losses[99] < 0.9 * losses[0], "{} -> {}", losses[0], losses[99]);
    }

    #[test]
    fn binarize_examples() {
        let a = arr2(&[[0.3, -0.2, 0.0]]);
        assert_eq!(binarize_features(a.view(), 0.0), arr2(&[[1i8, -1, -1]]));
        assert_eq!(binarize_features(a.view(), 0.5), arr2(&[[-1i8, -1, -1]]));
    }

    #[test]
    fn f32_network_runs() {
        let net: Network<f32> = net(&[3, 4, 2], &[Activation::Relu, Activation::Sigmoid], 3).cast();
        let x = random_batch(5, 3, 1).mapv(|v| v as f32);
        let cache = net.forward(x.view()).unwrap();
        let g = net.backward(&cache, OutputGrad::Output(Array2::ones((5, 2)))).unwrap();
        assert!(g.is_finite());
    }

    proptest! {
        #[test]
        fn binarize_keeps_shape_and_values(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let x = random_batch(rows, cols, seed);
            let b = binarize_features(x.view(), 0.0);
            prop_assert_eq!(b.dim(), x.dim());
            prop_assert!(b.iter().all(|&v| v == 1 || v == -1));
        }
    }
}
