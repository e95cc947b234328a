//! Associative adversarial networks whose generator prior is a Boltzmann
//! machine trained on binarized discriminator features.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] builds logical topologies (complete, bipartite, Chimera) and
//!   minor-embeds them into Chimera hardware graphs.
//! * [`ising`] holds Ising/Boltzmann-machine parameters, energies, exact
//!   distributions and moments.
//! * [`sampler`] draws spin configurations by enumeration, Gibbs sampling, or
//!   an annealer surrogate (Gibbs on the embedded model plus majority vote).
//! * [`trainer`] fits a fully-visible Boltzmann machine by moment matching.
//! * [`reparam`] maps spins to continuous latent values.
//! * [`neural`] is a small dense network library with Adam.
//! * [`adversarial`] runs the associative adversarial training loop.
//! * [`evaluation`] computes the Inception Score and Fréchet distance.
//! * [`dataset`] reads MNIST IDX files and builds the reduced binary variant.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, which is what the experiments use unless noted.

pub mod adversarial;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod ising;
pub mod neural;
pub mod reparam;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Ising model over `f64` parameters.
pub type Ising = ising::IsingModel<f64>;
/// Exact Boltzmann distribution over `f64` probabilities.
pub type Distribution = ising::ExactDistribution<f64>;
/// First and second spin moments in `f64`.
pub type SpinMoments = ising::Moments<f64>;
/// Gibbs sampler configuration with an `f64` inverse temperature.
pub type Gibbs = sampler::GibbsConfig<f64>;
/// Dense network in `f64`.
pub type Net = neural::Network<f64>;
/// Dense network in `f32`.
pub type Net32 = neural::Network<f32>;
/// Adam state in `f64`.
pub type Adam = neural::AdamState<f64>;
/// Adversarial training state in `f64`.
pub type Gan = adversarial::GanState<f64>;
/// Adversarial training state in `f32`.
pub type Gan32 = adversarial::GanState<f32>;
/// Gaussian fit of feature activations in `f64`.
pub type Gaussian = evaluation::GaussianStats<f64>;
