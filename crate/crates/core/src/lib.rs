//! Simulation of a Hong-Ou-Mandel optical neuron used as a binary image
//! classifier.
//!
//! An input image and a trainable amplitude probe are each encoded into a
//! single-photon spatial mode and interfered on a 50:50 beam splitter. The
//! two-photon coincidence rate `p = (alpha - f) / 2` reveals the squared
//! overlap `f = |<image, probe>|^2`, which after a sigmoid and a bias acts as
//! the output of a depth-one neuron.
//!
//! Modules, bottom-up:
//!
//! - [`dataset_io`]: MNIST IDX and CIFAR-10 binary readers and preprocessing.
//! - [`field_encoding`]: unit-norm complex fields, the centered unitary DFT
//!   and SLM cell sampling.
//! - [`hom_neuron`]: probe, overlap, coincidence rate, prediction, gradients.
//! - [`trainer`]: full-batch gradient descent on binary cross-entropy.
//! - [`baseline`]: the classical and squared-modulus comparison neurons.
//! - [`photon_budget`]: shot-noise sampling and photon cost accounting.
//! - [`artifact`]: on-disk dataset artifacts, model JSON and history CSV.
//! - [`selfcheck`]: the numerical invariant suite behind `homn selfcheck`.

// Guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod baseline;
pub mod dataset_io;
mod error;
pub mod field_encoding;
pub mod hom_neuron;
pub mod photon_budget;
pub mod selfcheck;
pub mod trainer;

pub use error::{Error, Result};
pub use field_encoding::{Domain, Field};
pub use hom_neuron::{NeuronConfig, ProbeParams};
