//! The Hong-Ou-Mandel neuron.
//!
//! The probe is an amplitude SLM of `H x W` top-hat cells with real weights
//! `lambda`; its normalized field is `w = lambda / ||lambda||`. For an input
//! field sampled on the SLM cells as `s = cell_overlap(input)`, the
//! interferometer measures
//!
//! ```text
//! f = |<s, w>|^2 = |sum s_k w_k|^2          overlap, in [0, 1]
//! p = (alpha - f) / 2                       two-photon coincidence rate
//! F = sigmoid(f + b)                        predicted probability of class 1
//! sigmoid(x) = 1 / (1 + exp(-beta x + gamma))
//! ```
//!
//! In the Fourier domain the input field is the centered spectrum of the
//! image; by Fourier duality this is the same as Fourier transforming the
//! probe instead, so the formulas are unchanged.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field_encoding::{cell_overlap, Domain, Field};
use crate::{Error, Result};

/// Slack on `f <= alpha` attributed to floating-point roundoff.
pub const OVERLAP_ROUNDOFF: f64 = 1e-9;

/// Overlaps this close below `alpha` are a perfect match computed with
/// roundoff; their coincidence rate is exactly 0.
pub const DIP_SNAP: f64 = 1e-12;

static CLAMPED_OVERLAPS: AtomicU64 = AtomicU64::new(0);

/// Number of times [`coincidence_probability`] clamped a roundoff excess of
/// `f` over `alpha`.
pub fn clamped_overlap_count() -> u64 {
    CLAMPED_OVERLAPS.load(Ordering::Relaxed)
}

/// Trainable SLM amplitudes (row-major) and output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub height: usize,
    pub width: usize,
    pub lambda: Vec<f64>,
    pub bias: f64,
}

impl ProbeParams {
    pub fn new(height: usize, width: usize, lambda: Vec<f64>, bias: f64) -> Result<Self> {
        let params = Self {
            height,
            width,
            lambda,
            bias,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.lambda.len() != self.height * self.width {
            return Err(Error::Shape(format!(
                "{}x{} probe with {} amplitudes",
                self.height,
                self.width,
                self.lambda.len()
            )));
        }
        if !self.bias.is_finite() || self.lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("probe parameters must be finite".into()));
        }
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateProbe { norm });
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.lambda.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// `lambda / ||lambda||`.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateProbe { norm });
        }
        Ok(self.lambda.iter().map(|l| l / norm).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronConfig {
    pub beta: f64,
    pub gamma: f64,
    /// Joint norm of input and probe states; below 1 with optical losses.
    pub alpha: f64,
    pub domain: Domain,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            gamma: 0.0,
            alpha: 1.0,
            domain: Domain::Spatial,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma must be finite".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// `1 / (1 + exp(-beta x + gamma))`.
pub fn sigmoid(beta: f64, gamma: f64, x: f64) -> f64 {
    1.0 / (1.0 + (-beta * x + gamma).exp())
}

/// The probe as a unit-norm spatial field on the SLM grid.
pub fn probe_field(params: &ProbeParams) -> Result<Field> {
    params.validate()?;
    let amps = params
        .weights()?
        .into_iter()
        .map(|w| Complex64::new(w, 0.0))
        .collect();
    Field::from_amplitudes(params.height, params.width, Domain::Spatial, amps)
}

/// Input field sampled on the probe's cells.
pub fn sample_cells(input: &Field, params: &ProbeParams) -> Result<Vec<Complex64>> {
    cell_overlap(input, params.height, params.width)
}

/// `<s, w>` for cell samples `s` and real probe weights `w`.
pub fn overlap_amplitude(cells: &[Complex64], weights: &[f64]) -> Complex64 {
    cells.iter().zip(weights).map(|(s, w)| s * w).sum()
}

pub fn overlap_f(input: &Field, params: &ProbeParams) -> Result<f64> {
    let cells = sample_cells(input, params)?;
    Ok(overlap_amplitude(&cells, &params.weights()?).norm_sqr())
}

/// `p = (alpha - f) / 2`.
pub fn coincidence_probability(f: f64, config: &NeuronConfig) -> Result<f64> {
    let alpha = config.alpha;
    if !(f >= 0.0) || f > alpha + OVERLAP_ROUNDOFF {
        return Err(Error::InvalidOverlap { f, alpha });
    }
    if f > alpha {
        // Warn once per process; the counter keeps the total.
        if CLAMPED_OVERLAPS.fetch_add(1, Ordering::Relaxed) == 0 {
            log::warn!("overlap {f} exceeds alpha {alpha} by roundoff; coincidence rate clamped to 0");
        } else {
            log::debug!("overlap {f} clamped to alpha {alpha}");
        }
        return Ok(0.0);
    }
    if f >= alpha - DIP_SNAP {
        return Ok(0.0);
    }
    Ok(0.5 * (alpha - f))
}

/// Inverts the coincidence rate: `f = alpha - 2p`.
pub fn overlap_from_coincidences(p: f64, config: &NeuronConfig) -> f64 {
    config.alpha - 2.0 * p
}

/// `F = sigmoid(f + b)`.
pub fn predict(f: f64, params: &ProbeParams, config: &NeuronConfig) -> f64 {
    sigmoid(config.beta, config.gamma, f + params.bias)
}

/// Overlap followed by [`predict`].
pub fn forward(input: &Field, params: &ProbeParams, config: &NeuronConfig) -> Result<f64> {
    Ok(predict(overlap_f(input, params)?, params, config))
}

/// Adds `scale * df/dlambda` to `out`, given the cell samples, the unit
/// weights and `||lambda||`. Returns the overlap amplitude `c = <s, w>`.
///
/// `df/dlambda_j = (2 / ||lambda||) Re[conj(c) (s_j - c w_j)]`.
pub(crate) fn accumulate_grad_exact(
    cells: &[Complex64],
    weights: &[f64],
    norm: f64,
    scale: f64,
    out: &mut [f64],
) -> Complex64 {
    let c = overlap_amplitude(cells, weights);
    let f = c.norm_sqr();
    let k = 2.0 * scale / norm;
    for ((g, s), w) in out.iter_mut().zip(cells).zip(weights) {
        *g += k * ((c.conj() * s).re - f * w);
    }
    c
}

/// Adds `scale` times the phase-neglecting gradient to `out`:
/// `(2 sqrt(f) / ||lambda||) (Re s_j - sqrt(f) w_j)`.
pub(crate) fn accumulate_grad_approx(
    cells: &[Complex64],
    weights: &[f64],
    norm: f64,
    f: f64,
    scale: f64,
    out: &mut [f64],
) {
    let root = f.max(0.0).sqrt();
    let k = 2.0 * scale * root / norm;
    for ((g, s), w) in out.iter_mut().zip(cells).zip(weights) {
        *g += k * (s.re - root * w);
    }
}

/// Exact gradient of [`overlap_f`] with respect to every `lambda`, including
/// the normalization `lambda / ||lambda||`.
pub fn grad_f_exact(input: &Field, params: &ProbeParams) -> Result<Vec<f64>> {
    let cells = sample_cells(input, params)?;
    let weights = params.weights()?;
    let mut grad = vec![0.0; weights.len()];
    accumulate_grad_exact(&cells, &weights, params.norm(), 1.0, &mut grad);
    Ok(grad)
}

/// Gradient obtained by neglecting the phase of `<s, w>`; exact whenever
/// that overlap is real and non-negative. `f` is the measured overlap.
pub fn grad_f_approx(input: &Field, params: &ProbeParams, f: f64) -> Result<Vec<f64>> {
    let cells = sample_cells(input, params)?;
    let weights = params.weights()?;
    let mut grad = vec![0.0; weights.len()];
    accumulate_grad_approx(&cells, &weights, params.norm(), f, 1.0, &mut grad);
    Ok(grad)
}
