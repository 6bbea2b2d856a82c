//! Full-batch gradient descent on the mean binary cross-entropy.
//!
//! Each epoch evaluates every item, averages the gradients and applies one
//! step to the probe and one to the bias:
//!
//! ```text
//! lambda <- lambda - eta_lambda / M * sum_j dH_j/dlambda
//! b      <- b      - eta_b      / M * sum_j dH_j/db
//! dH/dlambda = beta (F - y) df/dlambda,   dH/db = beta (F - y)
//! ```
//!
//! Items are processed in parallel, but partial sums are formed over fixed
//! index chunks and combined in chunk order, so results do not depend on the
//! number of threads.

use std::borrow::Cow;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::BinaryDataset;
use crate::field_encoding::{cell_overlap, encode, Domain, Field};
use crate::hom_neuron::{
    accumulate_grad_approx, accumulate_grad_exact, overlap_amplitude, predict, NeuronConfig,
    ProbeParams,
};
use crate::{Error, Result};

/// Clamp applied to predictions inside the loss.
pub const PREDICTION_CLAMP: f64 = 1e-12;

/// The training loop aborts once `||lambda||` falls below this.
pub const MIN_PROBE_NORM: f64 = 1e-12;

const REDUCTION_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// Exact derivative of the overlap, phase included.
    Exact,
    /// Phase-neglecting form measurable all-optically.
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Amplitudes drawn uniformly from [0, 1/sqrt(N)), `N` the number of
    /// cells, so that `||lambda||` starts near `1/sqrt(3)` at any resolution.
    Scaled,
    /// Amplitudes drawn uniformly from [0, 1).
    Uniform01,
    /// Every amplitude set to 1.
    Constant,
}

/// Missing fields in JSON take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub eta_lambda: f64,
    pub eta_b: f64,
    pub epochs: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub neuron: NeuronConfig,
    pub init: Init,
    /// SLM grid; `None` uses one cell per pixel.
    pub grid: Option<(usize, usize)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta_lambda: 0.075,
            eta_b: 0.005,
            epochs: 100,
            seed: 0,
            gradient_mode: GradientMode::Exact,
            neuron: NeuronConfig::default(),
            init: Init::Scaled,
            grid: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_lambda > 0.0 && self.eta_b > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.neuron.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub norm_lambda: f64,
    pub bias: f64,
}

/// One record per completed epoch, measured after that epoch's update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Labeled fields ready for the neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub fields: Vec<Field>,
    pub labels: Vec<u8>,
    pub domain: Domain,
}

impl EncodedDataset {
    pub fn new(fields: Vec<Field>, labels: Vec<u8>, domain: Domain) -> Result<Self> {
        if fields.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} fields but {} labels",
                fields.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Config(format!("binary targets must be 0 or 1, got {bad}")));
        }
        if let Some(first) = fields.first() {
            let dims = (first.height(), first.width());
            if fields
                .iter()
                .any(|f| f.domain() != domain || (f.height(), f.width()) != dims)
            {
                return Err(Error::Shape("fields must share shape and domain".into()));
            }
        }
        Ok(Self {
            fields,
            labels,
            domain,
        })
    }

    /// Normalizes (and for [`Domain::Fourier`] transforms) every image.
    pub fn encode(dataset: &BinaryDataset, domain: Domain) -> Result<Self> {
        let fields = dataset
            .items
            .par_iter()
            .map(|(im, _)| encode(im, domain))
            .collect::<Result<Vec<_>>>()?;
        let labels = dataset.items.iter().map(|(_, y)| *y).collect();
        Self::new(fields, labels, domain)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.fields.first().map(|f| (f.height(), f.width()))
    }

    /// Items reordered by `order` (a permutation of indices).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            fields: order.iter().map(|&i| self.fields[i].clone()).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain,
        }
    }
}

/// `-y ln F - (1 - y) ln(1 - F)`, with `F` clamped to
/// `[PREDICTION_CLAMP, 1 - PREDICTION_CLAMP]`; the flag reports a clamp.
pub fn bce_checked(y: u8, prediction: f64) -> (f64, bool) {
    let clamped = prediction.clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP);
    let loss = if y == 1 {
        -clamped.ln()
    } else {
        -(1.0 - clamped).ln()
    };
    (loss, clamped != prediction)
}

pub fn bce(y: u8, prediction: f64) -> f64 {
    bce_checked(y, prediction).0
}

/// `dH/dF * dsigma/dxi = beta (F - y)`: the `F (1 - F)` factors cancel.
pub fn loss_chain(y: u8, prediction: f64, beta: f64) -> f64 {
    beta * (prediction - f64::from(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_bce: f64,
    /// Items whose prediction had to be clamped inside the loss.
    pub saturated: usize,
}

/// Per-item result of a forward/backward pass.
pub(crate) struct ItemOutcome {
    pub prediction: f64,
    pub bias_grad: f64,
}

pub(crate) struct BatchSums {
    pub grad: Vec<f64>,
    pub bias_grad: f64,
    pub loss: f64,
    pub correct: usize,
    pub saturated: usize,
}

impl BatchSums {
    fn zero(n_params: usize) -> Self {
        Self {
            grad: vec![0.0; n_params],
            bias_grad: 0.0,
            loss: 0.0,
            correct: 0,
            saturated: 0,
        }
    }

    fn absorb(&mut self, y: u8, outcome: &ItemOutcome) {
        let (loss, saturated) = bce_checked(y, outcome.prediction);
        self.loss += loss;
        self.saturated += usize::from(saturated);
        self.correct += usize::from(predicted_label(outcome.prediction) == y);
        self.bias_grad += outcome.bias_grad;
    }

    fn merge(&mut self, other: BatchSums) {
        self.grad.iter_mut().zip(&other.grad).for_each(|(a, b)| *a += b);
        self.bias_grad += other.bias_grad;
        self.loss += other.loss;
        self.correct += other.correct;
        self.saturated += other.saturated;
    }

    pub fn evaluation(&self, n: usize) -> Evaluation {
        Evaluation {
            accuracy: self.correct as f64 / n as f64,
            mean_bce: self.loss / n as f64,
            saturated: self.saturated,
        }
    }
}

/// Runs `item` over all indices with a deterministic chunked reduction.
/// `item` adds its parameter gradient into the buffer it is handed.
pub(crate) fn reduce_batch<F>(labels: &[u8], n_params: usize, item: F) -> Result<BatchSums>
where
    F: Fn(usize, &mut [f64]) -> Result<ItemOutcome> + Sync,
{
    let partials = (0..labels.len().div_ceil(REDUCTION_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut sums = BatchSums::zero(n_params);
            let end = ((chunk + 1) * REDUCTION_CHUNK).min(labels.len());
            for i in chunk * REDUCTION_CHUNK..end {
                let outcome = item(i, &mut sums.grad)?;
                sums.absorb(labels[i], &outcome);
            }
            Ok(sums)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = BatchSums::zero(n_params);
    for partial in partials {
        total.merge(partial);
    }
    Ok(total)
}

/// Label 1 iff `F >= 0.5`.
pub fn predicted_label(prediction: f64) -> u8 {
    u8::from(prediction >= 0.5)
}

fn cells<'a>(field: &'a Field, params: &ProbeParams) -> Result<Cow<'a, [Complex64]>> {
    if (field.height(), field.width()) == (params.height, params.width) {
        Ok(Cow::Borrowed(field.amplitudes()))
    } else {
        Ok(Cow::Owned(cell_overlap(field, params.height, params.width)?))
    }
}

fn check_data(data: &EncodedDataset, neuron: &NeuronConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if data.domain != neuron.domain {
        return Err(Error::Domain(format!(
            "dataset is encoded in the {} domain but the neuron expects {}",
            data.domain, neuron.domain
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// Mean loss and accuracy before the update.
    pub before: Evaluation,
    pub norm_lambda: f64,
}

pub(crate) fn quantum_pass(
    data: &EncodedDataset,
    params: &ProbeParams,
    neuron: &NeuronConfig,
    mode: GradientMode,
    with_grad: bool,
) -> Result<BatchSums> {
    let weights = params.weights()?;
    let norm = params.norm();
    let n_params = if with_grad { weights.len() } else { 0 };
    reduce_batch(&data.labels, n_params, |i, grad| {
        let s = cells(&data.fields[i], params)?;
        let y = data.labels[i];
        let c = overlap_amplitude(&s, &weights);
        let f = c.norm_sqr();
        let prediction = predict(f, params, neuron);
        let chain = loss_chain(y, prediction, neuron.beta);
        if with_grad {
            match mode {
                GradientMode::Exact => {
                    accumulate_grad_exact(&s, &weights, norm, chain, grad);
                }
                GradientMode::Approx => accumulate_grad_approx(&s, &weights, norm, f, chain, grad),
            }
        }
        Ok(ItemOutcome {
            prediction,
            bias_grad: chain,
        })
    })
}

/// One full-batch update.
pub fn train_epoch(
    data: &EncodedDataset,
    params: &ProbeParams,
    cfg: &TrainConfig,
) -> Result<(ProbeParams, EpochMetrics)> {
    check_data(data, &cfg.neuron)?;
    params.validate()?;
    let sums = quantum_pass(data, params, &cfg.neuron, cfg.gradient_mode, true)?;
    let m = data.len() as f64;
    let mut next = params.clone();
    for (l, g) in next.lambda.iter_mut().zip(&sums.grad) {
        *l -= cfg.eta_lambda * g / m;
    }
    next.bias -= cfg.eta_b * sums.bias_grad / m;
    let norm = next.norm();
    if !(norm >= MIN_PROBE_NORM) {
        return Err(Error::DegenerateProbe { norm });
    }
    Ok((
        next,
        EpochMetrics {
            before: sums.evaluation(data.len()),
            norm_lambda: norm,
        },
    ))
}

/// Seeded starting point; the bias starts at 0.
pub fn initial_params(height: usize, width: usize, cfg: &TrainConfig) -> Result<ProbeParams> {
    let lambda = match cfg.init {
        Init::Scaled | Init::Uniform01 => {
            let scale = match cfg.init {
                Init::Scaled => 1.0 / ((height * width) as f64).sqrt(),
                _ => 1.0,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..height * width).map(|_| scale * rng.random::<f64>()).collect()
        }
        Init::Constant => vec![1.0; height * width],
    };
    ProbeParams::new(height, width, lambda, 0.0)
}

pub fn evaluate(
    params: &ProbeParams,
    data: &EncodedDataset,
    neuron: &NeuronConfig,
) -> Result<Evaluation> {
    check_data(data, neuron)?;
    Ok(quantum_pass(data, params, neuron, GradientMode::Exact, false)?.evaluation(data.len()))
}

/// Trains from the seeded initialization for `cfg.epochs` epochs.
pub fn fit(
    train: &EncodedDataset,
    test: Option<&EncodedDataset>,
    cfg: &TrainConfig,
) -> Result<(ProbeParams, TrainHistory)> {
    cfg.validate()?;
    check_data(train, &cfg.neuron)?;
    let (h, w) = train.dims().expect("non-empty dataset");
    let (gh, gw) = cfg.grid.unwrap_or((h, w));
    let mut params = initial_params(gh, gw, cfg)?;
    run_epochs(cfg.epochs, &mut params, |params, epoch| {
        let (next, _) = train_epoch(train, params, cfg)
            .map_err(|e| Error::TrainingAborted {
                epoch,
                source: Box::new(e),
            })?;
        *params = next;
        let on_train = evaluate(params, train, &cfg.neuron)?;
        let test_acc = test
            .map(|t| evaluate(params, t, &cfg.neuron).map(|e| e.accuracy))
            .transpose()?;
        Ok(EpochRecord {
            epoch,
            loss: on_train.mean_bce,
            train_acc: on_train.accuracy,
            test_acc,
            norm_lambda: params.norm(),
            bias: params.bias,
        })
    })
    .map(|history| (params, history))
}

pub(crate) fn run_epochs<P, F>(epochs: usize, params: &mut P, mut step: F) -> Result<TrainHistory>
where
    F: FnMut(&mut P, usize) -> Result<EpochRecord>,
{
    let mut history = TrainHistory::default();
    for epoch in 1..=epochs {
        let record = step(params, epoch)?;
        log::debug!(
            "epoch {epoch}: loss {:.5} train {:.4} test {:?}",
            record.loss,
            record.train_acc,
            record.test_acc
        );
        history.records.push(record);
    }
    Ok(history)
}
