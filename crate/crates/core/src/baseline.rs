//! Classical single-neuron baselines trained with the same loop, optimizer
//! and learning rates as the optical neuron.
//!
//! - [`ClassicalModel::Classical`]: `sigmoid(w . x + b)`.
//! - [`ClassicalModel::Analog`]: `sigmoid(|w . x|^2 + b)`, the digital
//!   counterpart of the interferometer (with `w` unnormalized).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field_encoding::Domain;
use crate::hom_neuron::sigmoid;
use crate::trainer::{
    loss_chain, reduce_batch, run_epochs, BatchSums, EncodedDataset, EpochRecord, Evaluation,
    ItemOutcome, TrainConfig, TrainHistory,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ClassicalParams {
    pub fn norm(&self) -> f64 {
        self.w.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalModel {
    Classical,
    Analog,
}

fn check_len(p: &ClassicalParams, n: usize) -> Result<()> {
    if p.w.len() != n {
        return Err(Error::Shape(format!(
            "{} weights for an input of length {n}",
            p.w.len()
        )));
    }
    Ok(())
}

pub fn classical_forward(p: &ClassicalParams, x: &[f64], beta: f64, gamma: f64) -> Result<f64> {
    check_len(p, x.len())?;
    let dot: f64 = p.w.iter().zip(x).map(|(w, x)| w * x).sum();
    Ok(sigmoid(beta, gamma, dot + p.b))
}

pub fn quantum_analog_forward(
    p: &ClassicalParams,
    x: &[Complex64],
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    check_len(p, x.len())?;
    let dot: Complex64 = p.w.iter().zip(x).map(|(w, x)| x * w).sum();
    Ok(sigmoid(beta, gamma, dot.norm_sqr() + p.b))
}

/// Weights uniform in `(-1/sqrt(N), 1/sqrt(N))`, bias 0.
pub fn initial_classical(n: usize, seed: u64) -> ClassicalParams {
    let s = 1.0 / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ClassicalParams {
        w: (0..n).map(|_| rng.random_range(-s..s)).collect(),
        b: 0.0,
    }
}

fn check_data(data: &EncodedDataset, cfg: &TrainConfig, model: ClassicalModel) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if data.domain != cfg.neuron.domain {
        return Err(Error::Domain(format!(
            "dataset is encoded in the {} domain but the neuron expects {}",
            data.domain, cfg.neuron.domain
        )));
    }
    if model == ClassicalModel::Classical && data.domain != Domain::Spatial {
        return Err(Error::Domain(
            "the real-valued neuron needs real (spatial) inputs".into(),
        ));
    }
    Ok(())
}

fn pass(
    data: &EncodedDataset,
    p: &ClassicalParams,
    cfg: &TrainConfig,
    model: ClassicalModel,
    with_grad: bool,
) -> Result<BatchSums> {
    let (beta, gamma) = (cfg.neuron.beta, cfg.neuron.gamma);
    let n_params = if with_grad { p.w.len() } else { 0 };
    reduce_batch(&data.labels, n_params, |i, grad| {
        let x = data.fields[i].amplitudes();
        check_len(p, x.len())?;
        let y = data.labels[i];
        match model {
            ClassicalModel::Classical => {
                let dot: f64 = p.w.iter().zip(x).map(|(w, x)| w * x.re).sum();
                let prediction = sigmoid(beta, gamma, dot + p.b);
                let chain = loss_chain(y, prediction, beta);
                if with_grad {
                    grad.iter_mut().zip(x).for_each(|(g, x)| *g += chain * x.re);
                }
                Ok(ItemOutcome {
                    prediction,
                    bias_grad: chain,
                })
            }
            ClassicalModel::Analog => {
                let dot: Complex64 = p.w.iter().zip(x).map(|(w, x)| x * w).sum();
                let prediction = sigmoid(beta, gamma, dot.norm_sqr() + p.b);
                let chain = loss_chain(y, prediction, beta);
                if with_grad {
                    let k = 2.0 * chain;
                    grad.iter_mut()
                        .zip(x)
                        .for_each(|(g, x)| *g += k * (dot.conj() * x).re);
                }
                Ok(ItemOutcome {
                    prediction,
                    bias_grad: chain,
                })
            }
        }
    })
}

/// Mean-loss gradient `(dH/dw, dH/db)` over the dataset.
pub fn classical_gradient(
    data: &EncodedDataset,
    p: &ClassicalParams,
    cfg: &TrainConfig,
    model: ClassicalModel,
) -> Result<(Vec<f64>, f64)> {
    check_data(data, cfg, model)?;
    let sums = pass(data, p, cfg, model, true)?;
    let m = data.len() as f64;
    Ok((sums.grad.iter().map(|g| g / m).collect(), sums.bias_grad / m))
}

pub fn evaluate_classical(
    p: &ClassicalParams,
    data: &EncodedDataset,
    cfg: &TrainConfig,
    model: ClassicalModel,
) -> Result<Evaluation> {
    check_data(data, cfg, model)?;
    Ok(pass(data, p, cfg, model, false)?.evaluation(data.len()))
}

/// Full-batch gradient descent with the quantum trainer's learning rates,
/// epochs and seed; the history's `norm_lambda` column holds `||w||`.
pub fn fit_classical(
    train: &EncodedDataset,
    test: Option<&EncodedDataset>,
    cfg: &TrainConfig,
    model: ClassicalModel,
) -> Result<(ClassicalParams, TrainHistory)> {
    cfg.validate()?;
    check_data(train, cfg, model)?;
    let n = train.fields[0].len();
    let mut params = initial_classical(n, cfg.seed);
    let history = run_epochs(cfg.epochs, &mut params, |p, epoch| {
        let (gw, gb) = classical_gradient(train, p, cfg, model)?;
        p.w.iter_mut()
            .zip(&gw)
            .for_each(|(w, g)| *w -= cfg.eta_lambda * g);
        p.b -= cfg.eta_b * gb;
        if p.w.iter().any(|w| !w.is_finite()) || !p.b.is_finite() {
            return Err(Error::TrainingAborted {
                epoch,
                source: Box::new(Error::Config("non-finite classical weights".into())),
            });
        }
        let on_train = evaluate_classical(p, train, cfg, model)?;
        let test_acc = test
            .map(|t| evaluate_classical(p, t, cfg, model).map(|e| e.accuracy))
            .transpose()?;
        Ok(EpochRecord {
            epoch,
            loss: on_train.mean_bce,
            train_acc: on_train.accuracy,
            test_acc,
            norm_lambda: p.norm(),
            bias: p.b,
        })
    })?;
    Ok((params, history))
}
