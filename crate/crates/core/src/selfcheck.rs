//! Property checks of the neuron on seeded random instances, each reported
//! with its tolerance and the worst value measured.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{quantum_analog_forward, ClassicalParams};
use crate::field_encoding::{dft2_unitary, idft2_unitary};
use crate::hom_neuron::{
    coincidence_probability, forward, grad_f_approx, grad_f_exact, overlap_f, probe_field,
    sample_cells,
};
use crate::trainer::{evaluate, quantum_pass, EncodedDataset, GradientMode};
use crate::{Domain, Field, NeuronConfig, ProbeParams, Result};

/// Gradient of the overlap with respect to the probe amplitudes.
pub type OverlapGradient = fn(&Field, &ProbeParams) -> Result<Vec<f64>>;

pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` for checks that only report a measurement.
    pub tolerance: Option<f64>,
    pub measured: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.tolerance, self.passed) {
            (None, _) => "INFO",
            (Some(_), true) => "PASS",
            (Some(_), false) => "FAIL",
        };
        match self.tolerance {
            Some(t) => write!(f, "{status} {:<32} measured {:.3e} tolerance {t:.0e}", self.name, self.measured),
            None => write!(f, "{status} {:<32} measured {:.3e}", self.name, self.measured),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sizes {
    pub gradient_instances: usize,
    pub bound_pairs: usize,
    pub equivalence_pairs: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Self {
            gradient_instances: 100,
            bound_pairs: 10_000,
            equivalence_pairs: 1000,
        }
    }
}

fn check(name: &str, tolerance: f64, measured: f64) -> Check {
    Check {
        name: name.to_string(),
        tolerance: Some(tolerance),
        measured,
        passed: measured <= tolerance,
    }
}

fn dims(rng: &mut impl Rng) -> (usize, usize) {
    (rng.random_range(2..=8), rng.random_range(2..=8))
}

fn random_image(h: usize, w: usize, domain: Domain, rng: &mut impl Rng) -> Result<Field> {
    let values: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
    let spatial = Field::from_real(h, w, Domain::Spatial, &values)?;
    match domain {
        Domain::Spatial => Ok(spatial),
        Domain::Fourier => dft2_unitary(&spatial),
    }
}

fn random_unit_field(h: usize, w: usize, rng: &mut impl Rng) -> Result<Field> {
    let amps: Vec<Complex64> = (0..h * w)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Field::from_amplitudes(h, w, Domain::Spatial, amps.iter().map(|a| a / norm).collect())
}

fn random_probe(h: usize, w: usize, rng: &mut impl Rng) -> Result<ProbeParams> {
    let lambda = (0..h * w).map(|_| rng.random_range(0.05..1.0)).collect();
    ProbeParams::new(h, w, lambda, rng.random_range(-0.5..0.5))
}

/// Largest componentwise error of `a` against the reference `b`, relative to
/// the largest reference component. Components far below that scale sit at
/// the finite-difference roundoff floor, so their own ratio carries no signal.
fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, y| m.max(y.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

fn central_difference<F>(params: &ProbeParams, mut value: F) -> Result<Vec<f64>>
where
    F: FnMut(&ProbeParams) -> Result<f64>,
{
    (0..params.lambda.len())
        .map(|j| {
            let mut plus = params.clone();
            plus.lambda[j] += FD_STEP;
            let mut minus = params.clone();
            minus.lambda[j] -= FD_STEP;
            Ok((value(&plus)? - value(&minus)?) / (2.0 * FD_STEP))
        })
        .collect()
}

fn overlap_gradient_error(
    domain: Domain,
    grad: OverlapGradient,
    instances: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (h, w) = dims(rng);
        let input = random_image(h, w, domain, rng)?;
        let params = random_probe(h, w, rng)?;
        let analytic = grad(&input, &params)?;
        let numeric = central_difference(&params, |p| overlap_f(&input, p))?;
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Gradient of the mean loss over a small random batch against central
/// differences, parameters and bias together.
fn loss_gradient_error(domain: Domain, instances: usize, rng: &mut impl Rng) -> Result<f64> {
    let neuron = NeuronConfig {
        domain,
        ..NeuronConfig::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (h, w) = dims(rng);
        let fields = (0..6)
            .map(|_| random_image(h, w, domain, rng))
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..6).map(|i| (i % 2) as u8).collect();
        let data = EncodedDataset::new(fields, labels, domain)?;
        let params = random_probe(h, w, rng)?;
        let sums = quantum_pass(&data, &params, &neuron, GradientMode::Exact, true)?;
        let m = data.len() as f64;
        let mut analytic: Vec<f64> = sums.grad.iter().map(|g| g / m).collect();
        analytic.push(sums.bias_grad / m);

        let loss = |p: &ProbeParams| evaluate(p, &data, &neuron).map(|e| e.mean_bce);
        let mut numeric = central_difference(&params, loss)?;
        let mut plus = params.clone();
        plus.bias += FD_STEP;
        let mut minus = params.clone();
        minus.bias -= FD_STEP;
        numeric.push((loss(&plus)? - loss(&minus)?) / (2.0 * FD_STEP));
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Largest componentwise gap between the phase-neglecting and the exact
/// gradient.
fn approx_gap(domain: Domain, instances: usize, rng: &mut impl Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (h, w) = dims(rng);
        let input = random_image(h, w, domain, rng)?;
        let params = random_probe(h, w, rng)?;
        let f = overlap_f(&input, &params)?;
        let exact = grad_f_exact(&input, &params)?;
        let approx = grad_f_approx(&input, &params, f)?;
        for (a, b) in exact.iter().zip(&approx) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// `|f - 1|` and the coincidence rate over random self-probes.
fn hom_dip(instances: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let neuron = NeuronConfig::default();
    let (mut f_gap, mut rate): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let (h, w) = dims(rng);
        let params = random_probe(h, w, rng)?;
        let f = overlap_f(&probe_field(&params)?, &params)?;
        f_gap = f_gap.max((f - 1.0).abs());
        rate = rate.max(coincidence_probability(f, &neuron)?);
    }
    Ok((f_gap, rate))
}

/// Largest excursion of `f` outside `[0, 1]`.
fn bound_violation(pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (h, w) = dims(rng);
        let input = random_unit_field(h, w, rng)?;
        let params = random_probe(h, w, rng)?;
        let f = overlap_f(&input, &params)?;
        worst = worst.max(-f).max(f - 1.0);
    }
    Ok(worst)
}

/// Parseval, inverse and duality gaps of the centered unitary transform.
fn transform_gaps(instances: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let (mut parseval, mut duality): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let (h, w) = dims(rng);
        let x = random_unit_field(h, w, rng)?;
        let spectrum = dft2_unitary(&x)?;
        parseval = parseval.max((spectrum.norm() - x.norm()).abs());
        let back = idft2_unitary(&spectrum)?;
        for (a, b) in back.amplitudes().iter().zip(x.amplitudes()) {
            parseval = parseval.max((a - b).norm());
        }

        let params = random_probe(h, w, rng)?;
        let via_image = overlap_f(&spectrum, &params)?;
        let weights: Vec<Complex64> = params
            .weights()?
            .into_iter()
            .map(|w| Complex64::new(w, 0.0))
            .collect();
        let probe_spectrum = Field::from_amplitudes(h, w, Domain::Fourier, weights)?;
        let via_probe = x.inner(&idft2_unitary(&probe_spectrum)?)?.norm_sqr();
        duality = duality.max((via_image - via_probe).abs());
    }
    Ok((parseval, duality))
}

/// Gap between the interferometric neuron and the digital analog sharing its
/// parameters.
fn analog_gap(pairs: usize, rng: &mut impl Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..pairs {
        let (h, w) = dims(rng);
        let domain = if i % 2 == 0 { Domain::Spatial } else { Domain::Fourier };
        let input = random_image(h, w, domain, rng)?;
        let params = random_probe(h, w, rng)?;
        let neuron = NeuronConfig {
            beta: rng.random_range(0.5..20.0),
            gamma: rng.random_range(-2.0..2.0),
            domain,
            ..NeuronConfig::default()
        };
        let quantum = forward(&input, &params, &neuron)?;
        let analog = quantum_analog_forward(
            &ClassicalParams {
                w: params.weights()?,
                b: params.bias,
            },
            &sample_cells(&input, &params)?,
            neuron.beta,
            neuron.gamma,
        )?;
        worst = worst.max((quantum - analog).abs());
    }
    Ok(worst)
}

/// Runs every check with the library's exact overlap gradient.
pub fn run(seed: u64, sizes: Sizes) -> Result<Report> {
    run_with(seed, sizes, grad_f_exact)
}

/// Same as [`run`], with `grad` standing in for the exact overlap gradient in
/// the finite-difference checks.
pub fn run_with(seed: u64, sizes: Sizes, grad: OverlapGradient) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sizes.gradient_instances;
    let mut checks = Vec::new();
    for domain in [Domain::Spatial, Domain::Fourier] {
        checks.push(check(
            &format!("overlap_gradient_{domain}"),
            1e-5,
            overlap_gradient_error(domain, grad, n, &mut rng)?,
        ));
    }
    for domain in [Domain::Spatial, Domain::Fourier] {
        checks.push(check(
            &format!("loss_gradient_{domain}"),
            1e-4,
            loss_gradient_error(domain, n, &mut rng)?,
        ));
    }
    checks.push(check(
        "approx_gradient_nonnegative",
        1e-12,
        approx_gap(Domain::Spatial, n, &mut rng)?,
    ));
    checks.push(Check {
        name: "approx_gradient_fourier_gap".into(),
        tolerance: None,
        measured: approx_gap(Domain::Fourier, n, &mut rng)?,
        passed: true,
    });
    let (f_gap, rate) = hom_dip(n, &mut rng)?;
    checks.push(check("hom_dip_overlap", 1e-12, f_gap));
    checks.push(check("hom_dip_coincidences", 0.0, rate));
    checks.push(check("overlap_bounds", 0.0, bound_violation(sizes.bound_pairs, &mut rng)?.max(0.0)));
    let (parseval, duality) = transform_gaps(n, &mut rng)?;
    checks.push(check("parseval_inverse", 1e-10, parseval));
    checks.push(check("fourier_duality", 1e-10, duality));
    checks.push(check(
        "analog_equivalence",
        1e-12,
        analog_gap(sizes.equivalence_pairs, &mut rng)?,
    ));
    Ok(Report { seed, checks })
}
