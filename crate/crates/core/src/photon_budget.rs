//! Photon and shot-noise accounting for a single classification.
//!
//! Quantum side: the overlap is estimated from the empirical coincidence
//! rate over `n` photon pairs (`2n` injected photons), with the normal
//! approximation 95% half-width `eps = 2 sqrt(p (1 - p) / n_photons)`. Since
//! `4 p (1 - p) <= 1`, `1 / eps^2` photons always suffice, whatever the image
//! resolution.
//!
//! Classical side: reconstructing an `N`-pixel image at the standard quantum
//! limit with mean pixel variance `sigma^2` costs `<x>^2 N / sigma^2` photons,
//! and propagating that noise through `sigmoid(w . x + b)` gives a
//! classification cost growing linearly in `N`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::ClassicalParams;
use crate::hom_neuron::{coincidence_probability, sigmoid, NeuronConfig, OVERLAP_ROUNDOFF};
use crate::{Error, Result};

/// `ceil(x)` that ignores a relative excess of float roundoff, so that
/// `1 / 0.1^2` yields 100 rather than 101.
fn ceil_count(x: f64) -> u64 {
    (x * (1.0 - 1e-12)).ceil().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseReport {
    pub pairs: u64,
    /// Injected photons, two per pair.
    pub photons: u64,
    pub coincidences: u64,
    pub p_hat: f64,
    pub f_hat: f64,
    pub epsilon: f64,
}

/// 95% half-width `2 sqrt(p (1 - p) / photons)`.
pub fn half_width(p_hat: f64, photons: u64) -> f64 {
    2.0 * (p_hat * (1.0 - p_hat) / photons as f64).sqrt()
}

/// Simulates `pairs` independent interferometer shots with coincidence
/// probability `(alpha - f) / 2` and estimates `f` back from the counts.
pub fn sample_coincidences(f: f64, alpha: f64, pairs: u64, seed: u64) -> Result<ShotNoiseReport> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(f >= 0.0) || f > alpha + OVERLAP_ROUNDOFF {
        return Err(Error::InvalidOverlap { f, alpha });
    }
    if pairs == 0 {
        return Err(Error::Config("at least one photon pair is needed".into()));
    }
    let neuron = NeuronConfig {
        alpha,
        ..NeuronConfig::default()
    };
    let p = coincidence_probability(f, &neuron)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coincidences = Binomial::new(pairs, p)
        .map_err(|e| Error::Config(format!("binomial({pairs}, {p}): {e}")))?
        .sample(&mut rng);
    let p_hat = coincidences as f64 / pairs as f64;
    let photons = 2 * pairs;
    Ok(ShotNoiseReport {
        pairs,
        photons,
        coincidences,
        p_hat,
        f_hat: alpha - 2.0 * p_hat,
        epsilon: half_width(p_hat, photons),
    })
}

/// `trials` independent runs; trial `k` is seeded with `seed + k`.
pub fn sample_trials(
    f: f64,
    alpha: f64,
    pairs: u64,
    seed: u64,
    trials: usize,
) -> Result<Vec<ShotNoiseReport>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|k| sample_coincidences(f, alpha, pairs, seed.wrapping_add(k)))
        .collect()
}

/// Photons guaranteeing a half-width of at most `epsilon` for any rate:
/// `ceil(1 / epsilon^2)`.
pub fn classification_uncertainty_quantum(epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(ceil_count(1.0 / (epsilon * epsilon)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingCostModel {
    /// Mean grey level `<x>`, in `[0, depth]`.
    pub mean_brightness: f64,
    /// Number of grey levels `L`.
    pub depth: u32,
    pub n_pixels: usize,
    /// Target mean pixel standard deviation.
    pub target_sigma: f64,
}

impl ImagingCostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_brightness > 0.0 && self.mean_brightness <= f64::from(self.depth))
            || self.n_pixels == 0
            || !(self.target_sigma > 0.0)
        {
            return Err(Error::Config(format!("invalid imaging model {self:?}")));
        }
        Ok(())
    }
}

/// `ceil(<x>^2 N / sigma^2)`.
///
/// The resource table quotes this cost as `Theta(sigma^-2 <x> N)`, i.e. with
/// one factor of `<x>` fewer; the function follows the variance relation
/// `sigma^2 = <x>^2 N / n_p` it is derived from.
pub fn imaging_photons_classical(model: &ImagingCostModel) -> Result<u64> {
    model.validate()?;
    let b = model.mean_brightness;
    Ok(ceil_count(
        b * b * model.n_pixels as f64 / (model.target_sigma * model.target_sigma),
    ))
}

/// Photons needed for the classical neuron `sigmoid(w . x + b)` to classify
/// `image` (grey levels) with uncertainty `epsilon`:
/// `ceil(<x> (dG)^2 sum_i w_i^2 x_i N / epsilon^2)`, where
/// `dG = beta G (1 - G)` is the sigmoid slope at `w . x + b`.
///
/// A model with no weight on any lit pixel needs no photons at all; that
/// degenerate case is logged.
pub fn classification_photons_classical(
    params: &ClassicalParams,
    image: &[f64],
    epsilon: f64,
    beta: f64,
    gamma: f64,
) -> Result<u64> {
    if params.w.len() != image.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} pixels",
            params.w.len(),
            image.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if image.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroField);
    }
    let n = image.len() as f64;
    let mean = image.iter().sum::<f64>() / n;
    let dot: f64 = params.w.iter().zip(image).map(|(w, x)| w * x).sum();
    let g = sigmoid(beta, gamma, dot + params.b);
    let slope = beta * g * (1.0 - g);
    let weighted: f64 = params.w.iter().zip(image).map(|(w, x)| w * w * x).sum();
    if weighted == 0.0 {
        log::warn!("classifier has no weight on lit pixels; it is constant and needs no photons");
    }
    Ok(ceil_count(mean * slope * slope * weighted * n / (epsilon * epsilon)))
}

/// `(||w||_1, ||w||_2)`, the norms whose boundedness the classical lower
/// bound assumes.
pub fn weight_norms(params: &ClassicalParams) -> (f64, f64) {
    let l1 = params.w.iter().map(|w| w.abs()).sum();
    (l1, params.norm())
}

/// Re-expresses a classifier at `factor_h x factor_w` times the resolution.
///
/// The image is upsampled by pixel replication. Each original weight moves to
/// the top-left sub-pixel of its block and the rest get 0, so `w . x`, the
/// weight norms and the brightness are unchanged while `N` grows by
/// `factor_h * factor_w`.
pub fn upsample_model(
    params: &ClassicalParams,
    image: &[f64],
    height: usize,
    width: usize,
    factor_h: usize,
    factor_w: usize,
) -> Result<(ClassicalParams, Vec<f64>)> {
    if image.len() != height * width || params.w.len() != image.len() {
        return Err(Error::Shape("model, image and dimensions disagree".into()));
    }
    if factor_h == 0 || factor_w == 0 {
        return Err(Error::Shape("upsampling factors must be positive".into()));
    }
    let (h2, w2) = (height * factor_h, width * factor_w);
    let mut up_image = vec![0.0; h2 * w2];
    let mut up_w = vec![0.0; h2 * w2];
    for r in 0..h2 {
        for c in 0..w2 {
            let src = (r / factor_h) * width + c / factor_w;
            up_image[r * w2 + c] = image[src];
            if r % factor_h == 0 && c % factor_w == 0 {
                up_w[r * w2 + c] = params.w[src];
            }
        }
    }
    Ok((
        ClassicalParams {
            w: up_w,
            b: params.b,
        },
        up_image,
    ))
}

/// A classifier fixed at one square resolution, used as the seed of the
/// scaling table.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseClassifier {
    pub params: ClassicalParams,
    /// Grey levels, row-major, `side x side`.
    pub image: Vec<f64>,
    pub side: usize,
}

impl BaseClassifier {
    /// A classifier trained on unit-norm inputs `x / ||x||`, re-expressed on
    /// the raw grey levels of `pixels` by folding `1 / ||x||` into the weights.
    pub fn from_normalized(params: &ClassicalParams, pixels: &[u8], side: usize) -> Result<Self> {
        if pixels.len() != side * side || params.w.len() != pixels.len() {
            return Err(Error::Shape(format!(
                "{} weights and {} pixels for a {side}x{side} image",
                params.w.len(),
                pixels.len()
            )));
        }
        let image: Vec<f64> = pixels.iter().map(|&p| f64::from(p)).collect();
        let norm = image.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroField);
        }
        Ok(Self {
            params: ClassicalParams {
                w: params.w.iter().map(|w| w / norm).collect(),
                b: params.b,
            },
            image,
            side,
        })
    }

    /// Uniform image of brightness `mean_brightness` and alternating weights
    /// `+-1/side`, so `w . x = 0` for even `side`.
    pub fn synthetic(side: usize, mean_brightness: f64) -> Self {
        let n = side * side;
        let w = (0..n)
            .map(|i| if (i / side + i % side).is_multiple_of(2) { 1.0 } else { -1.0 } / side as f64)
            .collect();
        Self {
            params: ClassicalParams { w, b: 0.0 },
            image: vec![mean_brightness; n],
            side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingInputs {
    pub epsilon: f64,
    pub sigma: f64,
    pub mean_brightness: f64,
    pub depth: u32,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScalingInputs {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            sigma: 0.1,
            mean_brightness: 1.0,
            depth: 256,
            beta: 1.0,
            gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub quantum_photons: u64,
    pub imaging_photons: u64,
    pub classification_photons: u64,
}

fn exact_side(n: usize) -> Option<usize> {
    let side = (n as f64).sqrt().round() as usize;
    (side * side == n).then_some(side)
}

/// Photon budgets per resolution `N` (each a perfect square).
///
/// With a `base` classifier, every side must be a multiple of its side and the
/// image's own brightness is used; otherwise a [`BaseClassifier::synthetic`]
/// model at the smallest resolution is used.
pub fn scaling_report(
    resolutions: &[usize],
    inputs: &ScalingInputs,
    base: Option<&BaseClassifier>,
) -> Result<Vec<ScalingRow>> {
    if resolutions.is_empty() {
        return Err(Error::Config("no resolutions requested".into()));
    }
    let sides = resolutions
        .iter()
        .map(|&n| {
            exact_side(n).ok_or_else(|| Error::Shape(format!("resolution {n} is not a square")))
        })
        .collect::<Result<Vec<_>>>()?;
    let synthetic;
    let base = match base {
        Some(b) => b,
        None => {
            let side = *sides.iter().min().expect("non-empty");
            synthetic = BaseClassifier::synthetic(side, inputs.mean_brightness);
            &synthetic
        }
    };
    let mean_brightness = base.image.iter().sum::<f64>() / base.image.len() as f64;
    let quantum = classification_uncertainty_quantum(inputs.epsilon)?;
    resolutions
        .iter()
        .zip(&sides)
        .map(|(&n, &side)| {
            if side % base.side != 0 {
                return Err(Error::Shape(format!(
                    "side {side} is not a multiple of the base classifier side {}",
                    base.side
                )));
            }
            let k = side / base.side;
            let (params, image) =
                upsample_model(&base.params, &base.image, base.side, base.side, k, k)?;
            let imaging = imaging_photons_classical(&ImagingCostModel {
                mean_brightness,
                depth: inputs.depth,
                n_pixels: n,
                target_sigma: inputs.sigma,
            })?;
            let classification = classification_photons_classical(
                &params,
                &image,
                inputs.epsilon,
                inputs.beta,
                inputs.gamma,
            )?;
            Ok(ScalingRow {
                n,
                quantum_photons: quantum,
                imaging_photons: imaging,
                classification_photons: classification,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Normal, Poisson};

    fn mean_std(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn hom_dip_has_no_coincidences() {
        for seed in 0..20 {
            let r = sample_coincidences(1.0, 1.0, 10_000, seed).unwrap();
            assert_eq!(r.coincidences, 0);
            assert_eq!(r.f_hat, 1.0);
            assert_eq!(r.epsilon, 0.0);
            assert_eq!(r.photons, 20_000);
        }
    }

    #[test]
    fn distinguishable_photons_give_half_rate() {
        let r = sample_coincidences(0.0, 1.0, 2_000_000, 1).unwrap();
        assert!((r.p_hat - 0.5).abs() < 2e-3);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(matches!(
            sample_coincidences(0.9, 0.8, 10, 0),
            Err(Error::InvalidOverlap { .. })
        ));
        assert!(sample_coincidences(-0.1, 1.0, 10, 0).is_err());
        assert!(sample_coincidences(0.5, 1.0, 0, 0).is_err());
        assert!(sample_coincidences(0.5, 1.2, 10, 0).is_err());
    }

    #[test]
    fn binomial_spread() {
        let p = 0.25;
        let pairs = 100_000;
        let reports = sample_trials(0.5, 1.0, pairs, 1000, 1000).unwrap();
        let p_hats: Vec<f64> = reports.iter().map(|r| r.p_hat).collect();
        let (_, std) = mean_std(&p_hats);
        let expected = (p * (1.0 - p) / pairs as f64).sqrt();
        assert!((std / expected - 1.0).abs() < 0.10, "{std} vs {expected}");
    }

    #[test]
    fn estimator_is_unbiased() {
        let f = 0.37;
        let reports = sample_trials(f, 1.0, 1_000, 7, 10_000).unwrap();
        let f_hats: Vec<f64> = reports.iter().map(|r| r.f_hat).collect();
        let (mean, std) = mean_std(&f_hats);
        let standard_error = std / (f_hats.len() as f64).sqrt();
        assert!((mean - f).abs() < 3.0 * standard_error);
    }

    #[test]
    fn trials_are_reproducible() {
        assert_eq!(
            sample_trials(0.2, 1.0, 500, 3, 50).unwrap(),
            sample_trials(0.2, 1.0, 500, 3, 50).unwrap()
        );
        assert_eq!(
            sample_trials(0.2, 1.0, 500, 3, 2).unwrap()[1],
            sample_coincidences(0.2, 1.0, 500, 4).unwrap()
        );
    }

    #[test]
    fn quantum_budget_values() {
        assert_eq!(classification_uncertainty_quantum(0.1).unwrap(), 100);
        assert_eq!(classification_uncertainty_quantum(0.01).unwrap(), 10_000);
        assert_eq!(classification_uncertainty_quantum(0.05).unwrap(), 400);
        assert!(classification_uncertainty_quantum(0.0).is_err());
    }

    #[test]
    fn quantum_budget_meets_target_at_worst_case() {
        let target = 0.02;
        let photons = classification_uncertainty_quantum(target).unwrap();
        let reports = sample_trials(0.0, 1.0, photons / 2, 99, 1000).unwrap();
        let ok = reports.iter().filter(|r| r.epsilon <= target).count();
        assert!(ok as f64 >= 0.93 * 1000.0, "{ok}");
    }

    #[test]
    fn imaging_budget_values() {
        let model = ImagingCostModel {
            mean_brightness: 1.0,
            depth: 256,
            n_pixels: 1024,
            target_sigma: 0.1,
        };
        assert_eq!(imaging_photons_classical(&model).unwrap(), 102_400);
        let doubled = ImagingCostModel {
            n_pixels: 2048,
            ..model
        };
        assert_eq!(imaging_photons_classical(&doubled).unwrap(), 204_800);
        let too_bright = ImagingCostModel {
            mean_brightness: 300.0,
            ..model
        };
        assert!(imaging_photons_classical(&too_bright).is_err());
    }

    /// Image acquisition at the standard quantum limit: pixel `i` collects a
    /// Poisson number of photons with mean `n_p x_i / (N <x>)`, and grey
    /// levels are rescaled so a white pixel (level `depth`) would read
    /// `depth`.
    fn simulated_pixel_variance(image: &[f64], depth: f64, photons: f64, reps: usize, seed: u64) -> f64 {
        let n = image.len() as f64;
        let mean = image.iter().sum::<f64>() / n;
        let white = photons * depth / (n * mean);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for &x in image {
            let mu = photons * x / (n * mean);
            let poisson = Poisson::new(mu).unwrap();
            let samples: Vec<f64> = (0..reps)
                .map(|_| poisson.sample(&mut rng) * depth / white)
                .collect();
            total += mean_std(&samples).1.powi(2);
        }
        total / n
    }

    #[test]
    fn imaging_budget_reaches_target_variance() {
        let depth = 255.0;
        let sigma = 2.0;
        let image = vec![100.0; 64];
        let model = ImagingCostModel {
            mean_brightness: 100.0,
            depth: 255,
            n_pixels: image.len(),
            target_sigma: sigma,
        };
        let photons = imaging_photons_classical(&model).unwrap() as f64;
        let var = simulated_pixel_variance(&image, depth, photons, 400, 5);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn classical_classification_cases() {
        let zero = ClassicalParams {
            w: vec![0.0; 4],
            b: 0.0,
        };
        assert_eq!(
            classification_photons_classical(&zero, &[1.0, 2.0, 3.0, 4.0], 0.1, 1.0, 0.0).unwrap(),
            0
        );
        assert!(matches!(
            classification_photons_classical(&zero, &[0.0; 4], 0.1, 1.0, 0.0),
            Err(Error::ZeroField)
        ));
        assert!(matches!(
            classification_photons_classical(&zero, &[1.0; 3], 0.1, 1.0, 0.0),
            Err(Error::Shape(_))
        ));
    }

    fn trained_like(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (ClassicalParams, Vec<f64>) {
        let image: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..255.0)).collect();
        let params = ClassicalParams {
            w: (0..h * w).map(|_| rng.random_range(-1e-3..1e-3)).collect(),
            b: 0.3,
        };
        (params, image)
    }

    #[test]
    fn classification_budget_doubles_with_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (params, image) = trained_like(&mut rng, 8, 8);
        let base = classification_photons_classical(&params, &image, 0.05, 1.0, 0.0).unwrap();
        let (p2, x2) = upsample_model(&params, &image, 8, 8, 1, 2).unwrap();
        let doubled = classification_photons_classical(&p2, &x2, 0.05, 1.0, 0.0).unwrap();
        let ratio = doubled as f64 / base as f64;
        assert!((ratio - 2.0).abs() <= 0.4, "{ratio}");
    }

    #[test]
    fn classification_budget_delivers_epsilon() {
        // Perturb every pixel with the variance the budget assumes,
        // <x> x_i N / n, and measure the spread of G.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (params, image) = trained_like(&mut rng, 8, 8);
        let eps = 0.01;
        let photons = classification_photons_classical(&params, &image, eps, 1.0, 0.0).unwrap() as f64;
        let n = image.len() as f64;
        let mean = image.iter().sum::<f64>() / n;
        let noise: Vec<Normal<f64>> = image
            .iter()
            .map(|&x| Normal::new(0.0, (mean * x * n / photons).sqrt()).unwrap())
            .collect();
        let outputs: Vec<f64> = (0..4000)
            .map(|_| {
                let noisy: f64 = params
                    .w
                    .iter()
                    .zip(&image)
                    .zip(&noise)
                    .map(|((w, x), d)| w * (x + d.sample(&mut rng)))
                    .sum();
                sigmoid(1.0, 0.0, noisy + params.b)
            })
            .collect();
        let (_, std) = mean_std(&outputs);
        assert!((std / eps - 1.0).abs() < 0.25, "{std}");
    }

    #[test]
    fn upsampling_preserves_response_and_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (params, image) = trained_like(&mut rng, 4, 4);
        let (p2, x2) = upsample_model(&params, &image, 4, 4, 2, 3).unwrap();
        assert_eq!(x2.len(), 4 * 4 * 6);
        let dot = |p: &ClassicalParams, x: &[f64]| p.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        assert!((dot(&params, &image) - dot(&p2, &x2)).abs() < 1e-9);
        let (a1, a2) = weight_norms(&params);
        let (b1, b2) = weight_norms(&p2);
        assert!((a1 - b1).abs() < 1e-12 && (a2 - b2).abs() < 1e-12);
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        assert!((mean(&image) - mean(&x2)).abs() < 1e-9);
    }

    #[test]
    fn scaling_table() {
        let rows = scaling_report(&[64, 256, 1024], &ScalingInputs::default(), None).unwrap();
        assert!(rows.iter().all(|r| r.quantum_photons == 400));
        assert_eq!(rows[1].imaging_photons, 4 * rows[0].imaging_photons);
        assert_eq!(rows[2].imaging_photons, 16 * rows[0].imaging_photons);
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let cls: Vec<f64> = rows.iter().map(|r| r.classification_photons as f64).collect();
        assert!((loglog_slope(&ns, &cls) - 1.0).abs() <= 0.1);

        assert!(scaling_report(&[], &ScalingInputs::default(), None).is_err());
        assert!(scaling_report(&[60], &ScalingInputs::default(), None).is_err());
        assert!(scaling_report(&[64, 144], &ScalingInputs::default(), None).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }
}
