//! Complex amplitude fields on a pixel grid.
//!
//! A [`Field`] is the discretized single-photon amplitude reaching the beam
//! splitter: either the image-plane amplitudes themselves (spatial domain) or
//! their centered, unitary 2-D Fourier spectrum (what a thin lens produces).

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset_io::RawImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Spatial,
    Fourier,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::Spatial => "spatial",
            Domain::Fourier => "fourier",
        })
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Domain::Spatial),
            "fourier" => Ok(Domain::Fourier),
            other => Err(Error::Config(format!("unknown domain {other:?}"))),
        }
    }
}

/// Row-major grid of complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    height: usize,
    width: usize,
    domain: Domain,
    amplitudes: Vec<Complex64>,
}

impl Field {
    /// Builds a field without renormalizing; callers are responsible for the
    /// unit-norm convention.
    pub fn from_amplitudes(
        height: usize,
        width: usize,
        domain: Domain,
        amplitudes: Vec<Complex64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || amplitudes.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} field cannot hold {} amplitudes",
                amplitudes.len()
            )));
        }
        Ok(Self {
            height,
            width,
            domain,
            amplitudes,
        })
    }

    /// Real amplitudes scaled to unit L2 norm.
    pub fn from_real(height: usize, width: usize, domain: Domain, values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroField);
        }
        let amplitudes = values.iter().map(|&v| Complex64::new(v / norm, 0.0)).collect();
        Self::from_amplitudes(height, width, domain, amplitudes)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `<self, other> = sum self_k * conj(other_k)`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape(format!(
                "inner product of {}x{} and {}x{} fields",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a * b.conj())
            .sum())
    }
}

/// Pixel values divided by their L2 norm; the result is real and non-negative.
pub fn normalize_field(image: &RawImage) -> Result<Field> {
    if image.channels() != 1 {
        return Err(Error::Shape(format!(
            "encoding needs a single-channel image, got {} channels",
            image.channels()
        )));
    }
    let values: Vec<f64> = image.pixels().iter().map(|&p| f64::from(p)).collect();
    Field::from_real(image.height(), image.width(), Domain::Spatial, &values)
}

/// Encodes `image` in `domain`: spatial amplitudes, or their centered spectrum.
pub fn encode(image: &RawImage, domain: Domain) -> Result<Field> {
    let field = normalize_field(image)?;
    match domain {
        Domain::Spatial => Ok(field),
        Domain::Fourier => dft2_unitary(&field),
    }
}

fn fft_rows(data: &mut [Complex64], height: usize, width: usize, direction: FftDirection) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft(width, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width).take(height) {
        fft.process_with_scratch(row, &mut scratch);
    }
}

fn transpose(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = data[r * width + c];
        }
    }
    out
}

fn fft2(data: &[Complex64], height: usize, width: usize, direction: FftDirection) -> Vec<Complex64> {
    let mut buf = data.to_vec();
    fft_rows(&mut buf, height, width, direction);
    let mut cols = transpose(&buf, height, width);
    fft_rows(&mut cols, width, height, direction);
    let scale = 1.0 / ((height * width) as f64).sqrt();
    let mut out = transpose(&cols, width, height);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Cyclic shift moving index 0 to `(h/2, w/2)`; `inverse` undoes it.
fn shift(data: &[Complex64], height: usize, width: usize, inverse: bool) -> Vec<Complex64> {
    let (dr, dc) = if inverse {
        (height - height / 2, width - width / 2)
    } else {
        (height / 2, width / 2)
    };
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..height {
        for c in 0..width {
            out[((r + dr) % height) * width + (c + dc) % width] = data[r * width + c];
        }
    }
    out
}

/// Centered, unitary 2-D DFT:
/// `F[k] = 1/sqrt(HW) * sum_x f[x] exp(-2 pi i (k_r x_r / H + k_c x_c / W))`,
/// with the zero frequency stored at `(H/2, W/2)`.
pub fn dft2_unitary(field: &Field) -> Result<Field> {
    if field.domain != Domain::Spatial {
        return Err(Error::Domain("forward DFT expects a spatial field".into()));
    }
    let spectrum = fft2(&field.amplitudes, field.height, field.width, FftDirection::Forward);
    Field::from_amplitudes(
        field.height,
        field.width,
        Domain::Fourier,
        shift(&spectrum, field.height, field.width, false),
    )
}

/// Inverse of [`dft2_unitary`].
pub fn idft2_unitary(field: &Field) -> Result<Field> {
    if field.domain != Domain::Fourier {
        return Err(Error::Domain("inverse DFT expects a Fourier field".into()));
    }
    let unshifted = shift(&field.amplitudes, field.height, field.width, true);
    Field::from_amplitudes(
        field.height,
        field.width,
        Domain::Spatial,
        fft2(&unshifted, field.height, field.width, FftDirection::Inverse),
    )
}

/// Samples of the field cross-correlated with a top-hat SLM cell, taken at
/// the cell centers: entry `(mu, nu)` of the `grid_h x grid_w` output is the
/// sum of the amplitudes inside cell `(mu, nu)`.
pub fn cell_overlap(field: &Field, grid_h: usize, grid_w: usize) -> Result<Vec<Complex64>> {
    if grid_h == 0 || grid_w == 0 || !field.height.is_multiple_of(grid_h) || !field.width.is_multiple_of(grid_w) {
        return Err(Error::Shape(format!(
            "{}x{} field does not tile into a {grid_h}x{grid_w} grid",
            field.height, field.width
        )));
    }
    if (grid_h, grid_w) == (field.height, field.width) {
        return Ok(field.amplitudes.clone());
    }
    let (cell_h, cell_w) = (field.height / grid_h, field.width / grid_w);
    let mut out = vec![Complex64::default(); grid_h * grid_w];
    for r in 0..field.height {
        let row = &field.amplitudes[r * field.width..(r + 1) * field.width];
        let dst = &mut out[(r / cell_h) * grid_w..(r / cell_h + 1) * grid_w];
        for (c, a) in row.iter().enumerate() {
            dst[c / cell_w] += a;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(h: usize, w: usize, rng: &mut impl Rng) -> Field {
        let amps: Vec<Complex64> = (0..h * w)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        Field::from_amplitudes(h, w, Domain::Spatial, amps.iter().map(|a| a / norm).collect())
            .unwrap()
    }

    /// Direct double-sum DFT with the same centering and scaling conventions.
    fn dft_oracle(field: &Field) -> Vec<Complex64> {
        let (h, w) = (field.height(), field.width());
        let mut out = vec![Complex64::default(); h * w];
        for kr in 0..h {
            for kc in 0..w {
                let mut acc = Complex64::default();
                for r in 0..h {
                    for c in 0..w {
                        let phase = -2.0 * PI
                            * ((kr * r) as f64 / h as f64 + (kc * c) as f64 / w as f64);
                        acc += field.amplitudes()[r * w + c] * Complex64::from_polar(1.0, phase);
                    }
                }
                let (sr, sc) = ((kr + h / 2) % h, (kc + w / 2) % w);
                out[sr * w + sc] = acc / ((h * w) as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn normalizes_pixels() {
        let f = normalize_field(&RawImage::grey(1, 2, vec![3, 4]).unwrap()).unwrap();
        assert_abs_diff_eq!(f.amplitudes()[0].re, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(f.amplitudes()[1].re, 0.8, epsilon = 1e-15);

        for c in [1u8, 17, 255] {
            let f = normalize_field(&RawImage::grey(2, 2, vec![c; 4]).unwrap()).unwrap();
            assert!(f.amplitudes().iter().all(|a| (a.re - 0.5).abs() < 1e-15 && a.im == 0.0));
        }

        assert!(matches!(
            normalize_field(&RawImage::grey(2, 2, vec![0; 4]).unwrap()),
            Err(Error::ZeroField)
        ));
        let rgb = RawImage::new(1, 1, 3, vec![1, 2, 3]).unwrap();
        assert!(matches!(normalize_field(&rgb), Err(Error::Shape(_))));
    }

    #[test]
    fn uniform_field_has_centered_dc() {
        let f = normalize_field(&RawImage::grey(2, 2, vec![9; 4]).unwrap()).unwrap();
        let spec = dft2_unitary(&f).unwrap();
        assert_eq!(spec.domain(), Domain::Fourier);
        for (k, a) in spec.amplitudes().iter().enumerate() {
            let expected = if k == 3 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(a.re, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_has_flat_spectrum() {
        for (h, w) in [(4, 4), (3, 5), (8, 2)] {
            let mut px = vec![0u8; h * w];
            px[w + 1] = 200;
            let spec = dft2_unitary(&normalize_field(&RawImage::grey(h, w, px).unwrap()).unwrap())
                .unwrap();
            let expected = 1.0 / ((h * w) as f64).sqrt();
            for a in spec.amplitudes() {
                assert_abs_diff_eq!(a.norm(), expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn matches_direct_sum_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (h, w) in [(4, 4), (3, 5), (6, 2)] {
            let field = random_field(h, w, &mut rng);
            let fast = dft2_unitary(&field).unwrap();
            for (a, b) in fast.amplitudes().iter().zip(dft_oracle(&field)) {
                assert!((a - b).norm() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn domain_checks() {
        let f = normalize_field(&RawImage::grey(2, 2, vec![1; 4]).unwrap()).unwrap();
        assert!(matches!(idft2_unitary(&f), Err(Error::Domain(_))));
        let spec = dft2_unitary(&f).unwrap();
        assert!(matches!(dft2_unitary(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn cell_overlap_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(32, 32, &mut rng);
        assert_eq!(cell_overlap(&f, 32, 32).unwrap(), f.amplitudes());

        let f = Field::from_amplitudes(
            2,
            2,
            Domain::Spatial,
            [1.0, 2.0, 3.0, 4.0].iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
        .unwrap();
        assert_eq!(cell_overlap(&f, 1, 1).unwrap(), vec![Complex64::new(10.0, 0.0)]);

        let f = random_field(4, 4, &mut rng);
        let a = f.amplitudes();
        let got = cell_overlap(&f, 2, 2).unwrap();
        for mu in 0..2 {
            for nu in 0..2 {
                let block = a[(2 * mu) * 4 + 2 * nu]
                    + a[(2 * mu) * 4 + 2 * nu + 1]
                    + a[(2 * mu + 1) * 4 + 2 * nu]
                    + a[(2 * mu + 1) * 4 + 2 * nu + 1];
                assert!((got[mu * 2 + nu] - block).norm() < 1e-15);
            }
        }

        assert!(matches!(cell_overlap(&f, 3, 2), Err(Error::Shape(_))));
        assert!(matches!(cell_overlap(&f, 0, 2), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn parseval_and_inverse(h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let field = random_field(h, w, &mut rng);
            let spec = dft2_unitary(&field).unwrap();
            prop_assert!((spec.norm() - field.norm()).abs() < 1e-12);
            let back = idft2_unitary(&spec).unwrap();
            for (a, b) in back.amplitudes().iter().zip(field.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }

        #[test]
        fn normalization_is_scale_invariant(px in proptest::collection::vec(0u8..=127, 12)) {
            prop_assume!(px.iter().any(|&p| p > 0));
            let doubled: Vec<u8> = px.iter().map(|p| p * 2).collect();
            let a = normalize_field(&RawImage::grey(3, 4, px).unwrap()).unwrap();
            let b = normalize_field(&RawImage::grey(3, 4, doubled).unwrap()).unwrap();
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-15);
            }
        }
    }
}
