//! Dataset containers: MNIST IDX files, CIFAR-10 binary batches and a small
//! synthetic generator, plus the preprocessing applied before encoding
//! (grayscale conversion, zero padding, two-class filtering).
//!
//! # IDX layout (MNIST)
//! ```text
//! bytes 0-3   magic, big-endian: 0x00000803 (u8 images, 3 dims) or 0x00000801 (u8 labels)
//! bytes 4-7   item count
//! bytes 8-15  rows, cols (images only)
//! then        count * rows * cols pixel bytes, row-major  |  count label bytes
//! ```
//!
//! # CIFAR-10 binary layout
//! A batch is a concatenation of 3073-byte records: one label byte followed by
//! the red, green and blue 32x32 planes, each row-major.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// A grid of 8-bit grey levels, or three such planes for RGB.
///
/// Pixels are stored plane by plane, each plane row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} pixels, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn grey(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(height, width, 1, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn plane(&self, channel: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.pixels[channel * n..(channel + 1) * n]
    }

    /// Grey level at `(row, col)` of the first plane.
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mnist,
    Cifar10,
    Synthetic,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Mnist => "mnist",
            Source::Cifar10 => "cifar10",
            Source::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    images: Vec<RawImage>,
    labels: Vec<u8>,
    source: Source,
}

impl LabeledSet {
    pub fn new(images: Vec<RawImage>, labels: Vec<u8>, source: Source) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            let dims = (first.height, first.width, first.channels);
            if let Some(bad) = images
                .iter()
                .find(|im| (im.height, im.width, im.channels) != dims)
            {
                return Err(Error::Shape(format!(
                    "mixed image shapes {}x{}x{} and {}x{}x{}",
                    dims.0, dims.1, dims.2, bad.height, bad.width, bad.channels
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            source,
        })
    }

    pub fn images(&self) -> &[RawImage] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Applies `op` to every image, keeping labels and source.
    pub fn try_map_images<F>(self, op: F) -> Result<Self>
    where
        F: Fn(&RawImage) -> Result<RawImage>,
    {
        let images = self.images.iter().map(op).collect::<Result<Vec<_>>>()?;
        Self::new(images, self.labels, self.source)
    }
}

/// Two-class dataset with targets in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    pub items: Vec<(RawImage, u8)>,
    /// `class_map[y]` is the original label mapped to target `y`.
    pub class_map: [u8; 2],
    pub source: Source,
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.items.first().map(|(im, _)| (im.height, im.width))
    }
}

/// The decoded content of one IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    Images(Vec<RawImage>),
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let word = bytes.get(offset..offset + 4).ok_or(Error::Truncation {
        expected: offset + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([word[0], word[1], word[2], word[3]]))
}

fn check_payload(bytes: &[u8], expected: usize) -> Result<()> {
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(Error::Truncation {
            expected,
            found: bytes.len(),
        }),
        std::cmp::Ordering::Greater => Err(Error::Format(format!(
            "{} trailing bytes after the declared payload",
            bytes.len() - expected
        ))),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    match be_u32(bytes, 0)? {
        IDX_IMAGES_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let rows = be_u32(bytes, 8)? as usize;
            let cols = be_u32(bytes, 12)? as usize;
            if rows == 0 || cols == 0 {
                return Err(Error::Format(format!("zero image dimension {rows}x{cols}")));
            }
            let per_image = rows * cols;
            check_payload(bytes, 16 + count * per_image)?;
            let images = bytes[16..]
                .chunks_exact(per_image)
                .map(|px| RawImage::grey(rows, cols, px.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Ok(IdxData::Images(images))
        }
        IDX_LABELS_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            check_payload(bytes, 8 + count)?;
            Ok(IdxData::Labels(bytes[8..].to_vec()))
        }
        other => Err(Error::Format(format!("unknown IDX magic 0x{other:08x}"))),
    }
}

pub fn encode_idx_images(images: &[RawImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images
        .first()
        .map(|im| (im.height, im.width))
        .unwrap_or((1, 1));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for im in images {
        if im.channels != 1 || im.height != rows || im.width != cols {
            return Err(Error::Shape("IDX images must be single-channel and same-sized".into()));
        }
        out.extend_from_slice(&im.pixels);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<LabeledSet> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::Format(format!(
            "CIFAR-10 batch length {} is not a multiple of {CIFAR_RECORD_LEN}",
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD_LEN);
    let mut labels = Vec::with_capacity(bytes.len() / CIFAR_RECORD_LEN);
    for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        labels.push(record[0]);
        images.push(RawImage::new(
            CIFAR_SIDE,
            CIFAR_SIDE,
            3,
            record[1..].to_vec(),
        )?);
    }
    LabeledSet::new(images, labels, Source::Cifar10)
}

pub fn encode_cifar10(set: &LabeledSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(set.len() * CIFAR_RECORD_LEN);
    for (im, &label) in set.images.iter().zip(&set.labels) {
        if (im.height, im.width, im.channels) != (CIFAR_SIDE, CIFAR_SIDE, 3) {
            return Err(Error::Shape("CIFAR-10 records hold 32x32 RGB images".into()));
        }
        out.push(label);
        out.extend_from_slice(&im.pixels);
    }
    Ok(out)
}

/// BT.601 luma, rounded half away from zero.
pub fn to_grayscale(rgb: &RawImage) -> Result<RawImage> {
    if rgb.channels != 3 {
        return Err(Error::Shape(format!(
            "expected 3 channels, got {}",
            rgb.channels
        )));
    }
    let (r, g, b) = (rgb.plane(0), rgb.plane(1), rgb.plane(2));
    let grey = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RawImage::grey(rgb.height, rgb.width, grey)
}

/// Centers `image` on a black canvas; an odd margin puts the extra pixel at
/// the bottom/right.
pub fn pad_to(image: &RawImage, target_h: usize, target_w: usize) -> Result<RawImage> {
    if target_h < image.height || target_w < image.width {
        return Err(Error::Shape(format!(
            "cannot pad {}x{} down to {target_h}x{target_w}",
            image.height, image.width
        )));
    }
    let top = (target_h - image.height) / 2;
    let left = (target_w - image.width) / 2;
    let plane_in = image.height * image.width;
    let plane_out = target_h * target_w;
    let mut pixels = vec![0u8; plane_out * image.channels];
    for c in 0..image.channels {
        for row in 0..image.height {
            let src = c * plane_in + row * image.width;
            let dst = c * plane_out + (row + top) * target_w + left;
            pixels[dst..dst + image.width].copy_from_slice(&image.pixels[src..src + image.width]);
        }
    }
    RawImage::new(target_h, target_w, image.channels, pixels)
}

/// Keeps `class_a` (mapped to 0) and `class_b` (mapped to 1), preserving order.
pub fn filter_binary(set: &LabeledSet, class_a: u8, class_b: u8) -> Result<BinaryDataset> {
    if class_a == class_b {
        return Err(Error::Config(format!(
            "the two classes must differ (both are {class_a})"
        )));
    }
    for class in [class_a, class_b] {
        if !set.labels.contains(&class) {
            return Err(Error::EmptyClass(class));
        }
    }
    let items = set
        .images
        .iter()
        .zip(&set.labels)
        .filter_map(|(im, &label)| match label {
            l if l == class_a => Some((im.clone(), 0)),
            l if l == class_b => Some((im.clone(), 1)),
            _ => None,
        })
        .collect();
    Ok(BinaryDataset {
        items,
        class_map: [class_a, class_b],
        source: set.source,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Shape(msg) => Error::Shape(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads an official MNIST split from `dir` (uncompressed IDX files).
pub fn load_mnist(dir: &Path, split: Split) -> Result<LabeledSet> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let images_path = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let labels_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    let images = match with_path(&images_path, parse_idx(&read(&images_path)?))? {
        IdxData::Images(images) => images,
        IdxData::Labels(_) => {
            return Err(Error::Format(format!(
                "{}: expected an image file",
                images_path.display()
            )))
        }
    };
    let labels = match with_path(&labels_path, parse_idx(&read(&labels_path)?))? {
        IdxData::Labels(labels) => labels,
        IdxData::Images(_) => {
            return Err(Error::Format(format!(
                "{}: expected a label file",
                labels_path.display()
            )))
        }
    };
    LabeledSet::new(images, labels, Source::Mnist)
}

/// Loads the official CIFAR-10 training batches (1-5) or the test batch.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<LabeledSet> {
    let files: Vec<String> = match split {
        Split::Train => (1..=5).map(|k| format!("data_batch_{k}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".to_string()],
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let path = dir.join(name);
        let batch = with_path(&path, parse_cifar10(&read(&path)?))?;
        images.extend(batch.images);
        labels.extend(batch.labels);
    }
    LabeledSet::new(images, labels, Source::Cifar10)
}

/// Subdirectories of a data root holding each dataset.
pub const MNIST_DIR: &str = "mnist";
pub const CIFAR10_DIR: &str = "cifar-10-batches-bin";

/// Side of the square images every experiment works at.
pub const PREPARED_SIDE: usize = 32;

/// Loads `split` of `source` from the data root, reduces it to the classes
/// `(a, b)` (targets 0 and 1) and brings it to the experiment format:
/// MNIST is zero-padded to 32x32, CIFAR-10 converted to greyscale.
pub fn prepare_binary(
    source: Source,
    root: &Path,
    split: Split,
    classes: (u8, u8),
) -> Result<BinaryDataset> {
    let set = match source {
        Source::Mnist => load_mnist(&root.join(MNIST_DIR), split)?
            .try_map_images(|im| pad_to(im, PREPARED_SIDE, PREPARED_SIDE))?,
        Source::Cifar10 => {
            load_cifar10(&root.join(CIFAR10_DIR), split)?.try_map_images(to_grayscale)?
        }
        Source::Synthetic => {
            return Err(Error::Config(
                "synthetic data is generated, not loaded from a data root".into(),
            ))
        }
    };
    filter_binary(&set, classes.0, classes.1)
}

/// Noisy bar images: label 0 carries a horizontal bar, label 1 a vertical one.
///
/// Labels alternate 0, 1, 0, ... so the set is balanced.
pub fn synthetic_bars(count: usize, height: usize, width: usize, seed: u64) -> Result<LabeledSet> {
    if height < 3 || width < 3 {
        return Err(Error::Shape("synthetic images need at least 3x3 pixels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % 2) as u8;
        let mut pixels: Vec<u8> = (0..height * width)
            .map(|_| rng.random_range(0..48u8))
            .collect();
        if label == 0 {
            let row = rng.random_range(1..height - 1);
            for col in 0..width {
                pixels[row * width + col] = rng.random_range(160..=255u8);
            }
        } else {
            let col = rng.random_range(1..width - 1);
            for row in 0..height {
                pixels[row * width + col] = rng.random_range(160..=255u8);
            }
        }
        images.push(RawImage::grey(height, width, pixels)?);
        labels.push(label);
    }
    LabeledSet::new(images, labels, Source::Synthetic)
}
