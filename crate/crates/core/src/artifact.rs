//! On-disk artifacts: prepared datasets, their manifest, trained models,
//! training histories and photon-budget tables. Every artifact carries
//! [`SCHEMA_VERSION`] and the seed that produced it.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::ClassicalParams;
use crate::dataset_io::{BinaryDataset, RawImage, Source};
use crate::hom_neuron::ProbeParams;
use crate::photon_budget::ScalingRow;
use crate::trainer::{EpochRecord, TrainConfig, TrainHistory};
use crate::{Domain, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DATASET_MAGIC: [u8; 4] = *b"HOMD";
const HEADER_LEN: usize = 4 + 4 + 4 + 4 * 3;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn source_code(source: Source) -> u8 {
    match source {
        Source::Mnist => 0,
        Source::Cifar10 => 1,
        Source::Synthetic => 2,
    }
}

fn domain_code(domain: Domain) -> u8 {
    match domain {
        Domain::Spatial => 0,
        Domain::Fourier => 1,
    }
}

/// Serializes a greyscale binary dataset together with the domain it is
/// meant to be encoded in.
///
/// Layout (integers little-endian): `HOMD`, `u32` version, `u8` source,
/// `u8` class a, `u8` class b, `u8` domain, `u32` height, `u32` width,
/// `u32` count, then per item one target byte and `height * width` pixels.
pub fn encode_dataset(dataset: &BinaryDataset, domain: Domain) -> Result<Vec<u8>> {
    let (h, w) = dataset.dims().unwrap_or((0, 0));
    let mut out = Vec::with_capacity(HEADER_LEN + dataset.len() * (1 + h * w));
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.extend_from_slice(&[
        source_code(dataset.source),
        dataset.class_map[0],
        dataset.class_map[1],
        domain_code(domain),
    ]);
    for v in [h, w, dataset.len()] {
        let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (image, target) in &dataset.items {
        if image.channels() != 1 || image.height() != h || image.width() != w {
            return Err(Error::Shape(format!(
                "expected {h}x{w} greyscale images, found {}x{}x{}",
                image.height(),
                image.width(),
                image.channels()
            )));
        }
        if *target > 1 {
            return Err(Error::Format(format!("target {target} is not binary")));
        }
        out.push(*target);
        out.extend_from_slice(image.pixels());
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(BinaryDataset, Domain)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncation {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format("not a prepared dataset (bad magic)".into()));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let source = match bytes[8] {
        0 => Source::Mnist,
        1 => Source::Cifar10,
        2 => Source::Synthetic,
        other => return Err(Error::Format(format!("unknown source code {other}"))),
    };
    let class_map = [bytes[9], bytes[10]];
    let domain = match bytes[11] {
        0 => Domain::Spatial,
        1 => Domain::Fourier,
        other => return Err(Error::Format(format!("unknown domain code {other}"))),
    };
    let (h, w, count) = (u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize);
    let record = 1 + h * w;
    let expected = HEADER_LEN + count * record;
    if bytes.len() != expected {
        return Err(Error::Truncation {
            expected,
            found: bytes.len(),
        });
    }
    let items = bytes[HEADER_LEN..]
        .chunks_exact(record)
        .map(|chunk| {
            let target = chunk[0];
            if target > 1 {
                return Err(Error::Format(format!("target {target} is not binary")));
            }
            Ok((RawImage::grey(h, w, chunk[1..].to_vec())?, target))
        })
        .collect::<Result<_>>()?;
    Ok((
        BinaryDataset {
            items,
            class_map,
            source,
        },
        domain,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub name: String,
    /// File name relative to the manifest.
    pub file: String,
    pub count: usize,
    /// Items with target 0 and target 1.
    pub class_counts: [usize; 2],
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub source: Source,
    /// `class_map[y]` is the original label of target `y`.
    pub class_map: [u8; 2],
    pub class_names: [String; 2],
    pub height: usize,
    pub width: usize,
    pub domain: Domain,
    pub seed: u64,
    pub splits: Vec<SplitEntry>,
}

impl DatasetManifest {
    pub fn split(&self, name: &str) -> Option<&SplitEntry> {
        self.splits.iter().find(|s| s.name == name)
    }
}

/// Writes `dataset` to `dir/<name>.homd` and describes it.
pub fn write_split(
    dir: &Path,
    name: &str,
    dataset: &BinaryDataset,
    domain: Domain,
) -> Result<SplitEntry> {
    let bytes = encode_dataset(dataset, domain)?;
    let file = format!("{name}.homd");
    write_bytes(&dir.join(&file), &bytes)?;
    let ones = dataset.items.iter().filter(|(_, y)| *y == 1).count();
    Ok(SplitEntry {
        name: name.to_string(),
        file,
        count: dataset.len(),
        class_counts: [dataset.len() - ones, ones],
        sha256: sha256_hex(&bytes),
    })
}

/// Loads a split listed in the manifest at `manifest_path`, verifying its
/// checksum.
pub fn read_split(manifest_path: &Path, name: &str) -> Result<(DatasetManifest, BinaryDataset)> {
    let manifest: DatasetManifest = read_json(manifest_path)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {}",
            manifest.schema_version
        )));
    }
    let entry = manifest
        .split(name)
        .ok_or_else(|| Error::Config(format!("manifest has no split named {name:?}")))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let path = dir.join(&entry.file);
    let bytes = read_bytes(&path)?;
    let digest = sha256_hex(&bytes);
    if digest != entry.sha256 {
        return Err(Error::Format(format!(
            "{}: checksum {digest} does not match the manifest",
            path.display()
        )));
    }
    let (dataset, _) = decode_dataset(&bytes)?;
    Ok((manifest, dataset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// The interferometric neuron.
    Qon,
    Classical,
    Analog,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Qon => "qon",
            ModelKind::Classical => "classical",
            ModelKind::Analog => "analog",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qon" => Ok(ModelKind::Qon),
            "classical" => Ok(ModelKind::Classical),
            "analog" => Ok(ModelKind::Analog),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected qon, classical or analog)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelParams {
    Probe(ProbeParams),
    Linear(ClassicalParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    pub input_height: usize,
    pub input_width: usize,
    pub class_map: [u8; 2],
    pub config: TrainConfig,
    pub params: ModelParams,
}

impl ModelArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = read_json(path)?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {}",
                model.schema_version
            )));
        }
        let consistent = matches!(
            (model.kind, &model.params),
            (ModelKind::Qon, ModelParams::Probe(_))
                | (ModelKind::Classical | ModelKind::Analog, ModelParams::Linear(_))
        );
        if !consistent {
            return Err(Error::Format(format!(
                "{}: parameters do not match model kind {}",
                path.display(),
                model.kind
            )));
        }
        Ok(model)
    }
}

fn comment_line<W: Write>(out: &mut W, what: &str, seed: u64) -> Result<()> {
    writeln!(out, "# homn-{what} v{SCHEMA_VERSION} seed={seed}")
        .map_err(|e| Error::io("<csv output>", e))
}

fn parse_comment(text: &str, what: &str) -> Result<u64> {
    let first = text.lines().next().unwrap_or("");
    let prefix = format!("# homn-{what} v{SCHEMA_VERSION} seed=");
    first
        .strip_prefix(&prefix)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("missing or unsupported {what} header: {first:?}")))
}

/// CSV with a leading `# homn-history v1 seed=N` line and columns
/// `epoch,loss,train_acc,test_acc,norm_lambda,bias` (`test_acc` empty when
/// no test split was used).
pub fn write_history<W: Write>(mut out: W, history: &TrainHistory, seed: u64) -> Result<()> {
    comment_line(&mut out, "history", seed)?;
    let mut writer = csv::Writer::from_writer(out);
    if history.is_empty() {
        writer.write_record([
            "epoch",
            "loss",
            "train_acc",
            "test_acc",
            "norm_lambda",
            "bias",
        ])?;
    }
    for record in &history.records {
        writer.serialize(record)?;
    }
    writer.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn read_history<R: Read>(mut input: R) -> Result<(TrainHistory, u64)> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<csv input>", e))?;
    let seed = parse_comment(&text, "history")?;
    let records = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize::<EpochRecord>()
        .collect::<Result<_, _>>()?;
    Ok((TrainHistory { records }, seed))
}

/// CSV with a leading `# homn-budget v1 seed=N` line and columns
/// `n,quantum_photons,imaging_photons,classification_photons`.
pub fn write_budget<W: Write>(mut out: W, rows: &[ScalingRow], seed: u64) -> Result<()> {
    comment_line(&mut out, "budget", seed)?;
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn read_budget<R: Read>(mut input: R) -> Result<(Vec<ScalingRow>, u64)> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<csv input>", e))?;
    let seed = parse_comment(&text, "budget")?;
    let rows = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize::<ScalingRow>()
        .collect::<Result<_, _>>()?;
    Ok((rows, seed))
}
