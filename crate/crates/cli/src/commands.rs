use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use homn_core::artifact::{
    read_json, read_split, write_budget, write_history, write_json, write_split, DatasetManifest,
    ModelArtifact, ModelKind, ModelParams, SCHEMA_VERSION,
};
use homn_core::baseline::{
    classical_forward, evaluate_classical, fit_classical, quantum_analog_forward, ClassicalModel,
};
use homn_core::dataset_io::{
    filter_binary, prepare_binary, synthetic_bars, BinaryDataset, Source, Split, CIFAR10_CLASSES,
};
use homn_core::hom_neuron::{overlap_f, predict};
use homn_core::photon_budget::{
    sample_coincidences, scaling_report, weight_norms, BaseClassifier, ScalingInputs,
    ShotNoiseReport,
};
use homn_core::selfcheck::{self, Sizes};
use homn_core::trainer::{evaluate, fit, predicted_label, EncodedDataset, TrainConfig};
use homn_core::Domain;
use serde::Serialize;

use crate::{
    BudgetArgs, EvalArgs, Failure, InferArgs, ItemArgs, PrepareArgs, SelfcheckArgs, SourceArg,
    TrainArgs,
};

type Outcome = Result<(), Failure>;

const MANIFEST: &str = "manifest.json";

/// Missing input artifacts are usage errors, not data errors.
fn input(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn class_names(source: Source, map: [u8; 2]) -> [String; 2] {
    map.map(|c| match source {
        Source::Mnist => c.to_string(),
        Source::Cifar10 => CIFAR10_CLASSES
            .get(usize::from(c))
            .map_or_else(|| c.to_string(), |s| s.to_string()),
        Source::Synthetic => ["horizontal", "vertical"]
            .get(usize::from(c))
            .map_or_else(|| c.to_string(), |s| s.to_string()),
    })
}

pub fn prepare(args: PrepareArgs) -> Outcome {
    let domain = Domain::from(args.domain);
    let (source, train, test) = match args.source {
        SourceArg::Synthetic => {
            if args.classes.is_some_and(|c| c != (0, 1)) {
                return Err(Failure::Usage("synthetic bars only have classes 0,1".into()));
            }
            let make = |count, seed| {
                synthetic_bars(count, args.side, args.side, seed).and_then(|s| filter_binary(&s, 0, 1))
            };
            (
                Source::Synthetic,
                make(args.count, args.seed)?,
                make(args.test_count, args.seed.wrapping_add(1))?,
            )
        }
        real => {
            let (source, default) = match real {
                SourceArg::Mnist => (Source::Mnist, (0, 1)),
                _ => (Source::Cifar10, (3, 5)),
            };
            let root = args.data_dir.as_deref().ok_or_else(|| {
                Failure::Usage("no data root: pass --data-dir or set HOMN_DATA_DIR".into())
            })?;
            let classes = args.classes.unwrap_or(default);
            (
                source,
                prepare_binary(source, root, Split::Train, classes)?,
                prepare_binary(source, root, Split::Test, classes)?,
            )
        }
    };
    let (height, width) = train
        .dims()
        .ok_or_else(|| Failure::Data("the training split is empty".into()))?;
    create_dir(&args.out)?;
    let splits = vec![
        write_split(&args.out, "train", &train, domain)?,
        write_split(&args.out, "test", &test, domain)?,
    ];
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        source,
        class_map: train.class_map,
        class_names: class_names(source, train.class_map),
        height,
        width,
        domain,
        seed: args.seed,
        splits,
    };
    let path = args.out.join(MANIFEST);
    write_json(&path, &manifest)?;
    for s in &manifest.splits {
        println!(
            "{source} {} split: {} items ({} {}, {} {}), {height}x{width}, sha256 {}",
            s.name,
            s.count,
            s.class_counts[0],
            manifest.class_names[0],
            s.class_counts[1],
            manifest.class_names[1],
            s.sha256
        );
    }
    println!("seed {}, domain {domain}; wrote {}", args.seed, path.display());
    Ok(())
}

fn load_split(manifest_path: &Path, split: &str) -> Result<(DatasetManifest, BinaryDataset), Failure> {
    input(manifest_path, "dataset manifest")?;
    let (manifest, ds) = read_split(manifest_path, split)?;
    Ok((manifest, ds))
}

fn train_config(args: &TrainArgs, manifest: &DatasetManifest) -> Result<TrainConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            input(path, "run configuration")?;
            read_json::<TrainConfig>(path).map_err(|e| Failure::Usage(e.to_string()))?
        }
        None => TrainConfig {
            neuron: homn_core::NeuronConfig {
                domain: manifest.domain,
                ..Default::default()
            },
            ..Default::default()
        },
    };
    if let Some(d) = args.domain {
        cfg.neuron.domain = d.into();
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.eta_lambda {
        cfg.eta_lambda = v;
    }
    if let Some(v) = args.eta_b {
        cfg.eta_b = v;
    }
    if let Some(v) = args.beta {
        cfg.neuron.beta = v;
    }
    if let Some(v) = args.gamma {
        cfg.neuron.gamma = v;
    }
    if let Some(v) = args.alpha {
        cfg.neuron.alpha = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.init {
        cfg.init = v.into();
    }
    if let Some(v) = args.gradient {
        cfg.gradient_mode = v.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn classical_model(kind: ModelKind) -> Option<ClassicalModel> {
    match kind {
        ModelKind::Qon => None,
        ModelKind::Classical => Some(ClassicalModel::Classical),
        ModelKind::Analog => Some(ClassicalModel::Analog),
    }
}

pub fn train(args: TrainArgs) -> Outcome {
    let (manifest, train_set) = load_split(&args.data, "train")?;
    let test_set = match manifest.split("test") {
        Some(_) => Some(read_split(&args.data, "test")?.1),
        None => None,
    };
    let cfg = train_config(&args, &manifest)?;
    let domain = cfg.neuron.domain;
    let kind = ModelKind::from(args.model);
    let train_data = EncodedDataset::encode(&train_set, domain)?;
    let test_data = test_set
        .as_ref()
        .map(|t| EncodedDataset::encode(t, domain))
        .transpose()?;
    log::info!(
        "training {kind} on {} items ({domain}), {} epochs, seed {}",
        train_data.len(),
        cfg.epochs,
        cfg.seed
    );
    let (params, history) = match classical_model(kind) {
        None => {
            let (p, h) = fit(&train_data, test_data.as_ref(), &cfg)?;
            (ModelParams::Probe(p), h)
        }
        Some(model) => {
            let (p, h) = fit_classical(&train_data, test_data.as_ref(), &cfg, model)?;
            (ModelParams::Linear(p), h)
        }
    };
    let artifact = ModelArtifact {
        schema_version: SCHEMA_VERSION,
        kind,
        seed: cfg.seed,
        input_height: manifest.height,
        input_width: manifest.width,
        class_map: manifest.class_map,
        config: cfg.clone(),
        params,
    };
    create_dir(&args.out)?;
    let model_path = args.out.join("model.json");
    write_json(&model_path, &artifact)?;
    let history_path = args.out.join("history.csv");
    let file = File::create(&history_path)
        .map_err(|e| Failure::Data(format!("{}: {e}", history_path.display())))?;
    write_history(BufWriter::new(file), &history, cfg.seed)?;

    let last = history.last().expect("at least one epoch");
    let test = last
        .test_acc
        .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
    println!(
        "{kind} {domain} seed {}: {} epochs, loss {:.6}, train accuracy {:.4}, test accuracy {test}",
        cfg.seed, last.epoch, last.loss, last.train_acc
    );
    println!(
        "beta {}, gamma {}, alpha {}, eta_lambda {}, eta_b {}",
        cfg.neuron.beta, cfg.neuron.gamma, cfg.neuron.alpha, cfg.eta_lambda, cfg.eta_b
    );
    println!("wrote {} and {}", model_path.display(), history_path.display());
    Ok(())
}

struct Loaded {
    model: ModelArtifact,
    manifest: DatasetManifest,
    data: EncodedDataset,
}

fn load_item_inputs(args: &ItemArgs) -> Result<Loaded, Failure> {
    input(&args.model, "model")?;
    let model = ModelArtifact::load(&args.model)?;
    let (manifest, ds) = load_split(&args.data, &args.split)?;
    if (manifest.height, manifest.width) != (model.input_height, model.input_width) {
        return Err(Failure::Usage(format!(
            "model expects {}x{} inputs, dataset has {}x{}",
            model.input_height, model.input_width, manifest.height, manifest.width
        )));
    }
    let data = EncodedDataset::encode(&ds, model.config.neuron.domain)?;
    Ok(Loaded {
        model,
        manifest,
        data,
    })
}

/// Overlap (for the optical neuron) and exact output of item `i`.
fn item_output(loaded: &Loaded, i: usize) -> Result<(Option<f64>, f64), Failure> {
    let field = &loaded.data.fields[i];
    let neuron = &loaded.model.config.neuron;
    match &loaded.model.params {
        ModelParams::Probe(p) => {
            let f = overlap_f(field, p)?;
            Ok((Some(f), predict(f, p, neuron)))
        }
        ModelParams::Linear(p) => {
            let x = field.amplitudes();
            let out = if loaded.model.kind == ModelKind::Analog {
                quantum_analog_forward(p, x, neuron.beta, neuron.gamma)?
            } else {
                let re: Vec<f64> = x.iter().map(|a| a.re).collect();
                classical_forward(p, &re, neuron.beta, neuron.gamma)?
            };
            Ok((None, out))
        }
    }
}

#[derive(Serialize)]
struct Inference {
    schema_version: u32,
    seed: u64,
    model: ModelKind,
    split: String,
    index: usize,
    target: u8,
    /// Exact overlap, optical neuron only.
    f: Option<f64>,
    /// Output, from the estimated overlap when shots were simulated.
    prediction: f64,
    label: u8,
    class: u8,
    shots: Option<ShotNoiseReport>,
}

pub fn infer(args: InferArgs) -> Outcome {
    let loaded = load_item_inputs(&args.item)?;
    let count = loaded.data.len();
    if args.index >= count {
        return Err(Failure::Usage(format!(
            "index {} out of range for {} items in split {}",
            args.index, count, args.item.split
        )));
    }
    let (f, exact) = item_output(&loaded, args.index)?;
    let (prediction, shots) = match (args.shots, &loaded.model.params) {
        (None, _) => (exact, None),
        (Some(pairs), ModelParams::Probe(p)) => {
            let neuron = &loaded.model.config.neuron;
            let f = f.expect("probe models report f");
            let report = sample_coincidences(f, neuron.alpha, pairs, args.seed)?;
            (predict(report.f_hat, p, neuron), Some(report))
        }
        (Some(_), ModelParams::Linear(_)) => {
            return Err(Failure::Usage(format!(
                "--shots needs an optical model, not {}",
                loaded.model.kind
            )))
        }
    };
    let label = predicted_label(prediction);
    print_json(&Inference {
        schema_version: SCHEMA_VERSION,
        seed: args.seed,
        model: loaded.model.kind,
        split: args.item.split,
        index: args.index,
        target: loaded.data.labels[args.index],
        f,
        prediction,
        label,
        class: loaded.manifest.class_map[usize::from(label)],
        shots,
    })
}

#[derive(Serialize)]
struct ItemPrediction {
    index: usize,
    target: u8,
    prediction: f64,
    label: u8,
}

#[derive(Serialize)]
struct Evaluation {
    schema_version: u32,
    seed: u64,
    model: ModelKind,
    domain: Domain,
    split: String,
    count: usize,
    accuracy: f64,
    mean_bce: f64,
    saturated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    predictions: Option<Vec<ItemPrediction>>,
}

pub fn eval(args: EvalArgs) -> Outcome {
    let loaded = load_item_inputs(&args.item)?;
    let model = &loaded.model;
    let summary = match (&model.params, classical_model(model.kind)) {
        (ModelParams::Probe(p), _) => evaluate(p, &loaded.data, &model.config.neuron)?,
        (ModelParams::Linear(p), Some(kind)) => {
            evaluate_classical(p, &loaded.data, &model.config, kind)?
        }
        (ModelParams::Linear(_), None) => unreachable!("checked when the model was loaded"),
    };
    let predictions = if args.per_item {
        let items = (0..loaded.data.len())
            .map(|i| {
                let (_, prediction) = item_output(&loaded, i)?;
                Ok(ItemPrediction {
                    index: i,
                    target: loaded.data.labels[i],
                    prediction,
                    label: predicted_label(prediction),
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        Some(items)
    } else {
        None
    };
    print_json(&Evaluation {
        schema_version: SCHEMA_VERSION,
        seed: model.seed,
        model: model.kind,
        domain: model.config.neuron.domain,
        split: args.item.split,
        count: loaded.data.len(),
        accuracy: summary.accuracy,
        mean_bce: summary.mean_bce,
        saturated: summary.saturated,
        predictions,
    })
}

fn trained_base(args: &BudgetArgs, path: &Path) -> Result<(BaseClassifier, f64, f64), Failure> {
    input(path, "model")?;
    let model = ModelArtifact::load(path)?;
    let ModelParams::Linear(params) = &model.params else {
        return Err(Failure::Usage("the budget needs a classical model".into()));
    };
    if model.kind != ModelKind::Classical || model.config.neuron.domain != Domain::Spatial {
        return Err(Failure::Usage(
            "the budget needs a classical model trained on spatial inputs".into(),
        ));
    }
    if model.input_height != model.input_width {
        return Err(Failure::Usage("the budget needs square inputs".into()));
    }
    let data: &PathBuf = args.data.as_ref().expect("clap enforces --data with --model");
    let (_, ds) = load_split(data, &args.split)?;
    let (image, _) = ds.items.get(args.index).ok_or_else(|| {
        Failure::Usage(format!("index {} out of range for split {}", args.index, args.split))
    })?;
    let base = BaseClassifier::from_normalized(params, image.pixels(), model.input_width)?;
    Ok((base, model.config.neuron.beta, model.config.neuron.gamma))
}

pub fn budget(args: BudgetArgs) -> Outcome {
    let (base, beta, gamma) = match &args.model {
        Some(path) => {
            let (b, beta, gamma) = trained_base(&args, path)?;
            (Some(b), beta, gamma)
        }
        None => (None, 1.0, 0.0),
    };
    let resolutions = match (&args.resolutions, &base) {
        (Some(r), _) => r.clone(),
        (None, Some(b)) => [1, 2, 4].map(|k| (k * b.side) * (k * b.side)).to_vec(),
        (None, None) => vec![64, 256, 1024],
    };
    let inputs = ScalingInputs {
        epsilon: args.epsilon,
        sigma: args.sigma,
        mean_brightness: args.mean_brightness,
        depth: args.depth,
        beta: args.beta.unwrap_or(beta),
        gamma: args.gamma.unwrap_or(gamma),
    };
    let rows = scaling_report(&resolutions, &inputs, base.as_ref())?;

    let reported = match &base {
        Some(b) => b.clone(),
        None => {
            let side = resolutions
                .iter()
                .map(|&n| (n as f64).sqrt().round() as usize)
                .min()
                .expect("scaling_report rejects an empty list");
            BaseClassifier::synthetic(side, args.mean_brightness)
        }
    };
    let (l1, l2) = weight_norms(&reported.params);
    eprintln!(
        "seed {}: {} base classifier at side {}: ||w||_1 = {l1:.6e}, ||w||_2 = {l2:.6e}, b = {:.6e}, beta {}, gamma {}",
        args.seed,
        if base.is_some() { "trained" } else { "synthetic" },
        reported.side,
        reported.params.b,
        inputs.beta,
        inputs.gamma
    );

    match &args.out {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            write_budget(BufWriter::new(file), &rows, args.seed)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_budget(&mut lock, &rows, args.seed)?;
            lock.flush().map_err(|e| Failure::Data(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn selfcheck(args: SelfcheckArgs) -> Outcome {
    let sizes = Sizes {
        gradient_instances: args.instances,
        ..Sizes::default()
    };
    let report = selfcheck::run(args.seed, sizes)?;
    println!("selfcheck seed {}", report.seed);
    for check in &report.checks {
        println!("{check}");
    }
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        Err(Failure::Numeric(format!("failed checks: {}", failed.join(", "))))
    }
}
