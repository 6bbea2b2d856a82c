//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! Datasets are read from `$HOMN_DATA_DIR` or `<workspace>/data`; run
//! `scripts/fetch_data.sh` first.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use homn_core::artifact::write_history;
use homn_core::baseline::{fit_classical, ClassicalModel};
use homn_core::dataset_io::{prepare_binary, Source, Split};
use homn_core::photon_budget::{
    classification_uncertainty_quantum, loglog_slope, sample_trials, scaling_report,
    ScalingInputs,
};
use homn_core::selfcheck::{self, Report, Sizes};
use homn_core::trainer::{fit, EncodedDataset, TrainConfig, TrainHistory};
use homn_core::{Domain, NeuronConfig};

const SEED: u64 = 0;
const MNIST_CLASSES: (u8, u8) = (0, 1);
const CIFAR_CLASSES: (u8, u8) = (3, 5);

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn data_root() -> PathBuf {
    std::env::var_os("HOMN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn out_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("create output directory");
    dir
}

struct Split2 {
    train: EncodedDataset,
    test: EncodedDataset,
}

fn load(source: Source, classes: (u8, u8), domain: Domain) -> Result<Split2, String> {
    let root = data_root();
    let read = |split| {
        prepare_binary(source, &root, split, classes)
            .and_then(|ds| EncodedDataset::encode(&ds, domain))
            .map_err(|e| {
                format!(
                    "{source} data unavailable under {} ({e}); run scripts/fetch_data.sh or set HOMN_DATA_DIR",
                    root.display()
                )
            })
    };
    Ok(Split2 {
        train: read(Split::Train)?,
        test: read(Split::Test)?,
    })
}

fn config(domain: Domain, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: SEED,
        neuron: NeuronConfig {
            domain,
            ..NeuronConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn history_csv(history: &TrainHistory) -> Vec<u8> {
    let mut buf = Vec::new();
    write_history(&mut buf, history, SEED).expect("in-memory CSV");
    buf
}

fn final_test(history: &TrainHistory) -> f64 {
    history
        .last()
        .and_then(|r| r.test_acc)
        .expect("history has a test accuracy")
}

fn save(name: &str, history: &TrainHistory) {
    let _ = fs::write(out_dir().join(format!("{name}.csv")), history_csv(history));
}

struct QuantumRun {
    accuracy: f64,
    csv: Vec<u8>,
}

fn quantum_run(
    name: &str,
    source: Source,
    classes: (u8, u8),
    domain: Domain,
    epochs: usize,
) -> Result<QuantumRun, String> {
    let data = load(source, classes, domain)?;
    let cfg = config(domain, epochs);
    let (_, history) = fit(&data.train, Some(&data.test), &cfg).map_err(|e| e.to_string())?;
    save(name, &history);
    Ok(QuantumRun {
        accuracy: final_test(&history),
        csv: history_csv(&history),
    })
}

fn classical_run(name: &str, source: Source, classes: (u8, u8), epochs: usize) -> Result<f64, String> {
    let data = load(source, classes, Domain::Spatial)?;
    let cfg = config(Domain::Spatial, epochs);
    let (_, history) = fit_classical(&data.train, Some(&data.test), &cfg, ClassicalModel::Classical)
        .map_err(|e| e.to_string())?;
    save(name, &history);
    Ok(final_test(&history))
}

fn accuracy_outcome(
    id: usize,
    name: &'static str,
    run: &Result<QuantumRun, String>,
    threshold: f64,
    epochs: usize,
) -> Outcome {
    match run {
        Ok(r) => Outcome {
            id,
            name,
            passed: r.accuracy >= threshold,
            detail: format!(
                "test accuracy {:.4} (need >= {threshold}), {epochs} epochs, beta 10, gamma 0, seed {SEED}",
                r.accuracy
            ),
        },
        Err(e) => Outcome {
            id,
            name,
            passed: false,
            detail: e.clone(),
        },
    }
}

fn report_checks(id: usize, name: &'static str, report: &Report, names: &[&str]) -> Outcome {
    let checks: Vec<_> = names
        .iter()
        .map(|n| report.get(n).unwrap_or_else(|| panic!("selfcheck has no check {n}")))
        .collect();
    Outcome {
        id,
        name,
        passed: checks.iter().all(|c| c.passed),
        detail: checks
            .iter()
            .map(|c| {
                format!(
                    "{} {:.2e} (tol {:.0e})",
                    c.name,
                    c.measured,
                    c.tolerance.unwrap_or(f64::INFINITY)
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn percentile(mut values: Vec<f64>, q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let idx = ((values.len() as f64 - 1.0) * q).round() as usize;
    values[idx]
}

fn shot_noise() -> Outcome {
    let trials = 1000;
    let f = 0.3;
    let pairs = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    let widths: Vec<f64> = pairs
        .iter()
        .map(|&n| {
            let reports = sample_trials(f, 1.0, n, SEED, trials).expect("valid overlap");
            percentile(reports.iter().map(|r| (r.f_hat - f).abs()).collect(), 0.95)
        })
        .collect();
    let xs: Vec<f64> = pairs.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &widths);
    let slope_ok = (slope + 0.5).abs() <= 0.05;

    // Budget guarantee at the worst-case rate p = 1/2.
    let target = 0.02;
    let photons = classification_uncertainty_quantum(target).expect("positive epsilon");
    let reports = sample_trials(0.0, 1.0, photons / 2, SEED, trials).expect("valid overlap");
    let within = reports.iter().filter(|r| r.epsilon <= target).count() as f64 / trials as f64;
    let covered = reports
        .iter()
        .filter(|r| (r.p_hat - 0.5).abs() <= r.epsilon)
        .count() as f64
        / trials as f64;
    let coverage_ok = within >= 0.93;

    let rows = scaling_report(&[64, 256, 1024], &ScalingInputs::default(), None)
        .expect("valid resolutions");
    let quantum_constant = rows
        .iter()
        .all(|r| r.quantum_photons.to_le_bytes() == rows[0].quantum_photons.to_le_bytes());
    let imaging: Vec<u64> = rows.iter().map(|r| r.imaging_photons).collect();
    let ratios_ok = imaging[1] == 4 * imaging[0] && imaging[2] == 16 * imaging[0];

    Outcome {
        id: 8,
        name: "shot_noise_statistics",
        passed: slope_ok && coverage_ok && quantum_constant && ratios_ok,
        detail: format!(
            "half-width slope {slope:.4} (need -0.5 +- 0.05); budget {photons} photons met eps <= {target} in {:.1}% (need >= 93%), true-rate coverage {:.1}%; quantum photons {:?}; imaging {:?}",
            100.0 * within,
            100.0 * covered,
            rows.iter().map(|r| r.quantum_photons).collect::<Vec<_>>(),
            imaging
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut outcomes = Vec::new();

    let spatial = quantum_run("mnist_spatial", Source::Mnist, MNIST_CLASSES, Domain::Spatial, 100);
    outcomes.push(accuracy_outcome(1, "mnist_spatial_quantum", &spatial, 0.98, 100));

    let fourier = quantum_run("mnist_fourier", Source::Mnist, MNIST_CLASSES, Domain::Fourier, 100);
    outcomes.push(accuracy_outcome(2, "mnist_fourier_quantum", &fourier, 0.98, 100));

    let cifar = quantum_run("cifar_spatial", Source::Cifar10, CIFAR_CLASSES, Domain::Spatial, 500);
    outcomes.push(accuracy_outcome(3, "cifar_cat_dog_quantum", &cifar, 0.55, 500));

    let classical_mnist = classical_run("mnist_classical", Source::Mnist, MNIST_CLASSES, 100);
    let classical_cifar = classical_run("cifar_classical", Source::Cifar10, CIFAR_CLASSES, 500);
    outcomes.push(match (&classical_mnist, &classical_cifar, &cifar) {
        (Ok(cm), Ok(cc), Ok(q)) => Outcome {
            id: 4,
            name: "classical_baseline",
            passed: *cm >= 0.98 && q.accuracy >= cc - 0.01,
            detail: format!(
                "classical MNIST {cm:.4} (need >= 0.98); CIFAR quantum {:.4} vs classical {cc:.4} (need quantum >= classical - 0.01)",
                q.accuracy
            ),
        },
        (a, b, c) => Outcome {
            id: 4,
            name: "classical_baseline",
            passed: false,
            detail: [a.as_ref().err(), b.as_ref().err(), c.as_ref().err()]
                .into_iter()
                .flatten()
                .next()
                .cloned()
                .unwrap_or_default(),
        },
    });

    let report = selfcheck::run(SEED, Sizes::default()).expect("selfcheck instances are valid");
    outcomes.push(report_checks(
        5,
        "gradient_correctness",
        &report,
        &[
            "overlap_gradient_spatial",
            "overlap_gradient_fourier",
            "loss_gradient_spatial",
            "loss_gradient_fourier",
            "approx_gradient_nonnegative",
        ],
    ));
    outcomes.push(report_checks(
        6,
        "hom_physics",
        &report,
        &[
            "hom_dip_overlap",
            "hom_dip_coincidences",
            "overlap_bounds",
            "parseval_inverse",
            "fourier_duality",
        ],
    ));
    outcomes.push(report_checks(7, "analog_equivalence", &report, &["analog_equivalence"]));
    if let Some(gap) = report.get("approx_gradient_fourier_gap") {
        println!("info: phase-neglecting gradient, max deviation on Fourier instances {:.3e}", gap.measured);
    }

    outcomes.push(shot_noise());

    // Same seed, different thread count: the chunked reduction must give
    // byte-identical histories.
    let repeat = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .expect("thread pool")
        .install(|| quantum_run("mnist_spatial_repeat", Source::Mnist, MNIST_CLASSES, Domain::Spatial, 100));
    outcomes.push(match (&spatial, &repeat) {
        (Ok(a), Ok(b)) => Outcome {
            id: 9,
            name: "determinism",
            passed: a.csv == b.csv,
            detail: format!(
                "history CSVs of two seed-{SEED} runs ({} bytes) are {}",
                a.csv.len(),
                if a.csv == b.csv { "identical" } else { "different" }
            ),
        },
        (Err(e), _) | (_, Err(e)) => Outcome {
            id: 9,
            name: "determinism",
            passed: false,
            detail: e.clone(),
        },
    });

    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        println!(
            "{} [{}] {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0?}; histories in {}",
        outcomes.len() - failed,
        start.elapsed(),
        out_dir().display()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
