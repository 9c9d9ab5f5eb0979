//! Command-line surface: corpus generation, predictor training, batch
//! prediction, simulated evolution, and evaluation.
//!
//! Exit codes: 0 success, 2 input error, 3 empty selection, 4 internal
//! invariant violation. Every command emits a run manifest (JSON) with its
//! resolved configuration; commands that write files put it next to their
//! primary output, the others print it to standard error. `--fixed-clock`
//! freezes timestamps and manifest durations so reruns are byte-identical.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::archspace::{ArchitectureSpec, SearchSpaceConfig};
use crate::evolve::{self, EvolutionConfig};
use crate::metrics::{kendall_tau, mse, r_squared, PairedSeries};
use crate::predictor::{
    build_training_samples, predict_batch, train, PredictorConfig, PredictorModel, TrainingConfig,
};
use crate::store::{
    generate_synthetic_corpus, DatasetRegistry, ExperimentStore, FilterConfig,
};

/// Timestamp written under `--fixed-clock`.
pub const FIXED_CLOCK_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Parser)]
#[command(
    name = "archpred",
    version,
    about = "Predict CNN accuracies from architecture descriptions and search the space without training"
)]
struct Cli {
    /// Emit machine-readable JSON reports instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Freeze timestamps and durations for reproducibility testing.
    #[arg(long, global = true)]
    fixed_clock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample architectures for every registered dataset and score their
    /// prefixes with the synthetic accuracy oracle.
    GenerateCorpus {
        /// Dataset registry (JSON).
        #[arg(long)]
        registry: PathBuf,
        /// Output record store (NDJSON), truncated if present.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        nets_per_dataset: u32,
        #[arg(long)]
        seed: u64,
        /// Manifest path (default: <out>.manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train a predictor on the records whose dataset difficulty lies
    /// within tau of the query.
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        query_dcn: f64,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        /// Output model file (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Predict the accuracy of architecture files.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dcn: f64,
        #[arg(long)]
        num_classes: u32,
        /// Architecture files (JSON).
        #[arg(required = true)]
        architectures: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Simulate tournament-selection evolution scored by the predictor.
    Evolve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dcn: f64,
        #[arg(long)]
        num_classes: u32,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 1000)]
        population: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory for history.tsv, top_<k>.json, manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Compare predictions against recorded accuracies for the selected
    /// records and print MSE, Kendall tau, and R-squared.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        query_dcn: f64,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// One emitted run manifest: enough to reproduce the command exactly.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub fixed_clock: bool,
    /// Zeroed under `--fixed-clock`.
    pub duration_seconds: f64,
}

enum CliError {
    Input(String),
    EmptySelection(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::EmptySelection(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::EmptySelection(m) | CliError::Internal(m) => m,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

/// Parses arguments from the process environment and runs the command.
/// Returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = dispatch(&cli, started);
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

/// `x` with `sig` significant digits in plain decimal notation.
pub fn format_significant(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn sig6(x: f64) -> String {
    format_significant(x, 6)
}

fn now_timestamp(fixed_clock: bool) -> String {
    if fixed_clock {
        FIXED_CLOCK_TIMESTAMP.to_string()
    } else {
        chrono::Utc::now()
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

fn emit_manifest(
    manifest: &RunManifest,
    explicit: Option<&Path>,
    default_path: Option<PathBuf>,
) -> CliResult<()> {
    let text = serde_json::to_string(manifest).map_err(input_err)?;
    match explicit.map(Path::to_path_buf).or(default_path) {
        Some(path) => std::fs::write(&path, text + "\n").map_err(input_err),
        None => {
            eprintln!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli, started: Instant) -> CliResult<()> {
    match &cli.command {
        Command::GenerateCorpus { registry, out, nets_per_dataset, seed, manifest } => {
            cmd_generate_corpus(cli, started, registry, out, *nets_per_dataset, *seed, manifest)
        }
        Command::Train { store, registry, query_dcn, tau, out, epochs, seed, manifest } => {
            cmd_train(cli, started, store, registry, *query_dcn, *tau, out, *epochs, *seed, manifest)
        }
        Command::Predict { model, dcn, num_classes, architectures, manifest } => {
            cmd_predict(cli, started, model, *dcn, *num_classes, architectures, manifest)
        }
        Command::Evolve { model, dcn, num_classes, steps, population, seed, out_dir, manifest } => {
            cmd_evolve(
                cli, started, model, *dcn, *num_classes, *steps, *population, *seed, out_dir,
                manifest,
            )
        }
        Command::Evaluate { model, store, registry, query_dcn, tau, manifest } => {
            cmd_evaluate(cli, started, model, store, registry, *query_dcn, *tau, manifest)
        }
    }
}

fn finish_manifest(
    cli: &Cli,
    started: Instant,
    command: &str,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        inputs,
        outputs,
        fixed_clock: cli.fixed_clock,
        duration_seconds: if cli.fixed_clock {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate_corpus(
    cli: &Cli,
    started: Instant,
    registry_path: &Path,
    out: &Path,
    nets_per_dataset: u32,
    seed: u64,
    manifest: &Option<PathBuf>,
) -> CliResult<()> {
    let registry = DatasetRegistry::load(registry_path).map_err(input_err)?;
    let created_at = now_timestamp(cli.fixed_clock);
    let records = generate_synthetic_corpus(
        registry.datasets(),
        nets_per_dataset,
        &SearchSpaceConfig::default(),
        seed,
        &created_at,
    )
    .map_err(input_err)?;
    let mut store = ExperimentStore::create(out, registry).map_err(input_err)?;
    let count = records.len();
    for record in records {
        store.append(record).map_err(input_err)?;
    }

    if cli.json {
        println!(
            "{}",
            serde_json::json!({ "records": count, "store": out.display().to_string() })
        );
    } else {
        println!("wrote {count} records to {}", out.display());
    }
    let m = finish_manifest(
        cli,
        started,
        "generate-corpus",
        serde_json::json!({
            "registry": registry_path.display().to_string(),
            "out": out.display().to_string(),
            "nets_per_dataset": nets_per_dataset,
            "seed": seed,
        }),
        vec![registry_path.display().to_string()],
        vec![out.display().to_string()],
    );
    emit_manifest(&m, manifest.as_deref(), Some(manifest_path_for(out)))
}

fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    cli: &Cli,
    started: Instant,
    store_path: &Path,
    registry_path: &Path,
    query_dcn: f64,
    tau: f64,
    out: &Path,
    epochs: usize,
    seed: u64,
    manifest: &Option<PathBuf>,
) -> CliResult<()> {
    let registry = DatasetRegistry::load(registry_path).map_err(input_err)?;
    let store = ExperimentStore::open(store_path, registry).map_err(input_err)?;
    let selected: Vec<_> = store
        .filter_by_dcn(query_dcn, &FilterConfig { tau })
        .into_iter()
        .cloned()
        .collect();
    if selected.is_empty() {
        return Err(CliError::EmptySelection(format!(
            "no experiments within tau {tau} of dcn {query_dcn}"
        )));
    }
    let samples = build_training_samples(&selected, store.registry()).map_err(input_err)?;
    if samples.is_empty() {
        return Err(CliError::EmptySelection(
            "selected records yield no layer-pair samples".into(),
        ));
    }
    let tcfg = TrainingConfig { epochs, seed, ..TrainingConfig::default() };
    let model = train(&samples, &tcfg, &PredictorConfig::default()).map_err(input_err)?;
    model.save(out).map_err(input_err)?;

    if cli.json {
        println!(
            "{}",
            serde_json::json!({
                "records": selected.len(),
                "samples": samples.len(),
                "final_train_loss": model.meta.final_train_loss,
                "final_val_loss": model.meta.final_val_loss,
                "model": out.display().to_string(),
            })
        );
    } else {
        println!(
            "trained on {} samples from {} records; train mse {}, validation mse {}",
            samples.len(),
            selected.len(),
            sig6(model.meta.final_train_loss),
            model
                .meta
                .final_val_loss
                .map(sig6)
                .unwrap_or_else(|| "n/a".into()),
        );
        println!("model written to {}", out.display());
    }
    let m = finish_manifest(
        cli,
        started,
        "train",
        serde_json::json!({
            "store": store_path.display().to_string(),
            "registry": registry_path.display().to_string(),
            "query_dcn": query_dcn,
            "tau": tau,
            "out": out.display().to_string(),
            "epochs": epochs,
            "seed": seed,
            "training": tcfg,
            "predictor": PredictorConfig::default(),
        }),
        vec![
            store_path.display().to_string(),
            registry_path.display().to_string(),
        ],
        vec![out.display().to_string()],
    );
    emit_manifest(&m, manifest.as_deref(), Some(manifest_path_for(out)))
}

fn cmd_predict(
    cli: &Cli,
    started: Instant,
    model_path: &Path,
    dcn: f64,
    num_classes: u32,
    architecture_paths: &[PathBuf],
    manifest: &Option<PathBuf>,
) -> CliResult<()> {
    let model = PredictorModel::load(model_path).map_err(input_err)?;
    let mut archs: Vec<Result<ArchitectureSpec, String>> = Vec::new();
    for path in architecture_paths {
        archs.push(ArchitectureSpec::load(path).map_err(|e| format!("{}: {e}", path.display())));
    }
    let loaded: Vec<ArchitectureSpec> = archs.iter().filter_map(|a| a.clone().ok()).collect();
    let report = predict_batch(&loaded, dcn, num_classes, &model);

    let mut rows = Vec::new();
    let mut failures = 0usize;
    let mut results = report.results.into_iter();
    for (path, arch) in architecture_paths.iter().zip(&archs) {
        match arch {
            Ok(_) => {
                let outcome = results.next().expect("one result per loaded architecture");
                match outcome {
                    Ok(accuracy) => rows.push((path.display().to_string(), Ok(accuracy))),
                    Err(e) => {
                        failures += 1;
                        rows.push((path.display().to_string(), Err(e.to_string())));
                    }
                }
            }
            Err(e) => {
                failures += 1;
                rows.push((path.display().to_string(), Err(e.clone())));
            }
        }
    }

    if cli.json {
        let json_rows: Vec<serde_json::Value> = rows
            .iter()
            .map(|(file, outcome)| match outcome {
                Ok(acc) => serde_json::json!({ "file": file, "predicted_accuracy": acc }),
                Err(e) => serde_json::json!({ "file": file, "error": e }),
            })
            .collect();
        println!(
            "{}",
            serde_json::json!({
                "rows": json_rows,
                "networks_per_second": report.networks_per_second,
            })
        );
    } else {
        for (file, outcome) in &rows {
            match outcome {
                Ok(acc) => println!("{file}\t{}", sig6(*acc)),
                Err(e) => eprintln!("{file}\terror: {e}"),
            }
        }
        println!(
            "throughput: {} networks/second ({} networks)",
            sig6(report.networks_per_second),
            loaded.len()
        );
    }

    let m = finish_manifest(
        cli,
        started,
        "predict",
        serde_json::json!({
            "model": model_path.display().to_string(),
            "dcn": dcn,
            "num_classes": num_classes,
            "architectures": architecture_paths
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>(),
        }),
        std::iter::once(model_path.display().to_string())
            .chain(architecture_paths.iter().map(|p| p.display().to_string()))
            .collect(),
        vec![],
    );
    emit_manifest(&m, manifest.as_deref(), None)?;

    if failures > 0 {
        Err(CliError::Input(format!("{failures} architecture(s) failed")))
    } else {
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_evolve(
    cli: &Cli,
    started: Instant,
    model_path: &Path,
    dcn: f64,
    num_classes: u32,
    steps: usize,
    population: usize,
    seed: u64,
    out_dir: &Path,
    manifest: &Option<PathBuf>,
) -> CliResult<()> {
    let model = PredictorModel::load(model_path).map_err(input_err)?;
    std::fs::create_dir_all(out_dir).map_err(input_err)?;
    let cfg = EvolutionConfig {
        population_size: population,
        steps,
        seed,
        ..EvolutionConfig::default()
    };
    let space = SearchSpaceConfig::default();
    let outcome = evolve::run(&cfg, &space, num_classes, &model, dcn).map_err(input_err)?;

    if outcome.population.len() != population {
        return Err(CliError::Internal(format!(
            "population size drifted to {}",
            outcome.population.len()
        )));
    }

    let history_path = out_dir.join("history.tsv");
    let mut history = String::with_capacity(outcome.history.len() * 24);
    history.push_str("step\tbest_predicted_accuracy\n");
    for (step, best) in outcome.history.iter().enumerate() {
        history.push_str(&format!("{}\t{}\n", step + 1, best));
    }
    std::fs::write(&history_path, history).map_err(input_err)?;

    let mut ranked = outcome.population.individuals.clone();
    ranked.sort_by(|a, b| {
        b.predicted_accuracy
            .total_cmp(&a.predicted_accuracy)
            .then(a.id.cmp(&b.id))
    });
    let mut outputs = vec![history_path.display().to_string()];
    let top: Vec<_> = ranked.iter().take(3).collect();
    for (rank, individual) in top.iter().enumerate() {
        let path = out_dir.join(format!("top_{}.json", rank + 1));
        individual.arch.save(&path).map_err(input_err)?;
        outputs.push(path.display().to_string());
    }

    if cli.json {
        let top_json: Vec<serde_json::Value> = top
            .iter()
            .map(|i| {
                serde_json::json!({
                    "id": i.id,
                    "predicted_accuracy": i.predicted_accuracy,
                    "backbone_layers": i.arch.layers.len(),
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::json!({
                "steps": steps,
                "population": population,
                "best_predicted_accuracy": outcome.best.predicted_accuracy,
                "top": top_json,
                "out_dir": out_dir.display().to_string(),
            })
        );
    } else {
        println!(
            "{} steps over a population of {population}; best predicted accuracy {}",
            steps,
            sig6(outcome.best.predicted_accuracy)
        );
        for (rank, individual) in top.iter().enumerate() {
            println!(
                "top {}: id {} predicted accuracy {} ({} backbone layers)",
                rank + 1,
                individual.id,
                sig6(individual.predicted_accuracy),
                individual.arch.layers.len()
            );
        }
    }

    let m = finish_manifest(
        cli,
        started,
        "evolve",
        serde_json::json!({
            "model": model_path.display().to_string(),
            "dcn": dcn,
            "num_classes": num_classes,
            "steps": steps,
            "population": population,
            "seed": seed,
            "out_dir": out_dir.display().to_string(),
            "mutation_weights": cfg.mutation_weights,
        }),
        vec![model_path.display().to_string()],
        outputs,
    );
    emit_manifest(
        &m,
        manifest.as_deref(),
        Some(out_dir.join("manifest.json")),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    cli: &Cli,
    started: Instant,
    model_path: &Path,
    store_path: &Path,
    registry_path: &Path,
    query_dcn: f64,
    tau: f64,
    manifest: &Option<PathBuf>,
) -> CliResult<()> {
    let model = PredictorModel::load(model_path).map_err(input_err)?;
    let registry = DatasetRegistry::load(registry_path).map_err(input_err)?;
    let store = ExperimentStore::open(store_path, registry).map_err(input_err)?;
    let selected = store.filter_by_dcn(query_dcn, &FilterConfig { tau });
    if selected.is_empty() {
        return Err(CliError::EmptySelection(format!(
            "no experiments within tau {tau} of dcn {query_dcn}"
        )));
    }

    let mut predictions = Vec::with_capacity(selected.len());
    let mut truths = Vec::with_capacity(selected.len());
    for record in &selected {
        let dataset = store
            .registry()
            .get(&record.dataset_id)
            .expect("records are validated against the registry");
        let y = crate::predictor::predict(
            &record.architecture,
            dataset.dcn,
            dataset.num_classes,
            &model,
        )
        .map_err(input_err)?;
        predictions.push(y);
        truths.push(record.final_accuracy());
    }
    let series = PairedSeries::new(predictions, truths).map_err(input_err)?;
    let mse_value = mse(&series);
    let tau_value = kendall_tau(&series).map_err(input_err)?;
    let r2_value = r_squared(&series).map_err(input_err)?;

    if cli.json {
        println!(
            "{}",
            serde_json::json!({
                "records": series.len(),
                "mse": mse_value,
                "kendall_tau": tau_value,
                "r_squared": r2_value,
            })
        );
    } else {
        println!("records {}", series.len());
        println!("mse {}", sig6(mse_value));
        println!("kendall_tau {}", sig6(tau_value));
        println!("r_squared {}", sig6(r2_value));
    }

    let m = finish_manifest(
        cli,
        started,
        "evaluate",
        serde_json::json!({
            "model": model_path.display().to_string(),
            "store": store_path.display().to_string(),
            "registry": registry_path.display().to_string(),
            "query_dcn": query_dcn,
            "tau": tau,
        }),
        vec![
            model_path.display().to_string(),
            store_path.display().to_string(),
            registry_path.display().to_string(),
        ],
        vec![],
    );
    emit_manifest(&m, manifest.as_deref(), None)
}
