//! `ncelm`: train, sweep, diagnose and predict with negative-correlation
//! ELM ensembles.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 data error,
//! 4 numerical degeneracy. `NCELM_THREADS` caps the solver thread pool
//! (0 or unset picks the default).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ncelm_core::dataio::{self, Dataset, LabelColumn};
use ncelm_core::ncelm::{self, NcelmConfig, NcelmModel};
use ncelm_core::trace::{self, fmt_sig17, json_float, DiagnosticsReport};
use ncelm_core::NcelmError;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "ncelm", version, about = "Negative Correlation ELM ensembles with convergence diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an ensemble; writes model.json and trace files, prints a
    /// one-line summary.
    Train {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train once per lambda with identical seeds; writes a combined
    /// lambda,r,d_l1 table for plotting.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated lambda values.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
    },
    /// Audit a stored model: apply the update map once and report how far
    /// it moves, plus the lambda bound at that point.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Label column of the dataset: header name or zero-based index.
        #[arg(long)]
        label_column: String,
    },
    /// Predict labels for a CSV; one label per line on stdout.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Label column to exclude from the features (and score against,
        /// reported on stderr). Omit for unlabeled data.
        #[arg(long)]
        label_column: Option<String>,
    },
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 3,
        }
    }
}

impl From<NcelmError> for CliError {
    fn from(e: NcelmError) -> Self {
        let code = match &e {
            NcelmError::NumericalDegeneracy { .. } => 4,
            NcelmError::InvalidConfig { .. } | NcelmError::InvalidFraction { .. } => 2,
            _ => 3,
        };
        Self {
            message: e.to_string(),
            code,
        }
    }
}

fn main() -> ExitCode {
    if let Ok(spec) = std::env::var("NCELM_THREADS") {
        if let Ok(n) = spec.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { overrides } => cmd_train(&overrides),
        Command::Sweep { overrides, lambdas } => cmd_sweep(&overrides, &lambdas),
        Command::Diagnose {
            model,
            dataset,
            label_column,
        } => cmd_diagnose(&model, &dataset, &label_column),
        Command::Predict {
            model,
            dataset,
            label_column,
        } => cmd_predict(&model, &dataset, label_column.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_and_split(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let data = dataio::load_csv(&cfg.dataset_path, &cfg.label_column)?;
    Ok(dataio::split(&data, cfg.test_fraction, cfg.ncelm.seed)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Print to stdout, treating a closed pipe as a normal early exit.
/// Returns false when the consumer is gone.
fn emit_line(text: &str) -> bool {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").is_ok()
}

fn cmd_train(overrides: &Overrides) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(overrides).map_err(CliError::config)?;
    let (train_part, test_part) = load_and_split(&cfg)?;
    let trained = ncelm::train(&train_part, &cfg.ncelm)?;

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    let model_path = cfg.output_dir.join("model.json");
    trained.model.save_json(&model_path)?;
    eprintln!("model written to {}", model_path.display());
    if cfg.emit_trace {
        let csv_path = cfg.output_dir.join("trace.csv");
        write_file(&csv_path, &trace::trace_csv_string(&trained.trace))?;
        let json_path = cfg.output_dir.join("trace.json");
        let mut json_text = serde_json::to_string_pretty(&trace::trace_json(&trained.trace))
            .expect("trace serializes");
        json_text.push('\n');
        write_file(&json_path, &json_text)?;
        eprintln!(
            "trace written to {} and {}",
            csv_path.display(),
            json_path.display()
        );
    }

    let accuracy = trained.model.accuracy(&test_part)?;
    let report =
        DiagnosticsReport::from_trace(&trained.trace, cfg.ncelm.tolerance, cfg.ncelm.lambda);
    println!(
        "accuracy={accuracy} iterations={} final_d={:e} converged={}",
        trained.trace.len(),
        report.final_distance,
        report.converged
    );
    Ok(())
}

fn cmd_sweep(overrides: &Overrides, lambdas: &[f64]) -> Result<(), CliError> {
    if lambdas.is_empty() {
        return Err(CliError::config("sweep requires at least one --lambdas value"));
    }
    let cfg = RunConfig::resolve(overrides).map_err(CliError::config)?;
    let (train_part, _) = load_and_split(&cfg)?;

    let mut rows = String::from("lambda,r,d_l1\n");
    let mut summaries = Vec::new();
    for &lambda in lambdas {
        let ncelm_cfg = NcelmConfig {
            lambda,
            ..cfg.ncelm.clone()
        };
        ncelm_cfg.validate().map_err(CliError::from)?;
        let trained = ncelm::train(&train_part, &ncelm_cfg)?;
        let mut first_below: Option<usize> = None;
        for rec in &trained.trace.records {
            rows.push_str(&format!(
                "{},{},{}\n",
                fmt_sig17(lambda),
                rec.r,
                fmt_sig17(rec.d_l1)
            ));
            if first_below.is_none() && rec.d_l1 < 1e-6 {
                first_below = Some(rec.r);
            }
        }
        summaries.push((lambda, first_below));
    }

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    let sweep_path = cfg.output_dir.join("sweep.csv");
    write_file(&sweep_path, &rows)?;
    eprintln!("sweep table written to {}", sweep_path.display());
    for (lambda, first_below) in summaries {
        let reached = first_below
            .map(|r| r.to_string())
            .unwrap_or_else(|| "none".to_string());
        println!("lambda={lambda:e} first_d_l1_below_1e-6={reached}");
    }
    Ok(())
}

fn cmd_diagnose(
    model_path: &Path,
    dataset_path: &Path,
    label_column: &str,
) -> Result<(), CliError> {
    let model = NcelmModel::load_json(model_path)?;
    let data = dataio::load_csv(dataset_path, &LabelColumn::parse(label_column))?;

    let model_k = model.standardization.mean.len();
    if model_k != data.n_features() {
        return Err(CliError::data(format!(
            "model/dataset mismatch: model K={model_k}, dataset K={}",
            data.n_features()
        )));
    }
    let model_j = model.class_labels.len();
    if model_j != data.n_classes() {
        return Err(CliError::data(format!(
            "model/dataset mismatch: model J={model_j}, dataset J={}",
            data.n_classes()
        )));
    }
    if model.class_labels != data.class_labels {
        return Err(CliError::data(format!(
            "model/dataset mismatch: model classes {:?}, dataset classes {:?}",
            model.class_labels, data.class_labels
        )));
    }

    let std_features = dataio::apply_standardization(&data.features, &model.standardization)?;
    let mut hidden_outputs = Vec::with_capacity(model.learners.len());
    for learner in &model.learners {
        hidden_outputs.push(learner.hidden.map(&std_features)?);
    }
    let map = ncelm::FixedPointMap::new(
        hidden_outputs,
        &data.targets,
        model.config.c,
        model.config.lambda,
    )?;
    let betas: Vec<_> = model.learners.iter().map(|l| l.beta.clone()).collect();
    let diag = map.one_step_diagnostics(&betas)?;

    let summary = format!(
        "d(B, T(B))={}; lambda={:e} {} bound {}",
        fmt_sig17(diag.distance_to_update),
        diag.lambda,
        if diag.lambda_within_bound {
            "within"
        } else {
            "outside"
        },
        fmt_sig17(diag.lambda_bound_prime)
    );
    let value = json!({
        "distance_to_update": json_float(diag.distance_to_update),
        "per_learner_distance": diag.per_learner_distance.iter().map(|v| json_float(*v)).collect::<Vec<_>>(),
        "eta": diag.eta.iter().map(|v| json_float(*v)).collect::<Vec<_>>(),
        "delta_norms": diag.delta_norms.iter().map(|v| json_float(*v)).collect::<Vec<_>>(),
        "lambda": json_float(diag.lambda),
        "lambda_bound_prime": json_float(diag.lambda_bound_prime),
        "lambda_within_bound": diag.lambda_within_bound,
        "summary_text": summary,
    });
    emit_line(&serde_json::to_string_pretty(&value).expect("report serializes"));
    Ok(())
}

fn cmd_predict(
    model_path: &Path,
    dataset_path: &Path,
    label_column: Option<&str>,
) -> Result<(), CliError> {
    let model = NcelmModel::load_json(model_path)?;
    match label_column {
        Some(column) => {
            let data = dataio::load_csv(dataset_path, &LabelColumn::parse(column))?;
            let labels = model.predict(&data.features)?;
            for label in &labels {
                if !emit_line(label) {
                    return Ok(());
                }
            }
            let accuracy = model.accuracy(&data)?;
            eprintln!("accuracy={accuracy}");
        }
        None => {
            let (features, _) = dataio::load_feature_matrix(dataset_path)?;
            let labels = model.predict(&features)?;
            for label in &labels {
                if !emit_line(label) {
                    return Ok(());
                }
            }
        }
    }
    Ok(())
}
