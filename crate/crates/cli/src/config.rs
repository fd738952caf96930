//! Run configuration: a flat TOML file plus command-line overrides.
//!
//! Every key is optional in the file; command-line flags win over file
//! values, which win over the defaults (C=1, 10 iterations, 5 learners,
//! 50 hidden units, sigmoid, test fraction 0.25, tolerance 0).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ncelm_core::dataio::LabelColumn;
use ncelm_core::elm::Activation;
use ncelm_core::ncelm::NcelmConfig;

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub label_column: LabelColumn,
    pub test_fraction: f64,
    pub ncelm: NcelmConfig,
    pub output_dir: PathBuf,
    pub emit_trace: bool,
}

/// A label column in TOML: either a zero-based index or a header name.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ColumnSpec {
    Index(usize),
    Name(String),
}

impl From<ColumnSpec> for LabelColumn {
    fn from(spec: ColumnSpec) -> Self {
        match spec {
            ColumnSpec::Index(i) => LabelColumn::Index(i),
            ColumnSpec::Name(n) => LabelColumn::Name(n),
        }
    }
}

/// Tolerance in TOML: a float (TOML supports `inf`) or the string "inf".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ToleranceSpec {
    Number(f64),
    Text(String),
}

impl ToleranceSpec {
    fn value(&self) -> Result<f64, String> {
        match self {
            ToleranceSpec::Number(v) => Ok(*v),
            ToleranceSpec::Text(s) => s
                .parse::<f64>()
                .map_err(|_| format!("invalid tolerance '{s}'")),
        }
    }
}

/// The flat key-value file. All fields optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    dataset_path: Option<PathBuf>,
    label_column: Option<ColumnSpec>,
    test_fraction: Option<f64>,
    output_dir: Option<PathBuf>,
    emit_trace: Option<bool>,
    learners: Option<usize>,
    hidden: Option<usize>,
    c: Option<f64>,
    lambda: Option<f64>,
    max_iterations: Option<usize>,
    tolerance: Option<ToleranceSpec>,
    seed: Option<u64>,
    activation: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("cannot parse config file {}: {e}", path.display()))
    }
}

/// Command-line overrides shared by the train and sweep commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV dataset path.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Label column: header name or zero-based index.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Fraction of rows held out for testing.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Directory for the model and trace files.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Diversity penalty strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Ridge regularization.
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Hidden-layer width per learner.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Number of base learners.
    #[arg(long)]
    pub learners: Option<usize>,
    /// Maximum fixed-point iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Base seed; learner s uses seed + s.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Early-stop tolerance on the inter-iteration distance ("inf" allowed).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Hidden activation: sigmoid or tanh.
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Skip writing trace files.
    #[arg(long)]
    pub no_trace: bool,
}

impl RunConfig {
    /// defaults <- file <- flags, then validate.
    pub fn resolve(overrides: &Overrides) -> Result<Self, String> {
        let file = match &overrides.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };

        let dataset_path = overrides
            .dataset
            .clone()
            .or(file.dataset_path)
            .ok_or("no dataset path given (flag --dataset or config dataset_path)")?;
        let label_column = match (&overrides.label_column, file.label_column) {
            (Some(spec), _) => LabelColumn::parse(spec),
            (None, Some(spec)) => spec.into(),
            (None, None) => return Err("no label column given (flag --label-column or config label_column)".into()),
        };
        let activation = match (&overrides.activation, &file.activation) {
            (Some(a), _) => *a,
            (None, Some(s)) => s.parse::<Activation>()?,
            (None, None) => Activation::Sigmoid,
        };
        let tolerance = match (&overrides.tolerance, &file.tolerance) {
            (Some(t), _) => *t,
            (None, Some(spec)) => spec.value()?,
            (None, None) => 0.0,
        };

        let defaults = NcelmConfig::default();
        let ncelm = NcelmConfig {
            learners: overrides.learners.or(file.learners).unwrap_or(defaults.learners),
            hidden: overrides.hidden.or(file.hidden).unwrap_or(defaults.hidden),
            c: overrides.c.or(file.c).unwrap_or(defaults.c),
            lambda: overrides.lambda.or(file.lambda).unwrap_or(defaults.lambda),
            max_iterations: overrides
                .iterations
                .or(file.max_iterations)
                .unwrap_or(defaults.max_iterations),
            tolerance,
            seed: overrides.seed.or(file.seed).unwrap_or(defaults.seed),
            activation,
        };
        ncelm.validate().map_err(|e| e.to_string())?;

        let test_fraction = overrides
            .test_fraction
            .or(file.test_fraction)
            .unwrap_or(0.25);
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(format!("test_fraction must lie in (0, 1), got {test_fraction}"));
        }

        Ok(RunConfig {
            dataset_path,
            label_column,
            test_fraction,
            ncelm,
            output_dir: overrides
                .output_dir
                .clone()
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from(".")),
            emit_trace: if overrides.no_trace {
                false
            } else {
                file.emit_trace.unwrap_or(true)
            },
        })
    }
}
