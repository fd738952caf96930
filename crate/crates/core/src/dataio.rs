//! Tabular classification datasets: CSV ingestion, 1-of-J target encoding,
//! feature standardization and stratified splitting.
//!
//! CSV conventions: RFC-4180-style, UTF-8, mandatory header row, `.` as the
//! decimal separator. Errors name the offending 1-based data row (the first
//! row after the header is row 1) and the column by its header name.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NcelmError, Result};
use crate::rng::SplitMix64;

/// How the label column is selected: by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// Digits parse as a zero-based index, anything else is a name.
    pub fn parse(spec: &str) -> Self {
        match spec.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(spec.to_string()),
        }
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "'{n}'"),
            LabelColumn::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// A labelled classification dataset in numeric form.
///
/// `targets` rows are 1-of-J encoded against the lexicographically sorted
/// `class_labels`; exactly one entry per row is 1, the rest 0.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub class_labels: Vec<String>,
    pub name: String,
}

impl Dataset {
    /// Build a dataset from features and label strings, validating the
    /// one-hot and class-count invariants.
    pub fn from_labels(
        features: Array2<f64>,
        labels: &[String],
        name: impl Into<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(NcelmError::EmptyDataset);
        }
        if n != labels.len() {
            return Err(NcelmError::DimensionMismatch {
                context: "feature rows vs labels".into(),
                expected: n,
                actual: labels.len(),
            });
        }
        let mut class_labels: Vec<String> = labels.to_vec();
        class_labels.sort();
        class_labels.dedup();
        if class_labels.len() < 2 {
            return Err(NcelmError::SingleClass {
                label: class_labels.first().cloned().unwrap_or_default(),
            });
        }
        let j = class_labels.len();
        let mut targets = Array2::zeros((n, j));
        for (row, label) in labels.iter().enumerate() {
            let idx = class_labels
                .binary_search(label)
                .expect("label came from the same list");
            targets[[row, idx]] = 1.0;
        }
        Ok(Self {
            features,
            targets,
            class_labels,
            name: name.into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Label string of row `n`, read off the one-hot target row.
    pub fn label_of(&self, n: usize) -> &str {
        let row = self.targets.row(n);
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = j;
            }
        }
        &self.class_labels[best]
    }

    /// Per-class row counts, in `class_labels` order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for n in 0..self.n_rows() {
            for (j, v) in self.targets.row(n).iter().enumerate() {
                if *v == 1.0 {
                    counts[j] += 1;
                }
            }
        }
        counts
    }

    fn take_rows(&self, rows: &[usize], name_suffix: &str) -> Self {
        let k = self.n_features();
        let j = self.n_classes();
        let mut features = Array2::zeros((rows.len(), k));
        let mut targets = Array2::zeros((rows.len(), j));
        for (out, &src) in rows.iter().enumerate() {
            features.row_mut(out).assign(&self.features.row(src));
            targets.row_mut(out).assign(&self.targets.row(src));
        }
        Self {
            features,
            targets,
            class_labels: self.class_labels.clone(),
            name: format!("{}{}", self.name, name_suffix),
        }
    }
}

/// Per-column centering and scaling parameters fitted on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizationParams {
    pub fn identity(k: usize) -> Self {
        Self {
            mean: vec![0.0; k],
            scale: vec![1.0; k],
        }
    }
}

/// Load a labelled CSV. Distinct label values become the classes, sorted
/// lexicographically; all remaining columns must parse as finite reals.
pub fn load_csv(path: &Path, label: &LabelColumn) -> Result<Dataset> {
    if !path.exists() {
        return Err(NcelmError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.is_empty() {
        return Err(NcelmError::EmptyCsv);
    }
    let label_idx = match label {
        LabelColumn::Name(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            NcelmError::LabelColumnNotFound {
                column: name.clone(),
            }
        })?,
        LabelColumn::Index(i) => {
            if *i >= headers.len() {
                return Err(NcelmError::LabelColumnNotFound {
                    column: format!("#{i}"),
                });
            }
            *i
        }
    };
    let feature_names: Vec<&String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h)
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let data_row = row_idx + 1;
        let label_cell = record.get(label_idx).unwrap_or("");
        if label_cell.is_empty() {
            return Err(NcelmError::EmptyLabel { row: data_row });
        }
        labels.push(label_cell.to_string());
        let mut row = Vec::with_capacity(feature_names.len());
        for (col_idx, cell) in record.iter().enumerate() {
            if col_idx == label_idx {
                continue;
            }
            let parsed = cell.parse::<f64>();
            match parsed {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(NcelmError::NonNumericCell {
                        row: data_row,
                        column: headers[col_idx].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(NcelmError::EmptyDataset);
    }
    let k = rows[0].len();
    let n = rows.len();
    let mut features = Array2::zeros((n, k));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Dataset::from_labels(features, &labels, name)
}

/// Load a feature-only CSV (no label column): every cell must parse as a
/// finite real. Returns the matrix and the header names.
pub fn load_feature_matrix(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    if !path.exists() {
        return Err(NcelmError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.is_empty() {
        return Err(NcelmError::EmptyCsv);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(headers.len());
        for (col_idx, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(NcelmError::NonNumericCell {
                        row: row_idx + 1,
                        column: headers[col_idx].clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(NcelmError::EmptyDataset);
    }
    let mut features = Array2::zeros((rows.len(), headers.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    Ok((features, headers))
}

/// Center each feature column to mean 0 and scale to standard deviation 1.
///
/// The standard deviation uses the population convention (divide by N).
/// Constant columns are centered only; their scale is recorded as 1.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    let n = data.n_rows();
    if n < 2 {
        return Err(NcelmError::TooFewRows { rows: n });
    }
    let k = data.n_features();
    let mut mean = vec![0.0; k];
    let mut scale = vec![1.0; k];
    for col in 0..k {
        let mut acc = 0.0;
        for row in 0..n {
            acc += data.features[[row, col]];
        }
        let m = acc / n as f64;
        let mut var = 0.0;
        for row in 0..n {
            let d = data.features[[row, col]] - m;
            var += d * d;
        }
        var /= n as f64;
        let sd = var.sqrt();
        mean[col] = m;
        scale[col] = if sd > 0.0 { sd } else { 1.0 };
    }
    let params = StandardizationParams { mean, scale };
    let features = apply_standardization(&data.features, &params)?;
    Ok((
        Dataset {
            features,
            targets: data.targets.clone(),
            class_labels: data.class_labels.clone(),
            name: data.name.clone(),
        },
        params,
    ))
}

/// `(x - mean) / scale`, column-wise.
pub fn apply_standardization(
    features: &Array2<f64>,
    params: &StandardizationParams,
) -> Result<Array2<f64>> {
    let k = features.ncols();
    if k != params.mean.len() {
        return Err(NcelmError::DimensionMismatch {
            context: "feature columns vs standardization params".into(),
            expected: params.mean.len(),
            actual: k,
        });
    }
    let mut out = features.clone();
    for col in 0..k {
        let m = params.mean[col];
        let s = params.scale[col];
        for row in 0..features.nrows() {
            out[[row, col]] = (features[[row, col]] - m) / s;
        }
    }
    Ok(out)
}

/// Deterministic stratified split. Each class contributes
/// `round(test_fraction * class_count)` rows to the test part, adjusted by
/// at most one per class (largest-remainder order) so the total equals
/// `round(test_fraction * N)`.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(NcelmError::InvalidFraction {
            fraction: test_fraction,
        });
    }
    let n = data.n_rows();
    let j = data.n_classes();

    // Rows per class, in original order.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); j];
    for row in 0..n {
        for (cls, v) in data.targets.row(row).iter().enumerate() {
            if *v == 1.0 {
                by_class[cls].push(row);
            }
        }
    }

    let total_target = (test_fraction * n as f64).round() as usize;
    let mut test_counts: Vec<usize> = Vec::with_capacity(j);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(j);
    for (cls, rows) in by_class.iter().enumerate() {
        let exact = test_fraction * rows.len() as f64;
        let rounded = exact.round() as usize;
        test_counts.push(rounded.min(rows.len()));
        remainders.push((cls, exact - exact.round()));
    }
    // Largest remainder first for increments, smallest first for decrements;
    // ties break on the lower class index.
    let mut assigned: usize = test_counts.iter().sum();
    if assigned < total_target {
        let mut order = remainders.clone();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (cls, _) in order {
            if assigned == total_target {
                break;
            }
            if test_counts[cls] < by_class[cls].len() {
                test_counts[cls] += 1;
                assigned += 1;
            }
        }
    } else if assigned > total_target {
        let mut order = remainders.clone();
        order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        for (cls, _) in order {
            if assigned == total_target {
                break;
            }
            if test_counts[cls] > 0 {
                test_counts[cls] -= 1;
                assigned -= 1;
            }
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut test_rows: Vec<usize> = Vec::new();
    let mut train_rows: Vec<usize> = Vec::new();
    for (cls, rows) in by_class.iter().enumerate() {
        let mut shuffled = rows.clone();
        rng.shuffle(&mut shuffled);
        let k = test_counts[cls];
        test_rows.extend_from_slice(&shuffled[..k]);
        train_rows.extend_from_slice(&shuffled[k..]);
    }
    // Keep original row order inside each part.
    test_rows.sort_unstable();
    train_rows.sort_unstable();

    if train_rows.is_empty() {
        return Err(NcelmError::EmptySplit {
            part: "train",
            n,
            fraction: test_fraction,
        });
    }
    if test_rows.is_empty() {
        return Err(NcelmError::EmptySplit {
            part: "test",
            n,
            fraction: test_fraction,
        });
    }
    Ok((
        data.take_rows(&train_rows, "-train"),
        data.take_rows(&test_rows, "-test"),
    ))
}
