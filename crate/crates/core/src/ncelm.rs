//! Negative-correlation ensemble training as a fixed-point iteration.
//!
//! S base learners share the training targets but carry independent random
//! hidden layers. Each step freezes the ensemble output
//! `F = (1/S) sum_s H^(s) beta^(s)` and re-solves every learner against it:
//! per class column `f` the system is
//! `(I/C + H'H + (lambda/C)(H'f)(H'f)') beta = H'Y_j`,
//! a rank-one shift of the plain ridge system. Iteration starts from the
//! all-zero weight state, whose ensemble output is zero, so the first step
//! is exactly the independent ridge solution regardless of lambda.
//!
//! The update is synchronous: all learners see the same frozen `F`, so
//! the per-learner solves are order-independent and run in parallel.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{self, Dataset, StandardizationParams};
use crate::diagnostics::{self, RankTwoDelta};
use crate::elm::{ridge_factor, Activation, BaseLearner, HiddenLayer};
use crate::error::{NcelmError, Result};
use crate::linalg::{self, Cholesky, RankOneShift};
use crate::trace::{build_trace, ConvergenceTrace, PerClassDetail, RawIteration};

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NcelmConfig {
    /// Number of base learners (S).
    pub learners: usize,
    /// Hidden-layer width (D).
    pub hidden: usize,
    /// Ridge regularization (C); larger C regularizes less.
    pub c: f64,
    /// Diversity penalty strength.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Stop once the inter-iteration squared-L2 distance falls to this
    /// value; 0 keeps the pure fixed-iteration-count behavior for anything
    /// that has not collapsed to an exact fixed point.
    #[serde(with = "tolerance_serde")]
    pub tolerance: f64,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for NcelmConfig {
    fn default() -> Self {
        Self {
            learners: 5,
            hidden: 50,
            c: 1.0,
            lambda: 1e-6,
            max_iterations: 10,
            tolerance: 0.0,
            seed: 1,
            activation: Activation::Sigmoid,
        }
    }
}

impl NcelmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learners < 1 {
            return Err(NcelmError::InvalidConfig {
                reason: "learner count must be at least 1".into(),
            });
        }
        if self.hidden < 1 {
            return Err(NcelmError::InvalidConfig {
                reason: "hidden size must be at least 1".into(),
            });
        }
        if self.c <= 0.0 || !self.c.is_finite() {
            return Err(NcelmError::InvalidConfig {
                reason: format!("C must be a positive finite real, got {}", self.c),
            });
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(NcelmError::InvalidConfig {
                reason: format!("lambda must be a nonnegative finite real, got {}", self.lambda),
            });
        }
        if self.max_iterations < 1 {
            return Err(NcelmError::InvalidConfig {
                reason: "max_iterations must be at least 1".into(),
            });
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(NcelmError::InvalidConfig {
                reason: format!("tolerance must be nonnegative, got {}", self.tolerance),
            });
        }
        Ok(())
    }
}

/// Tolerance may be infinite ("stop after the first iteration"), which
/// JSON numbers cannot carry; serialize infinities as the string "inf".
mod tolerance_serde {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct TolVisitor;

    impl Visitor<'_> for TolVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.write_str("a number or the string \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => other
                    .parse::<f64>()
                    .map_err(|_| E::custom(format!("invalid tolerance '{other}'"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(TolVisitor)
    }
}

/// Mutable training state: the learners (fixed hidden layers, current
/// output weights), the iteration counter, and the cached hidden outputs
/// over the training set.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub learners: Vec<BaseLearner>,
    pub iteration: usize,
    pub hidden_outputs: Vec<Array2<f64>>,
}

impl EnsembleState {
    /// Zero-weight bootstrap state: builds the hidden layers (seeds
    /// `seed + s` for s = 0..S), caches their outputs on the training
    /// features, and sets every beta to zero.
    pub fn initial(features: &Array2<f64>, n_classes: usize, cfg: &NcelmConfig) -> Result<Self> {
        cfg.validate()?;
        let k = features.ncols();
        let mut learners = Vec::with_capacity(cfg.learners);
        let mut hidden_outputs = Vec::with_capacity(cfg.learners);
        for s in 0..cfg.learners {
            let hidden = HiddenLayer::new(
                cfg.seed.wrapping_add(s as u64),
                k,
                cfg.hidden,
                cfg.activation,
            );
            hidden_outputs.push(hidden.map(features)?);
            learners.push(BaseLearner {
                hidden,
                beta: Array2::zeros((cfg.hidden, n_classes)),
            });
        }
        Ok(Self {
            learners,
            iteration: 0,
            hidden_outputs,
        })
    }

    pub fn betas(&self) -> Vec<Array2<f64>> {
        self.learners.iter().map(|l| l.beta.clone()).collect()
    }
}

/// Spectral-norm data of one learner's hidden output, reused by the
/// per-iteration diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct LearnerNorms {
    /// Largest singular value of `H`.
    pub h_spectral: f64,
    /// `||I + C H'H|| = 1 + C ||H||^2`.
    pub op_norm_term: f64,
}

/// The synchronous ensemble update as a map over stacked weight states.
/// Holds everything that stays fixed across iterations: hidden outputs,
/// one ridge factorization per learner, and the ridge right-hand sides.
pub struct FixedPointMap {
    hidden_outputs: Vec<Array2<f64>>,
    base_factors: Vec<Cholesky>,
    rhs: Vec<Array2<f64>>,
    n_rows: usize,
    n_classes: usize,
    c: f64,
    lambda: f64,
}

impl FixedPointMap {
    pub fn new(
        hidden_outputs: Vec<Array2<f64>>,
        targets: &Array2<f64>,
        c: f64,
        lambda: f64,
    ) -> Result<Self> {
        if hidden_outputs.is_empty() {
            return Err(NcelmError::InvalidConfig {
                reason: "at least one learner is required".into(),
            });
        }
        let n_rows = targets.nrows();
        let n_classes = targets.ncols();
        let mut base_factors = Vec::with_capacity(hidden_outputs.len());
        let mut rhs = Vec::with_capacity(hidden_outputs.len());
        for (s, h) in hidden_outputs.iter().enumerate() {
            if h.nrows() != n_rows {
                return Err(NcelmError::DimensionMismatch {
                    context: format!("hidden output rows for learner {s}"),
                    expected: n_rows,
                    actual: h.nrows(),
                });
            }
            base_factors.push(
                ridge_factor(h, c).map_err(|e| tag_lambda(tag_learner(e, s), lambda))?,
            );
            rhs.push(linalg::mat_t_mul(h, targets));
        }
        Ok(Self {
            hidden_outputs,
            base_factors,
            rhs,
            n_rows,
            n_classes,
            c,
            lambda,
        })
    }

    pub fn learner_count(&self) -> usize {
        self.hidden_outputs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn hidden_output(&self, s: usize) -> &Array2<f64> {
        &self.hidden_outputs[s]
    }

    pub fn base_factor(&self, s: usize) -> &Cholesky {
        &self.base_factors[s]
    }

    /// `H^(s)' f` for one output column: the penalty direction entering
    /// learner `s`'s rank-one shift.
    pub fn penalty_vector(&self, s: usize, f_column: &Array1<f64>) -> Array1<f64> {
        linalg::mat_t_vec(&self.hidden_outputs[s], f_column)
    }

    /// All-zero stacked weights, the iteration's starting point.
    pub fn initial_point(&self) -> Vec<Array2<f64>> {
        self.hidden_outputs
            .iter()
            .map(|h| Array2::zeros((h.ncols(), self.n_classes)))
            .collect()
    }

    /// Ensemble output `(1/S) sum_s H^(s) beta^(s)`, accumulated in
    /// learner order.
    pub fn ensemble_output(&self, betas: &[Array2<f64>]) -> Array2<f64> {
        let mut acc = Array2::zeros((self.n_rows, self.n_classes));
        for (h, beta) in self.hidden_outputs.iter().zip(betas.iter()) {
            let p = linalg::mat_mul(h, beta);
            acc += &p;
        }
        let inv_s = 1.0 / self.learner_count() as f64;
        acc.mapv_inplace(|x| x * inv_s);
        acc
    }

    /// Solve every learner against a frozen ensemble output. Per class
    /// column `f_j` the system matrix is the learner's ridge matrix plus
    /// the rank-one term `(lambda/C)(H'f_j)(H'f_j)'`; the cached
    /// factorization absorbs it through a Sherman-Morrison correction,
    /// which vanishes identically when `lambda = 0` or `f_j = 0`.
    pub fn solve_at(&self, frozen_output: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        if frozen_output.dim() != (self.n_rows, self.n_classes) {
            return Err(NcelmError::DimensionMismatch {
                context: "frozen ensemble output".into(),
                expected: self.n_rows * self.n_classes,
                actual: frozen_output.len(),
            });
        }
        let coeff = self.lambda / self.c;
        (0..self.learner_count())
            .into_par_iter()
            .map(|s| {
                let h = &self.hidden_outputs[s];
                let base = &self.base_factors[s];
                let d = h.ncols();
                let mut beta = Array2::zeros((d, self.n_classes));
                for cls in 0..self.n_classes {
                    let f_col = frozen_output.column(cls).to_owned();
                    let g = linalg::mat_t_vec(h, &f_col);
                    let shift = RankOneShift::new(base, g, coeff);
                    let rhs_col = self.rhs[s].column(cls).to_owned();
                    let x = crate::linalg::SpdSolve::solve_vec(&shift, &rhs_col);
                    beta.column_mut(cls).assign(&x);
                }
                Ok(beta)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| tag_learner(e, usize::MAX))
    }

    /// One application of the update map: freeze the ensemble output of
    /// `betas`, then re-solve every learner against it.
    pub fn apply(&self, betas: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        let f = self.ensemble_output(betas);
        self.solve_at(&f)
    }

    /// Spectral data per learner (power iteration on each `H`).
    pub fn learner_norms(&self) -> Vec<LearnerNorms> {
        self.hidden_outputs
            .iter()
            .map(|h| {
                let sigma = diagnostics::spectral_norm(h).value;
                LearnerNorms {
                    h_spectral: sigma,
                    op_norm_term: 1.0 + self.c * sigma * sigma,
                }
            })
            .collect()
    }

    /// Diagnostics for one map application from an arbitrary weight state
    /// (used to audit a stored model): distance moved, per-learner eta,
    /// per-class output-delta norms and the resulting lambda bound. With
    /// only one step observable, the single delta plays both roles in the
    /// bound.
    pub fn one_step_diagnostics(&self, betas: &[Array2<f64>]) -> Result<OneStepDiagnostics> {
        let f_b = self.ensemble_output(betas);
        let updated = self.solve_at(&f_b)?;
        let f_updated = self.ensemble_output(&updated);
        let (distance, per_learner_distance) = diagnostics::distance_l2(betas, &updated)?;

        let delta_norms: Vec<f64> = (0..self.n_classes)
            .map(|cls| RankTwoDelta::from_outputs(&f_updated, &f_b, cls).spectral_norm())
            .collect();
        let norms = self.learner_norms();
        let coeff = self.lambda / self.c;

        let mut eta = Vec::with_capacity(self.learner_count());
        let mut bound = f64::INFINITY;
        for (s, learner_norms) in norms.iter().enumerate() {
            let mut eta_max = f64::NEG_INFINITY;
            for (cls, delta_norm) in delta_norms.iter().enumerate() {
                let g_b = self.penalty_vector(s, &f_b.column(cls).to_owned());
                let g_updated = self.penalty_vector(s, &f_updated.column(cls).to_owned());
                let inv_b = diagnostics::inverse_spectral_norm(&RankOneShift::new(
                    &self.base_factors[s],
                    g_b.clone(),
                    coeff,
                ))
                .value;
                let inv_updated = diagnostics::inverse_spectral_norm(&RankOneShift::new(
                    &self.base_factors[s],
                    g_updated,
                    coeff,
                ))
                .value;
                let eta_sj = diagnostics::eta_ratio(inv_b, inv_updated);
                let penalty = linalg::dot(g_b.view(), g_b.view());
                let b = diagnostics::lambda_bound_prime(
                    learner_norms.op_norm_term,
                    penalty,
                    eta_sj,
                    *delta_norm,
                    *delta_norm,
                );
                eta_max = eta_max.max(eta_sj);
                bound = bound.min(b);
            }
            eta.push(eta_max);
        }
        Ok(OneStepDiagnostics {
            distance_to_update: distance,
            per_learner_distance,
            eta,
            delta_norms,
            lambda_bound_prime: bound,
            lambda: self.lambda,
            lambda_within_bound: self.lambda < bound,
        })
    }
}

/// Result of auditing a stored weight state with one map application.
#[derive(Debug, Clone)]
pub struct OneStepDiagnostics {
    pub distance_to_update: f64,
    pub per_learner_distance: Vec<f64>,
    pub eta: Vec<f64>,
    pub delta_norms: Vec<f64>,
    pub lambda_bound_prime: f64,
    pub lambda: f64,
    pub lambda_within_bound: bool,
}

fn tag_learner(e: NcelmError, s: usize) -> NcelmError {
    match e {
        NcelmError::NumericalDegeneracy {
            learner,
            iteration,
            lambda,
            c,
            detail,
        } => NcelmError::NumericalDegeneracy {
            learner: if s == usize::MAX { learner } else { s },
            iteration,
            lambda,
            c,
            detail,
        },
        other => other,
    }
}

fn tag_lambda(e: NcelmError, value: f64) -> NcelmError {
    match e {
        NcelmError::NumericalDegeneracy {
            learner,
            iteration,
            c,
            detail,
            ..
        } => NcelmError::NumericalDegeneracy {
            learner,
            iteration,
            lambda: value,
            c,
            detail,
        },
        other => other,
    }
}

fn tag_iteration(e: NcelmError, r: usize) -> NcelmError {
    match e {
        NcelmError::NumericalDegeneracy {
            learner,
            lambda,
            c,
            detail,
            ..
        } => NcelmError::NumericalDegeneracy {
            learner,
            iteration: r,
            lambda,
            c,
            detail,
        },
        other => other,
    }
}

/// Ensemble output of a state's current weights over its cached hidden
/// outputs.
pub fn ensemble_output(state: &EnsembleState) -> Array2<f64> {
    let n = state.hidden_outputs[0].nrows();
    let j = state.learners[0].beta.ncols();
    let mut acc = Array2::zeros((n, j));
    for (h, learner) in state.hidden_outputs.iter().zip(state.learners.iter()) {
        let p = linalg::mat_mul(h, &learner.beta);
        acc += &p;
    }
    let inv_s = 1.0 / state.learners.len() as f64;
    acc.mapv_inplace(|x| x * inv_s);
    acc
}

/// One synchronous update: freeze the ensemble output of the current
/// state, re-solve every learner against it, advance the iteration
/// counter. Hidden layers and cached hidden outputs are untouched.
pub fn ncelm_step(
    state: &EnsembleState,
    targets: &Array2<f64>,
    cfg: &NcelmConfig,
) -> Result<EnsembleState> {
    let map = FixedPointMap::new(state.hidden_outputs.clone(), targets, cfg.c, cfg.lambda)?;
    let betas = map
        .apply(&state.betas())
        .map_err(|e| tag_iteration(e, state.iteration + 1))?;
    let learners = state
        .learners
        .iter()
        .zip(betas)
        .map(|(l, beta)| BaseLearner {
            hidden: l.hidden.clone(),
            beta,
        })
        .collect();
    Ok(EnsembleState {
        learners,
        iteration: state.iteration + 1,
        hidden_outputs: state.hidden_outputs.clone(),
    })
}

/// A trained ensemble ready for prediction, plus everything needed to
/// reproduce it.
#[derive(Debug, Clone)]
pub struct NcelmModel {
    pub learners: Vec<BaseLearner>,
    pub config: NcelmConfig,
    pub standardization: StandardizationParams,
    pub class_labels: Vec<String>,
}

impl NcelmModel {
    /// Ensemble decision scores on raw (unstandardized) features.
    pub fn decision_scores(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let std_features = dataio::apply_standardization(features, &self.standardization)?;
        let n = std_features.nrows();
        let j = self.class_labels.len();
        let mut acc = Array2::zeros((n, j));
        for learner in &self.learners {
            let h = learner.hidden.map(&std_features)?;
            let p = linalg::mat_mul(&h, &learner.beta);
            acc += &p;
        }
        let inv_s = 1.0 / self.learners.len() as f64;
        acc.mapv_inplace(|x| x * inv_s);
        Ok(acc)
    }

    /// Predicted labels: per row the class with the highest averaged
    /// score, ties broken toward the lowest class index.
    pub fn predict(&self, features: &Array2<f64>) -> Result<Vec<String>> {
        let scores = self.decision_scores(features)?;
        let mut labels = Vec::with_capacity(scores.nrows());
        for row in scores.rows() {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            labels.push(self.class_labels[best].clone());
        }
        Ok(labels)
    }

    /// Fraction of rows whose predicted label matches the dataset label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.n_rows() == 0 {
            return Err(NcelmError::EmptyDataset);
        }
        let predicted = self.predict(&data.features)?;
        let mut correct = 0usize;
        for (i, p) in predicted.iter().enumerate() {
            if p == data.label_of(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.n_rows() as f64)
    }
}

/// Training output: the model plus its convergence trace.
#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub model: NcelmModel,
    pub trace: ConvergenceTrace,
}

/// Train on a dataset: standardize features, build the learners, iterate
/// the synchronous update from the zero state until `max_iterations` or
/// until the inter-iteration distance reaches `tolerance`, recording the
/// full diagnostics trace.
pub fn train(data: &Dataset, cfg: &NcelmConfig) -> Result<TrainedEnsemble> {
    cfg.validate()?;
    if data.n_rows() == 0 {
        return Err(NcelmError::EmptyDataset);
    }
    let (std_data, standardization) = dataio::standardize(data)?;
    let n = std_data.n_rows();
    let k = std_data.n_features();
    let n_classes = std_data.n_classes();
    let s_count = cfg.learners;

    let layers: Vec<HiddenLayer> = (0..s_count)
        .map(|s| {
            HiddenLayer::new(
                cfg.seed.wrapping_add(s as u64),
                k,
                cfg.hidden,
                cfg.activation,
            )
        })
        .collect();
    let mut hidden_outputs = Vec::with_capacity(s_count);
    for layer in &layers {
        hidden_outputs.push(layer.map(&std_data.features)?);
    }
    let map = FixedPointMap::new(hidden_outputs, &std_data.targets, cfg.c, cfg.lambda)?;
    let norms = map.learner_norms();
    let coeff = cfg.lambda / cfg.c;

    let mut betas = map.initial_point();
    let mut f_prev: Array2<f64> = Array2::zeros((n, n_classes));
    // ||A^{-1}|| at the previous output; the zero bootstrap output makes
    // the initial value the plain ridge system's, identical across classes.
    let mut inv_prev: Vec<Vec<f64>> = (0..s_count)
        .map(|s| {
            let base = diagnostics::inverse_spectral_norm(map.base_factor(s)).value;
            vec![base; n_classes]
        })
        .collect();
    // Output-delta norms one iteration back. Before the first step there
    // is no previous delta; the first record lets its own delta play both
    // roles in the bound, matching the one-step audit convention.
    let mut delta_prev_norms: Option<Vec<f64>> = None;
    let mut history: Vec<RawIteration> = Vec::new();

    for r in 1..=cfg.max_iterations {
        let new_betas = map.solve_at(&f_prev).map_err(|e| tag_iteration(e, r))?;
        let f_curr = map.ensemble_output(&new_betas);
        let (d_l2, per_learner_d) = diagnostics::distance_l2(&betas, &new_betas)?;
        let d_l1 = diagnostics::distance_l1(&betas, &new_betas)?;
        let delta_curr_norms: Vec<f64> = (0..n_classes)
            .map(|cls| RankTwoDelta::from_outputs(&f_curr, &f_prev, cls).spectral_norm())
            .collect();

        let mut eta_sj = vec![vec![0.0; n_classes]; s_count];
        let mut bound_sj = vec![vec![0.0; n_classes]; s_count];
        let mut penalty_sj = vec![vec![0.0; n_classes]; s_count];
        let mut corr_sj = vec![vec![None; n_classes]; s_count];
        for s in 0..s_count {
            for cls in 0..n_classes {
                let g_prev = map.penalty_vector(s, &f_prev.column(cls).to_owned());
                let g_curr = map.penalty_vector(s, &f_curr.column(cls).to_owned());
                let shift_curr = RankOneShift::new(map.base_factor(s), g_curr, coeff);
                let inv_curr = diagnostics::inverse_spectral_norm(&shift_curr).value;
                let eta = diagnostics::eta_ratio(inv_prev[s][cls], inv_curr);
                let penalty = linalg::dot(g_prev.view(), g_prev.view());
                let delta_older = delta_prev_norms
                    .as_ref()
                    .map(|v| v[cls])
                    .unwrap_or(delta_curr_norms[cls]);
                bound_sj[s][cls] = diagnostics::lambda_bound_prime(
                    norms[s].op_norm_term,
                    penalty,
                    eta,
                    delta_curr_norms[cls],
                    delta_older,
                );
                let alpha = inv_prev[s][cls] * inv_prev[s][cls] * norms[s].h_spectral.powi(4);
                corr_sj[s][cls] = diagnostics::delta_correction_bound(
                    alpha,
                    delta_curr_norms[cls],
                    cfg.c,
                    cfg.lambda,
                );
                eta_sj[s][cls] = eta;
                penalty_sj[s][cls] = penalty;
                inv_prev[s][cls] = inv_curr;
            }
        }
        let eta_per_learner: Vec<f64> = eta_sj
            .iter()
            .map(|row| row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .collect();
        let bound_min = bound_sj
            .iter()
            .flat_map(|row| row.iter())
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let delta_norm_max = delta_curr_norms.iter().fold(0.0_f64, |a, &b| a.max(b));

        history.push(RawIteration {
            d_l2,
            d_l1,
            per_learner_d,
            delta_norm: delta_norm_max,
            lambda_bound_prime: bound_min,
            eta: eta_per_learner,
            per_class: PerClassDetail {
                delta_norms: delta_curr_norms.clone(),
                eta: eta_sj,
                lambda_bound_prime: bound_sj,
                penalty_norms: penalty_sj,
                correction_bound: corr_sj,
            },
        });

        betas = new_betas;
        f_prev = f_curr;
        delta_prev_norms = Some(delta_curr_norms);
        if d_l2 <= cfg.tolerance {
            break;
        }
    }

    let trace = build_trace(history, cfg.clone());
    let learners: Vec<BaseLearner> = layers
        .into_iter()
        .zip(betas)
        .map(|(hidden, beta)| BaseLearner { hidden, beta })
        .collect();
    Ok(TrainedEnsemble {
        model: NcelmModel {
            learners,
            config: cfg.clone(),
            standardization,
            class_labels: std_data.class_labels,
        },
        trace,
    })
}
