//! The three evaluation protocols. Each asserts structurally, through an
//! [`IsolationGuard`], that no test index reaches a training or search
//! partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::folds::{complement, derive_seed, stratified_folds, IsolationGuard};
use crate::gbdt::{train, ClassWeight, DetectorConfig, DetectorModel};
use crate::metrics::{auc, tune_threshold, Confusion};
use crate::search::{random_search, FoldWeight, SearchGrid, SearchOptions, SearchResult};

const OUTER_FOLD_STREAM: u64 = 10;
const SEARCH_STREAM: u64 = 11;
const FIT_STREAM: u64 = 12;
const SPLIT_STREAM: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub grid: SearchGrid,
    pub n_iters: usize,
    pub inner_folds: usize,
    pub seed: u64,
    /// Settings the grid does not cover.
    pub base: DetectorConfig,
    /// Fraction of the training set held out for early stopping in the
    /// standard split.
    pub validation_fraction: f64,
    /// Pick the decision threshold on the validation slice instead of 0.5.
    pub tune_threshold: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            grid: SearchGrid::default(),
            n_iters: 50,
            inner_folds: 5,
            seed: 0,
            base: DetectorConfig::default(),
            validation_fraction: 0.15,
            tune_threshold: false,
        }
    }
}

impl ProtocolOptions {
    fn search(&self, stream_index: u64) -> SearchOptions {
        SearchOptions {
            n_iters: self.n_iters,
            n_folds: self.inner_folds,
            seed: derive_seed(self.seed, SEARCH_STREAM, stream_index),
            base: self.base.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub id: String,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub n_train: usize,
    pub n_negative: usize,
    pub n_positive: usize,
    /// Positive weight of the final fit on this fold's training partition.
    pub class_weight: f64,
    pub best_config: DetectorConfig,
    pub search_f1: f64,
    /// Inner training folds of the winning trial.
    pub inner_folds: Vec<FoldWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub seed: u64,
    pub n_samples: usize,
    pub auc: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    /// Number of final models fitted on outer training partitions.
    pub outer_fits: usize,
    pub folds: Vec<FoldReport>,
    /// Held-out predictions in index order.
    pub predictions: Vec<Prediction>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    fn from_predictions(
        protocol: &str,
        seed: u64,
        mut predictions: Vec<Prediction>,
        threshold: f64,
        folds: Vec<FoldReport>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        predictions.sort_by_key(|p| p.index);
        let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
        let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        let confusion = Confusion::at_threshold(&scores, &labels, threshold)?;
        Ok(Self {
            protocol: protocol.into(),
            seed,
            n_samples: predictions.len(),
            auc: auc(&scores, &labels)?,
            recall: confusion.recall(),
            precision: confusion.precision(),
            f1: confusion.f1(),
            threshold,
            confusion,
            outer_fits: folds.len(),
            folds,
            predictions,
            warnings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::malformed("report", e.to_string()))
    }

    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let c = &self.confusion;
        let rows = [
            ("protocol", self.protocol.clone()),
            ("samples", self.n_samples.to_string()),
            ("outer fits", self.outer_fits.to_string()),
            ("AUC", format!("{:.4}", self.auc)),
            ("recall", format!("{:.4}", self.recall)),
            ("precision", format!("{:.4}", self.precision)),
            ("F1", format!("{:.4}", self.f1)),
            ("threshold", format!("{:.4}", self.threshold)),
            ("TP / FP / TN / FN", format!("{} / {} / {} / {}", c.tp, c.fp, c.tn, c.fn_)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn outcome(
    data: &Dataset,
    model: &DetectorModel,
    test: &[usize],
) -> Result<Vec<Prediction>> {
    test.iter()
        .map(|&i| {
            Ok(Prediction {
                index: i,
                id: data.ids[i].clone(),
                label: data.labels[i],
                score: model.predict(&data.rows[i])?,
            })
        })
        .collect()
}

/// Search, fit and predict for one held-out set.
fn evaluate_fold(
    data: &Dataset,
    fold: usize,
    train_idx: &[usize],
    test_idx: &[usize],
    grid: &SearchGrid,
    opts: &ProtocolOptions,
) -> Result<(FoldReport, Vec<Prediction>)> {
    let guard = IsolationGuard::new(test_idx);
    guard.check(train_idx)?;
    let search = random_search(data, train_idx, grid, &opts.search(fold as u64), Some(&guard))?;
    let config = DetectorConfig {
        seed: derive_seed(opts.seed, FIT_STREAM, fold as u64),
        ..search.best.clone()
    };
    let model = train(data, train_idx, None, &config)?;
    let report = FoldReport {
        fold,
        test_indices: test_idx.to_vec(),
        n_train: train_idx.len(),
        n_negative: model.provenance.n_negative,
        n_positive: model.provenance.n_positive,
        class_weight: model.class_weight,
        best_config: search.best,
        search_f1: search.trials[search.best_trial].f1,
        inner_folds: search.trials[search.best_trial].fold_weights.clone(),
    };
    Ok((report, outcome(data, &model, test_idx)?))
}

fn check_coverage(n: usize, predictions: &[Prediction]) -> Result<()> {
    let mut seen = vec![0u32; n];
    for p in predictions {
        seen[p.index] += 1;
    }
    match seen.iter().position(|&c| c != 1) {
        Some(i) => Err(Error::malformed(
            "protocol",
            format!("sample {i} evaluated {} times", seen[i]),
        )),
        None => Ok(()),
    }
}

/// Searches `train_idx`, then fits the winner on a stratified
/// `1 − validation_fraction` share of it, early-stopping on the rest. Every
/// partition is checked against `guard`.
pub fn search_and_fit(
    data: &Dataset,
    train_idx: &[usize],
    opts: &ProtocolOptions,
    guard: &IsolationGuard,
) -> Result<(DetectorModel, SearchResult)> {
    guard.check(train_idx)?;
    if !(opts.validation_fraction > 0.0 && opts.validation_fraction < 1.0) {
        return Err(Error::InvalidConfig("validation_fraction must be in (0, 1)".into()));
    }
    let search = random_search(data, train_idx, &opts.grid, &opts.search(0), Some(guard))?;

    // Stratified hold-out: the first ⌈fraction·n_c⌉ of each shuffled class,
    // leaving at least one sample of each class for fitting.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, SPLIT_STREAM, 0));
    let mut fit = Vec::new();
    let mut valid = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = train_idx.iter().copied().filter(|&i| data.labels[i] == class).collect();
        members.shuffle(&mut rng);
        let n_valid = ((opts.validation_fraction * members.len() as f64).ceil() as usize)
            .min(members.len().saturating_sub(1));
        valid.extend_from_slice(&members[..n_valid]);
        fit.extend_from_slice(&members[n_valid..]);
    }
    fit.sort_unstable();
    valid.sort_unstable();
    guard.check(&fit)?;
    guard.check(&valid)?;

    let config = DetectorConfig {
        seed: derive_seed(opts.seed, FIT_STREAM, 0),
        ..search.best.clone()
    };
    let mut model = train(data, &fit, Some(&valid), &config)?;
    if opts.tune_threshold {
        let scores = model.predict_rows(data, &valid)?;
        let labels: Vec<u8> = valid.iter().map(|&i| data.labels[i]).collect();
        model.threshold = tune_threshold(&scores, &labels)?;
    }
    model.provenance.seed = opts.seed;
    Ok((model, search))
}

/// Protocol I: search on `train_idx`, fit on a stratified 85% of it with the
/// rest for early stopping, and score `test_idx`. Returns the report and the
/// final model.
pub fn protocol_standard(
    data: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    opts: &ProtocolOptions,
) -> Result<(EvalReport, DetectorModel)> {
    let guard = IsolationGuard::new(test_idx);
    let (mut model, search) = search_and_fit(data, train_idx, opts, &guard)?;
    model.provenance.protocol = "standard".into();

    let fold = FoldReport {
        fold: 0,
        test_indices: test_idx.to_vec(),
        n_train: model.provenance.n_train,
        n_negative: model.provenance.n_negative,
        n_positive: model.provenance.n_positive,
        class_weight: model.class_weight,
        best_config: search.best,
        search_f1: search.trials[search.best_trial].f1,
        inner_folds: search.trials[search.best_trial].fold_weights.clone(),
    };
    let report = EvalReport::from_predictions(
        "standard",
        opts.seed,
        outcome(data, &model, test_idx)?,
        model.threshold,
        vec![fold],
        Vec::new(),
    )?;
    Ok((report, model))
}

/// Protocol II: stratified `k`-fold cross-validation with a fresh search per
/// fold and metrics over the pooled held-out predictions.
pub fn protocol_stratified_kfold(data: &Dataset, k: usize, opts: &ProtocolOptions) -> Result<EvalReport> {
    let all = data.all_indices();
    let folds = stratified_folds(&data.labels, &all, k, derive_seed(opts.seed, OUTER_FOLD_STREAM, 0))?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| evaluate_fold(data, f, &complement(&all, test), test, &opts.grid, opts))
        .collect::<Result<Vec<_>>>()?;
    let (reports, preds): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let predictions: Vec<Prediction> = preds.into_iter().flatten().collect();
    check_coverage(data.len(), &predictions)?;
    EvalReport::from_predictions("stratified_kfold", opts.seed, predictions, 0.5, reports, Vec::new())
}

/// Protocol III: nested leave-one-out. Each of the `N` outer fits searches
/// only the other `N − 1` samples with `auto` class weighting. Outer training
/// sets with a single class are skipped with a warning.
pub fn protocol_nested_loocv(data: &Dataset, opts: &ProtocolOptions) -> Result<EvalReport> {
    let n = data.len();
    if n < 10 {
        return Err(Error::TooFewSamples { need: 10, got: n });
    }
    let (n_neg, n_pos) = data.class_counts(&data.all_indices());
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            label: u8::from(n_pos > 0),
        });
    }
    let grid = SearchGrid {
        positive_class_weight: vec![ClassWeight::Auto],
        ..opts.grid.clone()
    };
    let all = data.all_indices();
    let results = (0..n)
        .into_par_iter()
        .map(|i| {
            let train_idx = complement(&all, &[i]);
            let (neg, pos) = data.class_counts(&train_idx);
            if neg == 0 || pos == 0 {
                return Ok(None);
            }
            evaluate_fold(data, i, &train_idx, &[i], &grid, opts).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    let mut warnings = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some((report, preds)) => {
                reports.push(report);
                predictions.extend(preds);
            }
            None => warnings.push(format!("skipped sample {i}: its training set has a single class")),
        }
    }
    EvalReport::from_predictions("nested_loocv", opts.seed, predictions, 0.5, reports, warnings)
}
