use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::folds::{complement, derive_seed, stratified_folds, IsolationGuard};
use crate::gbdt::{train, ClassWeight, DetectorConfig};
use crate::metrics::Confusion;

const FOLD_STREAM: u64 = 1;
const TRIAL_STREAM: u64 = 2;

/// Candidate values per hyperparameter. A search samples each axis
/// independently and uniformly, which is uniform over the full grid.
///
/// Defaults: depth 3 to 8, trees {50, 100, 200, 400}, learning rate
/// {0.01, 0.03, 0.1, 0.3}, subsample and colsample {0.6, 0.8, 1.0},
/// min child weight 1, class weight `auto`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample: Vec<f64>,
    pub min_child_weight: Vec<f64>,
    pub positive_class_weight: Vec<ClassWeight>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            n_trees: vec![50, 100, 200, 400],
            max_depth: (3..=8).collect(),
            learning_rate: vec![0.01, 0.03, 0.1, 0.3],
            subsample: vec![0.6, 0.8, 1.0],
            colsample: vec![0.6, 0.8, 1.0],
            min_child_weight: vec![1.0],
            positive_class_weight: vec![ClassWeight::Auto],
        }
    }
}

impl SearchGrid {
    /// Grid with a single point.
    pub fn single(c: &DetectorConfig) -> Self {
        Self {
            n_trees: vec![c.n_trees],
            max_depth: vec![c.max_depth],
            learning_rate: vec![c.learning_rate],
            subsample: vec![c.subsample],
            colsample: vec![c.colsample],
            min_child_weight: vec![c.min_child_weight],
            positive_class_weight: vec![c.positive_class_weight],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("n_trees", self.n_trees.is_empty()),
            ("max_depth", self.max_depth.is_empty()),
            ("learning_rate", self.learning_rate.is_empty()),
            ("subsample", self.subsample.is_empty()),
            ("colsample", self.colsample.is_empty()),
            ("min_child_weight", self.min_child_weight.is_empty()),
            ("positive_class_weight", self.positive_class_weight.is_empty()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, empty)| *empty) {
            return Err(Error::EmptyGrid(name));
        }
        Ok(())
    }

    /// Every point inherits patience, regularisation and seed from `base`.
    pub fn sample(&self, base: &DetectorConfig, rng: &mut ChaCha8Rng) -> DetectorConfig {
        DetectorConfig {
            n_trees: *self.n_trees.choose(rng).unwrap(),
            max_depth: *self.max_depth.choose(rng).unwrap(),
            learning_rate: *self.learning_rate.choose(rng).unwrap(),
            subsample: *self.subsample.choose(rng).unwrap(),
            colsample: *self.colsample.choose(rng).unwrap(),
            min_child_weight: *self.min_child_weight.choose(rng).unwrap(),
            positive_class_weight: *self.positive_class_weight.choose(rng).unwrap(),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_iters: usize,
    pub n_folds: usize,
    pub seed: u64,
    /// Source of the non-searched settings.
    pub base: DetectorConfig,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_iters: 50,
            n_folds: 5,
            seed: 0,
            base: DetectorConfig::default(),
        }
    }
}

/// Class balance and resolved positive weight of one inner training fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldWeight {
    pub n_negative: usize,
    pub n_positive: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: DetectorConfig,
    /// F1 at 0.5 over the pooled out-of-fold predictions.
    pub f1: f64,
    pub fold_weights: Vec<FoldWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: DetectorConfig,
    pub best_trial: usize,
    pub trials: Vec<Trial>,
}

/// Randomised hyperparameter search over rows `indices` of `data`, scored by
/// stratified cross-validated F1. Ties go to the earliest sampled trial.
///
/// With a guard, every inner partition is checked against its held-out set.
pub fn random_search(
    data: &Dataset,
    indices: &[usize],
    grid: &SearchGrid,
    opts: &SearchOptions,
    guard: Option<&IsolationGuard>,
) -> Result<SearchResult> {
    grid.validate()?;
    if opts.n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be at least 1".into()));
    }
    if let Some(g) = guard {
        g.check(indices)?;
    }
    let folds = stratified_folds(
        &data.labels,
        indices,
        opts.n_folds,
        derive_seed(opts.seed, FOLD_STREAM, 0),
    )?;
    let parts: Vec<(Vec<usize>, &Vec<usize>)> =
        folds.iter().map(|f| (complement(indices, f), f)).collect();
    if let Some(g) = guard {
        for (train, test) in &parts {
            g.check(train)?;
            g.check(test)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let configs: Vec<DetectorConfig> = (0..opts.n_iters).map(|_| grid.sample(&opts.base, &mut rng)).collect();

    let trials = configs
        .into_par_iter()
        .enumerate()
        .map(|(t, config)| {
            let mut scores = Vec::with_capacity(indices.len());
            let mut labels = Vec::with_capacity(indices.len());
            let mut fold_weights = Vec::with_capacity(parts.len());
            for (f, (train_idx, test_idx)) in parts.iter().enumerate() {
                let fit_config = DetectorConfig {
                    seed: derive_seed(opts.seed, TRIAL_STREAM, (t * parts.len() + f) as u64),
                    ..config.clone()
                };
                let model = train(data, train_idx, None, &fit_config)?;
                fold_weights.push(FoldWeight {
                    n_negative: model.provenance.n_negative,
                    n_positive: model.provenance.n_positive,
                    weight: model.class_weight,
                });
                scores.extend(model.predict_rows(data, test_idx)?);
                labels.extend(test_idx.iter().map(|&i| data.labels[i]));
            }
            let f1 = Confusion::at_threshold(&scores, &labels, 0.5)?.f1();
            Ok(Trial {
                config,
                f1,
                fold_weights,
            })
        })
        .collect::<Result<Vec<Trial>>>()?;

    let mut best_trial = 0;
    for (t, trial) in trials.iter().enumerate() {
        if trial.f1 > trials[best_trial].f1 {
            best_trial = t;
        }
    }
    Ok(SearchResult {
        best: trials[best_trial].config.clone(),
        best_trial,
        trials,
    })
}
