//! Gradient-boosted regression trees with logistic loss and exact greedy
//! split finding.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "provlens-detector";
pub const MODEL_VERSION: u32 = 1;

/// Weight applied to every positive sample's gradient and hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassWeight {
    Fixed(f64),
    /// `n_negative / n_positive` of whatever set the model is trained on.
    Auto,
}

impl ClassWeight {
    pub fn resolve(self, n_negative: usize, n_positive: usize) -> f64 {
        match self {
            ClassWeight::Fixed(w) => w,
            ClassWeight::Auto => n_negative as f64 / n_positive as f64,
        }
    }
}

impl Serialize for ClassWeight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClassWeight::Fixed(w) => s.serialize_f64(*w),
            ClassWeight::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for ClassWeight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(w) => Ok(ClassWeight::Fixed(w)),
            Repr::Str(s) if s == "auto" => Ok(ClassWeight::Auto),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "class weight must be a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub positive_class_weight: ClassWeight,
    /// Rounds without validation improvement before stopping. Only used when
    /// a validation set is given.
    pub early_stopping_patience: usize,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample: 1.0,
            positive_class_weight: ClassWeight::Fixed(1.0),
            early_stopping_patience: 50,
            reg_lambda: 1.0,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_trees == 0 || self.max_depth == 0 {
            return bad("n_trees and max_depth must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be nonnegative");
        }
        for (name, f) in [("subsample", self.subsample), ("colsample", self.colsample)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must be in (0, 1]")));
            }
        }
        if let ClassWeight::Fixed(w) = self.positive_class_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad("positive_class_weight must be positive");
            }
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf { value: f64 },
}

/// Nodes stored flat with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub protocol: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_negative: usize,
    pub n_positive: usize,
    pub n_validation: usize,
    /// Index of the last kept round when early stopping was active.
    pub best_iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    /// Prior log-odds the trees add to.
    pub base_score: f64,
    pub threshold: f64,
    /// Resolved positive-class weight used in training.
    pub class_weight: f64,
    pub config: DetectorConfig,
    pub trees: Vec<Tree>,
    /// Total split gain per feature, in column order.
    pub importance: Vec<f64>,
    /// Weighted training loss before any tree, then after each kept round.
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub provenance: Provenance,
}

fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Weighted mean logistic loss computed from margins.
fn weighted_loss(margins: &[f64], labels: &[u8], pos_weight: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 0.0;
    for (&m, &y) in margins.iter().zip(labels) {
        // softplus(-m) for positives, softplus(m) for negatives.
        let (z, w) = if y == 1 { (-m, pos_weight) } else { (m, 1.0) };
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        total += w * softplus;
        weight += w;
    }
    total / weight
}

impl DetectorModel {
    /// A model with hand-built trees, mainly for inspection and tests.
    pub fn from_parts(feature_names: Vec<String>, base_score: f64, trees: Vec<Tree>) -> Self {
        let mut m = Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            importance: vec![0.0; feature_names.len()],
            feature_names,
            base_score,
            threshold: 0.5,
            class_weight: 1.0,
            config: DetectorConfig::default(),
            trees,
            train_loss: Vec::new(),
            valid_loss: Vec::new(),
            provenance: Provenance::default(),
        };
        m.recompute_importance();
        m
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn recompute_importance(&mut self) {
        self.importance = vec![0.0; self.n_features()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    self.importance[*feature] += gain;
                }
            }
        }
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    /// Probability of the positive class, in `(0, 1)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.margin(x).map(sigmoid)
    }

    pub fn predict_rows(&self, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        indices.iter().map(|&i| self.predict(&data.rows[i])).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::malformed("detector model", e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self =
            serde_json::from_str(s).map_err(|e| Error::malformed("detector model", e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::malformed(
                "detector model",
                format!("unsupported format {} v{}", m.format, m.version),
            ));
        }
        for tree in &m.trees {
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature, left, right, ..
                    } => {
                        if *feature >= m.n_features()
                            || *left >= tree.nodes.len()
                            || *right >= tree.nodes.len()
                        {
                            return Err(Error::malformed("detector model", "split index out of range"));
                        }
                    }
                    Node::Leaf { .. } => {}
                }
            }
        }
        Ok(m)
    }
}

/// Features ranked by total split gain, highest first. Features that never
/// split are omitted.
pub fn feature_importance(model: &DetectorModel) -> Vec<(String, f64)> {
    let mut ranked: Vec<(usize, f64)> = model
        .importance
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, g)| *g > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .map(|(j, g)| (model.feature_names[j].clone(), g))
        .collect()
}

/// Rows `train` of `data`, stored column-major with a presorted order per column.
struct Columns {
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Columns {
    fn new(data: &Dataset, train: &[usize]) -> Self {
        let values: Vec<Vec<f64>> = (0..data.width())
            .map(|f| train.iter().map(|&i| data.rows[i][f]).collect())
            .collect();
        let order = values
            .iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..col.len() as u32).collect();
                o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                o
            })
            .collect();
        Self { values, order }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    cols: &'a Columns,
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    min_child_weight: f64,
    learning_rate: f64,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }

    fn leaf(&self, g: f64, h: f64) -> Node {
        Node::Leaf {
            value: -g / (h + self.lambda) * self.learning_rate,
        }
    }

    /// Grows one tree level by level. `node_of[i]` is the frontier slot of
    /// row `i`, or `None` for rows outside this round's subsample.
    fn grow(&self, mut node_of: Vec<Option<u32>>, features: &[usize], max_depth: usize) -> Tree {
        let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
        // Frontier entries: (node index, G, H).
        let mut frontier = vec![(0usize, 0.0, 0.0)];
        for (i, slot) in node_of.iter().enumerate() {
            if slot.is_some() {
                frontier[0].1 += self.grad[i];
                frontier[0].2 += self.hess[i];
            }
        }

        for _depth in 0..max_depth {
            let best = self.best_splits(&node_of, &frontier, features);
            let mut next = Vec::new();
            let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
            for (slot, &(node, g, h)) in frontier.iter().enumerate() {
                match best[slot] {
                    Some(c) => {
                        let left = nodes.len();
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes[node] = Node::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left,
                            right: left + 1,
                            gain: c.gain,
                        };
                        child_slots[slot] = Some((next.len() as u32, next.len() as u32 + 1));
                        next.push((left, 0.0, 0.0));
                        next.push((left + 1, 0.0, 0.0));
                    }
                    None => nodes[node] = self.leaf(g, h),
                }
            }
            if next.is_empty() {
                return Tree { nodes };
            }
            for (i, slot) in node_of.iter_mut().enumerate() {
                let Some(s) = *slot else { continue };
                *slot = match (child_slots[s as usize], best[s as usize]) {
                    (Some((l, r)), Some(c)) => {
                        let child = if self.cols.values[c.feature][i] < c.threshold { l } else { r };
                        next[child as usize].1 += self.grad[i];
                        next[child as usize].2 += self.hess[i];
                        Some(child)
                    }
                    // Rows of a finished leaf take no further part.
                    _ => None,
                };
            }
            frontier = next;
        }
        for &(node, g, h) in &frontier {
            nodes[node] = self.leaf(g, h);
        }
        Tree { nodes }
    }

    /// Exact greedy search: for every frontier node, the best threshold over
    /// all distinct values of every sampled feature.
    fn best_splits(
        &self,
        node_of: &[Option<u32>],
        frontier: &[(usize, f64, f64)],
        features: &[usize],
    ) -> Vec<Option<Candidate>> {
        let k = frontier.len();
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        // Per slot: running left sums and the last value seen.
        let mut gl = vec![0.0; k];
        let mut hl = vec![0.0; k];
        let mut last: Vec<Option<f64>> = vec![None; k];
        for &f in features {
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = None);
            let col = &self.cols.values[f];
            for &i in &self.cols.order[f] {
                let i = i as usize;
                let Some(s) = node_of[i] else { continue };
                let s = s as usize;
                let x = col[i];
                if let Some(prev) = last[s] {
                    if x > prev {
                        let (_, g, h) = frontier[s];
                        let (gr, hr) = (g - gl[s], h - hl[s]);
                        if hl[s] >= self.min_child_weight && hr >= self.min_child_weight {
                            let gain = 0.5
                                * (self.score(gl[s], hl[s]) + self.score(gr, hr) - self.score(g, h));
                            if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                                let mid = prev + (x - prev) / 2.0;
                                let threshold = if mid > prev { mid } else { x };
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold,
                                });
                            }
                        }
                    }
                }
                gl[s] += self.grad[i];
                hl[s] += self.hess[i];
                last[s] = Some(x);
            }
        }
        best
    }
}

/// Fits a model on rows `train` of `data`. When `validation` is given, the
/// ensemble is truncated to the round with the lowest validation loss once
/// `early_stopping_patience` rounds pass without improvement.
pub fn train(
    data: &Dataset,
    train: &[usize],
    validation: Option<&[usize]>,
    config: &DetectorConfig,
) -> Result<DetectorModel> {
    config.validate()?;
    if train.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: train.len(),
        });
    }
    let (n_neg, n_pos) = data.class_counts(train);
    if n_pos == 0 {
        return Err(Error::SingleClass { label: 0 });
    }
    if n_neg == 0 {
        return Err(Error::SingleClass { label: 1 });
    }
    let pos_weight = config.positive_class_weight.resolve(n_neg, n_pos);
    let labels: Vec<u8> = train.iter().map(|&i| data.labels[i]).collect();
    let weights: Vec<f64> = labels
        .iter()
        .map(|&y| if y == 1 { pos_weight } else { 1.0 })
        .collect();
    let base_score = (pos_weight * n_pos as f64 / n_neg as f64).ln();
    let cols = Columns::new(data, train);
    let n = train.len();
    let n_features = data.width();

    let valid_labels: Vec<u8> = validation.unwrap_or(&[]).iter().map(|&i| data.labels[i]).collect();
    let mut valid_margin = vec![base_score; valid_labels.len()];
    let mut margin = vec![base_score; n];
    let mut train_loss = vec![weighted_loss(&margin, &labels, pos_weight)];
    let mut valid_loss = Vec::new();
    if validation.is_some() {
        valid_loss.push(weighted_loss(&valid_margin, &valid_labels, pos_weight));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_rows = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((config.colsample * n_features as f64).round() as usize).clamp(1, n_features.max(1));
    let mut trees = Vec::new();
    let mut best_round = 0usize;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for round in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = weights[i] * (p - labels[i] as f64);
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let mut node_of: Vec<Option<u32>> = vec![None; n];
        if n_rows == n {
            node_of.iter_mut().for_each(|s| *s = Some(0));
        } else {
            for i in sample(&mut rng, n, n_rows) {
                node_of[i] = Some(0);
            }
        }
        let mut features: Vec<usize> = if n_cols == n_features {
            (0..n_features).collect()
        } else {
            sample(&mut rng, n_features, n_cols).into_vec()
        };
        features.sort_unstable();

        let builder = Builder {
            cols: &cols,
            grad: &grad,
            hess: &hess,
            lambda: config.reg_lambda,
            min_child_weight: config.min_child_weight,
            learning_rate: config.learning_rate,
        };
        let tree = builder.grow(node_of, &features, config.max_depth);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict(&data.rows[train[i]]);
        }
        train_loss.push(weighted_loss(&margin, &labels, pos_weight));
        trees.push(tree);

        if let Some(valid) = validation {
            for (m, &i) in valid_margin.iter_mut().zip(valid) {
                *m += trees[round].predict(&data.rows[i]);
            }
            let loss = weighted_loss(&valid_margin, &valid_labels, pos_weight);
            valid_loss.push(loss);
            if loss < valid_loss[best_round] {
                best_round = round + 1;
            } else if round + 1 - best_round >= config.early_stopping_patience {
                break;
            }
        }
    }

    let best_iteration = validation.map(|_| best_round);
    if let Some(keep) = best_iteration {
        trees.truncate(keep);
        train_loss.truncate(keep + 1);
        valid_loss.truncate(keep + 1);
    }

    let mut model = DetectorModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        feature_names: data.feature_names.clone(),
        base_score,
        threshold: 0.5,
        class_weight: pos_weight,
        config: config.clone(),
        trees,
        importance: Vec::new(),
        train_loss,
        valid_loss,
        provenance: Provenance {
            protocol: "fit".into(),
            seed: config.seed,
            n_train: n,
            n_negative: n_neg,
            n_positive: n_pos,
            n_validation: validation.map_or(0, <[usize]>::len),
            best_iteration,
        },
    };
    model.recompute_importance();
    Ok(model)
}

/// [`train`] on every row.
pub fn train_all(data: &Dataset, config: &DetectorConfig) -> Result<DetectorModel> {
    train(data, &data.all_indices(), None, config)
}
