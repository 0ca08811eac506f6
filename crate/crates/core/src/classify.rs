//! KNN and MLP classification of feature vectors into the five ACR categories.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::roi::FeatureVector;

pub const FEATURES: usize = 6;
pub const CLASSES: usize = 5;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("k = {k} must lie in 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("non-finite feature value in sample {0}")]
    NonFiniteFeature(usize),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("expected {expected} inputs, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

/// ACR breast-density category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AcrLabel {
    Acr1,
    Acr2,
    Acr3,
    Acr4,
    Acr5,
}

impl AcrLabel {
    pub const ALL: [AcrLabel; CLASSES] = [AcrLabel::Acr1, AcrLabel::Acr2, AcrLabel::Acr3, AcrLabel::Acr4, AcrLabel::Acr5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for AcrLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ACR{}", self.index() + 1)
    }
}

impl FromStr for AcrLabel {
    type Err = ClassifyError;

    /// Accepts `ACR3`, `acr3` or `3`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix("ACR").or_else(|| t.strip_prefix("acr")).unwrap_or(t);
        digits
            .parse::<usize>()
            .ok()
            .and_then(|n| n.checked_sub(1))
            .and_then(AcrLabel::from_index)
            .ok_or_else(|| ClassifyError::UnknownLabel(s.to_string()))
    }
}

/// Per-feature min-max ranges fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: [f64; FEATURES],
    pub max: [f64; FEATURES],
}

impl Normalization {
    pub fn fit(samples: &[[f64; FEATURES]]) -> Result<Self> {
        if samples.is_empty() {
            return Err(ClassifyError::EmptyTraining);
        }
        let mut min = [f64::INFINITY; FEATURES];
        let mut max = [f64::NEG_INFINITY; FEATURES];
        for (i, s) in samples.iter().enumerate() {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(ClassifyError::NonFiniteFeature(i));
            }
            for f in 0..FEATURES {
                min[f] = min[f].min(s[f]);
                max[f] = max[f].max(s[f]);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps into `[0, 1]` per feature, clamping; a zero-width range maps to 0.
    pub fn apply(&self, v: &[f64; FEATURES]) -> [f64; FEATURES] {
        let mut out = [0.0; FEATURES];
        for f in 0..FEATURES {
            let span = self.max[f] - self.min[f];
            out[f] = if span > 0.0 { ((v[f] - self.min[f]) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
        out
    }
}

/// Labelled samples stored in normalized form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<[f64; FEATURES]>,
    labels: Vec<AcrLabel>,
    normalization: Normalization,
}

impl TrainingSet {
    pub fn new(samples: &[(FeatureVector, AcrLabel)]) -> Result<Self> {
        let raw: Vec<_> = samples.iter().map(|(f, _)| f.to_array()).collect();
        Self::from_arrays(&raw, &samples.iter().map(|(_, l)| *l).collect::<Vec<_>>())
    }

    pub fn from_arrays(raw: &[[f64; FEATURES]], labels: &[AcrLabel]) -> Result<Self> {
        assert_eq!(raw.len(), labels.len(), "one label per sample");
        let normalization = Normalization::fit(raw)?;
        let inputs = raw.iter().map(|v| normalization.apply(v)).collect();
        Ok(Self { inputs, labels: labels.to_vec(), normalization })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn inputs(&self) -> &[[f64; FEATURES]] {
        &self.inputs
    }

    pub fn labels(&self) -> &[AcrLabel] {
        &self.labels
    }
}

/// Majority label of the `k` nearest normalized training points.
///
/// Equal distances keep training order; a vote tie goes to the class of the
/// nearest neighbour among the tied classes.
pub fn knn_classify(train: &TrainingSet, query: &FeatureVector, k: usize) -> Result<AcrLabel> {
    knn_classify_array(train, &query.to_array(), k)
}

pub fn knn_classify_array(train: &TrainingSet, query: &[f64; FEATURES], k: usize) -> Result<AcrLabel> {
    if train.is_empty() {
        return Err(ClassifyError::EmptyTraining);
    }
    if k == 0 || k > train.len() {
        return Err(ClassifyError::InvalidK { k, n: train.len() });
    }
    let q = train.normalization.apply(query);
    let mut order: Vec<(f64, usize)> = train
        .inputs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nearest = &order[..k];
    let mut votes = [0usize; CLASSES];
    for &(_, i) in nearest {
        votes[train.labels[i].index()] += 1;
    }
    let best = *votes.iter().max().expect("five classes");
    let winner = nearest
        .iter()
        .map(|&(_, i)| train.labels[i])
        .find(|l| votes[l.index()] == best)
        .expect("a voted class exists");
    Ok(winner)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden: 12, learning_rate: 1.0, epochs: 2000, seed: 42 }
    }
}

/// Two-layer perceptron `6 -> hidden -> 5`, sigmoid hidden units and softmax output.
///
/// Parameters are one flat vector: `W1` (hidden x 6, row-major), `b1`,
/// `W2` (5 x hidden, row-major), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    hidden: usize,
    params: Vec<f64>,
    normalization: Normalization,
}

const FORMAT_HEADER: &str = "mammoseg-mlp v1";

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn param_count(hidden: usize) -> usize {
    hidden * FEATURES + hidden + CLASSES * hidden + CLASSES
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

fn layout(h: usize) -> Layout {
    let w1 = 0;
    let b1 = w1 + h * FEATURES;
    let w2 = b1 + h;
    let b2 = w2 + CLASSES * h;
    Layout { w1, b1, w2, b2 }
}

/// Hidden activations and output logits for one normalized input.
fn forward(params: &[f64], h: usize, x: &[f64; FEATURES], act: &mut [f64]) -> [f64; CLASSES] {
    let l = layout(h);
    for j in 0..h {
        let row = &params[l.w1 + j * FEATURES..l.w1 + (j + 1) * FEATURES];
        let z: f64 = params[l.b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        act[j] = sigmoid(z);
    }
    let mut logits = [0.0; CLASSES];
    for (c, out) in logits.iter_mut().enumerate() {
        let row = &params[l.w2 + c * h..l.w2 + (c + 1) * h];
        *out = params[l.b2 + c] + row.iter().zip(act.iter()).map(|(w, a)| w * a).sum::<f64>();
    }
    logits
}

fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Mean cross-entropy over `(inputs, labels)` and, when `grad` is given, its gradient.
pub fn loss_and_gradient(
    params: &[f64],
    hidden: usize,
    inputs: &[[f64; FEATURES]],
    labels: &[AcrLabel],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let l = layout(hidden);
    let n = inputs.len() as f64;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut act = vec![0.0; hidden];
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(labels) {
        let logits = forward(params, hidden, x, &mut act);
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        loss += lse - logits[y.index()];
        let Some(g) = grad.as_deref_mut() else { continue };
        let mut dz2 = softmax(&logits);
        dz2[y.index()] -= 1.0;
        for d in dz2.iter_mut() {
            *d /= n;
        }
        for c in 0..CLASSES {
            g[l.b2 + c] += dz2[c];
            for j in 0..hidden {
                g[l.w2 + c * hidden + j] += dz2[c] * act[j];
            }
        }
        for j in 0..hidden {
            let da: f64 = (0..CLASSES).map(|c| params[l.w2 + c * hidden + j] * dz2[c]).sum();
            let dz1 = da * act[j] * (1.0 - act[j]);
            g[l.b1 + j] += dz1;
            for f in 0..FEATURES {
                g[l.w1 + j * FEATURES + f] += dz1 * x[f];
            }
        }
    }
    loss / n
}

impl MlpModel {
    pub fn zeros(hidden: usize, normalization: Normalization) -> Self {
        Self { hidden, params: vec![0.0; param_count(hidden)], normalization }
    }

    /// Uniform `[-0.5, 0.5]` weights from a seeded ChaCha8 stream.
    pub fn random(hidden: usize, normalization: Normalization, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..param_count(hidden)).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        Self { hidden, params, normalization }
    }

    pub fn from_params(hidden: usize, params: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if params.len() != param_count(hidden) {
            return Err(ClassifyError::DimensionMismatch { expected: param_count(hidden), found: params.len() });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::Format("non-finite weight".into()));
        }
        Ok(Self { hidden, params, normalization })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Softmax outputs for an already normalized input.
    pub fn probabilities(&self, normalized: &[f64]) -> Result<[f64; CLASSES]> {
        let x: [f64; FEATURES] = normalized
            .try_into()
            .map_err(|_| ClassifyError::DimensionMismatch { expected: FEATURES, found: normalized.len() })?;
        let mut act = vec![0.0; self.hidden];
        Ok(softmax(&forward(&self.params, self.hidden, &x, &mut act)))
    }

    pub fn loss(&self, train: &TrainingSet) -> f64 {
        loss_and_gradient(&self.params, self.hidden, &train.inputs, &train.labels, None)
    }

    pub fn to_text(&self) -> String {
        let l = layout(self.hidden);
        let row = |s: &[f64]| s.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
        let p = &self.params;
        format!(
            "{FORMAT_HEADER}\nlayers {FEATURES} {} {CLASSES}\nactivations sigmoid softmax\nw1 {}\nb1 {}\nw2 {}\nb2 {}\nnorm_min {}\nnorm_max {}\n",
            self.hidden,
            row(&p[l.w1..l.b1]),
            row(&p[l.b1..l.w2]),
            row(&p[l.w2..l.b2]),
            row(&p[l.b2..]),
            row(&self.normalization.min),
            row(&self.normalization.max),
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| ClassifyError::Format(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(FORMAT_HEADER) {
            return Err(bad("missing format header".into()));
        }
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(format!("expected `{key}` line, found `{line}`")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let nums = |v: Vec<String>, n: usize, key: &str| -> Result<Vec<f64>> {
            if v.len() != n {
                return Err(bad(format!("`{key}` has {} values, expected {n}", v.len())));
            }
            v.iter().map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}` in `{key}`")))).collect()
        };
        let layers: Vec<usize> = field("layers")?
            .iter()
            .map(|s| s.parse().map_err(|_| bad(format!("bad layer size `{s}`"))))
            .collect::<Result<_>>()?;
        if layers.len() != 3 || layers[0] != FEATURES || layers[2] != CLASSES || layers[1] == 0 {
            return Err(bad(format!("unsupported layer sizes {layers:?}")));
        }
        let h = layers[1];
        if field("activations")? != ["sigmoid", "softmax"] {
            return Err(bad("unsupported activations".into()));
        }
        let mut params = nums(field("w1")?, h * FEATURES, "w1")?;
        params.extend(nums(field("b1")?, h, "b1")?);
        params.extend(nums(field("w2")?, CLASSES * h, "w2")?);
        params.extend(nums(field("b2")?, CLASSES, "b2")?);
        let min = nums(field("norm_min")?, FEATURES, "norm_min")?;
        let max = nums(field("norm_max")?, FEATURES, "norm_max")?;
        let normalization = Normalization { min: min.try_into().expect("checked"), max: max.try_into().expect("checked") };
        Self::from_params(h, params, normalization)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    /// Loss after each accepted epoch, starting with the initial loss.
    pub losses: Vec<f64>,
    pub final_learning_rate: f64,
}

/// Full-batch gradient descent on mean cross-entropy. A step that raises the
/// loss by more than `1e-6` is discarded and the learning rate halved.
pub fn mlp_train(train: &TrainingSet, hyper: &MlpParams) -> Result<(MlpModel, TrainingLog)> {
    if train.is_empty() {
        return Err(ClassifyError::EmptyTraining);
    }
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) || hyper.epochs == 0 || hyper.hidden == 0 {
        return Err(ClassifyError::InvalidHyper("learning rate, epochs and hidden size must be positive".into()));
    }
    let mut model = MlpModel::random(hyper.hidden, train.normalization, hyper.seed);
    let h = hyper.hidden;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = loss_and_gradient(&model.params, h, &train.inputs, &train.labels, Some(&mut grad));
    if !loss.is_finite() {
        return Err(ClassifyError::NonFiniteLoss { epoch: 0 });
    }
    let mut losses = vec![loss];
    let mut lr = hyper.learning_rate;
    let mut candidate = model.params.clone();
    let mut cand_grad = vec![0.0; grad.len()];
    for epoch in 1..=hyper.epochs {
        loop {
            for ((c, p), g) in candidate.iter_mut().zip(&model.params).zip(&grad) {
                *c = p - lr * g;
            }
            let next = loss_and_gradient(&candidate, h, &train.inputs, &train.labels, Some(&mut cand_grad));
            if !next.is_finite() {
                return Err(ClassifyError::NonFiniteLoss { epoch });
            }
            if next <= loss + 1e-6 {
                std::mem::swap(&mut model.params, &mut candidate);
                std::mem::swap(&mut grad, &mut cand_grad);
                loss = next;
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                return Ok((model, TrainingLog { losses, final_learning_rate: lr }));
            }
        }
        losses.push(loss);
    }
    Ok((model, TrainingLog { losses, final_learning_rate: lr }))
}

/// Argmax of the softmax outputs for a raw (unnormalized) feature vector.
pub fn mlp_classify(model: &MlpModel, query: &FeatureVector) -> AcrLabel {
    let x = model.normalization.apply(&query.to_array());
    let p = model.probabilities(&x).expect("six features");
    AcrLabel::ALL[argmax(&p)]
}

/// Accuracy summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: usize,
    pub correct: usize,
    pub overall: f64,
    /// `None` for classes absent from the truth labels.
    pub per_class: [Option<f64>; CLASSES],
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; CLASSES]; CLASSES],
}

pub fn evaluate(pairs: &[(AcrLabel, AcrLabel)]) -> Result<Evaluation> {
    if pairs.is_empty() {
        return Err(ClassifyError::EmptyEvaluation);
    }
    let mut confusion = [[0usize; CLASSES]; CLASSES];
    for &(pred, truth) in pairs {
        confusion[truth.index()][pred.index()] += 1;
    }
    let correct = (0..CLASSES).map(|c| confusion[c][c]).sum();
    let per_class = std::array::from_fn(|c| {
        let n: usize = confusion[c].iter().sum();
        (n > 0).then(|| confusion[c][c] as f64 / n as f64)
    });
    Ok(Evaluation { total: pairs.len(), correct, overall: correct as f64 / pairs.len() as f64, per_class, confusion })
}
