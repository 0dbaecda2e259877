//! Linear softmax tagger and span prediction strategies.
//!
//! The classifier has no hidden layer: logits are `x · W` for a weight matrix
//! of shape `(input_width, L)`, so the trainable parameter count is exactly
//! `input_width × L` (1536 × 24 = 36,864 for concatenated 768-d vectors and
//! 24 labels). Training minimizes mean cross-entropy with plain mini-batch
//! gradient descent.
//!
//! Model file layout:
//!
//! ```text
//! magic        8 bytes "SPTGMDL1"
//! header_len   u32 little-endian
//! header       JSON (format_version, input_width, num_labels, unit_level,
//!              use_genre, combine, bias, labels, config)
//! weights      input_width × num_labels f32 little-endian, row-major
//! bias         num_labels f32 little-endian, only when "bias" is true
//! ```

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{char_slice, LabelId, LabelSet, Snippet, TechniqueSpan};
use crate::embed::{build_features, EmbedError, EmbeddedSequence, FeatureMatrix, FeatureSpec};
use crate::fsutil::write_atomic;
use crate::seed::{streams, sub_seed};
use crate::segment::{TokenAlignment, UnitLevel};

pub const MODEL_MAGIC: &[u8; 8] = b"SPTGMDL1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TagError {
    #[error("feature width {found} does not match tagger input width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("label {label} out of range for {labels} labels")]
    LabelOutOfRange { label: usize, labels: usize },
    #[error("{units} units but {labels} labels in training example {example}")]
    NotParallel { example: usize, units: usize, labels: usize },
    #[error("strategy {strategy} needs a {needed:?}-level tagger, got {found:?}")]
    IncompatibleStrategy {
        strategy: Strategy,
        needed: UnitLevel,
        found: UnitLevel,
    },
    #[error("no training units")]
    EmptyTrainingSet,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("model file: {0}")]
    BadModel(String),
}

/// The four ways of turning unit labels into spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Train and predict per token; spans may cut words.
    #[serde(rename = "token")]
    TokenToToken,
    /// Train per token, label each word with its most frequent token label.
    #[serde(rename = "majority")]
    TokenToWordMajority,
    /// Train per token, label each word with its first token's label.
    #[serde(rename = "first")]
    TokenToWordFirst,
    /// Train and predict on max-pooled word vectors.
    #[serde(rename = "word")]
    WordToWord,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::TokenToToken,
        Strategy::TokenToWordMajority,
        Strategy::TokenToWordFirst,
        Strategy::WordToWord,
    ];

    pub fn unit_level(self) -> UnitLevel {
        match self {
            Strategy::WordToWord => UnitLevel::Word,
            _ => UnitLevel::Token,
        }
    }

    /// Short flag name: token, majority, first, word.
    pub fn flag(self) -> &'static str {
        match self {
            Strategy::TokenToToken => "token",
            Strategy::TokenToWordMajority => "majority",
            Strategy::TokenToWordFirst => "first",
            Strategy::WordToWord => "word",
        }
    }

    pub fn from_flag(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|st| st.flag() == s)
    }

    /// Row label used in ablation tables.
    pub fn title(self) -> &'static str {
        match self {
            Strategy::TokenToToken => "Token-to-Token",
            Strategy::TokenToWordMajority => "Token-to-Word (Majority-Label)",
            Strategy::TokenToWordFirst => "Token-to-Word (First-Label)",
            Strategy::WordToWord => "Word-to-Word",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.5,
            batch_size: 16,
            epochs: 50,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TagError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TagError::InvalidHyperparams(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TagError::InvalidHyperparams("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(TagError::InvalidHyperparams("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Training switches that are off by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Adds a per-label bias vector (L extra parameters).
    #[serde(default)]
    pub bias: bool,
    /// Per-label loss weights; unweighted when absent.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTagger {
    label_set: LabelSet,
    spec: FeatureSpec,
    input_width: usize,
    /// Row-major `(input_width, L)`.
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

/// Uniform initialization in ±1/√input_width.
pub fn init_tagger(input_width: usize, label_set: &LabelSet, spec: FeatureSpec, seed: u64) -> LinearTagger {
    assert!(input_width >= 1, "input width must be positive");
    let bound = 1.0 / (input_width as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..input_width * label_set.len())
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    LinearTagger {
        label_set: label_set.clone(),
        spec,
        input_width,
        weights,
        bias: None,
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

impl LinearTagger {
    /// All-zero weights.
    pub fn zeros(input_width: usize, label_set: &LabelSet, spec: FeatureSpec) -> Self {
        LinearTagger {
            label_set: label_set.clone(),
            spec,
            input_width,
            weights: vec![0.0; input_width * label_set.len()],
            bias: None,
        }
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = Some(vec![0.0; self.label_set.len()]);
        self
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn unit_level(&self) -> UnitLevel {
        self.spec.unit_level
    }

    pub fn use_genre(&self) -> bool {
        self.spec.use_genre
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn num_labels(&self) -> usize {
        self.label_set.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    /// Trainable parameters: `input_width × L`, plus `L` with a bias.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn check_width(&self, found: usize) -> Result<(), TagError> {
        if found == self.input_width {
            Ok(())
        } else {
            Err(TagError::WidthMismatch {
                expected: self.input_width,
                found,
            })
        }
    }

    /// Logits of one row; the row must have `input_width` entries.
    pub fn logits(&self, row: &[f32]) -> Vec<f64> {
        let l = self.num_labels();
        let mut out = match &self.bias {
            Some(b) => b.clone(),
            None => vec![0.0; l],
        };
        for (j, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let x = f64::from(x);
            let w = &self.weights[j * l..(j + 1) * l];
            for (o, wk) in out.iter_mut().zip(w) {
                *o += x * wk;
            }
        }
        out
    }

    pub fn probabilities(&self, row: &[f32]) -> Vec<f64> {
        let mut p = self.logits(row);
        softmax_in_place(&mut p);
        p
    }

    /// Mean (optionally class-weighted) cross-entropy over `batch`.
    pub fn batch_loss(&self, batch: &[(&[f32], LabelId)], class_weights: Option<&[f64]>) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|(row, y)| {
                let p = self.probabilities(row);
                let w = class_weights.map_or(1.0, |cw| cw[y.0]);
                -w * p[y.0].ln()
            })
            .sum();
        total / batch.len() as f64
    }

    /// Mean loss and its gradient with respect to the weights (row-major,
    /// followed by the bias gradient when present).
    pub fn loss_and_gradient(&self, batch: &[(&[f32], LabelId)], class_weights: Option<&[f64]>) -> (f64, Vec<f64>) {
        let l = self.num_labels();
        let mut grad = vec![0.0; self.parameter_count()];
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let bias_offset = self.weights.len();
        for (row, y) in batch {
            let mut p = self.probabilities(row);
            let w = class_weights.map_or(1.0, |cw| cw[y.0]);
            loss -= w * p[y.0].ln();
            p[y.0] -= 1.0;
            p.iter_mut().for_each(|d| *d *= w / n);
            for (j, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let x = f64::from(x);
                for (g, d) in grad[j * l..(j + 1) * l].iter_mut().zip(&p) {
                    *g += x * d;
                }
            }
            if self.bias.is_some() {
                for (g, d) in grad[bias_offset..].iter_mut().zip(&p) {
                    *g += d;
                }
            }
        }
        (loss / n, grad)
    }

    fn apply_step(&mut self, grad: &[f64], lr: f64) {
        let (gw, gb) = grad.split_at(self.weights.len());
        for (w, g) in self.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        if let Some(b) = &mut self.bias {
            for (w, g) in b.iter_mut().zip(gb) {
                *w -= lr * g;
            }
        }
    }

    fn param(&self, i: usize) -> f64 {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.bias.as_ref().expect("bias index")[i - self.weights.len()]
        }
    }

    fn set_param(&mut self, i: usize, v: f64) {
        if i < self.weights.len() {
            self.weights[i] = v;
        } else {
            let off = self.weights.len();
            self.bias.as_mut().expect("bias index")[i - off] = v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter().flatten()).all(|w| w.is_finite())
    }
}

/// Per-row softmax probabilities.
pub fn forward(tagger: &LinearTagger, features: &FeatureMatrix) -> Result<Vec<Vec<f64>>, TagError> {
    tagger.check_width(features.width())?;
    Ok(features.iter_rows().take(features.rows()).map(|r| tagger.probabilities(r)).collect())
}

/// Index of the largest value; the smallest index wins ties.
fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Per-row argmax label, smallest label index on ties.
pub fn predict_units(tagger: &LinearTagger, features: &FeatureMatrix) -> Result<Vec<LabelId>, TagError> {
    Ok(forward(tagger, features)?.iter().map(|p| LabelId(argmax(p))).collect())
}

/// Features and gold labels of one snippet.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub features: FeatureMatrix,
    pub labels: Vec<LabelId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tagger: LinearTagger,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.mean_loss).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |e| e.mean_loss)
    }
}

/// Trains a tagger from scratch.
///
/// Units from all examples are pooled and reshuffled every epoch; init and
/// shuffle streams are derived from `hyper.seed`. The epoch loss is the mean
/// of per-unit losses observed during the epoch.
pub fn train(
    examples: &[TrainingExample],
    label_set: &LabelSet,
    spec: FeatureSpec,
    hyper: &Hyperparams,
    options: &TrainOptions,
) -> Result<TrainOutcome, TagError> {
    train_observed(examples, label_set, spec, hyper, options, &mut |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_observed(
    examples: &[TrainingExample],
    label_set: &LabelSet,
    spec: FeatureSpec,
    hyper: &Hyperparams,
    options: &TrainOptions,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome, TagError> {
    hyper.validate()?;
    let l = label_set.len();
    if let Some(cw) = &options.class_weights {
        if cw.len() != l || cw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TagError::InvalidHyperparams(format!(
                "class_weights needs {l} non-negative entries"
            )));
        }
    }
    let mut units: Vec<(&[f32], LabelId)> = Vec::new();
    let mut width = None;
    for (i, ex) in examples.iter().enumerate() {
        if ex.features.rows() != ex.labels.len() {
            return Err(TagError::NotParallel {
                example: i,
                units: ex.features.rows(),
                labels: ex.labels.len(),
            });
        }
        if ex.labels.is_empty() {
            continue;
        }
        match width {
            None => width = Some(ex.features.width()),
            Some(w) if w != ex.features.width() => {
                return Err(TagError::WidthMismatch {
                    expected: w,
                    found: ex.features.width(),
                })
            }
            _ => {}
        }
        for (r, y) in ex.labels.iter().enumerate() {
            if y.0 >= l {
                return Err(TagError::LabelOutOfRange { label: y.0, labels: l });
            }
            units.push((ex.features.row(r), *y));
        }
    }
    let width = width.ok_or(TagError::EmptyTrainingSet)?;

    let mut tagger = init_tagger(width, label_set, spec, sub_seed(hyper.seed, streams::INIT));
    if options.bias {
        tagger = tagger.with_bias();
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sub_seed(hyper.seed, streams::SHUFFLE));
    let class_weights = options.class_weights.as_deref();
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut batch: Vec<(&[f32], LabelId)> = Vec::with_capacity(hyper.batch_size);
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| units[i]));
            let (loss, grad) = tagger.loss_and_gradient(&batch, class_weights);
            if !loss.is_finite() {
                return Err(TagError::NonFinite { epoch, batch: b });
            }
            tagger.apply_step(&grad, hyper.learning_rate);
            if !tagger.is_finite() {
                return Err(TagError::NonFinite { epoch, batch: b });
            }
            total += loss * chunk.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: total / units.len() as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome { tagger, history })
}

/// Gradient callback used by [`grad_check_with`].
pub type GradientFn<'a> = dyn Fn(&LinearTagger, &[(&[f32], LabelId)]) -> Vec<f64> + 'a;

/// Finite-difference step used by the gradient check.
pub const GRAD_CHECK_STEP: f64 = 1e-4;
/// Minimum number of sampled coordinates.
pub const GRAD_CHECK_SAMPLES: usize = 100;

/// Max relative error between the analytic gradient and central differences
/// over a random sample of at least 100 parameters (all of them when there
/// are fewer). Input rows are scaled to unit norm first.
pub fn grad_check(tagger: &LinearTagger, batch: &[(Vec<f32>, LabelId)], seed: u64) -> f64 {
    grad_check_with(tagger, batch, seed, &|t, b| t.loss_and_gradient(b, None).1)
}

pub fn grad_check_with(
    tagger: &LinearTagger,
    batch: &[(Vec<f32>, LabelId)],
    seed: u64,
    gradient: &GradientFn<'_>,
) -> f64 {
    assert!(!batch.is_empty(), "gradient check needs a non-empty batch");
    let scaled: Vec<(Vec<f32>, LabelId)> = batch
        .iter()
        .map(|(row, y)| {
            let norm = row.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            let row = if norm > 0.0 {
                row.iter().map(|x| (f64::from(*x) / norm) as f32).collect()
            } else {
                row.clone()
            };
            (row, *y)
        })
        .collect();
    let view: Vec<(&[f32], LabelId)> = scaled.iter().map(|(r, y)| (r.as_slice(), *y)).collect();
    let analytic = gradient(tagger, &view);
    let n_params = tagger.parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, streams::GRAD_CHECK));
    let coords: Vec<usize> = if n_params <= GRAD_CHECK_SAMPLES {
        (0..n_params).collect()
    } else {
        rand::seq::index::sample(&mut rng, n_params, GRAD_CHECK_SAMPLES).into_vec()
    };
    let mut probe = tagger.clone();
    let mut worst: f64 = 0.0;
    for i in coords {
        let w = probe.param(i);
        probe.set_param(i, w + GRAD_CHECK_STEP);
        let up = probe.batch_loss(&view, None);
        probe.set_param(i, w - GRAD_CHECK_STEP);
        let down = probe.batch_loss(&view, None);
        probe.set_param(i, w);
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    worst
}

/// Word-level collapse of token labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Most frequent label; on ties the one seen first within the word.
    Majority,
    /// Label of the word's first token.
    First,
}

/// One label per word from per-token labels.
pub fn aggregate_to_words(token_labels: &[LabelId], alignment: &TokenAlignment, mode: Aggregation) -> Vec<LabelId> {
    (0..alignment.words.len())
        .map(|w| {
            let labels = &token_labels[alignment.tokens_of(w)];
            match mode {
                Aggregation::First => labels[0],
                Aggregation::Majority => {
                    // (label, count) in first-occurrence order
                    let mut counts: Vec<(LabelId, usize)> = Vec::new();
                    for l in labels {
                        match counts.iter_mut().find(|(k, _)| k == l) {
                            Some((_, c)) => *c += 1,
                            None => counts.push((*l, 1)),
                        }
                    }
                    let mut best = counts[0];
                    for &(k, c) in &counts[1..] {
                        if c > best.1 {
                            best = (k, c);
                        }
                    }
                    best.0
                }
            }
        })
        .collect()
}

/// Maximal runs of equal non-`O` labels become spans from the first unit's
/// start to the last unit's end.
pub fn decode_spans(unit_labels: &[LabelId], unit_spans: &[(usize, usize)], text: &str) -> Vec<TechniqueSpan> {
    assert_eq!(unit_labels.len(), unit_spans.len(), "labels and spans must be parallel");
    let mut out = Vec::new();
    let mut i = 0;
    while i < unit_labels.len() {
        let label = unit_labels[i];
        if label.is_outside() {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < unit_labels.len() && unit_labels[j + 1] == label {
            j += 1;
        }
        let (start, end) = (unit_spans[i].0, unit_spans[j].1);
        out.push(TechniqueSpan {
            technique: label,
            start,
            end,
            surface: char_slice(text, start, end).unwrap_or_default().to_string(),
        });
        i = j + 1;
    }
    out
}

/// Predicts spans for one snippet with the given strategy.
pub fn predict_spans(
    tagger: &LinearTagger,
    snippet: &Snippet,
    alignment: &TokenAlignment,
    seq: &EmbeddedSequence,
    strategy: Strategy,
) -> Result<Vec<TechniqueSpan>, TagError> {
    let needed = strategy.unit_level();
    if tagger.unit_level() != needed {
        return Err(TagError::IncompatibleStrategy {
            strategy,
            needed,
            found: tagger.unit_level(),
        });
    }
    let features = build_features(seq, alignment, snippet.genre, tagger.spec())?;
    let unit_labels = predict_units(tagger, &features)?;
    Ok(spans_from_unit_labels(&unit_labels, alignment, &snippet.text, strategy))
}

/// Applies a strategy's aggregation and decoding to already-predicted unit
/// labels (tokens for the three token strategies, words for word-to-word).
pub fn spans_from_unit_labels(
    unit_labels: &[LabelId],
    alignment: &TokenAlignment,
    text: &str,
    strategy: Strategy,
) -> Vec<TechniqueSpan> {
    match strategy {
        Strategy::TokenToToken => decode_spans(unit_labels, &alignment.token_spans(), text),
        Strategy::TokenToWordMajority => decode_spans(
            &aggregate_to_words(unit_labels, alignment, Aggregation::Majority),
            &alignment.word_spans(),
            text,
        ),
        Strategy::TokenToWordFirst => decode_spans(
            &aggregate_to_words(unit_labels, alignment, Aggregation::First),
            &alignment.word_spans(),
            text,
        ),
        Strategy::WordToWord => decode_spans(unit_labels, &alignment.word_spans(), text),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    input_width: usize,
    num_labels: usize,
    unit_level: UnitLevel,
    use_genre: bool,
    combine: crate::embed::Combine,
    bias: bool,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

impl LinearTagger {
    /// Serializes to the model file layout; `config` is echoed in the header.
    pub fn to_bytes(&self, config: Option<serde_json::Value>) -> Vec<u8> {
        let header = ModelHeader {
            format_version: MODEL_FORMAT_VERSION,
            input_width: self.input_width,
            num_labels: self.num_labels(),
            unit_level: self.spec.unit_level,
            use_genre: self.spec.use_genre,
            combine: self.spec.combine,
            bias: self.bias.is_some(),
            labels: self.label_set.names().to_vec(),
            config,
        };
        let header = serde_json::to_vec(&header).expect("serializable header");
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.parameter_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for w in self.weights.iter().chain(self.bias.iter().flatten()) {
            out.extend_from_slice(&(*w as f32).to_le_bytes());
        }
        out
    }

    /// Parses a model file. When `labels` is given, the stored label names
    /// must match it exactly.
    pub fn from_bytes(bytes: &[u8], labels: Option<&LabelSet>) -> Result<Self, TagError> {
        let bad = |m: String| TagError::BadModel(m);
        if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + header_len).ok_or_else(|| bad("truncated header".into()))?;
        let header: ModelHeader = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", header.format_version)));
        }
        if header.labels.first().map(String::as_str) != Some(crate::corpus::OUTSIDE)
            || header.labels.len() != header.num_labels
        {
            return Err(bad("label header is inconsistent".into()));
        }
        let label_set = LabelSet::new(header.labels[1..].iter().cloned()).map_err(|e| bad(e.to_string()))?;
        if let Some(expected) = labels {
            if expected.names() != label_set.names() {
                return Err(bad(format!(
                    "model has {} labels {:?}, label file has {} labels",
                    label_set.len(),
                    label_set.techniques(),
                    expected.len()
                )));
            }
        }
        let n_weights = header.input_width * header.num_labels;
        let n_params = n_weights + if header.bias { header.num_labels } else { 0 };
        let data = &bytes[12 + header_len..];
        if data.len() != 4 * n_params {
            return Err(bad(format!(
                "expected {} weight bytes for {}×{}, found {}",
                4 * n_params,
                header.input_width,
                header.num_labels,
                data.len()
            )));
        }
        let mut params: Vec<f64> = data
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let bias = header.bias.then(|| params.split_off(n_weights));
        Ok(LinearTagger {
            label_set,
            spec: FeatureSpec {
                unit_level: header.unit_level,
                use_genre: header.use_genre,
                combine: header.combine,
            },
            input_width: header.input_width,
            weights: params,
            bias,
        })
    }

    pub fn save(&self, path: &Path, config: Option<serde_json::Value>) -> Result<(), TagError> {
        write_atomic(path, &self.to_bytes(config)).map_err(|source| TagError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path, labels: Option<&LabelSet>) -> Result<Self, TagError> {
        let bytes = fs::read(path).map_err(|source| TagError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, labels)
    }

    /// Weights rounded through f32, as they would be after a save/load.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w = f64::from(*w as f32));
        if let Some(b) = &mut out.bias {
            b.iter_mut().for_each(|w| *w = f64::from(*w as f32));
        }
        out
    }
}
