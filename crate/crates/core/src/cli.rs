//! Batch commands and their shared configuration.
//!
//! A run is described by one TOML file ([`RunConfig`]) plus flag overrides;
//! flags win. Relative paths in the file resolve against its directory.
//!
//! ```toml
//! labels = "labels.txt"
//! vocab = "vocab.txt"
//! seed = 13
//! strategy = "first"          # token | majority | first | word
//! use_genre = true
//! combine = "concat"          # concat | add | token-only
//!
//! [embedding]
//! kind = "hash"               # or: kind = "file", path = "vectors.jsonl"
//! dim = 768
//!
//! [hyperparams]
//! learning_rate = 0.5
//! batch_size = 16
//! epochs = 50
//! ```
//!
//! All sub-seeds (embedding hash, weight init, shuffling, folds) derive from
//! `seed` through [`crate::seed::sub_seed`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError, LabelSet, Snippet, SpanSet, SplitStats, TechniqueSpan};
use crate::embed::{
    build_features, Combine, EmbedError, EmbeddingProvider, FeatureSpec, HashEmbedder, PrecomputedEmbeddings,
    DEFAULT_DIM,
};
use crate::fsutil::write_atomic;
use crate::repair::{repair_corpus, OverrideLedger, RepairError, RepairReport};
use crate::score::{micro_f1, AblationTable, ScoreError, ScoreOptions, ScoreReport};
use crate::seed::{streams, sub_seed};
use crate::segment::{align, project_gold, GreedyTokenizer, SubwordTokenizer, TokenAlignment, UnitLevel, WholeWordTokenizer};
use crate::tagger::{
    predict_units, spans_from_unit_labels, train_observed, EpochStats, Hyperparams, LinearTagger, Strategy, TagError,
    TrainOptions, TrainingExample,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 1.
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable or inconsistent data; exit code 2.
    #[error("data error: {0}")]
    Data(String),
    /// Anything else; exit code 3.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn context(self, what: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{what}: {m}")),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RepairError> for CliError {
    fn from(e: RepairError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TagError> for CliError {
    fn from(e: TagError) -> Self {
        match e {
            TagError::WidthMismatch { .. } | TagError::InvalidHyperparams(_) | TagError::IncompatibleStrategy { .. } => {
                CliError::Config(e.to_string())
            }
            TagError::NonFinite { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Atomic write with the error mapped to a data error.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Where token vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSource {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
        /// Explicit hash seed; derived from the global seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Hash {
            dim: DEFAULT_DIM,
            seed: None,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_strategy() -> Strategy {
    Strategy::TokenToWordFirst
}

/// Effective configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub labels: PathBuf,
    /// Tokenizer vocabulary; whole words are single tokens when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default)]
    pub embedding: EmbeddingSource,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Must agree with the strategy when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_level: Option<UnitLevel>,
    #[serde(default = "default_true")]
    pub use_genre: bool,
    #[serde(default)]
    pub combine: Combine,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cap_per_span: bool,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Flag overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub labels: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub use_genre: Option<bool>,
    pub strategy: Option<Strategy>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub cap_per_span: Option<bool>,
}

impl RunConfig {
    /// A config with defaults and the given label file.
    pub fn with_labels(labels: impl Into<PathBuf>) -> Self {
        RunConfig {
            labels: labels.into(),
            vocab: None,
            embedding: EmbeddingSource::default(),
            strategy: default_strategy(),
            unit_level: None,
            use_genre: true,
            combine: Combine::Concat,
            hyperparams: Hyperparams::default(),
            train: TrainOptions::default(),
            ledger: None,
            seed: 0,
            cap_per_span: false,
            base_dir: None,
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.labels);
        cfg.vocab.as_mut().map(resolve);
        cfg.ledger.as_mut().map(resolve);
        if let EmbeddingSource::File { path } = &mut cfg.embedding {
            resolve(path);
        }
        cfg.base_dir = Some(base_dir.to_path_buf());
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.labels {
            self.labels = v.clone();
        }
        if let Some(v) = &o.vocab {
            self.vocab = Some(v.clone());
        }
        if let Some(v) = o.use_genre {
            self.use_genre = v;
        }
        if let Some(v) = o.strategy {
            self.strategy = v;
            self.unit_level = None;
        }
        if let Some(v) = o.learning_rate {
            self.hyperparams.learning_rate = v;
        }
        if let Some(v) = o.batch_size {
            self.hyperparams.batch_size = v;
        }
        if let Some(v) = o.epochs {
            self.hyperparams.epochs = v;
        }
        if let Some(v) = o.cap_per_span {
            self.cap_per_span = v;
        }
    }

    /// Checks invariants and that referenced files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(level) = self.unit_level {
            if level != self.strategy.unit_level() {
                return Err(CliError::Config(format!(
                    "strategy {} needs unit_level {:?}, config says {:?}",
                    self.strategy,
                    self.strategy.unit_level(),
                    level
                )));
            }
        }
        self.training_hyperparams()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let EmbeddingSource::Hash { dim: 0, .. } = self.embedding {
            return Err(CliError::Config("embedding dim must be positive".into()));
        }
        let mut files = vec![("labels", &self.labels)];
        if let Some(v) = &self.vocab {
            files.push(("vocab", v));
        }
        if let Some(v) = &self.ledger {
            files.push(("ledger", v));
        }
        if let EmbeddingSource::File { path } = &self.embedding {
            files.push(("embedding file", path));
        }
        for (what, path) in files {
            if !path.is_file() {
                return Err(CliError::Config(format!("{what} {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            unit_level: self.strategy.unit_level(),
            use_genre: self.use_genre,
            combine: self.combine,
        }
    }

    /// Hyperparameters with the seed replaced by the global seed.
    pub fn training_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            seed: self.seed,
            ..self.hyperparams.clone()
        }
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            cap_per_span: self.cap_per_span,
        }
    }

    /// The effective config as JSON, with paths under the config's own
    /// directory shown relative to it so artifacts do not depend on where
    /// the run happened.
    pub fn echo(&self) -> serde_json::Value {
        let mut shown = self.clone();
        if let Some(base) = &self.base_dir {
            let rel = |p: &mut PathBuf| {
                if let Ok(r) = p.strip_prefix(base) {
                    *p = r.to_path_buf();
                }
            };
            rel(&mut shown.labels);
            shown.vocab.as_mut().map(rel);
            shown.ledger.as_mut().map(rel);
            if let EmbeddingSource::File { path } = &mut shown.embedding {
                rel(path);
            }
        }
        serde_json::to_value(&shown).expect("config serializes")
    }
}

/// Tokenizer, embedding provider and feature layout built from a config.
pub struct Pipeline {
    pub labels: LabelSet,
    pub tokenizer: Box<dyn SubwordTokenizer>,
    pub provider: Box<dyn EmbeddingProvider>,
    pub spec: FeatureSpec,
    pub strategy: Strategy,
}

impl Pipeline {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let labels = LabelSet::from_file(&cfg.labels)?;
        let tokenizer: Box<dyn SubwordTokenizer> = match &cfg.vocab {
            Some(v) => Box::new(
                GreedyTokenizer::from_file(v).map_err(|e| CliError::Data(format!("{}: {e}", v.display())))?,
            ),
            None => Box::new(WholeWordTokenizer),
        };
        let provider: Box<dyn EmbeddingProvider> = match &cfg.embedding {
            EmbeddingSource::Hash { dim, seed } => Box::new(HashEmbedder::new(
                seed.unwrap_or_else(|| sub_seed(cfg.seed, "embed")),
                *dim,
            )),
            EmbeddingSource::File { path } => Box::new(PrecomputedEmbeddings::load(path)?),
        };
        Ok(Pipeline {
            labels,
            tokenizer,
            provider,
            spec: cfg.feature_spec(),
            strategy: cfg.strategy,
        })
    }

    pub fn with_strategy(mut self, strategy: Strategy, use_genre: bool) -> Self {
        self.strategy = strategy;
        self.spec.unit_level = strategy.unit_level();
        self.spec.use_genre = use_genre;
        self
    }

    pub fn input_width(&self) -> usize {
        self.spec.width(self.provider.dim())
    }

    pub fn align(&self, snippet: &Snippet) -> TokenAlignment {
        align(&snippet.text, self.tokenizer.as_ref())
    }

    /// Features and projected gold labels for each snippet.
    pub fn examples(&self, snippets: &[Snippet]) -> Result<Vec<TrainingExample>, CliError> {
        snippets
            .iter()
            .map(|s| {
                let a = self.align(s);
                let seq = self.provider.embed(s, &a)?;
                let features = build_features(&seq, &a, s.genre, &self.spec)?;
                let labels = project_gold(&a, &s.gold_spans, self.spec.unit_level);
                Ok(TrainingExample { features, labels })
            })
            .collect()
    }

    pub fn train(
        &self,
        snippets: &[Snippet],
        hyper: &Hyperparams,
        options: &TrainOptions,
        on_epoch: &mut dyn FnMut(&EpochStats),
    ) -> Result<(LinearTagger, Vec<EpochStats>), CliError> {
        let examples = self.examples(snippets)?;
        let outcome = train_observed(&examples, &self.labels, self.spec, hyper, options, on_epoch)?;
        Ok((outcome.tagger, outcome.history))
    }

    pub fn predict(&self, tagger: &LinearTagger, snippets: &[Snippet]) -> Result<Vec<Vec<TechniqueSpan>>, CliError> {
        snippets
            .iter()
            .map(|s| {
                let a = self.align(s);
                let seq = self.provider.embed(s, &a)?;
                let features = build_features(&seq, &a, s.genre, tagger.spec())?;
                let units = predict_units(tagger, &features)?;
                Ok(spans_from_unit_labels(&units, &a, &s.text, self.strategy))
            })
            .collect()
    }

    /// Rejects a model whose layout disagrees with this pipeline.
    pub fn check_model(&self, tagger: &LinearTagger) -> Result<(), CliError> {
        if tagger.use_genre() != self.spec.use_genre {
            return Err(CliError::Config(format!(
                "model was trained with use_genre = {}, config has use_genre = {}",
                tagger.use_genre(),
                self.spec.use_genre
            )));
        }
        if tagger.unit_level() != self.strategy.unit_level() {
            return Err(CliError::Config(format!(
                "model is {:?}-level but strategy {} needs {:?}-level",
                tagger.unit_level(),
                self.strategy,
                self.strategy.unit_level()
            )));
        }
        if tagger.spec().combine != self.spec.combine {
            return Err(CliError::Config(format!(
                "model combines vectors with {:?}, config uses {:?}",
                tagger.spec().combine,
                self.spec.combine
            )));
        }
        if tagger.input_width() != self.input_width() {
            return Err(CliError::Config(format!(
                "model input width {} does not match configured feature width {}",
                tagger.input_width(),
                self.input_width()
            )));
        }
        Ok(())
    }
}

/// Loads and concatenates corpora in order.
pub fn load_corpora(paths: &[PathBuf], labels: &LabelSet) -> Result<Vec<Snippet>, CliError> {
    let mut out: Vec<Snippet> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in paths {
        for s in corpus::load_corpus(p, labels)? {
            if !seen.insert(s.id.clone()) {
                return Err(CliError::Data(format!("{}: duplicate snippet id {:?}", p.display(), s.id)));
            }
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RepairSummary {
    pub input: usize,
    pub retained: usize,
    pub actions: usize,
    pub unrepairable: Vec<String>,
}

/// `repair`: writes the repaired corpus and the JSONL repair report. With
/// `strict`, any unrepairable snippet turns into a data error after the
/// outputs are written.
pub fn cmd_repair(
    labels: &Path,
    input: &Path,
    ledger: Option<&Path>,
    output: &Path,
    report_path: &Path,
    strict: bool,
) -> Result<(RepairSummary, RepairReport), CliError> {
    let labels = LabelSet::from_file(labels)?;
    let snippets = corpus::load_corpus(input, &labels)?;
    let ledger = match ledger {
        Some(p) => OverrideLedger::load(p)?,
        None => OverrideLedger::new(),
    };
    let (repaired, report) = repair_corpus(&snippets, &ledger);
    corpus::save_corpus(&repaired, &labels, output)?;
    report.save(report_path)?;
    let summary = RepairSummary {
        input: snippets.len(),
        retained: repaired.len(),
        actions: report.action_count(),
        unrepairable: report.unrepairable_ids().into_iter().map(String::from).collect(),
    };
    if strict && !summary.unrepairable.is_empty() {
        return Err(CliError::Data(format!(
            "{} unrepairable snippet(s): {}",
            summary.unrepairable.len(),
            summary.unrepairable.join(", ")
        )));
    }
    Ok((summary, report))
}

#[derive(Debug, Clone, Serialize)]
struct EpochLog {
    epoch: usize,
    mean_loss: f64,
    wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub snippets: usize,
    pub units: usize,
    pub input_width: usize,
    pub labels: usize,
    pub parameter_count: usize,
    pub losses: Vec<f64>,
}

/// `train`: concatenates the inputs, trains, and writes the model plus a
/// JSON training log (`<model>.log.json` unless `log` is given).
pub fn cmd_train(cfg: &RunConfig, inputs: &[PathBuf], model_out: &Path, log: Option<&Path>) -> Result<TrainSummary, CliError> {
    let pipeline = Pipeline::from_config(cfg)?;
    let snippets = load_corpora(inputs, &pipeline.labels)?;
    let started = Instant::now();
    let mut epochs: Vec<EpochLog> = Vec::new();
    let (tagger, history) = pipeline.train(&snippets, &cfg.training_hyperparams(), &cfg.train, &mut |e| {
        epochs.push(EpochLog {
            epoch: e.epoch,
            mean_loss: e.mean_loss,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    })?;
    tagger.save(model_out, Some(cfg.echo()))?;
    let units = pipeline
        .examples(&snippets)?
        .iter()
        .map(|e| e.labels.len())
        .sum();
    let summary = TrainSummary {
        snippets: snippets.len(),
        units,
        input_width: tagger.input_width(),
        labels: tagger.num_labels(),
        parameter_count: tagger.parameter_count(),
        losses: history.iter().map(|e| e.mean_loss).collect(),
    };
    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = model_out.as_os_str().to_owned();
        p.push(".log.json");
        PathBuf::from(p)
    });
    let body = serde_json::json!({
        "config": cfg.echo(),
        "summary": summary,
        "epochs": epochs,
        "total_wall_ms": started.elapsed().as_secs_f64() * 1e3,
    });
    write_output(&log_path, serde_json::to_string_pretty(&body).expect("json").as_bytes())?;
    Ok(summary)
}

/// `predict`: runs a trained model over a corpus and writes predictions.
pub fn cmd_predict(cfg: &RunConfig, model: &Path, input: &Path, output: &Path) -> Result<usize, CliError> {
    let pipeline = Pipeline::from_config(cfg)?;
    let tagger = LinearTagger::load(model, Some(&pipeline.labels))?;
    pipeline.check_model(&tagger)?;
    let snippets = corpus::load_corpus(input, &pipeline.labels)?;
    let predictions = pipeline.predict(&tagger, &snippets)?;
    corpus::save_predictions(&snippets, &predictions, &pipeline.labels, output)?;
    Ok(predictions.iter().map(Vec::len).sum())
}

/// `score`: proportional-overlap micro-F1 of a prediction file against a
/// gold corpus; optionally writes the JSON report.
pub fn cmd_score(
    labels: &Path,
    gold: &Path,
    pred: &Path,
    options: ScoreOptions,
    json_out: Option<&Path>,
) -> Result<ScoreReport, CliError> {
    let labels = LabelSet::from_file(labels)?;
    let gold = corpus::load_predictions(gold, &labels)?;
    let pred = corpus::load_predictions(pred, &labels)?;
    let report = micro_f1(&gold, &pred, &labels, options)?;
    if let Some(path) = json_out {
        write_output(path, report.to_json().as_bytes())?;
    }
    Ok(report)
}

/// `stats`: genre counts per named split.
pub fn cmd_stats(labels: &Path, splits: &[(String, PathBuf)]) -> Result<SplitStats, CliError> {
    let labels = LabelSet::from_file(labels)?;
    let mut stats = SplitStats::default();
    for (name, path) in splits {
        stats.push(name.clone(), &corpus::load_corpus(path, &labels)?);
    }
    Ok(stats)
}

/// Candidate hyperparameters for `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            learning_rates: vec![1e-3, 1e-2, 1e-1],
            batch_sizes: vec![16, 32],
            epochs: vec![3, 10, 30],
        }
    }
}

impl Grid {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let grid: Grid = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if grid.learning_rates.is_empty() || grid.batch_sizes.is_empty() || grid.epochs.is_empty() {
            return Err(CliError::Config("grid lists must be non-empty".into()));
        }
        Ok(grid)
    }

    /// Cells in lexicographic order: learning rate, then batch size, then
    /// epochs, each in file order.
    pub fn cells(&self, seed: u64) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &batch_size in &self.batch_sizes {
                for &epochs in &self.epochs {
                    out.push(Hyperparams {
                        learning_rate,
                        batch_size,
                        epochs,
                        seed,
                    });
                }
            }
        }
        out
    }
}

/// Fold index of every snippet: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, streams::FOLDS)));
    let mut fold = vec![0; n];
    for (pos, idx) in order.into_iter().enumerate() {
        fold[idx] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub hyperparams: Hyperparams,
    pub fold_f1: Vec<f64>,
    /// `None` when training failed (e.g. diverged) on some fold.
    pub mean_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub folds: usize,
    pub fold_of: Vec<usize>,
    pub cells: Vec<GridCell>,
    pub best_index: usize,
    pub best: Hyperparams,
}

impl TuneReport {
    pub fn render(&self) -> String {
        let mut out = String::from("lr\tbatch\tepochs\tmean F1\n");
        for (i, c) in self.cells.iter().enumerate() {
            let score = c
                .mean_f1
                .map(|f| format!("{:.2}", 100.0 * f))
                .unwrap_or_else(|| "diverged".into());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}{}\n",
                c.hyperparams.learning_rate,
                c.hyperparams.batch_size,
                c.hyperparams.epochs,
                score,
                if i == self.best_index { "\t<- best" } else { "" }
            ));
        }
        out
    }
}

/// Grid search with k-fold cross-validation over already-loaded snippets.
pub fn tune(
    pipeline: &Pipeline,
    snippets: &[Snippet],
    grid: &Grid,
    folds: usize,
    seed: u64,
    options: &TrainOptions,
    score_options: ScoreOptions,
) -> Result<TuneReport, CliError> {
    if folds < 2 {
        return Err(CliError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if snippets.len() < folds {
        return Err(CliError::Data(format!("{} snippets cannot fill {folds} folds", snippets.len())));
    }
    let fold_of = fold_assignment(snippets.len(), folds, seed);
    let examples = pipeline.examples(snippets)?;
    let mut cells = Vec::new();
    for hyper in grid.cells(seed) {
        let mut fold_f1 = Vec::with_capacity(folds);
        let mut error = None;
        for k in 0..folds {
            let train_ex: Vec<TrainingExample> = examples
                .iter()
                .zip(&fold_of)
                .filter(|(_, f)| **f != k)
                .map(|(e, _)| e.clone())
                .collect();
            let held: Vec<Snippet> = snippets
                .iter()
                .zip(&fold_of)
                .filter(|(_, f)| **f == k)
                .map(|(s, _)| s.clone())
                .collect();
            let outcome = match train_observed(&train_ex, &pipeline.labels, pipeline.spec, &hyper, options, &mut |_| {}) {
                Ok(o) => o,
                Err(TagError::NonFinite { epoch, batch }) => {
                    error = Some(format!("diverged on fold {k} at epoch {epoch}, batch {batch}"));
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            let preds = pipeline.predict(&outcome.tagger, &held)?;
            let gold: Vec<SpanSet> = held.iter().map(SpanSet::from).collect();
            let pred: Vec<SpanSet> = held
                .iter()
                .zip(preds)
                .map(|(s, spans)| SpanSet { id: s.id.clone(), spans })
                .collect();
            fold_f1.push(micro_f1(&gold, &pred, &pipeline.labels, score_options)?.micro_f1);
        }
        let mean_f1 = error.is_none().then(|| fold_f1.iter().sum::<f64>() / folds as f64);
        cells.push(GridCell {
            hyperparams: hyper,
            fold_f1,
            mean_f1,
            error,
        });
    }
    let mut best_index = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in cells.iter().enumerate() {
        if let Some(f) = c.mean_f1 {
            if f > best_score {
                best_score = f;
                best_index = i;
            }
        }
    }
    if best_score == f64::NEG_INFINITY {
        return Err(CliError::Data("every grid cell diverged".into()));
    }
    Ok(TuneReport {
        folds,
        fold_of,
        best: cells[best_index].hyperparams.clone(),
        best_index,
        cells,
    })
}

/// `tune`: loads inputs, runs [`tune`], optionally writes the JSON report.
pub fn cmd_tune(cfg: &RunConfig, grid: &Path, folds: usize, inputs: &[PathBuf], report_out: Option<&Path>) -> Result<TuneReport, CliError> {
    if folds < 2 {
        return Err(CliError::Config(format!("need at least 2 folds, got {folds}")));
    }
    let grid = Grid::load(grid)?;
    let pipeline = Pipeline::from_config(cfg)?;
    let snippets = load_corpora(inputs, &pipeline.labels)?;
    let report = tune(&pipeline, &snippets, &grid, folds, cfg.seed, &cfg.train, cfg.score_options())?;
    if let Some(path) = report_out {
        let body = serde_json::json!({ "config": cfg.echo(), "report": report });
        write_output(path, serde_json::to_string_pretty(&body).expect("json").as_bytes())?;
    }
    Ok(report)
}

/// First epoch whose loss has closed 95% of the gap between the first and
/// the final epoch loss.
pub fn convergence_epoch(losses: &[f64]) -> Option<usize> {
    let (first, last) = (*losses.first()?, *losses.last()?);
    let target = last + 0.05 * (first - last);
    losses.iter().position(|l| *l <= target).map(|i| i + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub strategy: Strategy,
    pub use_genre: bool,
    pub report: ScoreReport,
    pub losses: Vec<f64>,
    pub convergence_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub table: AblationTable,
    pub cells: Vec<AblationCell>,
}

impl AblationOutcome {
    /// Table followed by one convergence line per cell.
    pub fn render(&self) -> String {
        let mut out = self.table.render();
        out.push_str("\nconvergence (epoch loss):\n");
        for c in &self.cells {
            let curve: Vec<String> = c.losses.iter().map(|l| format!("{l:.4}")).collect();
            out.push_str(&format!(
                "{:<8} genre={:<5} converged@{}  {}\n",
                c.strategy.flag(),
                c.use_genre,
                c.convergence_epoch.map_or("-".to_string(), |e| e.to_string()),
                curve.join(" ")
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.cells).expect("json") + "\n"
    }
}

/// Trains and evaluates each (strategy, genre) cell on pre-loaded data.
pub fn ablate(
    cfg: &RunConfig,
    train_snippets: &[Snippet],
    eval_snippets: &[Snippet],
    strategies: &[Strategy],
    genres: &[bool],
) -> Result<AblationOutcome, CliError> {
    let mut table = AblationTable::new();
    let mut cells = Vec::new();
    let gold: Vec<SpanSet> = eval_snippets.iter().map(SpanSet::from).collect();
    // the three token-level strategies share one trained model per genre setting
    let mut trained: BTreeMap<(UnitLevel, bool), (LinearTagger, Vec<EpochStats>)> = BTreeMap::new();
    for &strategy in strategies {
        for &use_genre in genres {
            let cell = format!("cell {} / genre={}", strategy.flag(), use_genre);
            let mut run = || -> Result<AblationCell, CliError> {
                let pipeline = Pipeline::from_config(cfg)?.with_strategy(strategy, use_genre);
                let key = (strategy.unit_level(), use_genre);
                let (tagger, history) = match trained.entry(key) {
                    std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(pipeline.train(train_snippets, &cfg.training_hyperparams(), &cfg.train, &mut |_| {})?)
                    }
                };
                let preds = pipeline.predict(tagger, eval_snippets)?;
                let pred: Vec<SpanSet> = eval_snippets
                    .iter()
                    .zip(preds)
                    .map(|(s, spans)| SpanSet { id: s.id.clone(), spans })
                    .collect();
                let report = micro_f1(&gold, &pred, &pipeline.labels, cfg.score_options())?;
                let losses: Vec<f64> = history.iter().map(|e| e.mean_loss).collect();
                Ok(AblationCell {
                    strategy,
                    use_genre,
                    convergence_epoch: convergence_epoch(&losses),
                    report,
                    losses,
                })
            };
            let result = run().map_err(|e| e.context(&cell))?;
            table.insert_report(strategy, use_genre, &result.report);
            cells.push(result);
        }
    }
    Ok(AblationOutcome { table, cells })
}

/// `ablate`: trains on `train_inputs`, evaluates on `eval_input`.
pub fn cmd_ablate(
    cfg: &RunConfig,
    train_inputs: &[PathBuf],
    eval_input: &Path,
    strategies: &[Strategy],
    genres: &[bool],
) -> Result<AblationOutcome, CliError> {
    let labels = LabelSet::from_file(&cfg.labels)?;
    let train_snippets = load_corpora(train_inputs, &labels)?;
    let eval_snippets = corpus::load_corpus(eval_input, &labels)?;
    ablate(cfg, &train_snippets, &eval_snippets, strategies, genres)
}

/// Published-style cells keyed for [`AblationTable`] construction.
pub fn table_from_cells(cells: &BTreeMap<(Strategy, bool), f64>) -> AblationTable {
    let mut t = AblationTable::new();
    for ((s, g), v) in cells {
        t.insert_percent(*s, *g, *v);
    }
    t
}
