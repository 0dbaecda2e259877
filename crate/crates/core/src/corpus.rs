//! Snippets, technique spans and the line-delimited JSON formats.
//!
//! All offsets are counted in Unicode scalar values (`char`s), never bytes.
//!
//! Corpus lines look like
//!
//! ```json
//! {"id": "t1", "text": "...", "type": "tweet", "labels": [{"technique": "Loaded_Language", "start": 3, "end": 9, "text": "..."}]}
//! ```
//!
//! Prediction files use the same `labels` shape keyed by `id`; `text` and
//! `type` are optional there.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;

/// Name reserved for the non-technique label.
pub const OUTSIDE: &str = "O";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown technique {name:?}")]
    UnknownTechnique { line: usize, name: String },
    #[error("line {line}: duplicate snippet id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty snippet id")]
    EmptyId { line: usize },
    #[error("line {line}: unknown genre {value:?} (expected tweet or paragraph)")]
    UnknownGenre { line: usize, value: String },
    #[error("invalid label set: {0}")]
    LabelSet(String),
    #[error("{snippets} snippets but {predictions} prediction lists")]
    NotParallel { snippets: usize, predictions: usize },
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// The two text genres of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genre {
    Tweet,
    Paragraph,
}

impl Genre {
    /// Case-insensitive parse of the `type` field.
    pub fn parse(value: &str) -> Option<Genre> {
        if value.eq_ignore_ascii_case("tweet") {
            Some(Genre::Tweet)
        } else if value.eq_ignore_ascii_case("paragraph") {
            Some(Genre::Paragraph)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Tweet => "tweet",
            Genre::Paragraph => "paragraph",
        }
    }

    /// Position in the genre one-hot vector: (tweet, paragraph).
    pub fn one_hot_index(self) -> usize {
        match self {
            Genre::Tweet => 0,
            Genre::Paragraph => 1,
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index into a [`LabelSet`]. `LabelId(0)` is always the outside label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LabelId(pub usize);

impl LabelId {
    pub const O: LabelId = LabelId(0);

    pub fn is_outside(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// The technique inventory, with the outside label pinned at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, LabelId>,
}

impl LabelSet {
    /// Builds a label set from technique names; `O` is prepended.
    pub fn new<I, S>(techniques: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names = vec![OUTSIDE.to_string()];
        let mut index = HashMap::new();
        index.insert(OUTSIDE.to_string(), LabelId::O);
        for name in techniques {
            let name = name.into();
            if name.is_empty() {
                return Err(CorpusError::LabelSet("empty technique name".into()));
            }
            if index.contains_key(&name) {
                return Err(CorpusError::LabelSet(format!("duplicate label {name:?}")));
            }
            index.insert(name.clone(), LabelId(names.len()));
            names.push(name);
        }
        Ok(LabelSet { names, index })
    }

    /// Reads one technique name per line. Blank lines and `#` comments are
    /// skipped.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    /// Total label count, including `O`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// Always false: `O` is present in every label set.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn technique_count(&self) -> usize {
        self.names.len() - 1
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Technique names without `O`.
    pub fn techniques(&self) -> &[String] {
        &self.names[1..]
    }
}

/// A labeled character range `[start, end)` and the text it claims to cover.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TechniqueSpan {
    pub technique: LabelId,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl TechniqueSpan {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One annotated text unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub id: String,
    pub genre: Genre,
    pub text: String,
    pub gold_spans: Vec<TechniqueSpan>,
}

/// Spans attached to a snippet id; the unit of prediction files and scoring.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpanSet {
    pub id: String,
    pub spans: Vec<TechniqueSpan>,
}

impl From<&Snippet> for SpanSet {
    fn from(s: &Snippet) -> Self {
        SpanSet {
            id: s.id.clone(),
            spans: s.gold_spans.clone(),
        }
    }
}

/// Number of chars in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// `text[start..end)` in char offsets, or `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLabel {
    technique: String,
    start: usize,
    end: usize,
    #[serde(default)]
    text: String,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default, rename = "type")]
    genre: Option<String>,
    #[serde(default)]
    labels: Vec<RawLabel>,
}

#[derive(Serialize)]
struct SnippetOut<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(rename = "type")]
    genre: Genre,
    labels: Vec<RawLabel>,
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    id: &'a str,
    labels: Vec<RawLabel>,
}

fn parse_record(line_no: usize, line: &str) -> Result<RawRecord, CorpusError> {
    serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: line_no,
        message: e.to_string(),
    })
}

fn convert_labels(
    line_no: usize,
    raw: Vec<RawLabel>,
    labels: &LabelSet,
) -> Result<Vec<TechniqueSpan>, CorpusError> {
    raw.into_iter()
        .map(|l| {
            let technique = labels
                .id(&l.technique)
                .filter(|id| !id.is_outside())
                .ok_or_else(|| CorpusError::UnknownTechnique {
                    line: line_no,
                    name: l.technique.clone(),
                })?;
            Ok(TechniqueSpan {
                technique,
                start: l.start,
                end: l.end,
                surface: l.text,
            })
        })
        .collect()
}

fn non_blank_lines<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = (usize, io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
}

/// Parses a corpus from any reader. Offsets are taken verbatim.
pub fn read_corpus<R: BufRead>(reader: R, labels: &LabelSet) -> Result<Vec<Snippet>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in non_blank_lines(reader) {
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let raw = parse_record(line_no, &line)?;
        if raw.id.is_empty() {
            return Err(CorpusError::EmptyId { line: line_no });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: raw.id,
            });
        }
        let text = raw.text.ok_or_else(|| CorpusError::Malformed {
            line: line_no,
            message: "missing field `text`".into(),
        })?;
        let genre_raw = raw.genre.ok_or_else(|| CorpusError::Malformed {
            line: line_no,
            message: "missing field `type`".into(),
        })?;
        let genre = Genre::parse(&genre_raw).ok_or(CorpusError::UnknownGenre {
            line: line_no,
            value: genre_raw,
        })?;
        let gold_spans = convert_labels(line_no, raw.labels, labels)?;
        out.push(Snippet {
            id: raw.id,
            genre,
            text,
            gold_spans,
        });
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, labels: &LabelSet) -> Result<Vec<Snippet>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_corpus(BufReader::new(file), labels)
}

/// Parses a prediction file (or any corpus file) into per-id span lists.
pub fn read_predictions<R: BufRead>(reader: R, labels: &LabelSet) -> Result<Vec<SpanSet>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in non_blank_lines(reader) {
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let raw = parse_record(line_no, &line)?;
        if raw.id.is_empty() {
            return Err(CorpusError::EmptyId { line: line_no });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: raw.id,
            });
        }
        out.push(SpanSet {
            spans: convert_labels(line_no, raw.labels, labels)?,
            id: raw.id,
        });
    }
    Ok(out)
}

pub fn load_predictions(path: &Path, labels: &LabelSet) -> Result<Vec<SpanSet>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_predictions(BufReader::new(file), labels)
}

fn raw_labels(spans: &[TechniqueSpan], labels: &LabelSet) -> Vec<RawLabel> {
    let mut sorted: Vec<&TechniqueSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end, s.technique));
    sorted
        .into_iter()
        .map(|s| RawLabel {
            technique: labels.name(s.technique).to_string(),
            start: s.start,
            end: s.end,
            text: s.surface.clone(),
        })
        .collect()
}

fn to_line<T: Serialize>(value: &T, buf: &mut String) {
    // Serializing plain structs of strings and integers cannot fail.
    buf.push_str(&serde_json::to_string(value).expect("serializable record"));
    buf.push('\n');
}

/// Renders predictions as JSONL: one `{"id", "labels"}` object per snippet,
/// labels ordered by span start.
pub fn predictions_to_jsonl(
    snippets: &[Snippet],
    predictions: &[Vec<TechniqueSpan>],
    labels: &LabelSet,
) -> Result<String, CorpusError> {
    if snippets.len() != predictions.len() {
        return Err(CorpusError::NotParallel {
            snippets: snippets.len(),
            predictions: predictions.len(),
        });
    }
    let mut buf = String::new();
    for (snippet, spans) in snippets.iter().zip(predictions) {
        to_line(
            &PredictionOut {
                id: &snippet.id,
                labels: raw_labels(spans, labels),
            },
            &mut buf,
        );
    }
    Ok(buf)
}

pub fn save_predictions(
    snippets: &[Snippet],
    predictions: &[Vec<TechniqueSpan>],
    labels: &LabelSet,
    path: &Path,
) -> Result<(), CorpusError> {
    let body = predictions_to_jsonl(snippets, predictions, labels)?;
    write_atomic(path, body.as_bytes()).map_err(|e| CorpusError::io(path, e))
}

/// Renders full snippets (text, type and gold labels) as JSONL.
pub fn corpus_to_jsonl(snippets: &[Snippet], labels: &LabelSet) -> String {
    let mut buf = String::new();
    for s in snippets {
        to_line(
            &SnippetOut {
                id: &s.id,
                text: &s.text,
                genre: s.genre,
                labels: raw_labels(&s.gold_spans, labels),
            },
            &mut buf,
        );
    }
    buf
}

pub fn save_corpus(snippets: &[Snippet], labels: &LabelSet, path: &Path) -> Result<(), CorpusError> {
    write_atomic(path, corpus_to_jsonl(snippets, labels).as_bytes())
        .map_err(|e| CorpusError::io(path, e))
}

/// Snippet counts per genre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct GenreCounts {
    pub tweet: usize,
    pub paragraph: usize,
}

impl GenreCounts {
    pub fn total(&self) -> usize {
        self.tweet + self.paragraph
    }
}

impl std::ops::Add for GenreCounts {
    type Output = GenreCounts;
    fn add(self, rhs: GenreCounts) -> GenreCounts {
        GenreCounts {
            tweet: self.tweet + rhs.tweet,
            paragraph: self.paragraph + rhs.paragraph,
        }
    }
}

pub fn corpus_stats(snippets: &[Snippet]) -> GenreCounts {
    let mut counts = GenreCounts::default();
    for s in snippets {
        match s.genre {
            Genre::Tweet => counts.tweet += 1,
            Genre::Paragraph => counts.paragraph += 1,
        }
    }
    counts
}

/// Genre counts per named split, rendered as a genre × split table with a
/// total column.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SplitStats {
    pub splits: Vec<(String, GenreCounts)>,
}

impl SplitStats {
    pub fn push(&mut self, split: impl Into<String>, snippets: &[Snippet]) {
        self.splits.push((split.into(), corpus_stats(snippets)));
    }

    pub fn total(&self) -> GenreCounts {
        self.splits
            .iter()
            .fold(GenreCounts::default(), |acc, (_, c)| acc + *c)
    }

    pub fn render(&self) -> String {
        let mut header = String::from("Type");
        for (name, _) in &self.splits {
            header.push_str(&format!("\t{name}"));
        }
        header.push_str("\tTotal\n");
        let row = |label: &str, pick: fn(&GenreCounts) -> usize| {
            let mut line = label.to_string();
            for (_, c) in &self.splits {
                line.push_str(&format!("\t{}", pick(c)));
            }
            line.push_str(&format!("\t{}\n", pick(&self.total())));
            line
        };
        header + &row("Tweet", |c| c.tweet) + &row("Paragraph", |c| c.paragraph)
    }
}
