//! Span-level micro-F1 with proportional character overlap.
//!
//! With `S` the predicted spans and `T` the gold spans (pooled over all
//! snippets), and `overlap(s, t)` the number of shared characters when the
//! techniques agree and both spans belong to the same snippet:
//!
//! ```text
//! P  = 1/|S| · Σ_s Σ_t overlap(s, t) / |s|
//! R  = 1/|T| · Σ_t Σ_s overlap(s, t) / |t|
//! F1 = 2PR / (P + R)
//! ```
//!
//! Both sides empty scores 1; exactly one side empty scores 0. With
//! [`ScoreOptions::cap_per_span`] each span's summed credit is capped at 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{LabelId, LabelSet, SpanSet, TechniqueSpan};
use crate::tagger::Strategy;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("prediction for unknown snippet id {0:?}")]
    UnknownSnippet(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreOptions {
    pub cap_per_span: bool,
}

/// Shared characters of two spans with the same technique, else 0.
pub fn span_overlap(s: &TechniqueSpan, t: &TechniqueSpan) -> usize {
    if s.technique != t.technique {
        return 0;
    }
    s.end.min(t.end).saturating_sub(s.start.max(t.start))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    fn from_sums(p_sum: f64, r_sum: f64, predicted: usize, gold: usize) -> Self {
        let (precision, recall) = match (predicted, gold) {
            (0, 0) => (1.0, 1.0),
            (0, _) | (_, 0) => (0.0, 0.0),
            (s, t) => (p_sum / s as f64, r_sum / t as f64),
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            predicted,
            gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    /// Predicted span count |S|.
    pub predicted: usize,
    /// Gold span count |T|.
    pub gold: usize,
    pub per_technique: BTreeMap<String, Prf>,
}

impl ScoreReport {
    pub fn micro_f1_percent(&self) -> f64 {
        100.0 * self.micro_f1
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("finite scores serialize");
        s.push('\n');
        s
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "micro-F1 {:.2}  P {:.2}  R {:.2}  (|S| = {}, |T| = {})",
            100.0 * self.micro_f1,
            100.0 * self.precision,
            100.0 * self.recall,
            self.predicted,
            self.gold
        )?;
        if !self.per_technique.is_empty() {
            let w = self.per_technique.keys().map(String::len).max().unwrap_or(9).max(9);
            writeln!(f, "{:<w$}  {:>6}  {:>6}  {:>6}  {:>5}  {:>5}", "technique", "P", "R", "F1", "|S|", "|T|")?;
            for (name, s) in &self.per_technique {
                writeln!(
                    f,
                    "{:<w$}  {:>6.2}  {:>6.2}  {:>6.2}  {:>5}  {:>5}",
                    name,
                    100.0 * s.precision,
                    100.0 * s.recall,
                    100.0 * s.f1,
                    s.predicted,
                    s.gold
                )?;
            }
        }
        Ok(())
    }
}

/// Credit sums (P numerator, R numerator) for the spans of one snippet,
/// restricted to `technique` when given.
fn snippet_sums(
    gold: &[TechniqueSpan],
    pred: &[TechniqueSpan],
    technique: Option<LabelId>,
    cap: bool,
) -> (f64, f64) {
    let keep = |s: &&TechniqueSpan| technique.is_none_or(|t| s.technique == t) && !s.is_empty();
    let gold: Vec<&TechniqueSpan> = gold.iter().filter(keep).collect();
    let pred: Vec<&TechniqueSpan> = pred.iter().filter(keep).collect();
    let clamp = |x: f64| if cap { x.min(1.0) } else { x };
    let p: f64 = pred
        .iter()
        .map(|s| clamp(gold.iter().map(|t| span_overlap(s, t) as f64 / s.len() as f64).sum()))
        .sum();
    let r: f64 = gold
        .iter()
        .map(|t| clamp(pred.iter().map(|s| span_overlap(s, t) as f64 / t.len() as f64).sum()))
        .sum();
    (p, r)
}

fn count(spans: &[TechniqueSpan], technique: Option<LabelId>) -> usize {
    spans
        .iter()
        .filter(|s| technique.is_none_or(|t| s.technique == t) && !s.is_empty())
        .count()
}

/// Scores predictions against gold. Gold snippets without predictions count
/// as predicting nothing; predictions for ids absent from gold are errors.
pub fn micro_f1(
    gold: &[SpanSet],
    pred: &[SpanSet],
    labels: &LabelSet,
    options: ScoreOptions,
) -> Result<ScoreReport, ScoreError> {
    let gold_ids: HashMap<&str, usize> = gold.iter().enumerate().map(|(i, g)| (g.id.as_str(), i)).collect();
    let mut pred_by_gold: Vec<Vec<TechniqueSpan>> = vec![Vec::new(); gold.len()];
    for p in pred {
        let i = *gold_ids
            .get(p.id.as_str())
            .ok_or_else(|| ScoreError::UnknownSnippet(p.id.clone()))?;
        pred_by_gold[i].extend(p.spans.iter().cloned());
    }

    let score_for = |technique: Option<LabelId>| {
        let (mut p_sum, mut r_sum, mut n_pred, mut n_gold) = (0.0, 0.0, 0, 0);
        for (g, p) in gold.iter().zip(&pred_by_gold) {
            let (ps, rs) = snippet_sums(&g.spans, p, technique, options.cap_per_span);
            p_sum += ps;
            r_sum += rs;
            n_pred += count(p, technique);
            n_gold += count(&g.spans, technique);
        }
        Prf::from_sums(p_sum, r_sum, n_pred, n_gold)
    };

    let overall = score_for(None);
    let mut per_technique = BTreeMap::new();
    for (k, name) in labels.names().iter().enumerate().skip(1) {
        let s = score_for(Some(LabelId(k)));
        if s.predicted + s.gold > 0 {
            per_technique.insert(name.clone(), s);
        }
    }
    Ok(ScoreReport {
        precision: overall.precision,
        recall: overall.recall,
        micro_f1: overall.f1,
        predicted: overall.predicted,
        gold: overall.gold,
        per_technique,
    })
}

/// Micro-F1 percentages by (strategy, genre on/off).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AblationTable {
    cells: BTreeMap<(Strategy, bool), f64>,
}

impl AblationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a cell given as a percentage (e.g. 26.68).
    pub fn insert_percent(&mut self, strategy: Strategy, use_genre: bool, percent: f64) {
        self.cells.insert((strategy, use_genre), percent);
    }

    pub fn insert_report(&mut self, strategy: Strategy, use_genre: bool, report: &ScoreReport) {
        self.insert_percent(strategy, use_genre, report.micro_f1_percent());
    }

    pub fn get(&self, strategy: Strategy, use_genre: bool) -> Option<f64> {
        self.cells.get(&(strategy, use_genre)).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn rows(&self) -> Vec<Strategy> {
        Strategy::ALL
            .into_iter()
            .filter(|s| self.cells.keys().any(|(k, _)| k == s))
            .collect()
    }

    pub fn columns(&self) -> Vec<bool> {
        [true, false]
            .into_iter()
            .filter(|g| self.cells.keys().any(|(_, k)| k == g))
            .collect()
    }

    /// Markdown grid: strategies as rows, with/without genre as columns,
    /// values to two decimals, column maxima in bold, missing cells as "—".
    pub fn render(&self) -> String {
        let rows = self.rows();
        let cols = self.columns();
        let fmt_cell = |v: f64| format!("{v:.2}");
        let col_max: Vec<Option<String>> = cols
            .iter()
            .map(|g| {
                rows.iter()
                    .filter_map(|s| self.get(*s, *g))
                    .reduce(f64::max)
                    .map(fmt_cell)
            })
            .collect();
        let mut out = String::from("| Approach |");
        for g in &cols {
            out.push_str(if *g { " with Genre |" } else { " without Genre |" });
        }
        out.push_str("\n|---|");
        for _ in &cols {
            out.push_str("---:|");
        }
        out.push('\n');
        for s in &rows {
            let _ = write!(out, "| {} |", s.title());
            for (c, g) in cols.iter().enumerate() {
                match self.get(*s, *g) {
                    Some(v) if col_max[c].as_deref() == Some(fmt_cell(v).as_str()) => {
                        let _ = write!(out, " **{}** |", fmt_cell(v));
                    }
                    Some(v) => {
                        let _ = write!(out, " {} |", fmt_cell(v));
                    }
                    None => out.push_str(" — |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Renders a table from a map of reports.
pub fn ablation_table(results: &BTreeMap<(Strategy, bool), ScoreReport>) -> String {
    let mut table = AblationTable::new();
    for ((s, g), r) in results {
        table.insert_report(*s, *g, r);
    }
    table.render()
}
