//! Independent reference implementations and random instance generators
//! shared by the property tests and the acceptance suite.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use spantag::corpus::{LabelId, SpanSet, TechniqueSpan};
use spantag::segment::{align, GreedyTokenizer};
use spantag::TokenAlignment;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn span(technique: usize, start: usize, end: usize) -> TechniqueSpan {
    TechniqueSpan {
        technique: LabelId(technique),
        start,
        end,
        surface: String::new(),
    }
}

/// A text of `lens.len()` words where word `i` has `lens[i]` characters, and
/// its alignment under a tokenizer that splits every word into characters.
pub fn char_token_alignment(lens: &[usize], gaps: &[usize]) -> (String, TokenAlignment) {
    let mut text = String::new();
    for (i, &n) in lens.iter().enumerate() {
        if i > 0 {
            text.push_str(&" ".repeat(gaps.get(i).copied().unwrap_or(1).max(1)));
        }
        for k in 0..n {
            text.push((b'a' + (k % 26) as u8) as char);
        }
    }
    let empty: [&str; 0] = [];
    let a = align(&text, &GreedyTokenizer::new(empty));
    (text, a)
}

pub struct AggregationCase {
    pub lens: Vec<usize>,
    pub text: String,
    pub alignment: TokenAlignment,
    pub labels: Vec<LabelId>,
}

pub fn random_aggregation_case<R: Rng>(rng: &mut R) -> AggregationCase {
    let words = rng.random_range(1..=8);
    let lens: Vec<usize> = (0..words).map(|_| rng.random_range(1..=5)).collect();
    let gaps: Vec<usize> = (0..words).map(|_| rng.random_range(1..=2)).collect();
    let (text, alignment) = char_token_alignment(&lens, &gaps);
    let labels = (0..alignment.tokens.len())
        .map(|_| LabelId(rng.random_range(0..4)))
        .collect();
    AggregationCase {
        lens,
        text,
        alignment,
        labels,
    }
}

/// Per-word token label lists, cut by word lengths (one token per char).
fn per_word(labels: &[LabelId], lens: &[usize]) -> Vec<Vec<LabelId>> {
    let mut out = Vec::new();
    let mut at = 0;
    for &n in lens {
        out.push(labels[at..at + n].to_vec());
        at += n;
    }
    out
}

/// Majority by brute force: for each candidate, count it and note where it
/// first appears; the highest count wins, then the earliest appearance.
pub fn majority_oracle(labels: &[LabelId], lens: &[usize]) -> Vec<LabelId> {
    per_word(labels, lens)
        .into_iter()
        .map(|w| {
            let mut best: Option<(usize, usize, LabelId)> = None;
            for cand in &w {
                let count = w.iter().filter(|l| *l == cand).count();
                let first = w.iter().position(|l| l == cand).unwrap();
                let better = match best {
                    None => true,
                    Some((c, f, _)) => count > c || (count == c && first < f),
                };
                if better {
                    best = Some((count, first, *cand));
                }
            }
            best.unwrap().2
        })
        .collect()
}

pub fn first_oracle(labels: &[LabelId], lens: &[usize]) -> Vec<LabelId> {
    per_word(labels, lens).into_iter().map(|w| w[0]).collect()
}

/// Run-length decoding: runs of equal non-O labels, as (technique, start, end).
pub fn decode_oracle(labels: &[LabelId], spans: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut run: Option<(LabelId, usize, usize)> = None;
    for (l, s) in labels.iter().zip(spans) {
        run = match run {
            Some((rl, rs, _)) if rl == *l => Some((rl, rs, s.1)),
            prev => {
                if let Some((rl, rs, re)) = prev {
                    if rl != LabelId::O {
                        out.push((rl.0, rs, re));
                    }
                }
                Some((*l, s.0, s.1))
            }
        };
    }
    if let Some((rl, rs, re)) = run {
        if rl != LabelId::O {
            out.push((rl.0, rs, re));
        }
    }
    out
}

pub struct OracleScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Proportional overlap scored character by character.
pub fn score_oracle(gold: &[SpanSet], pred: &[SpanSet], cap: bool) -> OracleScore {
    let overlap = |a: &TechniqueSpan, b: &TechniqueSpan| -> f64 {
        if a.technique != b.technique {
            return 0.0;
        }
        (a.start..a.end).filter(|c| (b.start..b.end).contains(c)).count() as f64
    };
    let (mut p_num, mut r_num, mut n_s, mut n_t) = (0.0, 0.0, 0usize, 0usize);
    for g in gold {
        let t_spans: Vec<&TechniqueSpan> = g.spans.iter().filter(|s| s.end > s.start).collect();
        let s_spans: Vec<&TechniqueSpan> = pred
            .iter()
            .filter(|p| p.id == g.id)
            .flat_map(|p| p.spans.iter())
            .filter(|s| s.end > s.start)
            .collect();
        n_s += s_spans.len();
        n_t += t_spans.len();
        for s in &s_spans {
            let mut credit = 0.0;
            for t in &t_spans {
                credit += overlap(s, t) / (s.end - s.start) as f64;
            }
            p_num += if cap && credit > 1.0 { 1.0 } else { credit };
        }
        for t in &t_spans {
            let mut credit = 0.0;
            for s in &s_spans {
                credit += overlap(s, t) / (t.end - t.start) as f64;
            }
            r_num += if cap && credit > 1.0 { 1.0 } else { credit };
        }
    }
    if n_s == 0 && n_t == 0 {
        return OracleScore {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let precision = if n_s == 0 || n_t == 0 { 0.0 } else { p_num / n_s as f64 };
    let recall = if n_s == 0 || n_t == 0 { 0.0 } else { r_num / n_t as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    OracleScore { precision, recall, f1 }
}

/// Up to five spans per side over a text of at most 50 characters, spread
/// over one to three snippets.
pub fn random_score_case<R: Rng>(rng: &mut R) -> (Vec<SpanSet>, Vec<SpanSet>) {
    let snippets = rng.random_range(1..=3);
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for i in 0..snippets {
        let len = rng.random_range(1..=50);
        let side = |rng: &mut R| {
            let n = rng.random_range(0..=5);
            (0..n)
                .map(|_| {
                    let a = rng.random_range(0..len);
                    let b = rng.random_range(a + 1..=len);
                    span(rng.random_range(1..=3), a, b)
                })
                .collect::<Vec<_>>()
        };
        gold.push(SpanSet {
            id: format!("s{i}"),
            spans: side(rng),
        });
        pred.push(SpanSet {
            id: format!("s{i}"),
            spans: side(rng),
        });
    }
    (gold, pred)
}
