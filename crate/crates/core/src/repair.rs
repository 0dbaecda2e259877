//! Annotation repair.
//!
//! Each snippet goes through the same sequence:
//!
//! 1. format (`Cf`) and private-use (`Co`) code points in the text are
//!    replaced by spaces, one for one, so offsets stay valid;
//! 2. for each annotation whose offsets do not select its surface, the
//!    surface is searched for in the scrubbed text (reported end ignored,
//!    nearest reported start wins);
//! 3. failing that, user handles in the surface are rewritten to `@USER`
//!    and the search is retried;
//! 4. failing that, the override ledger is consulted.
//!
//! A snippet with an annotation that survives none of these is dropped from
//! the repaired corpus and reported as unrepairable.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::corpus::{char_slice, Snippet, TechniqueSpan};
use crate::fsutil::write_atomic;

/// Placeholder the data uses in place of user handles.
pub const USER_PLACEHOLDER: &str = "@USER";

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("surface {surface:?} does not occur in text")]
    NotFound { surface: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("ledger line {line}: {message}")]
    Ledger { line: usize, message: String },
}

fn is_scrubbed(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::Format | GeneralCategory::PrivateUse
    )
}

/// Replaces every `Cf`/`Co` code point with a single space.
pub fn scrub_unicode(text: &str) -> String {
    text.chars().map(|c| if is_scrubbed(c) { ' ' } else { c }).collect()
}

fn scrub_count(text: &str) -> usize {
    text.chars().filter(|c| is_scrubbed(*c)).count()
}

/// Rewrites every `@handle` run (an `@` followed by one or more characters
/// that are neither whitespace nor `@`) to `@USER`.
pub fn normalize_mention_surface(surface: &str) -> String {
    let chars: Vec<char> = surface.chars().collect();
    let mut out = String::with_capacity(surface.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '@' {
            out.push(chars[i]);
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && !chars[j].is_whitespace() && chars[j] != '@' {
            j += 1;
        }
        if j > i + 1 {
            out.push_str(USER_PLACEHOLDER);
        } else {
            out.push('@');
        }
        i = j;
    }
    out
}

/// Finds `surface` in `text` (both in chars) and returns the occurrence whose
/// start is closest to `reported_start`, earliest on ties.
pub fn realign_span(text: &str, surface: &str, reported_start: usize) -> Result<(usize, usize), RepairError> {
    let hay: Vec<char> = text.chars().collect();
    let needle: Vec<char> = surface.chars().collect();
    let not_found = || RepairError::NotFound {
        surface: surface.to_string(),
    };
    if needle.is_empty() || needle.len() > hay.len() {
        return Err(not_found());
    }
    let best = hay
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle.as_slice())
        .map(|(start, _)| start)
        .min_by_key(|&start| (start.abs_diff(reported_start), start))
        .ok_or_else(not_found)?;
    Ok((best, best + needle.len()))
}

/// A manual span correction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct LedgerLine {
    id: String,
    ann_index: usize,
    start: usize,
    end: usize,
    text: String,
}

/// Manual corrections keyed by (snippet id, annotation index).
#[derive(Debug, Clone, Default)]
pub struct OverrideLedger {
    entries: HashMap<(String, usize), Correction>,
}

impl OverrideLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, ann_index: usize, correction: Correction) {
        self.entries.insert((id.into(), ann_index), correction);
    }

    pub fn get(&self, id: &str, ann_index: usize) -> Option<&Correction> {
        self.entries.get(&(id.to_string(), ann_index))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, RepairError> {
        let mut ledger = OverrideLedger::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| RepairError::Ledger {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LedgerLine = serde_json::from_str(&line).map_err(|e| RepairError::Ledger {
                line: i + 1,
                message: e.to_string(),
            })?;
            if entry.start >= entry.end {
                return Err(RepairError::Ledger {
                    line: i + 1,
                    message: format!("empty range {}..{}", entry.start, entry.end),
                });
            }
            ledger.insert(
                entry.id,
                entry.ann_index,
                Correction {
                    start: entry.start,
                    end: entry.end,
                    surface: entry.text,
                },
            );
        }
        Ok(ledger)
    }

    pub fn load(path: &Path) -> Result<Self, RepairError> {
        let file = fs::File::open(path).map_err(|source| RepairError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(BufReader::new(file))
    }

    /// Entries whose corrected surface does not match the scrubbed text of
    /// their snippet, or whose snippet is absent.
    pub fn mismatches(&self, snippets: &[Snippet]) -> Vec<(String, usize)> {
        let texts: HashMap<&str, String> = snippets
            .iter()
            .map(|s| (s.id.as_str(), scrub_unicode(&s.text)))
            .collect();
        let mut bad: Vec<(String, usize)> = self
            .entries
            .iter()
            .filter(|((id, _), c)| {
                texts
                    .get(id.as_str())
                    .and_then(|t| char_slice(t, c.start, c.end))
                    != Some(c.surface.as_str())
            })
            .map(|(k, _)| k.clone())
            .collect();
        bad.sort();
        bad
    }
}

/// One repair step applied to a snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    ScrubbedChars {
        count: usize,
    },
    Realigned {
        ann_index: usize,
        old_start: usize,
        old_end: usize,
        new_start: usize,
        new_end: usize,
    },
    MentionNormalized {
        ann_index: usize,
    },
    OverrideApplied {
        ann_index: usize,
    },
    Unrepairable {
        ann_index: usize,
        reason: String,
    },
}

/// Actions recorded for one snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SnippetRepair {
    pub id: String,
    pub actions: Vec<RepairAction>,
}

/// Audit trail of a repair run. Snippets that needed nothing are omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RepairReport {
    pub snippets: Vec<SnippetRepair>,
}

impl RepairReport {
    pub fn action_count(&self) -> usize {
        self.snippets.iter().map(|s| s.actions.len()).sum()
    }

    pub fn actions(&self) -> impl Iterator<Item = (&str, &RepairAction)> {
        self.snippets
            .iter()
            .flat_map(|s| s.actions.iter().map(move |a| (s.id.as_str(), a)))
    }

    /// Ids of snippets excluded from the repaired corpus.
    pub fn unrepairable_ids(&self) -> Vec<&str> {
        self.snippets
            .iter()
            .filter(|s| s.actions.iter().any(|a| matches!(a, RepairAction::Unrepairable { .. })))
            .map(|s| s.id.as_str())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.snippets {
            out.push_str(&serde_json::to_string(s).expect("serializable report"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), RepairError> {
        write_atomic(path, self.to_jsonl().as_bytes()).map_err(|source| RepairError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn repair_span(
    snippet_id: &str,
    text: &str,
    ann_index: usize,
    span: &TechniqueSpan,
    ledger: &OverrideLedger,
    actions: &mut Vec<RepairAction>,
) -> Option<TechniqueSpan> {
    let surface = scrub_unicode(&span.surface);
    if !surface.is_empty() && char_slice(text, span.start, span.end) == Some(surface.as_str()) {
        return Some(TechniqueSpan {
            surface,
            ..span.clone()
        });
    }

    let realigned = |start: usize, end: usize, actions: &mut Vec<RepairAction>| {
        if (start, end) != (span.start, span.end) {
            actions.push(RepairAction::Realigned {
                ann_index,
                old_start: span.start,
                old_end: span.end,
                new_start: start,
                new_end: end,
            });
        }
        TechniqueSpan {
            technique: span.technique,
            start,
            end,
            surface: char_slice(text, start, end).unwrap_or_default().to_string(),
        }
    };

    if let Ok((start, end)) = realign_span(text, &surface, span.start) {
        return Some(realigned(start, end, actions));
    }

    let normalized = normalize_mention_surface(&surface);
    if normalized != surface {
        if let Ok((start, end)) = realign_span(text, &normalized, span.start) {
            actions.push(RepairAction::MentionNormalized { ann_index });
            return Some(realigned(start, end, actions));
        }
    }

    match ledger.get(snippet_id, ann_index) {
        Some(fix) if char_slice(text, fix.start, fix.end) == Some(fix.surface.as_str()) && fix.start < fix.end => {
            actions.push(RepairAction::OverrideApplied { ann_index });
            Some(TechniqueSpan {
                technique: span.technique,
                start: fix.start,
                end: fix.end,
                surface: fix.surface.clone(),
            })
        }
        Some(_) => {
            actions.push(RepairAction::Unrepairable {
                ann_index,
                reason: "override does not match text".into(),
            });
            None
        }
        None => {
            actions.push(RepairAction::Unrepairable {
                ann_index,
                reason: format!("surface {:?} not found", span.surface),
            });
            None
        }
    }
}

/// Repairs one snippet. Returns `None` when it must be excluded.
pub fn repair_snippet(snippet: &Snippet, ledger: &OverrideLedger) -> (Option<Snippet>, Vec<RepairAction>) {
    let mut actions = Vec::new();
    let scrubbed = scrub_count(&snippet.text);
    if scrubbed > 0 {
        actions.push(RepairAction::ScrubbedChars { count: scrubbed });
    }
    let text = scrub_unicode(&snippet.text);
    let mut spans = Vec::with_capacity(snippet.gold_spans.len());
    let mut failed = false;
    for (i, span) in snippet.gold_spans.iter().enumerate() {
        match repair_span(&snippet.id, &text, i, span, ledger, &mut actions) {
            Some(s) => spans.push(s),
            None => failed = true,
        }
    }
    let repaired = (!failed).then(|| Snippet {
        id: snippet.id.clone(),
        genre: snippet.genre,
        text,
        gold_spans: spans,
    });
    (repaired, actions)
}

/// Runs the full repair pipeline over a corpus, preserving input order.
pub fn repair_corpus(snippets: &[Snippet], ledger: &OverrideLedger) -> (Vec<Snippet>, RepairReport) {
    let mut out = Vec::with_capacity(snippets.len());
    let mut report = RepairReport::default();
    for snippet in snippets {
        let (repaired, actions) = repair_snippet(snippet, ledger);
        if let Some(s) = repaired {
            out.push(s);
        }
        if !actions.is_empty() {
            report.snippets.push(SnippetRepair {
                id: snippet.id.clone(),
                actions,
            });
        }
    }
    (out, report)
}
