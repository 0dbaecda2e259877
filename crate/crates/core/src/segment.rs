//! Words, subword tokens and their alignment to character offsets.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelId, TechniqueSpan};

/// Granularity at which the tagger consumes features and emits labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitLevel {
    Token,
    Word,
}

/// A maximal run of non-whitespace characters, in char offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

/// A subword piece with its char span and owning word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub word_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenAlignment {
    pub tokens: Vec<Token>,
    pub words: Vec<WordSpan>,
    /// `word_tokens[w]` is the range of token indices owned by word `w`.
    word_tokens: Vec<std::ops::Range<usize>>,
}

impl TokenAlignment {
    pub fn token_spans(&self) -> Vec<(usize, usize)> {
        self.tokens.iter().map(|t| (t.start, t.end)).collect()
    }

    pub fn word_spans(&self) -> Vec<(usize, usize)> {
        self.words.iter().map(|w| (w.start, w.end)).collect()
    }

    pub fn unit_spans(&self, level: UnitLevel) -> Vec<(usize, usize)> {
        match level {
            UnitLevel::Token => self.token_spans(),
            UnitLevel::Word => self.word_spans(),
        }
    }

    pub fn unit_count(&self, level: UnitLevel) -> usize {
        match level {
            UnitLevel::Token => self.tokens.len(),
            UnitLevel::Word => self.words.len(),
        }
    }

    /// Token index range of word `w`.
    pub fn tokens_of(&self, w: usize) -> std::ops::Range<usize> {
        self.word_tokens[w].clone()
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn is_consistent(&self) -> bool {
        if self.word_tokens.len() != self.words.len() {
            return false;
        }
        let mut expected_start = 0;
        for (w, range) in self.word_tokens.iter().enumerate() {
            if range.start != expected_start || range.is_empty() {
                return false;
            }
            expected_start = range.end;
            let word = &self.words[w];
            let mut prev_end = word.start;
            for t in &self.tokens[range.clone()] {
                if t.word_index != w || t.start < prev_end || t.start >= t.end || t.end > word.end {
                    return false;
                }
                prev_end = t.end;
            }
        }
        expected_start == self.tokens.len()
    }
}

/// Splits `text` into maximal runs of non-whitespace.
pub fn segment_words(text: &str) -> Vec<WordSpan> {
    let mut words = Vec::new();
    let mut current: Option<usize> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        match (c.is_whitespace(), current) {
            (false, None) => current = Some(i),
            (true, Some(start)) => {
                words.push(WordSpan { start, end: i, index: words.len() });
                current = None;
            }
            _ => {}
        }
    }
    if let Some(start) = current {
        words.push(WordSpan { start, end: n, index: words.len() });
    }
    words
}

/// Splits one whitespace-free word into subword pieces.
///
/// Implementations must be deterministic and return at least one piece for a
/// non-empty word. Pieces should concatenate back to the word once a leading
/// `##` continuation marker is dropped; [`align`] falls back to one token per
/// character when they do not.
pub trait SubwordTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<String>;
}

/// One token per word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeWordTokenizer;

impl SubwordTokenizer for WholeWordTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<String> {
        vec![word.to_string()]
    }
}

/// Greedy longest-match tokenizer over a fixed vocabulary.
///
/// The first piece of a word is looked up as-is; later pieces are looked up
/// with the `##` continuation prefix first and bare second. Characters that
/// start no vocabulary entry become single-character pieces.
#[derive(Debug, Clone, Default)]
pub struct GreedyTokenizer {
    vocab: HashSet<String>,
    max_piece_chars: usize,
}

pub const CONTINUATION: &str = "##";

impl GreedyTokenizer {
    pub fn new<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: HashSet<String> = pieces.into_iter().map(Into::into).filter(|p: &String| !p.is_empty()).collect();
        let max_piece_chars = vocab
            .iter()
            .map(|p| p.strip_prefix(CONTINUATION).unwrap_or(p).chars().count())
            .max()
            .unwrap_or(0);
        GreedyTokenizer { vocab, max_piece_chars }
    }

    /// Reads a vocabulary file: one piece per line.
    pub fn from_file(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty())))
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    fn lookup(&self, piece: &str, continuation: bool) -> Option<String> {
        if continuation {
            let marked = format!("{CONTINUATION}{piece}");
            if self.vocab.contains(&marked) {
                return Some(marked);
            }
        }
        self.vocab.contains(piece).then(|| piece.to_string())
    }
}

impl SubwordTokenizer for GreedyTokenizer {
    fn tokenize_word(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let longest = (i + 1..=chars.len().min(i + self.max_piece_chars)).rev().find_map(|j| {
                let piece: String = chars[i..j].iter().collect();
                self.lookup(&piece, i > 0).map(|p| (p, j))
            });
            match longest {
                Some((piece, j)) => {
                    pieces.push(piece);
                    i = j;
                }
                None => {
                    pieces.push(chars[i].to_string());
                    i += 1;
                }
            }
        }
        pieces
    }
}

/// Consumes `pieces` left to right against `word`; returns per-piece
/// (start, end) relative to the word, or `None` if they do not tile it.
fn tile(word: &[char], pieces: &[String]) -> Option<Vec<(usize, usize)>> {
    let mut cursor = 0;
    let mut spans = Vec::with_capacity(pieces.len());
    for (k, piece) in pieces.iter().enumerate() {
        let fits = |p: &str| {
            let pc: Vec<char> = p.chars().collect();
            (!pc.is_empty() && word.get(cursor..cursor + pc.len()) == Some(pc.as_slice())).then_some(pc.len())
        };
        let len = fits(piece).or_else(|| {
            if k > 0 {
                piece.strip_prefix(CONTINUATION).and_then(fits)
            } else {
                None
            }
        })?;
        spans.push((cursor, cursor + len));
        cursor += len;
    }
    (cursor == word.len()).then_some(spans)
}

/// Tokenizes each word of `text` and records char spans for every token.
pub fn align(text: &str, tokenizer: &dyn SubwordTokenizer) -> TokenAlignment {
    let chars: Vec<char> = text.chars().collect();
    let words = segment_words(text);
    let mut tokens = Vec::new();
    let mut word_tokens = Vec::with_capacity(words.len());
    for w in &words {
        let word_chars = &chars[w.start..w.end];
        let word: String = word_chars.iter().collect();
        let pieces = tokenizer.tokenize_word(&word);
        let first = tokens.len();
        match tile(word_chars, &pieces) {
            Some(spans) => {
                for (piece, (s, e)) in pieces.into_iter().zip(spans) {
                    tokens.push(Token { text: piece, start: w.start + s, end: w.start + e, word_index: w.index });
                }
            }
            None => {
                for (k, c) in word_chars.iter().enumerate() {
                    tokens.push(Token {
                        text: c.to_string(),
                        start: w.start + k,
                        end: w.start + k + 1,
                        word_index: w.index,
                    });
                }
            }
        }
        word_tokens.push(first..tokens.len());
    }
    let alignment = TokenAlignment { tokens, words, word_tokens };
    debug_assert!(alignment.is_consistent());
    alignment
}

/// Gold label of one unit: the technique of the shortest gold span that
/// overlaps it (later start wins ties, then later list position), or `O`.
fn unit_label(start: usize, end: usize, gold: &[TechniqueSpan]) -> LabelId {
    gold.iter()
        .enumerate()
        .filter(|(_, g)| g.start < end && start < g.end)
        .min_by_key(|(i, g)| (g.len(), std::cmp::Reverse(g.start), std::cmp::Reverse(*i)))
        .map(|(_, g)| g.technique)
        .unwrap_or(LabelId::O)
}

/// Projects character-level gold spans onto tokens or words.
pub fn project_gold(alignment: &TokenAlignment, gold: &[TechniqueSpan], level: UnitLevel) -> Vec<LabelId> {
    alignment
        .unit_spans(level)
        .into_iter()
        .map(|(s, e)| unit_label(s, e, gold))
        .collect()
}
