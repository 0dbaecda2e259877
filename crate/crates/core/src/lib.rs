//! Span-level technique tagging over subword-tokenized text.
//!
//! The crate covers the whole pipeline for detecting labeled character spans
//! (persuasion techniques) in short texts:
//!
//! - [`corpus`]: snippets, technique spans, label inventories and the JSONL
//!   formats used for corpora and predictions.
//! - [`repair`]: scrubbing of format/private-use code points and repair of
//!   annotation offsets that do not match their text.
//! - [`segment`]: word segmentation, subword tokenization and the
//!   token/word/character alignment.
//! - [`embed`]: embedding providers (a deterministic hashing stand-in and
//!   precomputed vector files) and classifier feature assembly.
//! - [`tagger`]: the linear softmax tagger, its training loop and the four
//!   span prediction strategies.
//! - [`score`]: proportional-overlap micro-F1 and ablation tables.
//! - [`cli`]: batch commands (`repair`, `train`, `predict`, `score`, `tune`,
//!   `ablate`, `stats`) shared by the `spantag` binary and the examples.
//!
//! ```
//! use spantag::segment::{align, WholeWordTokenizer};
//!
//! let alignment = align("two words", &WholeWordTokenizer);
//! assert_eq!(alignment.words.len(), 2);
//! ```

pub mod cli;
pub mod corpus;
pub mod embed;
pub mod repair;
pub mod score;
pub mod seed;
pub mod segment;
pub mod synth;
pub mod tagger;

mod fsutil;

pub use corpus::{Genre, LabelId, LabelSet, Snippet, SpanSet, TechniqueSpan};
pub use segment::{TokenAlignment, UnitLevel};
pub use tagger::{LinearTagger, Strategy};
