//! Contextual vectors and classifier features.
//!
//! An [`EmbeddingProvider`] turns an aligned snippet into a sequence vector
//! plus one vector per token. Two providers ship:
//!
//! - [`HashEmbedder`], a deterministic stand-in that maps each token string
//!   to a sparse ±1 vector;
//! - [`PrecomputedEmbeddings`], vectors dumped by an external encoder, read
//!   from JSONL or from the binary layout below.
//!
//! Binary layout (all integers little-endian `u32`):
//!
//! ```text
//! magic    8 bytes  "SPTGEMB1"
//! version  u32      1
//! dim      u32
//! count    u32      number of records
//! id table count × { id_len u32, id utf-8 bytes, n_tokens u32 }
//! data     for each record in id-table order: cls then n_tokens token
//!          vectors, each dim × f32 little-endian
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Genre, Snippet};
use crate::fsutil::write_atomic;
use crate::seed::{fnv1a64, splitmix64, SplitMix64};
use crate::segment::{TokenAlignment, UnitLevel};

/// Non-zero coordinates per hashed token vector.
pub const HASH_ACTIVE: usize = 8;
pub const DEFAULT_DIM: usize = 768;
pub const BINARY_MAGIC: &[u8; 8] = b"SPTGEMB1";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("embedding file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("embedding file: {0}")]
    BadBinary(String),
    #[error("no embeddings for snippet {0:?}")]
    MissingSnippet(String),
    #[error("snippet {id:?}: tokenizer produced {expected} tokens but the embedding file has {found}")]
    TokenCountMismatch { id: String, expected: usize, found: usize },
    #[error("snippet {id:?}: vector of dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("feature rows: {0}")]
    Misaligned(String),
}

/// Sequence vector plus per-token vectors, all of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSequence {
    pub cls: Vec<f32>,
    #[serde(rename = "tokens")]
    pub token_vectors: Vec<Vec<f32>>,
}

impl EmbeddedSequence {
    pub fn dim(&self) -> usize {
        self.cls.len()
    }
}

pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, snippet: &Snippet, alignment: &TokenAlignment) -> Result<EmbeddedSequence, EmbedError>;
}

/// Vector of one token string: `HASH_ACTIVE` distinct coordinates chosen by
/// a seeded hash of the text, each ±1/√k.
pub fn hash_token_vector(token: &str, seed: u64, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; dim];
    if dim == 0 {
        return v;
    }
    let k = HASH_ACTIVE.min(dim);
    let scale = 1.0 / (k as f32).sqrt();
    let mut rng = SplitMix64::new(splitmix64(seed) ^ fnv1a64(token.as_bytes()));
    let mut chosen = 0;
    while chosen < k {
        let r = rng.next_u64();
        let idx = (r % dim as u64) as usize;
        if v[idx] != 0.0 {
            continue;
        }
        v[idx] = if r >> 63 == 1 { -scale } else { scale };
        chosen += 1;
    }
    v
}

/// Hash embedding of an aligned snippet; `cls` is the coordinate-wise mean of
/// the token vectors (zero when there are none).
pub fn hash_embed(_snippet: &Snippet, alignment: &TokenAlignment, seed: u64, dim: usize) -> EmbeddedSequence {
    let token_vectors: Vec<Vec<f32>> = alignment
        .tokens
        .iter()
        .map(|t| hash_token_vector(&t.text, seed, dim))
        .collect();
    let mut cls = vec![0.0f32; dim];
    if !token_vectors.is_empty() {
        for v in &token_vectors {
            for (c, x) in cls.iter_mut().zip(v) {
                *c += x;
            }
        }
        let n = token_vectors.len() as f32;
        cls.iter_mut().for_each(|c| *c /= n);
    }
    EmbeddedSequence { cls, token_vectors }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        HashEmbedder { seed, dim }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, snippet: &Snippet, alignment: &TokenAlignment) -> Result<EmbeddedSequence, EmbedError> {
        Ok(hash_embed(snippet, alignment, self.seed, self.dim))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct EmbeddingRecord {
    id: String,
    cls: Vec<f32>,
    tokens: Vec<Vec<f32>>,
}

/// Vectors produced outside this crate, keyed by snippet id.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    by_id: HashMap<String, EmbeddedSequence>,
    order: Vec<String>,
}

impl PrecomputedEmbeddings {
    pub fn new(dim: usize) -> Self {
        PrecomputedEmbeddings {
            dim,
            ..Default::default()
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, seq: EmbeddedSequence) -> Result<(), EmbedError> {
        let id = id.into();
        let check = |found: usize| {
            if found == self.dim {
                Ok(())
            } else {
                Err(EmbedError::DimensionMismatch {
                    id: id.clone(),
                    expected: self.dim,
                    found,
                })
            }
        };
        check(seq.cls.len())?;
        for t in &seq.token_vectors {
            check(t.len())?;
        }
        if self.by_id.insert(id.clone(), seq).is_none() {
            self.order.push(id);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddedSequence> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Reads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let io_err = |source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = fs::read(path).map_err(io_err)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::read_binary(&mut bytes.as_slice())
        } else {
            Self::read_jsonl(BufReader::new(bytes.as_slice()))
        }
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, EmbedError> {
        let mut out: Option<PrecomputedEmbeddings> = None;
        for (i, line) in reader.lines().enumerate() {
            let malformed = |message: String| EmbedError::Malformed { line: i + 1, message };
            let line = line.map_err(|e| malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let store = out.get_or_insert_with(|| PrecomputedEmbeddings::new(rec.cls.len()));
            store.insert(
                rec.id,
                EmbeddedSequence {
                    cls: rec.cls,
                    token_vectors: rec.tokens,
                },
            )?;
        }
        Ok(out.unwrap_or_default())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for id in &self.order {
            let seq = &self.by_id[id];
            let rec = EmbeddingRecord {
                id: id.clone(),
                cls: seq.cls.clone(),
                tokens: seq.token_vectors.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("finite vectors serialize"));
            out.push('\n');
        }
        out
    }

    pub fn read_binary<R: Read>(reader: &mut R) -> Result<Self, EmbedError> {
        let bad = |m: &str| EmbedError::BadBinary(m.to_string());
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != BINARY_MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u32 = |r: &mut R| -> Result<u32, EmbedError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| bad("truncated file"))?;
            Ok(u32::from_le_bytes(b))
        };
        let version = read_u32(reader)?;
        if version != BINARY_VERSION {
            return Err(EmbedError::BadBinary(format!("unsupported version {version}")));
        }
        let dim = read_u32(reader)? as usize;
        let count = read_u32(reader)? as usize;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(reader)? as usize;
            let mut id = vec![0u8; len];
            reader.read_exact(&mut id).map_err(|_| bad("truncated id table"))?;
            let id = String::from_utf8(id).map_err(|_| bad("id is not utf-8"))?;
            let n_tokens = read_u32(reader)? as usize;
            table.push((id, n_tokens));
        }
        let read_vec = |r: &mut R| -> Result<Vec<f32>, EmbedError> {
            let mut buf = vec![0u8; dim * 4];
            r.read_exact(&mut buf).map_err(|_| bad("truncated data"))?;
            Ok(buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let mut out = PrecomputedEmbeddings::new(dim);
        for (id, n_tokens) in table {
            let cls = read_vec(reader)?;
            let token_vectors = (0..n_tokens).map(|_| read_vec(reader)).collect::<Result<_, _>>()?;
            out.insert(id, EmbeddedSequence { cls, token_vectors })?;
        }
        Ok(out)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.order.len() as u32).to_le_bytes());
        for id in &self.order {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(self.by_id[id].token_vectors.len() as u32).to_le_bytes());
        }
        for id in &self.order {
            let seq = &self.by_id[id];
            for v in std::iter::once(&seq.cls).chain(&seq.token_vectors) {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), EmbedError> {
        write_atomic(path, self.to_jsonl().as_bytes()).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save_binary(&self, path: &Path) -> Result<(), EmbedError> {
        write_atomic(path, &self.to_binary()).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Checks that every snippet has vectors and, given alignments, that token
    /// counts agree.
    pub fn validate(&self, corpus: &[Snippet], alignments: Option<&[TokenAlignment]>) -> Result<(), EmbedError> {
        for (i, s) in corpus.iter().enumerate() {
            let seq = self.get(&s.id).ok_or_else(|| EmbedError::MissingSnippet(s.id.clone()))?;
            if let Some(a) = alignments.and_then(|a| a.get(i)) {
                if a.tokens.len() != seq.token_vectors.len() {
                    return Err(EmbedError::TokenCountMismatch {
                        id: s.id.clone(),
                        expected: a.tokens.len(),
                        found: seq.token_vectors.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, snippet: &Snippet, alignment: &TokenAlignment) -> Result<EmbeddedSequence, EmbedError> {
        let seq = self
            .get(&snippet.id)
            .ok_or_else(|| EmbedError::MissingSnippet(snippet.id.clone()))?;
        if seq.token_vectors.len() != alignment.tokens.len() {
            return Err(EmbedError::TokenCountMismatch {
                id: snippet.id.clone(),
                expected: alignment.tokens.len(),
                found: seq.token_vectors.len(),
            });
        }
        Ok(seq.clone())
    }
}

/// Loads a precomputed-embedding file and checks it covers `corpus`.
pub fn load_embeddings(path: &Path, corpus: &[Snippet]) -> Result<PrecomputedEmbeddings, EmbedError> {
    let store = PrecomputedEmbeddings::load(path)?;
    store.validate(corpus, None)?;
    Ok(store)
}

/// How the sequence vector is combined with each unit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combine {
    /// `[cls ‖ unit]`, width 2d.
    #[default]
    Concat,
    /// `cls + unit`, width d.
    Add,
    /// `unit` alone, width d.
    TokenOnly,
}

/// Shape of the classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub unit_level: UnitLevel,
    pub use_genre: bool,
    #[serde(default)]
    pub combine: Combine,
}

impl FeatureSpec {
    pub fn new(unit_level: UnitLevel, use_genre: bool) -> Self {
        FeatureSpec {
            unit_level,
            use_genre,
            combine: Combine::Concat,
        }
    }

    /// Row width for embedding dimension `dim`.
    pub fn width(&self, dim: usize) -> usize {
        let base = match self.combine {
            Combine::Concat => 2 * dim,
            Combine::Add | Combine::TokenOnly => dim,
        };
        base + if self.use_genre { 2 } else { 0 }
    }
}

/// Row-major feature rows, one per token or word.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub unit_level: UnitLevel,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn from_rows(unit_level: UnitLevel, width: usize, rows: &[Vec<f32>]) -> Result<Self, EmbedError> {
        let mut data = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(EmbedError::Misaligned(format!("row {i} has width {}, expected {width}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix { unit_level, width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.width.max(1))
    }
}

/// Coordinate-wise maximum of the given vectors.
pub fn max_pool<'a>(vectors: impl IntoIterator<Item = &'a [f32]>, dim: usize) -> Vec<f32> {
    let mut out = vec![f32::NEG_INFINITY; dim];
    let mut any = false;
    for v in vectors {
        any = true;
        for (o, x) in out.iter_mut().zip(v) {
            if *x > *o {
                *o = *x;
            }
        }
    }
    if !any {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    out
}

/// Assembles classifier rows for one snippet.
pub fn build_features(
    seq: &EmbeddedSequence,
    alignment: &TokenAlignment,
    genre: Genre,
    spec: &FeatureSpec,
) -> Result<FeatureMatrix, EmbedError> {
    if seq.token_vectors.len() != alignment.tokens.len() {
        return Err(EmbedError::Misaligned(format!(
            "{} token vectors for {} tokens",
            seq.token_vectors.len(),
            alignment.tokens.len()
        )));
    }
    let dim = seq.dim();
    let width = spec.width(dim);
    let units: Vec<Vec<f32>> = match spec.unit_level {
        UnitLevel::Token => seq.token_vectors.clone(),
        UnitLevel::Word => (0..alignment.words.len())
            .map(|w| {
                max_pool(
                    seq.token_vectors[alignment.tokens_of(w)].iter().map(Vec::as_slice),
                    dim,
                )
            })
            .collect(),
    };
    let mut data = Vec::with_capacity(units.len() * width);
    for unit in &units {
        match spec.combine {
            Combine::Concat => {
                data.extend_from_slice(&seq.cls);
                data.extend_from_slice(unit);
            }
            Combine::Add => data.extend(seq.cls.iter().zip(unit).map(|(c, u)| c + u)),
            Combine::TokenOnly => data.extend_from_slice(unit),
        }
        if spec.use_genre {
            let mut one_hot = [0.0f32; 2];
            one_hot[genre.one_hot_index()] = 1.0;
            data.extend_from_slice(&one_hot);
        }
    }
    Ok(FeatureMatrix {
        unit_level: spec.unit_level,
        width,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{align, GreedyTokenizer, WholeWordTokenizer};

    fn snippet(text: &str) -> Snippet {
        Snippet {
            id: "x".into(),
            genre: Genre::Tweet,
            text: text.into(),
            gold_spans: vec![],
        }
    }

    #[test]
    fn hash_vectors_are_sparse_and_unit_norm() {
        let v = hash_token_vector("word", 3, 64);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), HASH_ACTIVE);
        let norm: f32 = v.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_ne!(v, hash_token_vector("word", 4, 64));
        // small dimension caps the active count
        assert_eq!(hash_token_vector("w", 0, 3).iter().filter(|x| **x != 0.0).count(), 3);
    }

    #[test]
    fn repeated_tokens_share_vectors() {
        let s = snippet("same other same");
        let a = align(&s.text, &WholeWordTokenizer);
        let e = hash_embed(&s, &a, 9, 32);
        assert_eq!(e.token_vectors[0], e.token_vectors[2]);
        assert_ne!(e.token_vectors[0], e.token_vectors[1]);
    }

    #[test]
    fn single_token_cls_is_that_token() {
        let s = snippet("alone");
        let a = align(&s.text, &WholeWordTokenizer);
        let e = hash_embed(&s, &a, 1, 16);
        assert_eq!(e.cls, e.token_vectors[0]);
    }

    #[test]
    fn feature_widths() {
        let s = snippet("ab cd");
        let a = align(&s.text, &WholeWordTokenizer);
        let e = hash_embed(&s, &a, 0, 768);
        let on = build_features(&e, &a, Genre::Tweet, &FeatureSpec::new(UnitLevel::Token, true)).unwrap();
        assert_eq!(on.width(), 1538);
        let off = build_features(&e, &a, Genre::Tweet, &FeatureSpec::new(UnitLevel::Token, false)).unwrap();
        assert_eq!(off.width(), 1536);
        assert_eq!(off.rows(), 2);
        assert_eq!(&on.row(0)[1536..], &[1.0, 0.0]);
        let para = build_features(&e, &a, Genre::Paragraph, &FeatureSpec::new(UnitLevel::Word, true)).unwrap();
        assert_eq!(&para.row(1)[1536..], &[0.0, 1.0]);
        let mut add = FeatureSpec::new(UnitLevel::Token, false);
        add.combine = Combine::Add;
        assert_eq!(add.width(768), 768);
    }

    #[test]
    fn word_pooling_is_coordinatewise_max() {
        let tok = GreedyTokenizer::new(["a", "##b"]);
        let a = align("ab", &tok);
        assert_eq!(a.tokens.len(), 2);
        let seq = EmbeddedSequence {
            cls: vec![0.0; 3],
            token_vectors: vec![vec![1.0, -2.0, 3.0], vec![2.0, -3.0, 0.0]],
        };
        let spec = FeatureSpec::new(UnitLevel::Word, false);
        let f = build_features(&seq, &a, Genre::Tweet, &spec).unwrap();
        assert_eq!(f.rows(), 1);
        assert_eq!(&f.row(0)[3..], &[2.0, -2.0, 3.0]);

        let single = align("a", &tok);
        let seq1 = EmbeddedSequence { cls: vec![0.0; 3], token_vectors: vec![vec![0.5, -1.0, 2.0]] };
        let f1 = build_features(&seq1, &single, Genre::Tweet, &spec).unwrap();
        assert_eq!(&f1.row(0)[3..], &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn precomputed_checks_counts() {
        let s = snippet("one two");
        let a = align(&s.text, &WholeWordTokenizer);
        let mut store = PrecomputedEmbeddings::new(2);
        store
            .insert("x", EmbeddedSequence { cls: vec![0.0, 1.0], token_vectors: vec![vec![1.0, 1.0]] })
            .unwrap();
        assert!(matches!(store.embed(&s, &a), Err(EmbedError::TokenCountMismatch { expected: 2, found: 1, .. })));
        let mut other = s.clone();
        other.id = "y".into();
        let err = store.validate(&[other], None).unwrap_err();
        assert!(err.to_string().contains("\"y\""));
        assert!(store
            .insert("z", EmbeddedSequence { cls: vec![0.0], token_vectors: vec![] })
            .is_err());
    }

    #[test]
    fn binary_rejects_bad_magic() {
        assert!(PrecomputedEmbeddings::read_binary(&mut &b"NOTMAGIC\x01\0\0\0"[..]).is_err());
    }
}
