//! Synthetic corpora for tests, examples and the bundled fixtures.
//!
//! Words are built from a stem followed by zero to two suffix pieces. Every
//! technique owns two stems; filler words use a disjoint stem pool. The
//! vocabulary lists stems bare and suffixes with the `##` continuation
//! marker, so the greedy tokenizer splits every word into its stem plus one
//! token per suffix, and only the first token of a word carries the technique
//! signal.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{char_len, Genre, LabelId, LabelSet, Snippet, TechniqueSpan};
use crate::repair::USER_PLACEHOLDER;
use crate::segment::{GreedyTokenizer, CONTINUATION};

/// A 23-name technique inventory; with `O` this gives 24 labels.
pub const DEFAULT_TECHNIQUES: [&str; 23] = [
    "Appeal_to_Authority",
    "Appeal_to_Fear-Prejudice",
    "Appeal_to_Hypocrisy",
    "Appeal_to_Popularity",
    "Appeal_to_Time",
    "Appeal_to_Values",
    "Causal_Oversimplification",
    "Consequential_Oversimplification",
    "Conversation_Killer",
    "Doubt",
    "Exaggeration-Minimisation",
    "False_Dilemma-No_Choice",
    "Flag_Waving",
    "Guilt_by_Association",
    "Loaded_Language",
    "Name_Calling-Labeling",
    "Obfuscation-Vagueness-Confusion",
    "Questioning_the_Reputation",
    "Red_Herring",
    "Repetition",
    "Slogans",
    "Straw_Man",
    "Whataboutism",
];

pub fn default_label_set() -> LabelSet {
    LabelSet::new(DEFAULT_TECHNIQUES).expect("distinct names")
}

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const STEMS_PER_TECHNIQUE: usize = 2;

/// Stems and suffixes of a synthetic language.
#[derive(Debug, Clone)]
pub struct Lexicon {
    /// `cue_stems[k]` belongs to technique `LabelId(k + 1)`.
    pub cue_stems: Vec<Vec<String>>,
    pub filler_stems: Vec<String>,
    /// Suffix surfaces without the continuation marker.
    pub suffixes: Vec<String>,
}

impl Lexicon {
    pub fn new(techniques: usize, fillers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stems: Vec<String> = Vec::new();
        for a in CONSONANTS {
            for b in VOWELS {
                for c in CONSONANTS {
                    for d in VOWELS {
                        stems.push([*a, *b, *c, *d].iter().collect());
                    }
                }
            }
        }
        stems.shuffle(&mut rng);
        let needed = techniques * STEMS_PER_TECHNIQUE + fillers;
        assert!(needed <= stems.len(), "lexicon too large");
        let mut stems = stems.into_iter();
        let cue_stems = (0..techniques)
            .map(|_| stems.by_ref().take(STEMS_PER_TECHNIQUE).collect())
            .collect();
        let filler_stems = stems.by_ref().take(fillers).collect();
        // vowel-initial suffixes never collide with consonant-initial stems
        let mut suffixes: Vec<String> = VOWELS
            .iter()
            .flat_map(|v| ['n', 'r', 's', 't'].map(|c| [*v, c].iter().collect::<String>()))
            .collect();
        suffixes.shuffle(&mut rng);
        suffixes.truncate(12);
        Lexicon {
            cue_stems,
            filler_stems,
            suffixes,
        }
    }

    /// Default lexicon for the 23-technique inventory.
    pub fn standard(seed: u64) -> Self {
        Lexicon::new(DEFAULT_TECHNIQUES.len(), 60, seed)
    }

    /// Vocabulary lines: stems, `##suffix` pieces and the mention placeholder.
    pub fn vocab(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .cue_stems
            .iter()
            .flatten()
            .chain(&self.filler_stems)
            .cloned()
            .collect();
        v.extend(self.suffixes.iter().map(|s| format!("{CONTINUATION}{s}")));
        v.push(USER_PLACEHOLDER.to_string());
        v
    }

    pub fn tokenizer(&self) -> GreedyTokenizer {
        GreedyTokenizer::new(self.vocab())
    }

    fn word(&self, stem: &str, rng: &mut ChaCha8Rng) -> String {
        let n = rng.random_range(0..=2);
        let mut w = stem.to_string();
        for _ in 0..n {
            w.push_str(self.suffixes.choose(rng).expect("suffixes"));
        }
        w
    }

    fn filler(&self, rng: &mut ChaCha8Rng) -> String {
        let stem = self.filler_stems.choose(rng).expect("filler stems");
        self.word(stem, rng)
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub snippets: usize,
    /// Fraction of snippets that are tweets.
    pub tweet_share: f64,
    /// Probability that a tweet span starts with an `@USER` word.
    pub mention_in_span: f64,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            snippets: 200,
            tweet_share: 0.3,
            mention_in_span: 0.0,
            id_prefix: "syn".into(),
            seed: 0,
        }
    }
}

/// Generates snippets whose gold spans cover whole cue words exactly.
pub fn generate(lexicon: &Lexicon, config: &SynthConfig) -> Vec<Snippet> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let techniques = lexicon.cue_stems.len();
    (0..config.snippets)
        .map(|i| {
            let genre = if rng.random_bool(config.tweet_share) {
                Genre::Tweet
            } else {
                Genre::Paragraph
            };
            let (len, max_spans) = match genre {
                Genre::Tweet => (rng.random_range(6..=14), 2),
                Genre::Paragraph => (rng.random_range(15..=35), 3),
            };
            let n_spans = rng.random_range(0..=max_spans);
            // (word position, technique, span length) with one filler gap
            let mut plan: Vec<(usize, usize, usize)> = Vec::new();
            for _ in 0..n_spans {
                let span_len = rng.random_range(1..=3usize);
                if span_len >= len {
                    continue;
                }
                let at = rng.random_range(0..=len - span_len);
                let clashes = plan
                    .iter()
                    .any(|&(s, _, l)| at < s + l + 1 && s < at + span_len + 1);
                if clashes {
                    continue;
                }
                plan.push((at, rng.random_range(0..techniques), span_len));
            }
            plan.sort_unstable();

            let mut words: Vec<String> = Vec::with_capacity(len);
            let mut word_spans: Vec<(usize, usize, usize)> = Vec::new();
            let mut pos = 0;
            for &(at, technique, span_len) in &plan {
                while pos < at {
                    words.push(filler_word(lexicon, genre, &mut rng));
                    pos += 1;
                }
                let first = words.len();
                let mention = genre == Genre::Tweet && rng.random_bool(config.mention_in_span);
                if mention {
                    words.push(USER_PLACEHOLDER.to_string());
                }
                for _ in 0..span_len {
                    let stem = lexicon.cue_stems[technique].choose(&mut rng).expect("cue stems");
                    words.push(lexicon.word(stem, &mut rng));
                }
                word_spans.push((first, words.len() - 1, technique + 1));
                pos += span_len;
            }
            while pos < len {
                words.push(filler_word(lexicon, genre, &mut rng));
                pos += 1;
            }

            let mut offsets = Vec::with_capacity(words.len());
            let mut text = String::new();
            for (k, w) in words.iter().enumerate() {
                if k > 0 {
                    text.push(' ');
                }
                let start = char_len(&text);
                text.push_str(w);
                offsets.push((start, char_len(&text)));
            }
            let gold_spans = word_spans
                .into_iter()
                .map(|(a, b, t)| {
                    let (start, end) = (offsets[a].0, offsets[b].1);
                    TechniqueSpan {
                        technique: LabelId(t),
                        start,
                        end,
                        surface: crate::corpus::char_slice(&text, start, end).expect("in range").to_string(),
                    }
                })
                .collect();
            Snippet {
                id: format!("{}-{i:04}", config.id_prefix),
                genre,
                text,
                gold_spans,
            }
        })
        .collect()
}

fn filler_word(lexicon: &Lexicon, genre: Genre, rng: &mut ChaCha8Rng) -> String {
    if genre == Genre::Tweet && rng.random_bool(0.1) {
        USER_PLACEHOLDER.to_string()
    } else {
        lexicon.filler(rng)
    }
}

/// Format and private-use code points used when injecting damage.
pub const DAMAGE_CODE_POINTS: [char; 10] = [
    '\u{200E}', '\u{200F}', '\u{202A}', '\u{202C}', '\u{202D}', '\u{2066}', '\u{FEFF}', '\u{E000}', '\u{E123}',
    '\u{F8FF}',
];

/// Corrupts a clean corpus the way the real data is corrupted:
///
/// - some spaces in the text become format/private-use code points (in the
///   surface too when the space lies inside a span);
/// - span offsets are shifted by independent deltas of ±1..=20;
/// - `@USER` in surfaces is replaced by a concrete handle.
pub fn inject_damage(clean: &[Snippet], seed: u64) -> Vec<Snippet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean
        .iter()
        .map(|s| {
            let mut chars: Vec<char> = s.text.chars().collect();
            let mut spans = s.gold_spans.clone();
            for i in 0..chars.len() {
                if chars[i] == ' ' && rng.random_bool(0.25) {
                    let cp = *DAMAGE_CODE_POINTS.choose(&mut rng).expect("code points");
                    chars[i] = cp;
                    for sp in spans.iter_mut().filter(|sp| sp.start <= i && i < sp.end) {
                        if rng.random_bool(0.5) {
                            let mut sc: Vec<char> = sp.surface.chars().collect();
                            sc[i - sp.start] = cp;
                            sp.surface = sc.into_iter().collect();
                        }
                    }
                }
            }
            for sp in &mut spans {
                let shift = |pos: usize, rng: &mut ChaCha8Rng| {
                    let delta = rng.random_range(1..=20usize);
                    if rng.random_bool(0.5) && pos >= delta {
                        pos - delta
                    } else {
                        pos + delta
                    }
                };
                sp.start = shift(sp.start, &mut rng);
                sp.end = shift(sp.end, &mut rng);
                if sp.surface.contains(USER_PLACEHOLDER) {
                    let handle = format!("@user_{}", rng.random_range(0..100_000u32));
                    sp.surface = sp.surface.replace(USER_PLACEHOLDER, &handle);
                }
            }
            Snippet {
                id: s.id.clone(),
                genre: s.genre,
                text: chars.into_iter().collect(),
                gold_spans: spans,
            }
        })
        .collect()
}

/// Whether `surface` occurs exactly once in `text`.
pub fn occurs_once(text: &str, surface: &str) -> bool {
    let hay: Vec<char> = text.chars().collect();
    let needle: Vec<char> = surface.chars().collect();
    !needle.is_empty() && hay.windows(needle.len()).filter(|w| *w == needle.as_slice()).count() == 1
}
