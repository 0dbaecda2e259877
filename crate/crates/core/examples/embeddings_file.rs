// Precomputed embeddings: write hash vectors to JSONL and binary files,
// load them back and use them as a provider.

use spantag::corpus::LabelSet;
use spantag::embed::{build_features, load_embeddings, EmbeddingProvider, FeatureSpec, HashEmbedder, PrecomputedEmbeddings};
use spantag::segment::{align, WholeWordTokenizer};
use spantag::synth::{default_label_set, generate, Lexicon, SynthConfig};
use spantag::UnitLevel;

pub fn run_example() {
    let labels: LabelSet = default_label_set();
    let snippets = generate(
        &Lexicon::standard(7),
        &SynthConfig {
            snippets: 5,
            ..SynthConfig::default()
        },
    );
    let hasher = HashEmbedder::new(9, 16);
    let mut store = PrecomputedEmbeddings::new(16);
    for s in &snippets {
        let a = align(&s.text, &WholeWordTokenizer);
        store.insert(s.id.clone(), hasher.embed(s, &a).unwrap()).unwrap();
    }

    let dir = tempfile::tempdir().unwrap();
    let (json, bin) = (dir.path().join("vectors.jsonl"), dir.path().join("vectors.bin"));
    store.save_jsonl(&json).unwrap();
    store.save_binary(&bin).unwrap();
    println!(
        "{} sequences; jsonl {} bytes, binary {} bytes",
        store.len(),
        std::fs::metadata(&json).unwrap().len(),
        std::fs::metadata(&bin).unwrap().len()
    );

    let from_json = load_embeddings(&json, &snippets).unwrap();
    let from_bin = load_embeddings(&bin, &snippets).unwrap();
    let s = &snippets[0];
    let a = align(&s.text, &WholeWordTokenizer);
    assert_eq!(from_json.embed(s, &a).unwrap(), from_bin.embed(s, &a).unwrap());

    let features = build_features(&from_bin.embed(s, &a).unwrap(), &a, s.genre, &FeatureSpec::new(UnitLevel::Word, true)).unwrap();
    println!("{} word rows of width {}", features.rows(), features.width());
    assert_eq!(features.width(), 2 * 16 + 2);
    let _ = labels;
}

#[allow(dead_code)]
fn main() {
    run_example();
}
