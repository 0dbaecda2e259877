// Strategy x genre ablation on a small synthetic split, followed by the
// published results rendered through the same table code.

use std::collections::BTreeMap;

use spantag::cli::{ablate, table_from_cells, EmbeddingSource, RunConfig};
use spantag::corpus::LabelSet;
use spantag::synth::{default_label_set, generate, Lexicon, SynthConfig};
use spantag::tagger::{Hyperparams, Strategy};

/// Published micro-F1 (with genre, without genre) per strategy.
pub const PUBLISHED: [(Strategy, f64, f64); 4] = [
    (Strategy::TokenToToken, 24.34, 22.62),
    (Strategy::TokenToWordMajority, 20.73, 16.57),
    (Strategy::TokenToWordFirst, 26.68, 24.37),
    (Strategy::WordToWord, 12.94, 13.22),
];

pub fn published_table() -> spantag::score::AblationTable {
    let mut cells = BTreeMap::new();
    for (s, with, without) in PUBLISHED {
        cells.insert((s, true), with);
        cells.insert((s, false), without);
    }
    table_from_cells(&cells)
}

pub fn run_example() {
    let dir = tempfile::tempdir().unwrap();
    let labels: LabelSet = default_label_set();
    let lexicon = Lexicon::standard(7);
    let labels_path = dir.path().join("labels.txt");
    let vocab_path = dir.path().join("vocab.txt");
    std::fs::write(&labels_path, labels.techniques().join("\n")).unwrap();
    std::fs::write(&vocab_path, lexicon.vocab().join("\n")).unwrap();

    let split = |n, seed| {
        generate(
            &lexicon,
            &SynthConfig {
                snippets: n,
                seed,
                ..SynthConfig::default()
            },
        )
    };
    let mut cfg = RunConfig::with_labels(&labels_path);
    cfg.vocab = Some(vocab_path);
    cfg.embedding = EmbeddingSource::Hash { dim: 128, seed: None };
    cfg.hyperparams = Hyperparams {
        learning_rate: 2.0,
        epochs: 8,
        ..Hyperparams::default()
    };

    let outcome = ablate(&cfg, &split(80, 1), &split(20, 2), &Strategy::ALL, &[true, false]).unwrap();
    print!("{}", outcome.render());
    assert_eq!(outcome.table.len(), 8);

    let published = published_table().render();
    println!("\npublished:\n{published}");
    assert!(published.contains("**26.68**") && published.contains("**24.37**"));
}

#[allow(dead_code)]
fn main() {
    run_example();
}
