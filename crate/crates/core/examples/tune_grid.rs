// Grid search with seeded k-fold cross-validation.

use spantag::cli::{tune, Grid, Pipeline};
use spantag::embed::{FeatureSpec, HashEmbedder};
use spantag::score::ScoreOptions;
use spantag::synth::{default_label_set, generate, Lexicon, SynthConfig};
use spantag::tagger::{Strategy, TrainOptions};
use spantag::UnitLevel;

pub fn run_example() {
    let lexicon = Lexicon::standard(7);
    let snippets = generate(
        &lexicon,
        &SynthConfig {
            snippets: 60,
            seed: 5,
            ..SynthConfig::default()
        },
    );
    let pipeline = Pipeline {
        labels: default_label_set(),
        tokenizer: Box::new(lexicon.tokenizer()),
        provider: Box::new(HashEmbedder::new(1, 128)),
        spec: FeatureSpec::new(UnitLevel::Token, true),
        strategy: Strategy::TokenToWordFirst,
    };
    let grid = Grid {
        learning_rates: vec![0.01, 2.0],
        batch_sizes: vec![16],
        epochs: vec![3, 10],
    };
    let report = tune(&pipeline, &snippets, &grid, 3, 42, &TrainOptions::default(), ScoreOptions::default()).unwrap();
    print!("{}", report.render());
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.best.learning_rate, 2.0);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
