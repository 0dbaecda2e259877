// Trains the linear tagger on a synthetic corpus, checks its gradient,
// saves and reloads the model, and predicts spans.

use spantag::cli::Pipeline;
use spantag::corpus::{LabelId, SpanSet};
use spantag::embed::{FeatureSpec, HashEmbedder};
use spantag::score::{micro_f1, ScoreOptions};
use spantag::synth::{default_label_set, generate, Lexicon, SynthConfig};
use spantag::tagger::{grad_check, init_tagger, Hyperparams, LinearTagger, Strategy, TrainOptions};
use spantag::UnitLevel;

pub fn run_example() {
    let labels = default_label_set();
    let lexicon = Lexicon::standard(7);
    let corpus = |n, seed| {
        generate(
            &lexicon,
            &SynthConfig {
                snippets: n,
                seed,
                ..SynthConfig::default()
            },
        )
    };
    let (train, test) = (corpus(120, 1), corpus(30, 2));

    // 768-dim vectors, token level, no genre: 1536 x 24 weights
    let paper_shape = init_tagger(1536, &labels, FeatureSpec::new(UnitLevel::Token, false), 0);
    assert_eq!(paper_shape.parameter_count(), 36_864);

    let pipeline = Pipeline {
        labels: labels.clone(),
        tokenizer: Box::new(lexicon.tokenizer()),
        provider: Box::new(HashEmbedder::new(3, 128)),
        spec: FeatureSpec::new(UnitLevel::Token, true),
        strategy: Strategy::TokenToWordFirst,
    };
    let hyper = Hyperparams {
        learning_rate: 2.0,
        epochs: 15,
        ..Hyperparams::default()
    };
    let (tagger, history) = pipeline
        .train(&train, &hyper, &TrainOptions::default(), &mut |e| {
            if e.epoch % 5 == 0 {
                println!("epoch {:>2} loss {:.4}", e.epoch, e.mean_loss)
            }
        })
        .expect("training");
    assert!(history.last().unwrap().mean_loss < history[0].mean_loss);

    let ex = &pipeline.examples(&train[..1]).unwrap()[0];
    let batch: Vec<(Vec<f32>, LabelId)> = (0..ex.labels.len()).map(|r| (ex.features.row(r).to_vec(), ex.labels[r])).collect();
    let err = grad_check(&tagger, &batch, 0);
    println!("gradient check max relative error {err:.2e}");
    assert!(err < 1e-4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tagger.model");
    tagger.save(&path, None).unwrap();
    let reloaded = LinearTagger::load(&path, Some(&labels)).unwrap();

    let preds = pipeline.predict(&reloaded, &test).unwrap();
    let gold: Vec<SpanSet> = test.iter().map(SpanSet::from).collect();
    let pred: Vec<SpanSet> = test
        .iter()
        .zip(preds)
        .map(|(s, spans)| SpanSet { id: s.id.clone(), spans })
        .collect();
    let report = micro_f1(&gold, &pred, &labels, ScoreOptions::default()).unwrap();
    println!("test micro-F1 {:.2} with embedding dim {}", report.micro_f1_percent(), pipeline.provider.dim());
    assert!(report.micro_f1_percent() > 80.0);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
