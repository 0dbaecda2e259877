mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spantag::corpus::{char_len, char_slice, corpus_to_jsonl, read_corpus, LabelId, SpanSet};
use spantag::embed::{hash_token_vector, EmbeddedSequence, FeatureSpec, PrecomputedEmbeddings, HASH_ACTIVE};
use spantag::repair::{normalize_mention_surface, repair_corpus, scrub_unicode, OverrideLedger};
use spantag::score::{micro_f1, ScoreOptions};
use spantag::segment::{align, project_gold, GreedyTokenizer, WholeWordTokenizer, CONTINUATION};
use spantag::synth::{default_label_set, generate, inject_damage, occurs_once, Lexicon, SynthConfig};
use spantag::tagger::{
    aggregate_to_words, decode_spans, spans_from_unit_labels, train, Aggregation, Hyperparams, TrainOptions,
    TrainingExample,
};
use spantag::tagger::Strategy as Approach;
use spantag::{Genre, UnitLevel};

fn synth(snippets: usize, seed: u64, mention_in_span: f64) -> Vec<spantag::Snippet> {
    generate(
        &Lexicon::standard(7),
        &SynthConfig {
            snippets,
            seed,
            mention_in_span,
            ..SynthConfig::default()
        },
    )
}

fn text_strategy() -> impl Strategy<Value = String> {
    // letters, spaces, mentions, and a few format/private-use/wide chars
    prop::collection::vec(
        prop_oneof![
            4 => "[a-z]{1,6}",
            2 => Just(" ".to_string()),
            1 => Just("@USER".to_string()),
            1 => Just("@someone".to_string()),
            1 => prop::sample::select(vec!["\u{200F}", "\u{FEFF}", "\u{E000}", "\u{00A0}", "é", "كتب", "😀", "\t"])
                .prop_map(str::to_string),
        ],
        0..20,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scrub_is_idempotent_and_keeps_length(text in text_strategy()) {
        let once = scrub_unicode(&text);
        prop_assert_eq!(char_len(&once), char_len(&text));
        prop_assert_eq!(scrub_unicode(&once), once.clone());
    }

    #[test]
    fn mention_normalization_is_idempotent(text in text_strategy()) {
        let once = normalize_mention_surface(&text);
        prop_assert_eq!(normalize_mention_surface(&once), once);
    }

    #[test]
    fn clean_corpus_is_a_fixed_point(seed in any::<u64>()) {
        let clean = synth(20, seed, 0.3);
        let (repaired, report) = repair_corpus(&clean, &OverrideLedger::new());
        prop_assert_eq!(repaired, clean);
        prop_assert!(report.snippets.is_empty());
    }

    #[test]
    fn repair_recovers_unique_surfaces(seed in any::<u64>()) {
        let clean = synth(30, seed, 0.3);
        let damaged = inject_damage(&clean, seed ^ 1);
        let (repaired, report) = repair_corpus(&damaged, &OverrideLedger::new());
        prop_assert!(report.unrepairable_ids().is_empty());
        prop_assert_eq!(repaired.len(), clean.len());
        for (r, c) in repaired.iter().zip(&clean) {
            for (rs, cs) in r.gold_spans.iter().zip(&c.gold_spans) {
                prop_assert_eq!(char_slice(&r.text, rs.start, rs.end), Some(rs.surface.as_str()));
                if occurs_once(&c.text, &cs.surface) {
                    prop_assert_eq!((rs.start, rs.end), (cs.start, cs.end));
                }
            }
        }
        // a second pass has nothing left to do
        let (again, second) = repair_corpus(&repaired, &OverrideLedger::new());
        prop_assert_eq!(again, repaired);
        prop_assert!(second.snippets.is_empty());
    }

    #[test]
    fn corpus_jsonl_round_trip(seed in any::<u64>()) {
        let labels = default_label_set();
        let clean = synth(10, seed, 0.2);
        let text = corpus_to_jsonl(&clean, &labels);
        let back = read_corpus(text.as_bytes(), &labels).unwrap();
        prop_assert_eq!(back, clean);
    }

    #[test]
    fn alignment_tiles_every_word(
        text in text_strategy(),
        vocab in prop::collection::vec("(##)?[a-z]{1,3}", 0..30),
    ) {
        let tok = GreedyTokenizer::new(vocab);
        let a = align(&text, &tok);
        prop_assert!(a.is_consistent());
        let chars: Vec<char> = text.chars().collect();
        for (w, word) in a.words.iter().enumerate() {
            let range = a.tokens_of(w);
            prop_assert!(!range.is_empty());
            let mut at = word.start;
            for t in &a.tokens[range] {
                prop_assert_eq!(t.start, at);
                let piece: String = chars[t.start..t.end].iter().collect();
                prop_assert_eq!(t.text.strip_prefix(CONTINUATION).unwrap_or(&t.text), piece.as_str());
                at = t.end;
            }
            prop_assert_eq!(at, word.end);
        }
    }

    #[test]
    fn gold_projection_round_trips(seed in any::<u64>()) {
        let lexicon = Lexicon::standard(7);
        let tok = lexicon.tokenizer();
        for s in synth(15, seed, 0.0) {
            let a = align(&s.text, &tok);
            for (level, strategy) in [(UnitLevel::Token, Approach::TokenToToken), (UnitLevel::Word, Approach::WordToWord)] {
                let labels = project_gold(&a, &s.gold_spans, level);
                let spans = spans_from_unit_labels(&labels, &a, &s.text, strategy);
                prop_assert_eq!(&spans, &s.gold_spans);
            }
        }
    }

    #[test]
    fn embedding_files_round_trip_bitwise(
        seqs in prop::collection::vec((1usize..5, prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 24)), 1..5),
    ) {
        let dim = 4;
        let mut store = PrecomputedEmbeddings::new(dim);
        for (i, (n, pool)) in seqs.iter().enumerate() {
            let take = |k: usize| pool[(k * dim) % pool.len()..][..dim].to_vec();
            let seq = EmbeddedSequence { cls: take(0), token_vectors: (1..=*n).map(take).collect() };
            store.insert(format!("id{i}"), seq).unwrap();
        }
        let from_json = PrecomputedEmbeddings::read_jsonl(store.to_jsonl().as_bytes()).unwrap();
        let from_bin = PrecomputedEmbeddings::read_binary(&mut store.to_binary().as_slice()).unwrap();
        for i in 0..seqs.len() {
            let id = format!("id{i}");
            let bits = |s: &EmbeddedSequence| {
                s.token_vectors.iter().flatten().chain(&s.cls).map(|x| x.to_bits()).collect::<Vec<_>>()
            };
            let orig = bits(store.get(&id).unwrap());
            prop_assert_eq!(bits(from_json.get(&id).unwrap()), orig.clone());
            prop_assert_eq!(bits(from_bin.get(&id).unwrap()), orig);
        }
    }

    #[test]
    fn hash_vectors_are_sparse_signed_units(token in "\\PC{0,12}", seed in any::<u64>(), dim in 8usize..64) {
        let v = hash_token_vector(&token, seed, dim);
        prop_assert_eq!(v.len(), dim);
        let nonzero: Vec<f32> = v.iter().copied().filter(|x| *x != 0.0).collect();
        prop_assert_eq!(nonzero.len(), HASH_ACTIVE);
        let scale = 1.0 / (HASH_ACTIVE as f32).sqrt();
        prop_assert!(nonzero.iter().all(|x| x.abs() == scale));
        prop_assert_eq!(v, hash_token_vector(&token, seed, dim));
    }

    #[test]
    fn scorer_matches_oracle(seed in any::<u64>(), cap in any::<bool>()) {
        let labels = spantag::LabelSet::new(["A", "B", "C"]).unwrap();
        let (gold, pred) = random_score_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = micro_f1(&gold, &pred, &labels, ScoreOptions { cap_per_span: cap }).unwrap();
        let o = score_oracle(&gold, &pred, cap);
        prop_assert!((r.precision - o.precision).abs() < 1e-12);
        prop_assert!((r.recall - o.recall).abs() < 1e-12);
        prop_assert!((r.micro_f1 - o.f1).abs() < 1e-12);
    }

    #[test]
    fn scorer_is_symmetric(seed in any::<u64>()) {
        let labels = spantag::LabelSet::new(["A", "B", "C"]).unwrap();
        let (gold, pred) = random_score_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let ab = micro_f1(&gold, &pred, &labels, ScoreOptions::default()).unwrap();
        let ba = micro_f1(&pred, &gold, &labels, ScoreOptions::default()).unwrap();
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert!((ab.micro_f1 - ba.micro_f1).abs() < 1e-15);
    }

    #[test]
    fn scorer_ignores_duplication(seed in any::<u64>()) {
        let labels = spantag::LabelSet::new(["A", "B", "C"]).unwrap();
        let (gold, pred) = random_score_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let twice = |sets: &[SpanSet]| {
            let mut out = sets.to_vec();
            out.extend(sets.iter().map(|s| SpanSet { id: format!("{}-copy", s.id), spans: s.spans.clone() }));
            out
        };
        let one = micro_f1(&gold, &pred, &labels, ScoreOptions::default()).unwrap();
        let two = micro_f1(&twice(&gold), &twice(&pred), &labels, ScoreOptions::default()).unwrap();
        prop_assert!((one.precision - two.precision).abs() < 1e-12);
        prop_assert!((one.recall - two.recall).abs() < 1e-12);
        prop_assert!((one.micro_f1 - two.micro_f1).abs() < 1e-12);
    }

    #[test]
    fn enlarging_a_correct_prediction_lowers_precision(start in 0usize..20, len in 1usize..20, grow in 1usize..10) {
        let labels = spantag::LabelSet::new(["A"]).unwrap();
        let gold = [SpanSet { id: "x".into(), spans: vec![span(1, start, start + len)] }];
        let exact = [SpanSet { id: "x".into(), spans: vec![span(1, start, start + len)] }];
        let wide = [SpanSet { id: "x".into(), spans: vec![span(1, start, start + len + grow)] }];
        let a = micro_f1(&gold, &exact, &labels, ScoreOptions::default()).unwrap();
        let b = micro_f1(&gold, &wide, &labels, ScoreOptions::default()).unwrap();
        prop_assert_eq!(b.recall, 1.0);
        prop_assert!(b.precision < a.precision);
    }

    #[test]
    fn aggregation_and_decoding_match_oracles(seed in any::<u64>()) {
        let case = random_aggregation_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = &case.alignment;
        prop_assert_eq!(aggregate_to_words(&case.labels, a, Aggregation::Majority), majority_oracle(&case.labels, &case.lens));
        prop_assert_eq!(aggregate_to_words(&case.labels, a, Aggregation::First), first_oracle(&case.labels, &case.lens));
        let got: Vec<(usize, usize, usize)> = decode_spans(&case.labels, &a.token_spans(), &case.text)
            .into_iter()
            .map(|s| (s.technique.0, s.start, s.end))
            .collect();
        prop_assert_eq!(got, decode_oracle(&case.labels, &a.token_spans()));
    }

    #[test]
    fn one_token_words_make_token_strategies_agree(
        words in prop::collection::vec("[a-z]{1,5}", 1..10),
        raw in prop::collection::vec(0usize..4, 10),
    ) {
        let text = words.join(" ");
        let a = align(&text, &WholeWordTokenizer);
        let labels: Vec<LabelId> = (0..a.tokens.len()).map(|i| LabelId(raw[i])).collect();
        let t = spans_from_unit_labels(&labels, &a, &text, Approach::TokenToToken);
        prop_assert_eq!(&t, &spans_from_unit_labels(&labels, &a, &text, Approach::TokenToWordMajority));
        prop_assert_eq!(&t, &spans_from_unit_labels(&labels, &a, &text, Approach::TokenToWordFirst));
        prop_assert_eq!(&t, &spans_from_unit_labels(&labels, &a, &text, Approach::WordToWord));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn full_batch_loss_never_increases_at_small_rate(seed in any::<u64>()) {
        use spantag::embed::{build_features, EmbeddingProvider, HashEmbedder};
        let labels = default_label_set();
        let lexicon = Lexicon::standard(7);
        let tok = lexicon.tokenizer();
        let provider = HashEmbedder::new(seed, 32);
        let spec = FeatureSpec::new(UnitLevel::Token, true);
        let examples: Vec<TrainingExample> = synth(6, seed, 0.0)
            .iter()
            .map(|s| {
                let a = align(&s.text, &tok);
                let seq = provider.embed(s, &a).unwrap();
                TrainingExample {
                    features: build_features(&seq, &a, s.genre, &spec).unwrap(),
                    labels: project_gold(&a, &s.gold_spans, UnitLevel::Token),
                }
            })
            .collect();
        let units: usize = examples.iter().map(|e| e.labels.len()).sum();
        let hyper = Hyperparams { learning_rate: 1e-3, batch_size: units, epochs: 20, seed };
        let outcome = train(&examples, &labels, spec, &hyper, &TrainOptions::default()).unwrap();
        for w in outcome.losses().windows(2) {
            prop_assert!(w[1] <= w[0], "loss rose: {:?}", w);
        }
    }
}

#[test]
fn genre_one_hot_order() {
    assert_eq!(Genre::Tweet.one_hot_index(), 0);
    assert_eq!(Genre::Paragraph.one_hot_index(), 1);
}
