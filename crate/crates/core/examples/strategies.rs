// The four span prediction strategies applied to the same unit labels.
//
// The first word is split into three tokens labeled 1, 2, 2: majority
// voting gives the word label 2, first-token labeling gives 1.

use spantag::corpus::LabelId;
use spantag::segment::{align, GreedyTokenizer};
use spantag::tagger::{aggregate_to_words, spans_from_unit_labels, Aggregation, Strategy};

pub fn run_example() {
    let tokenizer = GreedyTokenizer::new(["ab", "##cd", "##ef", "gh"]);
    let text = "abcdef gh";
    let a = align(text, &tokenizer);
    let token_labels = [LabelId(1), LabelId(2), LabelId(2), LabelId(2)];

    assert_eq!(aggregate_to_words(&token_labels, &a, Aggregation::Majority), [LabelId(2), LabelId(2)]);
    assert_eq!(aggregate_to_words(&token_labels, &a, Aggregation::First), [LabelId(1), LabelId(2)]);

    for strategy in [Strategy::TokenToToken, Strategy::TokenToWordMajority, Strategy::TokenToWordFirst] {
        let spans = spans_from_unit_labels(&token_labels, &a, text, strategy);
        let shown: Vec<String> = spans
            .iter()
            .map(|s| format!("{}:[{},{}) {:?}", s.technique.0, s.start, s.end, s.surface))
            .collect();
        println!("{:<32} {}", strategy.title(), shown.join("  "));
    }
    let word_spans = spans_from_unit_labels(&[LabelId(3), LabelId::O], &a, text, Strategy::WordToWord);
    println!("{:<32} 3:[{},{})", Strategy::WordToWord.title(), word_spans[0].start, word_spans[0].end);
    assert_eq!((word_spans[0].start, word_spans[0].end), (0, 6));
}

#[allow(dead_code)]
fn main() {
    run_example();
}
