// Subword tokenization with token, word and character alignment, and gold
// label projection at both unit levels.

use spantag::corpus::{LabelId, TechniqueSpan};
use spantag::segment::{align, project_gold, GreedyTokenizer};
use spantag::UnitLevel;

pub fn run_example() {
    let tokenizer = GreedyTokenizer::new(["un", "##believ", "##able", "claims", "are", "##n't", "true"]);
    let text = "unbelievable claims aren't true";
    let a = align(text, &tokenizer);
    assert!(a.is_consistent());

    for (w, word) in a.words.iter().enumerate() {
        let pieces: Vec<&str> = a.tokens_of(w).map(|t| a.tokens[t].text.as_str()).collect();
        println!("word {w} [{}, {}) -> {:?}", word.start, word.end, pieces);
    }

    let gold = [TechniqueSpan {
        technique: LabelId(1),
        start: 0,
        end: 19,
        surface: "unbelievable claims".into(),
    }];
    let tokens = project_gold(&a, &gold, UnitLevel::Token);
    let words = project_gold(&a, &gold, UnitLevel::Word);
    println!("token labels {:?}", tokens.iter().map(|l| l.0).collect::<Vec<_>>());
    println!("word labels  {:?}", words.iter().map(|l| l.0).collect::<Vec<_>>());

    assert_eq!(a.tokens.len(), 7);
    assert_eq!(words, vec![LabelId(1), LabelId(1), LabelId::O, LabelId::O]);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
