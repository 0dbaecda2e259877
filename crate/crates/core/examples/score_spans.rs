// Proportional-overlap micro-F1 on hand-made spans.

use spantag::corpus::{LabelId, LabelSet, SpanSet, TechniqueSpan};
use spantag::score::{micro_f1, ScoreOptions};

fn set(id: &str, spans: &[(usize, usize, usize)]) -> SpanSet {
    SpanSet {
        id: id.into(),
        spans: spans
            .iter()
            .map(|&(t, start, end)| TechniqueSpan {
                technique: LabelId(t),
                start,
                end,
                surface: String::new(),
            })
            .collect(),
    }
}

pub fn run_example() {
    let labels = LabelSet::new(["Doubt", "Slogans"]).unwrap();

    // half of the gold span is predicted, half of the prediction is gold
    let gold = [set("a", &[(1, 0, 10)])];
    let pred = [set("a", &[(1, 5, 15)])];
    let r = micro_f1(&gold, &pred, &labels, ScoreOptions::default()).unwrap();
    println!("worked example: P {:.2} R {:.2} F1 {:.2}", r.precision, r.recall, r.micro_f1);
    assert_eq!((r.precision, r.recall, r.micro_f1), (0.5, 0.5, 0.5));

    // a duplicated prediction earns the gold span twice unless capped
    let gold = [set("b", &[(2, 0, 10)])];
    let pred = [set("b", &[(2, 0, 10), (2, 0, 10)])];
    for cap in [false, true] {
        let r = micro_f1(&gold, &pred, &labels, ScoreOptions { cap_per_span: cap }).unwrap();
        println!("cap_per_span={cap}: P {:.3} R {:.3}", r.precision, r.recall);
    }

    let gold = [set("c", &[(1, 0, 5), (2, 8, 12)])];
    let r = micro_f1(&gold, &gold, &labels, ScoreOptions::default()).unwrap();
    print!("{r}");
    assert_eq!(r.micro_f1_percent(), 100.0);
}

#[allow(dead_code)]
fn main() {
    run_example();
}
