// Repairs annotations whose offsets drifted from their text.
//
// Shows the three automatic fixes (code point scrubbing, realignment by
// surface search, mention normalization) and a manual ledger override.

use spantag::corpus::{Genre, LabelId, Snippet, TechniqueSpan};
use spantag::repair::{realign_span, repair_corpus, scrub_unicode, Correction, OverrideLedger, RepairAction};

fn span(technique: usize, start: usize, end: usize, surface: &str) -> TechniqueSpan {
    TechniqueSpan {
        technique: LabelId(technique),
        start,
        end,
        surface: surface.to_string(),
    }
}

pub fn run_example() {
    assert_eq!(scrub_unicode("a\u{200F}b"), "a b");
    assert_eq!(realign_span("the cat sat on the cat", "the cat", 15).unwrap(), (15, 22));

    let snippets = vec![
        // offsets shifted by 4, a bidi mark inside the text
        Snippet {
            id: "p1".into(),
            genre: Genre::Paragraph,
            text: "they will \u{200F}destroy everything we love".into(),
            gold_spans: vec![span(1, 14, 33, "destroy everything")],
        },
        // annotators saw the real handle, the text has the placeholder
        Snippet {
            id: "t1".into(),
            genre: Genre::Tweet,
            text: "@USER is a total fraud".into(),
            gold_spans: vec![span(2, 0, 22, "@someone is a total fraud")],
        },
        // nothing to search for; the ledger supplies the answer
        Snippet {
            id: "t2".into(),
            genre: Genre::Tweet,
            text: "vote now or lose it all".into(),
            gold_spans: vec![span(3, 0, 4, "VOTE NOW")],
        },
    ];
    let mut ledger = OverrideLedger::new();
    ledger.insert(
        "t2",
        0,
        Correction {
            start: 0,
            end: 8,
            surface: "vote now".into(),
        },
    );

    let (repaired, report) = repair_corpus(&snippets, &ledger);
    for s in &repaired {
        for sp in &s.gold_spans {
            println!("{:<3} [{:>2}, {:>2}) {:?}", s.id, sp.start, sp.end, sp.surface);
        }
    }
    print!("{}", report.to_jsonl());

    assert_eq!(repaired.len(), 3);
    assert_eq!(repaired[0].gold_spans[0].start, 11);
    assert_eq!(repaired[1].gold_spans[0].surface, "@USER is a total fraud");
    assert!(report
        .actions()
        .any(|(id, a)| id == "t2" && matches!(a, RepairAction::OverrideApplied { .. })));
}

#[allow(dead_code)]
fn main() {
    run_example();
}
