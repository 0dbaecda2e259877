// Regenerates the bundled fixtures under `fixtures/`.
//
// ```text
// cargo run --example make_fixtures [-- <dir>]
// ```
//
// Everything is derived from fixed seeds, so rerunning reproduces the
// committed files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use spantag::cli::{self, RunConfig};
use spantag::corpus::{corpus_to_jsonl, save_corpus, LabelSet, Snippet};
use spantag::synth::{default_label_set, generate, inject_damage, Lexicon, SynthConfig};

pub const LEXICON_SEED: u64 = 7;

pub const CONFIG_TOML: &str = r#"labels = "labels.txt"
vocab = "vocab.txt"
seed = 13
strategy = "first"
use_genre = true

[embedding]
kind = "hash"
dim = 768
"#;

pub const SMALL_CONFIG_TOML: &str = r#"labels = "labels.txt"
vocab = "vocab.txt"
seed = 13
strategy = "first"
use_genre = true

[embedding]
kind = "hash"
dim = 32

[hyperparams]
learning_rate = 0.5
batch_size = 16
epochs = 5
"#;

pub const GRID_TOML: &str = r#"learning_rates = [0.001, 0.01, 0.1]
batch_sizes = [16, 32]
epochs = [3, 10, 30]
"#;

fn split(prefix: &str, snippets: usize, seed: u64, mention_in_span: f64) -> Vec<Snippet> {
    generate(
        &Lexicon::standard(LEXICON_SEED),
        &SynthConfig {
            snippets,
            tweet_share: 0.3,
            mention_in_span,
            id_prefix: prefix.into(),
            seed,
        },
    )
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).expect("write fixture");
    path
}

/// Writes every fixture into `dir` and returns the file names.
pub fn write_fixtures(dir: &Path) -> Vec<String> {
    fs::create_dir_all(dir).expect("fixture dir");
    let labels: LabelSet = default_label_set();
    let lexicon = Lexicon::standard(LEXICON_SEED);

    write(dir, "labels.txt", &(labels.techniques().join("\n") + "\n"));
    write(dir, "vocab.txt", &(lexicon.vocab().join("\n") + "\n"));
    write(dir, "config.toml", CONFIG_TOML);
    write(dir, "small_config.toml", SMALL_CONFIG_TOML);
    write(dir, "grid.toml", GRID_TOML);

    let train = split("train", 200, 101, 0.0);
    let dev = split("dev", 50, 102, 0.0);
    let test = split("test", 60, 103, 0.0);
    for (name, s) in [("train.jsonl", &train), ("dev.jsonl", &dev), ("test.jsonl", &test)] {
        save_corpus(s, &labels, &dir.join(name)).expect("save split");
    }

    // Damaged copy of a corpus with mentions inside spans, plus one surface
    // that only a ledger entry can fix.
    let clean = split("dmg", 40, 104, 0.3);
    save_corpus(&clean, &labels, &dir.join("damaged_clean.jsonl")).expect("save");
    let mut damaged = inject_damage(&clean, 105);
    let (victim, ann) = damaged
        .iter()
        .enumerate()
        .find_map(|(i, s)| (!s.gold_spans.is_empty()).then_some((i, 0)))
        .expect("a snippet with spans");
    let fixed = clean[victim].gold_spans[ann].clone();
    damaged[victim].gold_spans[ann].surface = fixed.surface.to_uppercase();
    fs::write(dir.join("damaged.jsonl"), corpus_to_jsonl(&damaged, &labels)).expect("write");
    let ledger = serde_json::json!({
        "id": damaged[victim].id,
        "ann_index": ann,
        "start": fixed.start,
        "end": fixed.end,
        "text": fixed.surface,
    });
    write(dir, "ledger.jsonl", &(ledger.to_string() + "\n"));

    // Small model and its predictions on the test split serve as goldens.
    let cfg = RunConfig::load(&dir.join("small_config.toml")).expect("config");
    cli::cmd_train(&cfg, &[dir.join("train.jsonl")], &dir.join("small.model"), Some(&dir.join("small.log.json")))
        .expect("train");
    fs::remove_file(dir.join("small.log.json")).expect("drop log");
    cli::cmd_predict(&cfg, &dir.join("small.model"), &dir.join("test.jsonl"), &dir.join("small_pred.jsonl"))
        .expect("predict");

    let mut names: Vec<String> = fs::read_dir(dir)
        .expect("list")
        .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

pub fn run_example() {
    let dir = tempfile::tempdir().expect("tempdir");
    let names = write_fixtures(dir.path());
    assert!(names.contains(&"small.model".to_string()));
    println!("{}", names.join("\n"));
}

#[allow(dead_code)]
fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    for name in write_fixtures(&dir) {
        println!("{}", dir.join(name).display());
    }
}
