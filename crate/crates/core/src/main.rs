use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spantag::cli::{self, CliError, Overrides, RunConfig, EXIT_USAGE};
use spantag::score::ScoreOptions;
use spantag::Strategy;

#[derive(Parser)]
#[command(name = "spantag", version, about = "Technique span tagging pipeline")]
struct Opts {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Label inventory, one technique per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Subword vocabulary, one piece per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, overrides_with = "no_genre")]
    genre: bool,
    #[arg(long = "no-genre", overrides_with = "genre")]
    no_genre: bool,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Cap each predicted span's credit at 1 when scoring.
    #[arg(long)]
    cap_per_span: bool,
}

// Closed pipes (e.g. `| head`) are not errors.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_flag(s).ok_or_else(|| format!("unknown strategy {s:?}; expected token, majority, first or word"))
}

#[derive(Subcommand)]
enum Command {
    /// Fix span offsets and surfaces in an annotated corpus.
    Repair {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Repair report (JSONL).
        #[arg(long)]
        report: PathBuf,
        /// Manual override ledger (JSONL).
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Exit with status 2 if any span could not be repaired.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train a tagger on one or more corpora, concatenated in order.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        model: PathBuf,
        /// Training log; defaults to <model>.log.json.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Predict spans with a trained model.
    Predict {
        input: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against gold spans.
    Score {
        gold: PathBuf,
        pred: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Grid search with k-fold cross-validation.
    Tune {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate every strategy with and without genre.
    Ablate {
        #[arg(required = true)]
        train: Vec<PathBuf>,
        #[arg(long)]
        eval: PathBuf,
        /// Restrict to these strategies (repeatable).
        #[arg(long = "only", value_parser = parse_strategy)]
        only: Vec<Strategy>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Genre counts per split.
    Stats {
        /// Splits as name=path.
        #[arg(required = true)]
        splits: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            labels: self.labels.clone(),
            vocab: self.vocab.clone(),
            use_genre: if self.genre {
                Some(true)
            } else if self.no_genre {
                Some(false)
            } else {
                None
            },
            strategy: self.strategy,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            cap_per_span: self.cap_per_span.then_some(true),
        }
    }

    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, &self.labels) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(labels)) => RunConfig::with_labels(labels),
            (None, None) => return Err(CliError::Config("either --config or --labels is required".into())),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }

    fn labels_path(&self) -> Result<PathBuf, CliError> {
        Ok(self.run_config()?.labels)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Repair {
            input,
            output,
            report,
            ledger,
            strict,
            common,
        } => {
            let cfg = common.run_config()?;
            let ledger = ledger.or(cfg.ledger);
            let (summary, _) = cli::cmd_repair(&cfg.labels, &input, ledger.as_deref(), &output, &report, strict)?;
            outln!(
                "{} snippets in, {} retained, {} repair actions, {} unrepairable",
                summary.input,
                summary.retained,
                summary.actions,
                summary.unrepairable.len()
            );
        }
        Command::Train {
            inputs,
            model,
            log,
            common,
        } => {
            let cfg = common.run_config()?;
            let s = cli::cmd_train(&cfg, &inputs, &model, log.as_deref())?;
            outln!(
                "trained on {} snippets ({} units); {} parameters; final loss {:.6}",
                s.snippets,
                s.units,
                s.parameter_count,
                s.losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Predict {
            input,
            model,
            output,
            common,
        } => {
            let cfg = common.run_config()?;
            let n = cli::cmd_predict(&cfg, &model, &input, &output)?;
            outln!("wrote {n} predicted spans to {}", output.display());
        }
        Command::Score { gold, pred, json, common } => {
            let cfg = common.run_config()?;
            let options = ScoreOptions {
                cap_per_span: cfg.cap_per_span,
            };
            let report = cli::cmd_score(&cfg.labels, &gold, &pred, options, json.as_deref())?;
            out!("{report}");
        }
        Command::Tune {
            inputs,
            grid,
            folds,
            json,
            common,
        } => {
            let cfg = common.run_config()?;
            let report = cli::cmd_tune(&cfg, &grid, folds, &inputs, json.as_deref())?;
            out!("{}", report.render());
        }
        Command::Ablate {
            train,
            eval,
            only,
            json,
            common,
        } => {
            let cfg = common.run_config()?;
            let strategies = if only.is_empty() { Strategy::ALL.to_vec() } else { only };
            let outcome = cli::cmd_ablate(&cfg, &train, &eval, &strategies, &[true, false])?;
            out!("{}", outcome.render());
            if let Some(path) = json {
                cli::write_output(&path, outcome.to_json().as_bytes())?;
            }
        }
        Command::Stats { splits, common } => {
            let labels = common.labels_path()?;
            let splits = splits
                .iter()
                .map(|s| match s.split_once('=') {
                    Some((name, path)) => Ok((name.to_string(), PathBuf::from(path))),
                    None => {
                        let p = Path::new(s);
                        let name = p.file_stem().map_or(s.clone(), |n| n.to_string_lossy().into_owned());
                        Ok((name, p.to_path_buf()))
                    }
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            out!("{}", cli::cmd_stats(&labels, &splits)?.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let opts = match Opts::try_parse() {
        Ok(o) => o,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(opts.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spantag: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
