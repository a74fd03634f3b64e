use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use morphtag::corpus::{corpus_stats, read_conllu, write_conllu};
use morphtag::model::{gradcheck_kind, ModelKind};
use morphtag::morph::{ambiguity_stats, attach_analyses, oracle_upper_bound, resolve_first, resolve_random, LexiconAnalyzer};
use morphtag::pipeline::{self, compare_reports, evaluate, format_comparison, parse_config_text, TrainConfig};
use morphtag::{Error, Result};

#[derive(Parser)]
#[command(name = "morphtag", version, about = "Neural morphological tagger with analyser-candidate features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sentence, token, type and tag counts of a corpus.
    Stats { corpus: PathBuf },
    /// Attach lexicon candidates, or report analyser ambiguity and baselines.
    Analyze {
        corpus: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        report: bool,
        #[arg(long, value_name = "OUT")]
        attach: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Match surfaces case-sensitively.
        #[arg(long)]
        case_sensitive: bool,
    },
    /// Train a tagger, keeping the checkpoint with the best dev accuracy.
    Train(TrainArgs),
    /// Tag a CoNLL-U file with a trained model.
    Tag {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail unless the checkpoint holds this kind.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Score predictions against gold, optionally against a baseline.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Finite-difference gradient check of a tiny random model.
    Gradcheck {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Flat key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    dev: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    lexicon: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

impl TrainArgs {
    fn settings(&self) -> Result<Vec<(String, String)>> {
        let mut s = match &self.config {
            Some(p) => parse_config_text(&fs::read_to_string(p)?)?,
            None => Vec::new(),
        };
        let flags = [
            ("model", self.model.clone()),
            ("train", self.train.clone()),
            ("dev", self.dev.clone()),
            ("embeddings", self.embeddings.clone()),
            ("lexicon", self.lexicon.clone()),
            ("out", self.out.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("max-epochs", self.max_epochs.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
        ];
        s.extend(flags.into_iter().filter_map(|(k, v)| Some((k.to_owned(), v?))));
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats { corpus } => {
            let c = read_conllu(&corpus)?;
            let s = corpus_stats(&c);
            println!("sentences\t{}\ntokens\t{}\ntypes\t{}\ntags\t{}", s.sentences, s.tokens, s.types, s.tags);
        }
        Command::Analyze {
            corpus,
            lexicon,
            report,
            attach,
            seed,
            trials,
            case_sensitive,
        } => {
            let lex = LexiconAnalyzer::load(&lexicon, !case_sensitive)?;
            let c = attach_analyses(&read_conllu(&corpus)?, &lex);
            if let Some(out) = &attach {
                fs::write(out, write_conllu(&c))?;
            }
            if report || attach.is_none() {
                println!("{}", ambiguity_stats(&c)?);
                println!("resolve first (%):         {:.2}", resolve_first(&c)?);
                println!("resolve random (%):        {:.2}", resolve_random(&c, seed, trials)?);
                println!("oracle (%):                {:.2}", oracle_upper_bound(&c)?);
            }
        }
        Command::Train(args) => {
            let cfg = TrainConfig::from_settings(&args.settings()?)?;
            eprintln!("{cfg}");
            let out = pipeline::train(&cfg)?;
            print!("{}", out.log_text());
            println!("best dev accuracy {:.2} at epoch {}", out.best_dev_accuracy, out.best_epoch);
        }
        Command::Tag {
            ckpt,
            input,
            out,
            model,
            lexicon,
        } => {
            let expected = model.map(|m| m.parse::<ModelKind>()).transpose()?;
            let lex = lexicon.map(|p| LexiconAnalyzer::load(p, true)).transpose()?;
            let tagged = pipeline::tag_file(&ckpt, &input, &out, expected, lex.as_ref())?;
            eprintln!("tagged {} tokens", tagged.token_count());
        }
        Command::Eval { gold, pred, baseline } => {
            let g = read_conllu(&gold)?;
            let report = evaluate(&g, &read_conllu(&pred)?)?;
            match baseline {
                None => println!("{report}"),
                Some(b) => {
                    let base = evaluate(&g, &read_conllu(&b)?)?;
                    println!("tokens\t{}", report.token_count);
                    println!("accuracy\t{:.2}\t{:.2}", base.full_tag_accuracy, report.full_tag_accuracy);
                    print!("{}", format_comparison(&compare_reports(&base, &report)));
                }
            }
        }
        Command::Gradcheck { model, eps, seed } => {
            let kind: ModelKind = model.parse()?;
            if eps.is_nan() || eps <= 0.0 {
                return Err(Error::Usage(format!("eps must be positive, got {eps}")));
            }
            let r = gradcheck_kind(kind, eps, seed)?;
            let (name, idx) = r.worst.clone().unwrap_or_default();
            println!(
                "{kind}: max relative error {:.3e} over {} coordinates (worst {name}[{idx}])",
                r.max_rel_error, r.coordinates
            );
            if r.max_rel_error > 1e-4 {
                return Err(Error::GradCheck {
                    param: format!("{name}[{idx}]"),
                    error: r.max_rel_error,
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
