use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::eval::evaluate;
use crate::checkpoint;
use crate::corpus::{build_vocabs, read_conllu, Corpus};
use crate::encoder::{load_pretrained, Pretrained};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::morph::{attach_analyses, LexiconAnalyzer};
use crate::numcore::{ParamStore, Tape};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Learning rate of the epoch's first batch.
    pub lr: f64,
    /// Mean per-sentence training loss.
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub best: bool,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:>3}  lr {:.6}  loss {:.6}  dev {:.2}{}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.dev_accuracy,
            if self.best { "  *" } else { "" }
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub pretrained_covered: usize,
}

impl TrainOutcome {
    pub fn log_text(&self) -> String {
        self.log.iter().map(|l| format!("{l}\n")).collect()
    }
}

fn require_candidates(corpus: &Corpus, what: &str) -> Result<()> {
    match corpus.tokens().find(|t| t.candidates.is_none()) {
        Some(t) => Err(Error::Data(format!(
            "{what} token '{}' has no analyser candidates; attach them or pass a lexicon",
            t.surface
        ))),
        None => Ok(()),
    }
}

/// Trains on in-memory corpora. `on_best` runs whenever dev accuracy
/// strictly improves.
pub fn train_model(
    cfg: &TrainConfig,
    train: &Corpus,
    dev: &Corpus,
    pretrained: Option<&Pretrained>,
    mut on_best: impl FnMut(&Model) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || dev.token_count() == 0 {
        return Err(Error::Data("training and dev corpora must be non-empty".into()));
    }
    if cfg.kind.uses_candidates() {
        require_candidates(train, "training")?;
        require_candidates(dev, "dev")?;
    }
    let vocabs = build_vocabs(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut model, covered) = Model::build(cfg.kind, cfg.dims, vocabs, pretrained, &mut rng)?;
    log::info!(
        "{}: {} parameters, {} of {} words pretrained",
        cfg.kind,
        model.store.parameter_count(),
        covered,
        model.vocabs.word.len()
    );

    let mut order: Vec<usize> = (0..train.sentences.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut batches_done = 0usize;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr_first = cfg.lr_at(batches_done);
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            for &i in chunk {
                let grads = {
                    let mut tape = Tape::new(&model.store);
                    let loss = model.loss(&mut tape, &train.sentences[i], Some(&mut rng))?;
                    let Some(root) = loss.value else { continue };
                    let v = tape.scalar(root);
                    if !v.is_finite() {
                        return Err(Error::NanLoss { batch: batches_done });
                    }
                    loss_sum += v;
                    loss_n += 1;
                    tape.backward(root)
                };
                model.store.accumulate(&grads);
            }
            if model.store.has_grads() {
                model.store.sgd_step(cfg.lr_at(batches_done))?;
            }
            batches_done += 1;
        }
        let predicted = model.predict_corpus(dev)?;
        let acc = evaluate(dev, &predicted)?.full_tag_accuracy;
        let improved = best.as_ref().is_none_or(|(_, b, _)| acc > *b);
        if improved {
            best = Some((epoch, acc, model.store.clone()));
            on_best(&model)?;
        }
        let entry = EpochLog {
            epoch,
            lr: lr_first,
            train_loss: if loss_n > 0 { loss_sum / loss_n as f64 } else { 0.0 },
            dev_accuracy: acc,
            best: improved,
        };
        log::info!("{entry}");
        log.push(entry);
        let (best_epoch, best_acc, _) = best.as_ref().expect("set on first epoch");
        if cfg.target_dev_accuracy.is_some_and(|t| *best_acc >= t) || epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_dev_accuracy, store) = best.ok_or_else(|| Error::Usage("max epochs must be at least 1".into()))?;
    model.store = store;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_dev_accuracy,
        pretrained_covered: covered,
    })
}

fn check_writable(path: &Path) -> Result<()> {
    let probe = path.with_extension("probe");
    fs::File::create(&probe)
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| Error::Data(format!("checkpoint path {} is not writable: {e}", path.display())))
}

/// Loads a corpus and, when a lexicon is given, replaces its candidates.
pub fn load_corpus(path: &Path, lexicon: Option<&LexiconAnalyzer>) -> Result<Corpus> {
    let c = read_conllu(path)?;
    Ok(match lexicon {
        Some(lex) => attach_analyses(&c, lex),
        None => c,
    })
}

/// File-based training: reads the corpora named in `cfg`, writes the best
/// checkpoint and a `.log` file beside it.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let need = |p: &Option<std::path::PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Error::Usage(format!("missing {what} path")))
    };
    let ckpt = need(&cfg.checkpoint_path, "checkpoint")?;
    let train_path = need(&cfg.train_path, "training corpus")?;
    let dev_path = need(&cfg.dev_path, "dev corpus")?;
    check_writable(&ckpt)?;
    let lexicon = cfg
        .lexicon_path
        .as_ref()
        .map(|p| LexiconAnalyzer::load(p, true))
        .transpose()?;
    let train_corpus = load_corpus(&train_path, lexicon.as_ref())?;
    let dev_corpus = load_corpus(&dev_path, lexicon.as_ref())?;
    let pretrained = cfg.embeddings_path.as_ref().map(load_pretrained).transpose()?;
    let outcome = train_model(cfg, &train_corpus, &dev_corpus, pretrained.as_ref(), |m| checkpoint::save(m, &ckpt))?;
    fs::write(ckpt.with_extension("log"), outcome.log_text())?;
    Ok(outcome)
}
