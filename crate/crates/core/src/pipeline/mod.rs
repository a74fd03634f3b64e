//! Training, tagging and evaluation.

mod config;
mod eval;
pub mod synth;
mod train;

use std::fs;
use std::path::Path;

pub use config::{parse_config_text, TrainConfig};
pub use eval::{compare_reports, evaluate, format_comparison, format_diff, DiffRow, EvalReport};
pub use train::{load_corpus, train, train_model, EpochLog, TrainOutcome};

use crate::checkpoint;
use crate::corpus::{write_conllu, Corpus};
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::morph::LexiconAnalyzer;

/// Predicts labels for `corpus`, which must carry candidates when the model
/// uses them.
pub fn tag_corpus(model: &Model, corpus: &Corpus) -> Result<Corpus> {
    if model.kind.uses_candidates() {
        if let Some(t) = corpus.tokens().find(|t| t.candidates.is_none()) {
            return Err(Error::Data(format!(
                "{} needs analyser candidates but token '{}' has none",
                model.kind, t.surface
            )));
        }
    }
    model.predict_corpus(corpus)
}

/// Tags a CoNLL-U file with a saved model. `expected` guards against using
/// a checkpoint of a different architecture.
pub fn tag_file(
    ckpt: &Path,
    input: &Path,
    output: &Path,
    expected: Option<ModelKind>,
    lexicon: Option<&LexiconAnalyzer>,
) -> Result<Corpus> {
    let model = checkpoint::load(ckpt)?;
    if let Some(k) = expected.filter(|k| *k != model.kind) {
        return Err(Error::Usage(format!("checkpoint holds a {} model, not {k}", model.kind)));
    }
    let corpus = load_corpus(input, lexicon)?;
    let tagged = tag_corpus(&model, &corpus)?;
    fs::write(output, write_conllu(&tagged))?;
    Ok(tagged)
}
