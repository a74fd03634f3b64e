use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Decoder, Dims, ModelKind};

/// Every knob of the training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Multiplicative decay, applied to Mc kinds only.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Layer widths; dropout lives in `dims.encoder.dropout`.
    pub dims: Dims,
    pub seed: u64,
    /// Stop as soon as dev accuracy reaches this percentage.
    pub target_dev_accuracy: Option<f64>,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(kind: ModelKind) -> Self {
        TrainConfig {
            kind,
            max_epochs: 400,
            patience: 50,
            batch_size: match kind.decoder {
                Decoder::Mc => 20,
                Decoder::Seq => 5,
            },
            lr_initial: 1.0,
            lr_decay: 0.98,
            lr_decay_every: 2500,
            dims: Dims::default(),
            seed: 0,
            target_dev_accuracy: None,
            train_path: None,
            dev_path: None,
            embeddings_path: None,
            lexicon_path: None,
            checkpoint_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Usage(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(Error::Usage(format!("learning rate must be positive, got {}", self.lr_initial)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_decay_every == 0 {
            return Err(Error::Usage("lr decay must be in (0, 1] with a positive interval".into()));
        }
        self.dims.validate()
    }

    /// Learning rate for the batch after `batches_done` completed ones.
    pub fn lr_at(&self, batches_done: usize) -> f64 {
        match self.kind.decoder {
            Decoder::Mc => crate::numcore::lr_schedule(self.lr_initial, self.lr_decay, self.lr_decay_every, batches_done),
            Decoder::Seq => self.lr_initial,
        }
    }

    /// Builds a configuration from `key=value` settings, later entries
    /// winning. `model` is required; everything else defaults from it.
    pub fn from_settings(settings: &[(String, String)]) -> Result<Self> {
        let norm = |k: &str| k.trim().replace('_', "-");
        let kind = settings
            .iter()
            .rev()
            .find(|(k, _)| norm(k) == "model")
            .ok_or_else(|| Error::Usage("no model kind given".into()))?
            .1
            .parse()?;
        let mut cfg = TrainConfig::new(kind);
        for (k, v) in settings {
            cfg.set(&norm(k), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Usage(format!("invalid value '{value}' for '{key}'")))
        }
        let e = &mut self.dims.encoder;
        match key {
            "model" => {
                let kind: ModelKind = value.parse()?;
                if kind.decoder != self.kind.decoder {
                    self.batch_size = TrainConfig::new(kind).batch_size;
                }
                self.kind = kind;
            }
            "train" => self.train_path = Some(value.into()),
            "dev" => self.dev_path = Some(value.into()),
            "embeddings" => self.embeddings_path = Some(value.into()),
            "lexicon" => self.lexicon_path = Some(value.into()),
            "out" | "checkpoint" => self.checkpoint_path = Some(value.into()),
            "seed" => self.seed = num(key, value)?,
            "max-epochs" => self.max_epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "batch" | "batch-size" => self.batch_size = num(key, value)?,
            "lr" => self.lr_initial = num(key, value)?,
            "lr-decay" => self.lr_decay = num(key, value)?,
            "lr-decay-every" => self.lr_decay_every = num(key, value)?,
            "target-dev-accuracy" => self.target_dev_accuracy = Some(num(key, value)?),
            "dropout" => e.dropout = num(key, value)?,
            "unk-prob" => e.unk_substitution_prob = num(key, value)?,
            "word-dim" => e.word_dim = num(key, value)?,
            "char-dim" => e.char_dim = num(key, value)?,
            "hidden-dim" => e.hidden_dim = num(key, value)?,
            "tag-emb" => self.dims.tag_emb = num(key, value)?,
            "cat-emb" => self.dims.cat_emb = num(key, value)?,
            "attn-emb" => self.dims.attn_emb = num(key, value)?,
            "seq-emb" => self.dims.seq_emb = num(key, value)?,
            "seq-hidden" => self.dims.seq_hidden = num(key, value)?,
            _ => return Err(Error::Usage(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.dims.encoder;
        write!(
            f,
            "model={} seed={} max-epochs={} patience={} batch={} lr={} dropout={} word-dim={} char-dim={} hidden-dim={}",
            self.kind, self.seed, self.max_epochs, self.patience, self.batch_size, self.lr_initial, e.dropout, e.word_dim, e.char_dim, e.hidden_dim
        )
    }
}

/// Parses flat `key = value` text. Blank lines and `#` comments are
/// skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::parse(i + 1, "empty key"));
        }
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_follow_decoder() {
        let mc = TrainConfig::new("mc+emb-cat".parse().unwrap());
        assert_eq!((mc.batch_size, mc.max_epochs, mc.patience), (20, 400, 50));
        assert_eq!(mc.lr_initial, 1.0);
        let seq = TrainConfig::new("seq".parse().unwrap());
        assert_eq!(seq.batch_size, 5);
        assert_eq!(seq.dims.encoder.dropout, 0.5);
    }

    #[test]
    fn lr_decays_for_mc_only() {
        let mc = TrainConfig::new("mc".parse().unwrap());
        assert_eq!(mc.lr_at(2499), 1.0);
        assert!((mc.lr_at(2500) - 0.98).abs() < 1e-15);
        assert!((mc.lr_at(7600) - 0.98f64.powi(3)).abs() < 1e-15);
        let seq = TrainConfig::new("seq+atn-tag".parse().unwrap());
        assert_eq!(seq.lr_at(100_000), 1.0);
    }

    #[test]
    fn later_settings_win() {
        let text = "# comment\nmodel = seq\nlr=0.5  # inline\n\nmax_epochs=10\npatience=3\n";
        let mut s = parse_config_text(text).unwrap();
        s.extend(pairs(&[("lr", "0.1"), ("batch", "7")]));
        let cfg = TrainConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.kind.to_string(), "seq");
        assert_eq!((cfg.lr_initial, cfg.max_epochs, cfg.patience, cfg.batch_size), (0.1, 10, 3, 7));
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        assert!(matches!(TrainConfig::from_settings(&pairs(&[("lr", "1")])), Err(Error::Usage(_))));
        let bad = pairs(&[("model", "mc"), ("patience", "500")]);
        assert!(matches!(TrainConfig::from_settings(&bad), Err(Error::Usage(_))));
        let bad = pairs(&[("model", "mc"), ("batch", "0")]);
        assert!(matches!(TrainConfig::from_settings(&bad), Err(Error::Usage(_))));
        let bad = pairs(&[("model", "mc"), ("colour", "red")]);
        assert!(matches!(TrainConfig::from_settings(&bad), Err(Error::Usage(_))));
        assert!(matches!(parse_config_text("a=1\nnonsense\n"), Err(Error::Parse { line: 2, .. })));
    }
}
