//! Word representations and the sentence-level bidirectional LSTM.
//!
//! Each token is represented by the concatenation of a word embedding and a
//! character-composed vector (final states of a character biLSTM). Optional
//! per-token extra inputs are appended before input dropout; the sentence
//! biLSTM then yields one contextual vector per token.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocab, VocabSet, UNK};
use crate::error::{Error, Result};
use crate::numcore::{xavier_fill, LstmParams, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub word_dim: usize,
    /// Width of the character-composed vector; the character embedding and
    /// each direction of the character LSTM get half of it.
    pub char_dim: usize,
    /// Sentence LSTM width per direction.
    pub hidden_dim: usize,
    pub dropout: f64,
    pub unk_substitution_prob: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 300,
            char_dim: 150,
            hidden_dim: 400,
            dropout: 0.5,
            unk_substitution_prob: 0.5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 || self.hidden_dim == 0 || self.char_dim < 2 || !self.char_dim.is_multiple_of(2) {
            return Err(Error::Usage(format!(
                "encoder dims must be positive and the char dim even: {self:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.unk_substitution_prob) {
            return Err(Error::Usage(format!(
                "UNK substitution probability {} outside [0, 1]",
                self.unk_substitution_prob
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Usage(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn char_half(&self) -> usize {
        self.char_dim / 2
    }

    /// Width of `concat(word, char)`.
    pub fn word_repr_dim(&self) -> usize {
        self.word_dim + self.char_dim
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

/// Pretrained word vectors. Queries are lowercased before lookup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pretrained {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl Pretrained {
    pub fn new(dim: usize) -> Self {
        Pretrained {
            dim,
            vectors: HashMap::new(),
        }
    }

    /// Parses the text format: a `<count> <dim>` header, then one
    /// `token v1 .. v_dim` line per entry. Duplicate tokens keep their first
    /// vector.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing '<count> <dim>' header"))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(1, format!("bad header '{header}'")));
        if nums.len() != 2 {
            return Err(Error::parse(1, format!("bad header '{header}'")));
        }
        let (count, dim) = (parse_usize(nums[0])?, parse_usize(nums[1])?);
        let mut out = Pretrained::new(dim);
        let mut seen = 0;
        for (i, line) in lines {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line");
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad number '{f}'"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    line_no,
                    format!("'{token}' has {} values, header says {dim}", values.len()),
                ));
            }
            seen += 1;
            if out.vectors.contains_key(token) {
                log::warn!("line {line_no}: duplicate vector for '{token}' ignored");
                continue;
            }
            out.vectors.insert(token.to_owned(), values);
        }
        if seen != count {
            return Err(Error::Data(format!("header announces {count} vectors, file has {seen}")));
        }
        Ok(out)
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!("vector of length {} for dim {}", vector.len(), self.dim)));
        }
        self.vectors.entry(token.to_owned()).or_insert(vector);
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&[f64]> {
        self.vectors.get(&query.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn load_pretrained(path: impl AsRef<Path>) -> Result<Pretrained> {
    Pretrained::parse(&fs::read_to_string(path)?)
}

/// A `|vocab| × dim` table: pretrained rows where available, Xavier-uniform
/// rows otherwise. Returns the table and the number of pretrained rows.
pub fn init_word_embeddings<R: Rng>(
    vocab: &Vocab,
    dim: usize,
    pretrained: Option<&Pretrained>,
    rng: &mut R,
) -> Result<(Tensor, usize)> {
    let mut t = Tensor::zeros(vec![vocab.len(), dim]);
    xavier_fill(&mut t.data, vocab.len(), dim, rng);
    let mut covered = 0;
    if let Some(p) = pretrained {
        if p.dim != dim {
            return Err(Error::Dimension(format!("pretrained vectors have dim {}, model uses {dim}", p.dim)));
        }
        for (i, word) in vocab.items().iter().enumerate().skip(vocab.reserved()) {
            if let Some(v) = p.get(word) {
                t.row_mut(i).copy_from_slice(v);
                covered += 1;
            }
        }
    }
    Ok((t, covered))
}

/// Word index for `surface`. Out-of-vocabulary words map to `UNK`; during
/// training (`rng` present) a word seen once in training is also replaced by
/// `UNK` with probability `unk_prob`.
pub fn lookup_word<R: Rng>(surface: &str, vocab: &Vocab, unk_prob: f64, rng: Option<&mut R>) -> usize {
    let unk = vocab.get(UNK).expect("word vocab reserves UNK");
    match vocab.get(surface) {
        None => unk,
        Some(i) => match rng {
            Some(rng) if vocab.count(i) == 1 => {
                if rng.gen::<f64>() < unk_prob {
                    unk
                } else {
                    i
                }
            }
            _ => i,
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub word_emb: ParamId,
    pub char_emb: ParamId,
    pub char_fwd: LstmParams,
    pub char_bwd: LstmParams,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// Width of the extra per-token input appended to the word vector.
    pub extra_dim: usize,
}

impl Encoder {
    /// Registers all encoder parameters under the `enc.` prefix.
    /// Returns the encoder and the pretrained coverage count.
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        config: EncoderConfig,
        vocabs: &VocabSet,
        extra_dim: usize,
        pretrained: Option<&Pretrained>,
        rng: &mut R,
    ) -> Result<(Self, usize)> {
        config.validate()?;
        let (words, covered) = init_word_embeddings(&vocabs.word, config.word_dim, pretrained, rng)?;
        let word_emb = store.add("enc.word_emb", words)?;
        let half = config.char_half();
        let mut chars = Tensor::zeros(vec![vocabs.char.len(), half]);
        xavier_fill(&mut chars.data, vocabs.char.len(), half, rng);
        let char_emb = store.add("enc.char_emb", chars)?;
        let char_fwd = LstmParams::register(store, "enc.char_fwd", half, half, rng)?;
        let char_bwd = LstmParams::register(store, "enc.char_bwd", half, half, rng)?;
        let input = config.word_repr_dim() + extra_dim;
        let fwd = LstmParams::register(store, "enc.fwd", input, config.hidden_dim, rng)?;
        let bwd = LstmParams::register(store, "enc.bwd", input, config.hidden_dim, rng)?;
        Ok((
            Encoder {
                config,
                word_emb,
                char_emb,
                char_fwd,
                char_bwd,
                fwd,
                bwd,
                extra_dim,
            },
            covered,
        ))
    }

    /// Character-composed vector: `concat(last forward state, last backward
    /// state)` of the character biLSTM. Unseen characters use the `UNK` row.
    pub fn char_compose(&self, tape: &mut Tape<'_>, chars: &Vocab, surface: &str) -> Result<Var> {
        if surface.is_empty() {
            return Err(Error::Data("cannot compose an empty word".into()));
        }
        let unk = chars.get(UNK).expect("char vocab reserves UNK");
        let mut buf = [0u8; 4];
        let embs: Vec<Var> = surface
            .chars()
            .map(|ch| {
                let idx = chars.get(ch.encode_utf8(&mut buf)).unwrap_or(unk);
                tape.row(self.char_emb, idx)
            })
            .collect();
        let f = *self.char_fwd.run(tape, &embs)?.last().expect("non-empty");
        let rev: Vec<Var> = embs.iter().rev().copied().collect();
        let b = *self.char_bwd.run(tape, &rev)?.last().expect("non-empty");
        Ok(tape.concat(&[f, b]))
    }

    /// `w̄ = concat(word embedding, char vector)` for one token.
    pub fn word_repr(
        &self,
        tape: &mut Tape<'_>,
        vocabs: &VocabSet,
        surface: &str,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let idx = lookup_word(surface, &vocabs.word, self.config.unk_substitution_prob, rng);
        let w = tape.row(self.word_emb, idx);
        let c = self.char_compose(tape, &vocabs.char, surface)?;
        Ok(tape.concat(&[w, c]))
    }

    /// Contextual vectors `h_i = concat(forward_i, backward_i)`.
    ///
    /// `extra` holds one vector per token (or nothing) appended to `w̄`.
    /// With a generator, singleton substitution and dropout on the input and
    /// on every `h_i` are active.
    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        vocabs: &VocabSet,
        surfaces: &[&str],
        extra: &[Var],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<Var>> {
        if surfaces.is_empty() {
            return Err(Error::Data("cannot encode an empty sentence".into()));
        }
        if !extra.is_empty() && extra.len() != surfaces.len() {
            return Err(Error::Dimension(format!(
                "{} extra inputs for {} tokens",
                extra.len(),
                surfaces.len()
            )));
        }
        let p = self.config.dropout;
        let mut inputs = Vec::with_capacity(surfaces.len());
        for (i, s) in surfaces.iter().enumerate() {
            let mut x = self.word_repr(tape, vocabs, s, rng.as_deref_mut())?;
            if let Some(e) = extra.get(i) {
                x = tape.concat(&[x, *e]);
            }
            if tape.dim(x) != self.fwd.input_dim {
                return Err(Error::Dimension(format!(
                    "encoder input has {} dims, expected {}",
                    tape.dim(x),
                    self.fwd.input_dim
                )));
            }
            inputs.push(tape.dropout(x, p, rng.as_deref_mut()));
        }
        let fwd = self.fwd.run(tape, &inputs)?;
        let rev: Vec<Var> = inputs.iter().rev().copied().collect();
        let mut bwd = self.bwd.run(tape, &rev)?;
        bwd.reverse();
        let mut out = Vec::with_capacity(inputs.len());
        for (f, b) in fwd.into_iter().zip(bwd) {
            let h = tape.concat(&[f, b]);
            out.push(tape.dropout(h, p, rng.as_deref_mut()));
        }
        Ok(out)
    }
}
