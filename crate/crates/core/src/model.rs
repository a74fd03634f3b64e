//! Full tagger configurations: an encoder, an optional way of injecting
//! analyser candidates, and one of the two output heads.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    analysis_embedding_cat, analysis_embedding_tag, attend, attention_keys, AttentionParams, EmbeddingTable,
};
use crate::corpus::{Corpus, MorphLabel, Sentence, VocabSet};
use crate::decoders::{default_max_len, mc_loss, mc_predict, seq_decode_greedy, seq_loss, Loss, McHead, SeqHead};
use crate::encoder::{Encoder, EncoderConfig, Pretrained};
use crate::error::{Error, Result};
use crate::numcore::{grad_check, GradReport, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decoder {
    Mc,
    Seq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Augmentation {
    Plain,
    EmbTag,
    EmbCat,
    AtnTag,
    AtnCat,
}

impl Augmentation {
    pub const ALL: [Augmentation; 5] = [
        Augmentation::Plain,
        Augmentation::EmbTag,
        Augmentation::EmbCat,
        Augmentation::AtnTag,
        Augmentation::AtnCat,
    ];

    pub fn uses_candidates(self) -> bool {
        self != Augmentation::Plain
    }

    fn is_attention(self) -> bool {
        matches!(self, Augmentation::AtnTag | Augmentation::AtnCat)
    }

    fn by_category(self) -> bool {
        matches!(self, Augmentation::EmbCat | Augmentation::AtnCat)
    }
}

/// One of the ten tagger configurations, written `mc`, `seq+emb-cat`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelKind {
    pub decoder: Decoder,
    pub augmentation: Augmentation,
}

impl ModelKind {
    pub fn new(decoder: Decoder, augmentation: Augmentation) -> Self {
        ModelKind { decoder, augmentation }
    }

    pub fn all() -> Vec<ModelKind> {
        [Decoder::Mc, Decoder::Seq]
            .into_iter()
            .flat_map(|d| Augmentation::ALL.into_iter().map(move |a| ModelKind::new(d, a)))
            .collect()
    }

    pub fn uses_candidates(&self) -> bool {
        self.augmentation.uses_candidates()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.decoder {
            Decoder::Mc => "mc",
            Decoder::Seq => "seq",
        };
        let a = match self.augmentation {
            Augmentation::Plain => "",
            Augmentation::EmbTag => "+emb-tag",
            Augmentation::EmbCat => "+emb-cat",
            Augmentation::AtnTag => "+atn-tag",
            Augmentation::AtnCat => "+atn-cat",
        };
        write!(f, "{d}{a}")
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ModelKind::all()
            .into_iter()
            .find(|k| k.to_string() == lower)
            .ok_or_else(|| {
                let names: Vec<String> = ModelKind::all().iter().map(ToString::to_string).collect();
                Error::Usage(format!("unknown model kind '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Layer widths and regularisation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub encoder: EncoderConfig,
    /// Full-tag embeddings in the analysis-embedding mode.
    pub tag_emb: usize,
    /// Category-value embeddings in the analysis-embedding mode.
    pub cat_emb: usize,
    /// Key embeddings (tag or category-value) in the attention modes.
    pub attn_emb: usize,
    /// Previous-symbol embeddings of the Seq decoder.
    pub seq_emb: usize,
    pub seq_hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            encoder: EncoderConfig::default(),
            tag_emb: 50,
            cat_emb: 10,
            attn_emb: 50,
            seq_emb: 50,
            seq_hidden: 400,
        }
    }
}

impl Dims {
    /// Small widths for gradient checks and tests.
    pub fn tiny() -> Self {
        Dims {
            encoder: EncoderConfig {
                word_dim: 8,
                char_dim: 4,
                hidden_dim: 8,
                ..EncoderConfig::default()
            },
            tag_emb: 6,
            cat_emb: 6,
            attn_emb: 6,
            seq_emb: 6,
            seq_hidden: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if [self.tag_emb, self.cat_emb, self.attn_emb, self.seq_emb, self.seq_hidden].contains(&0) {
            return Err(Error::Usage(format!("all dims must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Mc(McHead),
    Seq(SeqHead),
}

/// A tagger: configuration, vocabularies, parameters and handles into them.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub dims: Dims,
    pub vocabs: VocabSet,
    pub store: ParamStore,
    pub encoder: Encoder,
    /// Analysis-embedding table or attention key table.
    pub candidate_table: Option<EmbeddingTable>,
    pub attention: Option<AttentionParams>,
    pub head: Head,
}

/// Per-sentence intermediate results of the forward pass.
struct Forward {
    features: Vec<Var>,
    keys: Vec<Vec<Var>>,
}

impl Model {
    /// Registers and initialises every parameter. Matrices are
    /// Xavier-uniform, biases zero, word rows pretrained where available.
    /// Returns the model and the pretrained coverage count.
    pub fn build<R: Rng>(
        kind: ModelKind,
        dims: Dims,
        vocabs: VocabSet,
        pretrained: Option<&Pretrained>,
        rng: &mut R,
    ) -> Result<(Self, usize)> {
        dims.validate()?;
        let mut store = ParamStore::new();
        let aug = kind.augmentation;
        let (candidate_table, extra_dim) = match aug {
            Augmentation::Plain => (None, 0),
            Augmentation::EmbTag => {
                let t = EmbeddingTable::register(&mut store, "aug.tag_emb", vocabs.analysis_tag.len(), dims.tag_emb, rng)?;
                (Some(t), dims.tag_emb)
            }
            Augmentation::EmbCat => {
                let t = EmbeddingTable::register(&mut store, "aug.catval_emb", vocabs.analysis_catval.len(), dims.cat_emb, rng)?;
                (Some(t), dims.cat_emb * vocabs.category.len())
            }
            Augmentation::AtnTag => {
                let t = EmbeddingTable::register(&mut store, "aug.tag_emb", vocabs.analysis_tag.len(), dims.attn_emb, rng)?;
                (Some(t), 0)
            }
            Augmentation::AtnCat => {
                let t = EmbeddingTable::register(&mut store, "aug.catval_emb", vocabs.analysis_catval.len(), dims.attn_emb, rng)?;
                (Some(t), 0)
            }
        };
        let (encoder, covered) = Encoder::register(&mut store, dims.encoder, &vocabs, extra_dim, pretrained, rng)?;
        let h_dim = dims.encoder.output_dim();
        let query_dim = match kind.decoder {
            Decoder::Mc => h_dim,
            Decoder::Seq => dims.seq_hidden,
        };
        let attention = if aug.is_attention() {
            Some(AttentionParams::register(&mut store, "aug.att", query_dim, dims.attn_emb, rng)?)
        } else {
            None
        };
        let head = match kind.decoder {
            Decoder::Mc => Head::Mc(McHead::register(&mut store, "mc", h_dim, vocabs.tag.len(), rng)?),
            Decoder::Seq => Head::Seq(SeqHead::register(
                &mut store,
                "seq",
                &vocabs,
                dims.seq_emb,
                dims.seq_hidden,
                h_dim,
                rng,
            )?),
        };
        Ok((
            Model {
                kind,
                dims,
                vocabs,
                store,
                encoder,
                candidate_table,
                attention,
                head,
            },
            covered,
        ))
    }

    fn forward(&self, tape: &mut Tape<'_>, sentence: &Sentence, rng: Option<&mut ChaCha8Rng>) -> Result<Forward> {
        let aug = self.kind.augmentation;
        let cands: Vec<_> = sentence.tokens.iter().map(|t| t.candidates.as_ref()).collect();
        let extra: Vec<Var> = match (aug, &self.candidate_table) {
            (Augmentation::EmbTag, Some(t)) => cands.iter().map(|c| analysis_embedding_tag(tape, t, &self.vocabs, *c)).collect(),
            (Augmentation::EmbCat, Some(t)) => cands.iter().map(|c| analysis_embedding_cat(tape, t, &self.vocabs, *c)).collect(),
            _ => Vec::new(),
        };
        let surfaces: Vec<&str> = sentence.tokens.iter().map(|t| t.surface.as_str()).collect();
        let mut features = self.encoder.encode(tape, &self.vocabs, &surfaces, &extra, rng)?;
        let keys: Vec<Vec<Var>> = match (aug.is_attention(), &self.candidate_table) {
            (true, Some(t)) => cands
                .iter()
                .map(|c| attention_keys(tape, t, &self.vocabs, *c, aug.by_category()))
                .collect(),
            _ => vec![Vec::new(); sentence.len()],
        };
        if let (Head::Mc(_), Some(p)) = (&self.head, &self.attention) {
            for (h, k) in features.iter_mut().zip(&keys) {
                *h = attend(tape, *h, k, p)?;
            }
        }
        Ok(Forward { features, keys })
    }

    /// Training loss of one sentence. With a generator, dropout and
    /// singleton substitution are active.
    pub fn loss(&self, tape: &mut Tape<'_>, sentence: &Sentence, rng: Option<&mut ChaCha8Rng>) -> Result<Loss> {
        let fwd = self.forward(tape, sentence, rng)?;
        let gold: Vec<&MorphLabel> = sentence.tokens.iter().map(|t| &t.gold).collect();
        match &self.head {
            Head::Mc(h) => mc_loss(tape, h, &self.vocabs, &fwd.features, &gold),
            Head::Seq(h) => seq_loss(tape, h, &self.vocabs, &fwd.features, &gold, &fwd.keys, self.attention.as_ref()),
        }
    }

    /// Predicted labels for one sentence, and the number of Seq decodings
    /// cut off at the length bound.
    pub fn predict_sentence(&self, sentence: &Sentence) -> Result<(Vec<MorphLabel>, usize)> {
        let mut tape = Tape::new(&self.store);
        let fwd = self.forward(&mut tape, sentence, None)?;
        let mut out = Vec::with_capacity(sentence.len());
        let mut truncated = 0;
        for (i, x) in fwd.features.iter().enumerate() {
            match &self.head {
                Head::Mc(h) => out.push(mc_predict(&mut tape, h, &self.vocabs, *x)?),
                Head::Seq(h) => {
                    let att = self.attention.as_ref().map(|p| (p, fwd.keys[i].as_slice()));
                    let (label, cut) = seq_decode_greedy(&mut tape, h, &self.vocabs, *x, default_max_len(&self.vocabs), att)?;
                    truncated += usize::from(cut);
                    out.push(label);
                }
            }
        }
        Ok((out, truncated))
    }

    /// A copy of `corpus` whose gold labels are replaced by predictions.
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Corpus> {
        let mut out = corpus.clone();
        let mut truncated = 0;
        for s in &mut out.sentences {
            let (labels, cut) = self.predict_sentence(s)?;
            truncated += cut;
            for (t, l) in s.tokens.iter_mut().zip(labels) {
                t.gold = l;
            }
        }
        if truncated > 0 {
            log::info!("{truncated} decodings reached the length bound");
        }
        Ok(out)
    }
}

/// A random tiny instance of `kind` with a two-token sentence carrying
/// candidates. All parameters, biases included, are drawn from `U[-0.5, 0.5]`
/// so that no gradient is trivially zero.
pub fn tiny_instance(kind: ModelKind, seed: u64) -> Result<(Model, Sentence)> {
    use crate::corpus::{build_vocabs, decompose_tag, Token};
    use crate::morph::AnalysisSet;

    let label = |s: &str| decompose_tag(s).expect("valid tag");
    let cands = |tags: &[&str]| AnalysisSet::new(tags.iter().map(|t| label(t)).collect(), "tiny").expect("distinct");
    let tokens = vec![
        Token::new("koer", label("POS=Noun|Case=Nom|Number=Sing"))
            .with_candidates(cands(&["POS=Noun|Case=Nom|Number=Sing", "POS=Verb|Mood=Imp"])),
        Token::new("jooksis", label("POS=Verb|Mood=Ind")).with_candidates(cands(&["POS=Verb|Mood=Ind"])),
    ];
    let sentence = Sentence::new("tiny", tokens)?;
    let vocabs = build_vocabs(&Corpus::new("tiny", vec![sentence.clone()]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut model, _) = Model::build(kind, Dims::tiny(), vocabs, None, &mut rng)?;
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        for x in model.store.get_mut(id).data.iter_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
    Ok((model, sentence))
}

/// Finite-difference check of the full training loss of a tiny instance.
pub fn gradcheck_kind(kind: ModelKind, eps: f64, seed: u64) -> Result<GradReport> {
    let (mut model, sentence) = tiny_instance(kind, seed)?;
    let shell = Model {
        store: ParamStore::new(),
        ..model.clone()
    };
    grad_check(&mut model.store, eps, |tape| {
        shell
            .loss(tape, &sentence, None)?
            .value
            .ok_or_else(|| Error::Data("tiny sentence produced no loss terms".into()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        let all = ModelKind::all();
        assert_eq!(all.len(), 10);
        for k in &all {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), *k);
        }
        assert_eq!("MC+Emb-Cat".parse::<ModelKind>().unwrap().to_string(), "mc+emb-cat");
        assert!(matches!("mc+both".parse::<ModelKind>(), Err(Error::Usage(_))));
    }

    #[test]
    fn every_kind_builds_and_predicts() {
        for kind in ModelKind::all() {
            let (model, sentence) = tiny_instance(kind, 1).unwrap();
            let (labels, _) = model.predict_sentence(&sentence).unwrap();
            assert_eq!(labels.len(), 2);
            if kind.decoder == Decoder::Mc {
                for l in labels {
                    assert!(model.vocabs.tag.get(&l.full_tag()).is_some());
                }
            }
        }
    }

    #[test]
    fn prediction_is_deterministic() {
        let (model, sentence) = tiny_instance("seq+atn-cat".parse().unwrap(), 2).unwrap();
        assert_eq!(model.predict_sentence(&sentence).unwrap(), model.predict_sentence(&sentence).unwrap());
    }

    #[test]
    fn plain_and_seq_atn_cat_pass_gradcheck() {
        for k in ["mc", "seq+atn-cat"] {
            let r = gradcheck_kind(k.parse().unwrap(), 1e-5, 0).unwrap();
            assert!(r.max_rel_error < 1e-4, "{k}: {r:?}");
        }
    }

    #[test]
    fn parameter_names_reflect_kind() {
        let (m, _) = tiny_instance("mc+emb-cat".parse().unwrap(), 0).unwrap();
        let names: Vec<&str> = m.store.iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"aug.catval_emb") && names.contains(&"mc.w"));
        assert!(!names.iter().any(|n| n.starts_with("aug.att")));
        let cats = m.vocabs.category.len();
        assert_eq!(m.encoder.fwd.input_dim, 8 + 4 + 6 * cats);
    }
}
