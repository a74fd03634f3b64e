//! Annotated corpora: labels, tokens, sentences, CoNLL-U I/O, splitting,
//! summary statistics and vocabularies.

mod conllu;
mod label;
mod vocab;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::morph::AnalysisSet;

pub use conllu::{parse_conllu, read_conllu, write_conllu, ConlluFields};
pub use label::{category_cmp, decompose_tag, MorphLabel, POS};
pub use vocab::{build_vocabs, Vocab, VocabSet, BOS, EOS, PAD, UNK};

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub surface: String,
    pub gold: MorphLabel,
    pub candidates: Option<AnalysisSet>,
    /// Columns carried through unchanged when the token came from CoNLL-U.
    pub conllu: ConlluFields,
}

impl Token {
    pub fn new(surface: impl Into<String>, gold: MorphLabel) -> Self {
        Token {
            surface: surface.into(),
            gold,
            candidates: None,
            conllu: ConlluFields::default(),
        }
    }

    pub fn with_candidates(mut self, candidates: AnalysisSet) -> Self {
        self.candidates = Some(candidates);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    /// Comment lines without the leading `#`.
    pub comments: Vec<String>,
    /// Multiword-token and empty-node lines, keyed by the number of regular
    /// tokens that precede them.
    pub extra_lines: Vec<(usize, String)>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::Data(format!("sentence '{id}' has no tokens")));
        }
        Ok(Sentence {
            id,
            tokens,
            comments: Vec::new(),
            extra_lines: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Corpus {
            name: name.into(),
            sentences,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub types: usize,
    pub tags: usize,
}

/// Token, type (case-sensitive surface) and distinct full-tag counts.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let types: HashSet<&str> = corpus.tokens().map(|t| t.surface.as_str()).collect();
    let tags: HashSet<&MorphLabel> = corpus.tokens().map(|t| &t.gold).collect();
    CorpusStats {
        sentences: corpus.sentences.len(),
        tokens: corpus.token_count(),
        types: types.len(),
        tags: tags.len(),
    }
}

/// Shuffles sentences with a seeded generator and cuts them into three parts
/// of sizes `floor(n*r1)`, `floor(n*r2)` and the remainder.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let (r1, r2, r3) = ratios;
    if [r1, r2, r3].iter().any(|r| !(0.0..=1.0).contains(r)) || (r1 + r2 + r3 - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!(
            "split ratios must be in [0,1] and sum to 1, got ({r1}, {r2}, {r3})"
        )));
    }
    let n = corpus.sentences.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // The epsilon keeps products like 10 * 0.7 from flooring one short.
    let n1 = ((n as f64) * r1 + 1e-9).floor() as usize;
    let n2 = (((n as f64) * r2 + 1e-9).floor() as usize).min(n - n1);

    let take = |idx: &[usize], suffix: &str| {
        Corpus::new(
            format!("{}-{suffix}", corpus.name),
            idx.iter().map(|&i| corpus.sentences[i].clone()).collect(),
        )
    };
    Ok((
        take(&order[..n1], "train"),
        take(&order[n1..n1 + n2], "dev"),
        take(&order[n1 + n2..], "test"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(n: usize) -> Corpus {
        let sentences = (0..n)
            .map(|i| {
                let tok = Token::new(format!("w{i}"), decompose_tag("POS=X").unwrap());
                Sentence::new(format!("s{i}"), vec![tok]).unwrap()
            })
            .collect();
        Corpus::new("c", sentences)
    }

    fn sizes(parts: &(Corpus, Corpus, Corpus)) -> (usize, usize, usize) {
        (
            parts.0.sentences.len(),
            parts.1.sentences.len(),
            parts.2.sentences.len(),
        )
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let c = corpus_of(10);
        assert_eq!(sizes(&split_corpus(&c, (0.8, 0.1, 0.1), 7).unwrap()), (8, 1, 1));
        let c = corpus_of(7);
        assert_eq!(sizes(&split_corpus(&c, (0.8, 0.1, 0.1), 7).unwrap()), (5, 0, 2));
    }

    #[test]
    fn split_is_deterministic() {
        let c = corpus_of(25);
        let a = split_corpus(&c, (0.8, 0.1, 0.1), 3).unwrap();
        let b = split_corpus(&c, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_empty_and_bad_ratios() {
        let parts = split_corpus(&Corpus::default(), (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!(sizes(&parts), (0, 0, 0));
        assert!(split_corpus(&corpus_of(3), (0.5, 0.1, 0.1), 1).is_err());
    }

    #[test]
    fn empty_corpus_stats() {
        let s = corpus_stats(&Corpus::default());
        assert_eq!((s.tokens, s.types, s.tags), (0, 0, 0));
    }

    #[test]
    fn sentence_requires_tokens() {
        assert!(Sentence::new("x", vec![]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn split_preserves_multiset(n in 0usize..40, seed in 0u64..1000) {
            let c = corpus_of(n);
            let (a, b, d) = split_corpus(&c, (0.8, 0.1, 0.1), seed).unwrap();
            let mut ids: Vec<String> = a.sentences.iter()
                .chain(&b.sentences)
                .chain(&d.sentences)
                .map(|s| s.id.clone())
                .collect();
            ids.sort();
            let mut want: Vec<String> = c.sentences.iter().map(|s| s.id.clone()).collect();
            want.sort();
            proptest::prop_assert_eq!(ids, want);
        }
    }
}
