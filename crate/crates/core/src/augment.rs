//! Injecting analyser candidates into the tagger.
//!
//! Analysis embeddings summarise a token's candidate set as a fixed-width
//! vector appended to the encoder input. Attention embeddings instead attend
//! from a query (an encoder output or a decoder state) over per-candidate
//! keys and fuse the resulting context into the query.
//!
//! Candidate indices are sorted before any summation, so every output is
//! bit-identical under permutation of the candidate list.

use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::{Vocab, VocabSet, UNK};
use crate::error::{Error, Result};
use crate::morph::AnalysisSet;
use crate::numcore::{xavier_fill, xavier_uniform, ParamId, ParamStore, Tape, Tensor, Var};

/// Embedding table registered as a `rows × dim` parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn register<R: Rng>(store: &mut ParamStore, name: &str, rows: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let mut t = Tensor::zeros(vec![rows, dim]);
        xavier_fill(&mut t.data, rows, dim, rng);
        Ok(EmbeddingTable {
            table: store.add(name, t)?,
            dim,
        })
    }
}

/// Full-tag embeddings `m`, indexed by the analysis-tag vocabulary.
pub type TagEmbeddingTable = EmbeddingTable;
/// Category-value embeddings `f`, indexed by the analysis-catval vocabulary.
pub type CatValEmbeddingTable = EmbeddingTable;

fn unk_index(vocab: &Vocab) -> usize {
    vocab.get(UNK).expect("analysis vocab reserves UNK")
}

/// Sorted analysis-tag indices of the candidates; unknown tags map to `UNK`.
pub fn candidate_tag_indices(candidates: Option<&AnalysisSet>, vocab: &Vocab) -> Vec<usize> {
    let unk = unk_index(vocab);
    let mut idx: Vec<usize> = candidates
        .map(|c| c.analyses.iter().map(|a| vocab.get(&a.full_tag()).unwrap_or(unk)).collect())
        .unwrap_or_default();
    idx.sort_unstable();
    idx
}

/// Distinct category-value indices pooled over all candidates, optionally
/// restricted to one category; unknown pairs map to `UNK`.
pub fn candidate_catval_indices(candidates: Option<&AnalysisSet>, vocabs: &VocabSet, category: Option<&str>) -> Vec<usize> {
    let vocab = &vocabs.analysis_catval;
    let unk = unk_index(vocab);
    let mut set = BTreeSet::new();
    for a in candidates.iter().flat_map(|c| c.analyses.iter()) {
        for (c, v) in a.pairs() {
            if category.is_none_or(|k| k == c) {
                set.insert(vocab.get(&format!("{c}={v}")).unwrap_or(unk));
            }
        }
    }
    set.into_iter().collect()
}

fn sum_rows(tape: &mut Tape<'_>, table: &EmbeddingTable, rows: &[usize]) -> Var {
    if rows.is_empty() {
        return tape.zeros(table.dim);
    }
    let vars: Vec<Var> = rows.iter().map(|&r| tape.row(table.table, r)).collect();
    tape.sum(&vars)
}

/// `Σ_j m_j` over the candidate tags; the zero vector for no candidates.
pub fn analysis_embedding_tag(
    tape: &mut Tape<'_>,
    table: &TagEmbeddingTable,
    vocabs: &VocabSet,
    candidates: Option<&AnalysisSet>,
) -> Var {
    let rows = candidate_tag_indices(candidates, &vocabs.analysis_tag);
    sum_rows(tape, table, &rows)
}

/// One block per category in canonical order, each the sum of the distinct
/// value embeddings of that category found among the candidates.
pub fn analysis_embedding_cat(
    tape: &mut Tape<'_>,
    table: &CatValEmbeddingTable,
    vocabs: &VocabSet,
    candidates: Option<&AnalysisSet>,
) -> Var {
    let blocks: Vec<Var> = vocabs
        .category
        .items()
        .iter()
        .map(|cat| {
            let rows = candidate_catval_indices(candidates, vocabs, Some(cat));
            sum_rows(tape, table, &rows)
        })
        .collect();
    tape.concat(&blocks)
}

pub fn augment_input(tape: &mut Tape<'_>, w_bar: Var, a_emb: Var) -> Var {
    tape.concat(&[w_bar, a_emb])
}

/// Bilinear scoring matrix `W_a` and the fusion layer `(W_f, b_f)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub w_a: ParamId,
    pub w_f: ParamId,
    pub b_f: ParamId,
    pub query_dim: usize,
    pub key_dim: usize,
}

impl AttentionParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        query_dim: usize,
        key_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_a = store.add(format!("{prefix}.w_a"), xavier_uniform(key_dim, query_dim, rng))?;
        let w_f = store.add(format!("{prefix}.w_f"), xavier_uniform(key_dim + query_dim, query_dim, rng))?;
        let b_f = store.add(format!("{prefix}.b_f"), Tensor::zeros(vec![query_dim]))?;
        Ok(AttentionParams {
            w_a,
            w_f,
            b_f,
            query_dim,
            key_dim,
        })
    }
}

/// Attention keys for one token: the candidates' tag embeddings, or the
/// distinct category-value embeddings pooled from all candidates.
pub fn attention_keys(
    tape: &mut Tape<'_>,
    table: &EmbeddingTable,
    vocabs: &VocabSet,
    candidates: Option<&AnalysisSet>,
    by_category: bool,
) -> Vec<Var> {
    let rows = if by_category {
        candidate_catval_indices(candidates, vocabs, None)
    } else {
        candidate_tag_indices(candidates, &vocabs.analysis_tag)
    };
    rows.into_iter().map(|r| tape.row(table.table, r)).collect()
}

/// Luong "general" attention: `score_j = queryᵀ W_a key_j`, softmax-normalised
/// weights and the weighted average `c` of the keys. With no keys, `c` is the
/// zero vector and there are no weights.
pub fn attention_context(
    tape: &mut Tape<'_>,
    query: Var,
    keys: &[Var],
    p: &AttentionParams,
) -> Result<(Var, Option<Var>)> {
    if tape.dim(query) != p.query_dim {
        return Err(Error::Dimension(format!("query has {} dims, expected {}", tape.dim(query), p.query_dim)));
    }
    if keys.is_empty() {
        return Ok((tape.zeros(p.key_dim), None));
    }
    if let Some(k) = keys.iter().find(|k| tape.dim(**k) != p.key_dim) {
        return Err(Error::Dimension(format!("key has {} dims, expected {}", tape.dim(*k), p.key_dim)));
    }
    let projected = tape.matvec_t(p.w_a, query);
    let scores: Vec<Var> = keys.iter().map(|k| tape.dot(projected, *k)).collect();
    let scores = tape.concat(&scores);
    let weights = tape.softmax(scores);
    Ok((tape.weighted_sum(weights, keys), Some(weights)))
}

/// `h̄ = tanh(W_f [c; h] + b_f)`.
pub fn fuse(tape: &mut Tape<'_>, h: Var, c: Var, p: &AttentionParams) -> Result<Var> {
    if tape.dim(h) != p.query_dim || tape.dim(c) != p.key_dim {
        return Err(Error::Dimension(format!(
            "fuse expects h:{} c:{}, got h:{} c:{}",
            p.query_dim,
            p.key_dim,
            tape.dim(h),
            tape.dim(c)
        )));
    }
    let x = tape.concat(&[c, h]);
    let z = tape.matvec(p.w_f, x);
    let b = tape.param(p.b_f);
    let z = tape.add(z, b);
    Ok(tape.tanh(z))
}

/// Attention followed by fusion: the attention-informed version of `query`.
pub fn attend(tape: &mut Tape<'_>, query: Var, keys: &[Var], p: &AttentionParams) -> Result<Var> {
    let (c, _) = attention_context(tape, query, keys, p)?;
    fuse(tape, query, c, p)
}
