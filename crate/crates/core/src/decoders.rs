//! Output heads.
//!
//! [`McHead`] is a softmax classifier over the full training tagset.
//! [`SeqHead`] is an LSTM that emits a token's category-value pairs one at a
//! time in canonical category order, terminated by `EOS`. Its output space is
//! `EOS` followed by every gold category-value pair, so output `o`
//! corresponds to catval index `o + 1`.

use rand::Rng;

use crate::augment::{attend, AttentionParams};
use crate::corpus::{MorphLabel, VocabSet};
use crate::error::{Error, Result};
use crate::numcore::{xavier_fill, xavier_uniform, lstm_step, LstmParams, ParamId, ParamStore, Tape, Tensor, Var};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Summed loss over the tokens that could be scored.
#[derive(Clone, Copy, Debug)]
pub struct Loss {
    pub value: Option<Var>,
    /// Tokens (Mc) or steps (Seq) whose gold symbol is outside the vocabulary.
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McHead {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub tags: usize,
}

impl McHead {
    pub fn register<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, tags: usize, rng: &mut R) -> Result<Self> {
        Ok(McHead {
            w: store.add(format!("{prefix}.w"), xavier_uniform(input_dim, tags, rng))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(vec![tags]))?,
            input_dim,
            tags,
        })
    }
}

/// `W x + b`, one logit per training tag.
pub fn mc_logits(tape: &mut Tape<'_>, head: &McHead, x: Var) -> Result<Var> {
    if tape.dim(x) != head.input_dim {
        return Err(Error::Dimension(format!("Mc head expects {} inputs, got {}", head.input_dim, tape.dim(x))));
    }
    let z = tape.matvec(head.w, x);
    let b = tape.param(head.b);
    Ok(tape.add(z, b))
}

pub fn mc_predict(tape: &mut Tape<'_>, head: &McHead, vocabs: &VocabSet, x: Var) -> Result<MorphLabel> {
    let logits = mc_logits(tape, head, x)?;
    Ok(vocabs.tag_label(argmax(tape.value(logits))))
}

/// Mean cross-entropy over tokens whose gold tag is in the tag vocabulary.
pub fn mc_loss(tape: &mut Tape<'_>, head: &McHead, vocabs: &VocabSet, inputs: &[Var], gold: &[&MorphLabel]) -> Result<Loss> {
    let mut terms = Vec::new();
    let mut skipped = 0;
    for (x, g) in inputs.iter().zip(gold) {
        match vocabs.tag.get(&g.full_tag()) {
            Some(t) => {
                let logits = mc_logits(tape, head, *x)?;
                terms.push(tape.nll(logits, t));
            }
            None => skipped += 1,
        }
    }
    let value = (!terms.is_empty()).then(|| {
        let n = terms.len();
        let s = tape.sum(&terms);
        tape.scale(s, 1.0 / n as f64)
    });
    Ok(Loss { value, skipped })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeqHead {
    pub lstm: LstmParams,
    /// Input embeddings of the previous symbol, indexed by catval index.
    pub emb: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub emb_dim: usize,
    /// Width of the per-token context vector fed at every step.
    pub context_dim: usize,
    /// `EOS` plus the gold category-value pairs.
    pub outputs: usize,
}

impl SeqHead {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        vocabs: &VocabSet,
        emb_dim: usize,
        hidden_dim: usize,
        context_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let rows = vocabs.catval.len();
        let mut emb = Tensor::zeros(vec![rows, emb_dim]);
        xavier_fill(&mut emb.data, rows, emb_dim, rng);
        let emb = store.add(format!("{prefix}.emb"), emb)?;
        let lstm = LstmParams::register(store, &format!("{prefix}.lstm"), emb_dim + context_dim, hidden_dim, rng)?;
        let outputs = rows - 1;
        Ok(SeqHead {
            lstm,
            emb,
            out_w: store.add(format!("{prefix}.out_w"), xavier_uniform(hidden_dim, outputs, rng))?,
            out_b: store.add(format!("{prefix}.out_b"), Tensor::zeros(vec![outputs]))?,
            emb_dim,
            context_dim,
            outputs,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim
    }
}

/// Attention used at every decoding step: parameters and the token's keys.
pub type StepAttention<'a> = Option<(&'a AttentionParams, &'a [Var])>;

/// Decoder state `(g, cell)`; `g_0` and the initial cell are zero.
#[derive(Clone, Copy, Debug)]
pub struct SeqState {
    pub g: Var,
    pub c: Var,
}

impl SeqState {
    pub fn initial(tape: &mut Tape<'_>, head: &SeqHead) -> Self {
        SeqState {
            g: tape.zeros(head.hidden_dim()),
            c: tape.zeros(head.hidden_dim()),
        }
    }
}

/// One decoder step: consumes the previous symbol and the token context,
/// returns the output logits and the new state.
pub fn seq_step(
    tape: &mut Tape<'_>,
    head: &SeqHead,
    prev: usize,
    context: Var,
    state: SeqState,
    attention: StepAttention<'_>,
) -> Result<(Var, SeqState)> {
    if tape.dim(context) != head.context_dim {
        return Err(Error::Dimension(format!(
            "Seq head expects a {}-dim context, got {}",
            head.context_dim,
            tape.dim(context)
        )));
    }
    let f = tape.row(head.emb, prev);
    let x = tape.concat(&[f, context]);
    let (g, c) = lstm_step(tape, &head.lstm, x, state.g, state.c)?;
    let proj_in = match attention {
        Some((p, keys)) => attend(tape, g, keys, p)?,
        None => g,
    };
    let z = tape.matvec(head.out_w, proj_in);
    let b = tape.param(head.out_b);
    Ok((tape.add(z, b), SeqState { g, c }))
}

/// Catval indices of a gold label in canonical order, and how many pairs
/// fell outside the vocabulary.
pub fn seq_targets(label: &MorphLabel, vocabs: &VocabSet) -> (Vec<usize>, usize) {
    let mut out = Vec::with_capacity(label.len());
    let mut skipped = 0;
    for (c, v) in label.pairs() {
        match vocabs.catval_index(c, v) {
            Some(i) => out.push(i),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

/// Teacher-forced loss of one token: the summed cross-entropy of every gold
/// pair followed by `EOS`.
pub fn seq_token_loss(
    tape: &mut Tape<'_>,
    head: &SeqHead,
    vocabs: &VocabSet,
    context: Var,
    gold: &MorphLabel,
    attention: StepAttention<'_>,
) -> Result<(Var, usize)> {
    let (mut targets, skipped) = seq_targets(gold, vocabs);
    targets.push(vocabs.eos());
    let mut state = SeqState::initial(tape, head);
    let mut prev = vocabs.bos();
    let mut terms = Vec::with_capacity(targets.len());
    for t in targets {
        let (logits, next) = seq_step(tape, head, prev, context, state, attention)?;
        terms.push(tape.nll(logits, t - 1));
        state = next;
        prev = t;
    }
    Ok((tape.sum(&terms), skipped))
}

/// Summed per-token losses divided by the token count.
pub fn seq_loss(
    tape: &mut Tape<'_>,
    head: &SeqHead,
    vocabs: &VocabSet,
    contexts: &[Var],
    gold: &[&MorphLabel],
    keys: &[Vec<Var>],
    attention: Option<&AttentionParams>,
) -> Result<Loss> {
    let mut terms = Vec::with_capacity(contexts.len());
    let mut skipped = 0;
    for (i, (x, g)) in contexts.iter().zip(gold).enumerate() {
        let att = attention.map(|p| (p, keys[i].as_slice()));
        let (l, s) = seq_token_loss(tape, head, vocabs, *x, g, att)?;
        terms.push(l);
        skipped += s;
    }
    let value = (!terms.is_empty()).then(|| {
        let n = terms.len();
        let s = tape.sum(&terms);
        tape.scale(s, 1.0 / n as f64)
    });
    Ok(Loss { value, skipped })
}

/// Default decoding bound: enough for one pair per category plus `EOS`.
pub fn default_max_len(vocabs: &VocabSet) -> usize {
    vocabs.category.len() + 2
}

/// Greedy decoding from `BOS` until `EOS` or `max_len` steps. A category
/// emitted twice keeps its first value. Returns the label and whether
/// decoding was cut off by `max_len`.
pub fn seq_decode_greedy(
    tape: &mut Tape<'_>,
    head: &SeqHead,
    vocabs: &VocabSet,
    context: Var,
    max_len: usize,
    attention: StepAttention<'_>,
) -> Result<(MorphLabel, bool)> {
    let mut state = SeqState::initial(tape, head);
    let mut prev = vocabs.bos();
    let mut pairs: Vec<(String, String)> = Vec::new();
    for _ in 0..max_len.max(1) {
        let (logits, next) = seq_step(tape, head, prev, context, state, attention)?;
        let sym = argmax(tape.value(logits)) + 1;
        if sym == vocabs.eos() {
            return Ok((MorphLabel::from_pairs(pairs)?, false));
        }
        let (c, v) = vocabs.catval_pair(sym).expect("non-reserved output");
        if !pairs.iter().any(|(k, _)| k == c) {
            pairs.push((c.to_owned(), v.to_owned()));
        }
        state = next;
        prev = sym;
    }
    Ok((MorphLabel::from_pairs(pairs)?, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabs, decompose_tag, Corpus, Sentence, Token};
    use crate::numcore::{grad_check, Gate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn label(s: &str) -> MorphLabel {
        decompose_tag(s).unwrap()
    }

    fn vocabs() -> VocabSet {
        let toks = ["POS=Noun|Case=Nom", "POS=Verb|Case=Gen", "POS=Noun|Case=Nom", "_"]
            .iter()
            .enumerate()
            .map(|(i, t)| Token::new(format!("w{i}"), label(t)))
            .collect();
        build_vocabs(&Corpus::new("t", vec![Sentence::new("s", toks).unwrap()])).unwrap()
    }

    fn zero_all(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).data.fill(0.0);
        }
    }

    #[test]
    fn mc_examples() {
        let mut s = ParamStore::new();
        let head = McHead::register(&mut s, "mc", 3, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        s.get_mut(head.w).data.fill(0.0);
        s.get_mut(head.b).data.copy_from_slice(&[1.0, 0.0]);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![0.3, 0.1, -4.0]);
        let l = mc_logits(&mut tape, &head, x).unwrap();
        assert_eq!(argmax(tape.value(l)), 0);
        let bad = tape.constant(vec![1.0]);
        assert!(mc_logits(&mut tape, &head, bad).is_err());

        let mut s = ParamStore::new();
        let head = McHead::register(&mut s, "mc", 3, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        s.get_mut(head.w).data.copy_from_slice(&[1.0, 2.0, 3.0, -1.0, 0.0, 0.5]);
        s.get_mut(head.b).data.copy_from_slice(&[0.25, -0.25]);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![2.0, -1.0, 4.0]);
        let l = mc_logits(&mut tape, &head, x).unwrap();
        assert_eq!(tape.value(l), &[2.0 - 2.0 + 12.0 + 0.25, -2.0 + 2.0 - 0.25]);
    }

    #[test]
    fn mc_loss_matches_brute_force_and_skips_unseen() {
        let v = vocabs();
        let mut s = ParamStore::new();
        let head = McHead::register(&mut s, "mc", 2, v.tag.len(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut tape = Tape::new(&s);
        let xs = [tape.constant(vec![0.5, -1.0]), tape.constant(vec![2.0, 0.3]), tape.constant(vec![1.0, 1.0])];
        let g = [label("POS=Noun|Case=Nom"), label("_"), label("POS=Adj")];
        let gold: Vec<&MorphLabel> = g.iter().collect();
        let loss = mc_loss(&mut tape, &head, &v, &xs, &gold).unwrap();
        assert_eq!(loss.skipped, 1);
        let w = s.get(head.w);
        let b = &s.get(head.b).data;
        let mut want = 0.0;
        for (x, gl) in [(&[0.5, -1.0], &g[0]), (&[2.0, 0.3], &g[1])] {
            let logits: Vec<f64> = (0..v.tag.len()).map(|r| w.row(r)[0] * x[0] + w.row(r)[1] * x[1] + b[r]).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            let t = v.tag.get(&gl.full_tag()).unwrap();
            want -= (logits[t].exp() / z).ln();
        }
        want /= 2.0;
        assert!((tape.scalar(loss.value.unwrap()) - want).abs() < 1e-12);
    }

    #[test]
    fn mc_loss_uniform_and_sharp() {
        let v = vocabs();
        assert_eq!(v.tag.len(), 3);
        let mut s = ParamStore::new();
        let head = McHead::register(&mut s, "mc", 1, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        s.get_mut(head.w).data.fill(0.0);
        let g = label("_");
        let mut prev = f64::INFINITY;
        for scale in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let t = v.tag.get("_").unwrap();
            let mut b = vec![0.0; 3];
            b[t] = scale;
            s.get_mut(head.b).data.copy_from_slice(&b);
            let mut tape = Tape::new(&s);
            let x = tape.constant(vec![0.0]);
            let l = mc_loss(&mut tape, &head, &v, &[x], &[&g]).unwrap().value.unwrap();
            let l = tape.scalar(l);
            if scale == 0.0 {
                assert!((l - 3f64.ln()).abs() < 1e-12);
            }
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
    }

    fn seq_head(v: &VocabSet, emb: usize, hidden: usize, ctx: usize, seed: u64) -> (ParamStore, SeqHead) {
        let mut s = ParamStore::new();
        let h = SeqHead::register(&mut s, "seq", v, emb, hidden, ctx, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (s, h)
    }

    #[test]
    fn seq_uniform_loss() {
        let v = vocabs();
        let (mut s, head) = seq_head(&v, 2, 3, 2, 0);
        zero_all(&mut s);
        let k = v.catval.len() - 2;
        assert_eq!(head.outputs, k + 1);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![0.4, 0.2]);
        let (l, skipped) = seq_token_loss(&mut tape, &head, &v, x, &label("POS=Noun|Case=Nom"), None).unwrap();
        assert_eq!(skipped, 0);
        assert!((tape.scalar(l) - 3.0 * ((k + 1) as f64).ln()).abs() < 1e-12);
        let (l, _) = seq_token_loss(&mut tape, &head, &v, x, &MorphLabel::empty(), None).unwrap();
        assert!((tape.scalar(l) - ((k + 1) as f64).ln()).abs() < 1e-12);
        let (_, skipped) = seq_token_loss(&mut tape, &head, &v, x, &label("POS=Noun|Mood=Imp"), None).unwrap();
        assert_eq!(skipped, 1);
    }

    #[test]
    fn empty_gold_loss_is_eos_probability() {
        let v = vocabs();
        let (s, head) = seq_head(&v, 2, 3, 2, 4);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![0.4, -0.7]);
        let (l, _) = seq_token_loss(&mut tape, &head, &v, x, &MorphLabel::empty(), None).unwrap();
        let st = SeqState::initial(&mut tape, &head);
        let (logits, _) = seq_step(&mut tape, &head, v.bos(), x, st, None).unwrap();
        let p = crate::numcore::softmax(tape.value(logits)).unwrap();
        assert!((tape.scalar(l) + p[0].ln()).abs() < 1e-12);
    }

    /// A head whose symbol embeddings are one-hot and whose hidden state
    /// remembers the previous symbol, with output weights wiring `chain[i]`
    /// to follow `chain[i-1]`; `chain[0]` follows `BOS` through the bias.
    fn rigged(v: &VocabSet, chain: &[usize]) -> (ParamStore, SeqHead) {
        let n = v.catval.len();
        let (mut s, head) = seq_head(v, n, n, 1, 0);
        zero_all(&mut s);
        let cell = head.lstm.gate_rows(Gate::Cell);
        let w = s.get_mut(head.lstm.w);
        let cols = head.lstm.input_dim;
        for k in 0..n {
            w.data[(cell.start + k) * cols + k] = 10.0;
        }
        s.get_mut(head.out_b).data[chain[0] - 1] = 1.0;
        let out = s.get_mut(head.out_w);
        for pair in chain.windows(2) {
            out.data[(pair[1] - 1) * n + pair[0]] = 20.0;
        }
        let e = s.get_mut(head.emb);
        for k in 0..n {
            e.data[k * n + k] = 1.0;
        }
        (s, head)
    }

    #[test]
    fn rigged_eos_first_gives_empty_label() {
        let v = vocabs();
        let (mut s, head) = seq_head(&v, 2, 2, 1, 0);
        zero_all(&mut s);
        s.get_mut(head.out_b).data[0] = 5.0;
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![1.0]);
        let (l, cut) = seq_decode_greedy(&mut tape, &head, &v, x, default_max_len(&v), None).unwrap();
        assert!(l.is_empty() && !cut);
    }

    #[test]
    fn rigged_chains() {
        let v = vocabs();
        let noun = v.catval_index("POS", "Noun").unwrap();
        let gen = v.catval_index("Case", "Gen").unwrap();
        let (s, head) = rigged(&v, &[noun, v.eos()]);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![0.0]);
        let (l, _) = seq_decode_greedy(&mut tape, &head, &v, x, 4, None).unwrap();
        assert_eq!(l, label("POS=Noun"));

        let (s, head) = rigged(&v, &[noun, gen, v.eos()]);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![0.0]);
        let (l, cut) = seq_decode_greedy(&mut tape, &head, &v, x, 4, None).unwrap();
        assert_eq!(l, label("POS=Noun|Case=Gen"));
        assert!(!cut);
        assert!(v.tag.get(&l.full_tag()).is_none());
    }

    #[test]
    fn decoding_terminates_and_keeps_first_category() {
        let v = vocabs();
        let noun = v.catval_index("POS", "Noun").unwrap();
        let verb = v.catval_index("POS", "Verb").unwrap();
        let (s, head) = rigged(&v, &[noun, verb, noun, verb]);
        let mut tape = Tape::new(&s);
        let x = tape.constant(vec![0.0]);
        let (l, cut) = seq_decode_greedy(&mut tape, &head, &v, x, 3, None).unwrap();
        assert!(cut);
        assert_eq!(l, label("POS=Noun"));
    }

    #[test]
    fn seq_loss_gradients() {
        let v = vocabs();
        let (mut s, head) = seq_head(&v, 3, 4, 2, 9);
        let ctx = s.add("ctx", Tensor::new(vec![2], vec![0.3, -0.6]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ids: Vec<_> = s.ids().collect();
        for id in ids {
            for x in s.get_mut(id).data.iter_mut() {
                *x = rng.gen_range(-0.5..0.5);
            }
        }
        let g = [label("POS=Noun|Case=Nom"), label("_")];
        let r = grad_check(&mut s, 1e-5, |t| {
            let x = t.param(ctx);
            let gold: Vec<&MorphLabel> = g.iter().collect();
            let l = seq_loss(t, &head, &v, &[x, x], &gold, &[vec![], vec![]], None)?;
            Ok(l.value.unwrap())
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
