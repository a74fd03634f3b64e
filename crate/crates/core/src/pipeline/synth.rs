//! Generated corpora for overfitting and candidate-gain experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{decompose_tag, Corpus, MorphLabel, Sentence, Token};
use crate::morph::AnalysisSet;

const OVERFIT_TAGS: [&str; 6] = [
    "POS=Noun|Case=Nom|Number=Sing",
    "POS=Noun|Case=Gen|Number=Plur",
    "POS=Verb|Number=Sing",
    "POS=Verb|Number=Plur",
    "POS=Adj|Case=Nom",
    "POS=Adv",
];

const SYLLABLES: [&str; 8] = ["ka", "lo", "mi", "su", "te", "ra", "vi", "no"];

fn label(tag: &str) -> MorphLabel {
    decompose_tag(tag).expect("built-in tags are canonical")
}

fn word(i: usize) -> String {
    format!("{}{}", SYLLABLES[i % 8], SYLLABLES[(i / 8) % 8])
}

/// 50 sentences of 3 to 8 tokens over 40 word types. Each word always
/// carries the same one of 6 tags spanning 3 categories.
pub fn overfit_corpus(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..50)
        .map(|s| {
            let len = rng.gen_range(3..=8);
            let tokens = (0..len)
                .map(|_| {
                    let w = rng.gen_range(0..40);
                    Token::new(word(w), label(OVERFIT_TAGS[w % OVERFIT_TAGS.len()]))
                })
                .collect();
            Sentence::new(format!("overfit-{}", s + 1), tokens).expect("non-empty")
        })
        .collect();
    Corpus::new("overfit", sentences)
}

/// For each ambiguous reading pair: the two tags and the companion analysis
/// that accompanies each reading in the candidate list.
const GAIN_READINGS: [(&str, &str, &str, &str); 4] = [
    ("POS=Noun|Case=Nom|Number=Sing", "POS=Noun|Case=Gen|Number=Sing", "POS=Pron|Case=Ela", "POS=Pron|Case=Ill"),
    ("POS=Noun|Case=Nom|Number=Plur", "POS=Verb|Mood=Ind|Number=Plur", "POS=Num|Case=Ela", "POS=Num|Case=Ill"),
    ("POS=Adj|Case=Nom", "POS=Adv", "POS=Pron|Case=Ela", "POS=Pron|Case=Ill"),
    ("POS=Verb|Mood=Ind|Number=Sing", "POS=Verb|Mood=Imp|Number=Sing", "POS=Num|Case=Ela", "POS=Num|Case=Ill"),
];

fn gain_sentences(rng: &mut ChaCha8Rng, n: usize, prefix: &str) -> Vec<Sentence> {
    (0..n)
        .map(|s| {
            let len = rng.gen_range(4..=8);
            let tokens = (0..len)
                .map(|_| {
                    let w = rng.gen_range(0..2 * GAIN_READINGS.len());
                    let (a, b, ca, cb) = GAIN_READINGS[w % GAIN_READINGS.len()];
                    let (gold, companion) = if rng.gen_bool(0.5) { (a, ca) } else { (b, cb) };
                    let mut analyses = vec![label(a), label(b), label(companion)];
                    analyses.shuffle(rng);
                    let cands = AnalysisSet::new(analyses, "synthetic").expect("distinct analyses");
                    Token::new(word(w + 9), label(gold)).with_candidates(cands)
                })
                .collect();
            Sentence::new(format!("{prefix}-{}", s + 1), tokens).expect("non-empty")
        })
        .collect()
}

/// Train and dev corpora where every token's surface is shared by two tags
/// chosen uniformly at random, independent of context. Only the candidate
/// list reveals the reading: besides both tags it holds a companion analysis
/// tied to the gold one.
pub fn gain_corpora(seed: u64, train_sentences: usize, dev_sentences: usize) -> (Corpus, Corpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = gain_sentences(&mut rng, train_sentences, "gain-train");
    let dev = gain_sentences(&mut rng, dev_sentences, "gain-dev");
    (Corpus::new("gain-train", train), Corpus::new("gain-dev", dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn overfit_corpus_shape() {
        let c = overfit_corpus(1);
        assert_eq!(c.sentences.len(), 50);
        let words: HashSet<&str> = c.tokens().map(|t| t.surface.as_str()).collect();
        let tags: HashSet<String> = c.tokens().map(|t| t.gold.full_tag()).collect();
        let cats: HashSet<&str> = c.tokens().flat_map(|t| t.gold.pairs().iter().map(|(k, _)| k.as_str())).collect();
        assert!(words.len() <= 40);
        assert_eq!(tags.len(), 6);
        assert_eq!(cats.len(), 3);
        assert_eq!(overfit_corpus(1), c);
    }

    #[test]
    fn gain_candidates_contain_both_readings() {
        let (train, dev) = gain_corpora(2, 30, 10);
        assert_eq!((train.sentences.len(), dev.sentences.len()), (30, 10));
        for t in train.tokens().chain(dev.tokens()) {
            let c = t.candidates.as_ref().unwrap();
            assert_eq!(c.len(), 3);
            assert!(c.contains(&t.gold));
        }
        let ambiguous: HashSet<&str> = train.tokens().map(|t| t.surface.as_str()).collect();
        for s in ambiguous {
            let tags: HashSet<String> = train.tokens().filter(|t| t.surface == s).map(|t| t.gold.full_tag()).collect();
            assert_eq!(tags.len(), 2, "{s}");
        }
    }
}
