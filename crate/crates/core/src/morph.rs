//! Morphological analyser interface, a lexicon-backed analyser, ambiguity
//! statistics and the first/random resolution baselines.
//!
//! Lexicon files are UTF-8 text. A word entry is
//! `surface<TAB>tag1<TAB>tag2...`; a guesser rule is
//! `SUFFIX -suf<TAB>tag1...`. Blank lines and lines starting with `#` are
//! ignored. Tags use the `CAT=Val|...` format.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{decompose_tag, Corpus, MorphLabel, Token};
use crate::error::{Error, Result};

/// The candidate analyses an analyser produced for one token, in emission
/// order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisSet {
    pub analyses: Vec<MorphLabel>,
    pub source: String,
}

impl AnalysisSet {
    pub fn new(analyses: Vec<MorphLabel>, source: impl Into<String>) -> Result<Self> {
        for (i, a) in analyses.iter().enumerate() {
            if analyses[..i].contains(a) {
                return Err(Error::Data(format!("duplicate analysis '{a}'")));
            }
        }
        Ok(AnalysisSet {
            analyses,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.analyses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analyses.is_empty()
    }

    pub fn contains(&self, label: &MorphLabel) -> bool {
        self.analyses.contains(label)
    }

    pub fn first(&self) -> Option<&MorphLabel> {
        self.analyses.first()
    }
}

/// Anything that can propose candidate analyses for a surface form.
pub trait Analyzer {
    fn analyze(&self, surface: &str) -> AnalysisSet;
}

#[derive(Clone, Debug)]
struct SuffixRule {
    suffix: String,
    analyses: Vec<MorphLabel>,
}

/// Lexicon lookup with a suffix guesser for unknown words.
#[derive(Clone, Debug, Default)]
pub struct LexiconAnalyzer {
    entries: HashMap<String, Vec<MorphLabel>>,
    guesser: Vec<SuffixRule>,
    case_fold: bool,
}

fn push_unique(list: &mut Vec<MorphLabel>, label: MorphLabel) {
    if !list.contains(&label) {
        list.push(label);
    }
}

impl LexiconAnalyzer {
    pub fn new(case_fold: bool) -> Self {
        LexiconAnalyzer {
            case_fold,
            ..Default::default()
        }
    }

    fn key(&self, surface: &str) -> String {
        if self.case_fold {
            surface.to_lowercase()
        } else {
            surface.to_owned()
        }
    }

    /// Adds analyses for a surface form; repeated entries merge.
    pub fn add_entry(&mut self, surface: &str, analyses: Vec<MorphLabel>) -> Result<()> {
        if analyses.is_empty() {
            return Err(Error::Data(format!("lexicon entry '{surface}' has no analyses")));
        }
        let list = self.entries.entry(self.key(surface)).or_default();
        for a in analyses {
            push_unique(list, a);
        }
        Ok(())
    }

    pub fn add_suffix_rule(&mut self, suffix: &str, analyses: Vec<MorphLabel>) -> Result<()> {
        if analyses.is_empty() {
            return Err(Error::Data(format!("suffix rule '-{suffix}' has no analyses")));
        }
        let mut unique = Vec::new();
        for a in analyses {
            push_unique(&mut unique, a);
        }
        self.guesser.push(SuffixRule {
            suffix: self.key(suffix),
            analyses: unique,
        });
        Ok(())
    }

    pub fn parse(text: &str, case_fold: bool) -> Result<Self> {
        let mut lex = LexiconAnalyzer::new(case_fold);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let head = cols.next().unwrap_or_default();
            let tags = cols
                .map(|t| decompose_tag(t.trim()).map_err(|e| Error::parse(line_no, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let result = match head.strip_prefix("SUFFIX ") {
                Some(rule) => {
                    let suffix = rule.trim().strip_prefix('-').ok_or_else(|| {
                        Error::parse(line_no, format!("suffix rule '{rule}' must start with '-'"))
                    })?;
                    if suffix.is_empty() {
                        return Err(Error::parse(line_no, "empty suffix"));
                    }
                    lex.add_suffix_rule(suffix, tags)
                }
                None if head.is_empty() => Err(Error::Data("empty surface".into())),
                None => lex.add_entry(head, tags),
            };
            result.map_err(|e| Error::parse(line_no, e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>, case_fold: bool) -> Result<Self> {
        LexiconAnalyzer::parse(&fs::read_to_string(path)?, case_fold)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.guesser.is_empty()
    }
}

impl Analyzer for LexiconAnalyzer {
    /// Exact match first, then the longest matching suffix rule (earliest
    /// rule on ties), else an empty set.
    fn analyze(&self, surface: &str) -> AnalysisSet {
        let key = self.key(surface);
        if let Some(list) = self.entries.get(&key) {
            return AnalysisSet {
                analyses: list.clone(),
                source: "lexicon".into(),
            };
        }
        let mut best: Option<&SuffixRule> = None;
        for rule in &self.guesser {
            if key.ends_with(&rule.suffix) && best.is_none_or(|b| rule.suffix.len() > b.suffix.len()) {
                best = Some(rule);
            }
        }
        match best {
            Some(rule) => AnalysisSet {
                analyses: rule.analyses.clone(),
                source: "guesser".into(),
            },
            None => AnalysisSet {
                analyses: Vec::new(),
                source: "none".into(),
            },
        }
    }
}

/// Returns a copy of `corpus` with every token's candidates set by `analyzer`.
pub fn attach_analyses(corpus: &Corpus, analyzer: &impl Analyzer) -> Corpus {
    let mut out = corpus.clone();
    for tok in out.sentences.iter_mut().flat_map(|s| s.tokens.iter_mut()) {
        tok.candidates = Some(analyzer.analyze(&tok.surface));
    }
    out
}

fn candidates_of(tok: &Token) -> Result<&AnalysisSet> {
    tok.candidates
        .as_ref()
        .ok_or_else(|| Error::Data(format!("token '{}' has no analyses attached", tok.surface)))
}

fn all_candidates(corpus: &Corpus) -> Result<Vec<(&Token, &AnalysisSet)>> {
    corpus.tokens().map(|t| Ok((t, candidates_of(t)?))).collect()
}

/// Ambiguity profile of an analyser on a gold corpus. Fields are
/// percentages; `None` marks a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AmbiguityReport {
    pub tokens: usize,
    pub pct_ambiguous: Option<f64>,
    pub recall_in_list_ambiguous: Option<f64>,
    pub accuracy_unambiguous: Option<f64>,
    pub pct_no_analysis: Option<f64>,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn ambiguity_stats(corpus: &Corpus) -> Result<AmbiguityReport> {
    let toks = all_candidates(corpus)?;
    let (mut ambiguous, mut amb_hit, mut single, mut single_hit, mut empty) = (0, 0, 0, 0, 0);
    for (tok, set) in &toks {
        match set.len() {
            0 => empty += 1,
            1 => {
                single += 1;
                single_hit += usize::from(set.analyses[0] == tok.gold);
            }
            _ => {
                ambiguous += 1;
                amb_hit += usize::from(set.contains(&tok.gold));
            }
        }
    }
    let n = toks.len();
    Ok(AmbiguityReport {
        tokens: n,
        pct_ambiguous: pct(ambiguous, n),
        recall_in_list_ambiguous: pct(amb_hit, ambiguous),
        accuracy_unambiguous: pct(single_hit, single),
        pct_no_analysis: pct(empty, n),
    })
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.2}"))
}

impl fmt::Display for AmbiguityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tokens:                    {}", self.tokens)?;
        writeln!(f, "ambiguous (%):             {}", show(self.pct_ambiguous))?;
        writeln!(f, "gold in list, ambiguous (%): {}", show(self.recall_in_list_ambiguous))?;
        writeln!(f, "accuracy, unambiguous (%): {}", show(self.accuracy_unambiguous))?;
        write!(f, "no analysis (%):           {}", show(self.pct_no_analysis))
    }
}

/// Full-tag accuracy when every token takes its first candidate.
pub fn resolve_first(corpus: &Corpus) -> Result<f64> {
    let toks = all_candidates(corpus)?;
    let hits = toks
        .iter()
        .filter(|(tok, set)| set.first() == Some(&tok.gold))
        .count();
    Ok(pct(hits, toks.len()).unwrap_or(0.0))
}

/// Mean full-tag accuracy over `trials` uniform random resolutions.
pub fn resolve_random(corpus: &Corpus, seed: u64, trials: usize) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Usage("trials must be at least 1".into()));
    }
    let toks = all_candidates(corpus)?;
    if toks.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        let mut hits = 0usize;
        for (tok, set) in &toks {
            if set.is_empty() {
                continue;
            }
            let pick = rng.gen_range(0..set.len());
            hits += usize::from(set.analyses[pick] == tok.gold);
        }
        total += 100.0 * hits as f64 / toks.len() as f64;
    }
    Ok(total / trials as f64)
}

/// Accuracy of a resolver that always picks gold when it is available; an
/// upper bound for every candidate-restricted resolver.
pub fn oracle_upper_bound(corpus: &Corpus) -> Result<f64> {
    let toks = all_candidates(corpus)?;
    let hits = toks.iter().filter(|(tok, set)| set.contains(&tok.gold)).count();
    Ok(pct(hits, toks.len()).unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn l(tag: &str) -> MorphLabel {
        decompose_tag(tag).unwrap()
    }

    fn tok_with(gold: &str, cands: &[&str]) -> Token {
        Token::new("w", l(gold)).with_candidates(AnalysisSet::new(cands.iter().map(|c| l(c)).collect(), "t").unwrap())
    }

    fn corpus(tokens: Vec<Token>) -> Corpus {
        Corpus::new("t", vec![Sentence::new("s", tokens).unwrap()])
    }

    const LEX: &str = "# toy lexicon\nkoera\tPOS=Noun|Case=Gen\tPOS=Noun|Case=Par\n\
                       SUFFIX -s\tPOS=Verb|Tense=Past\nSUFFIX -is\tPOS=Verb|Tense=Past|Person=3\n\
                       SUFFIX -is\tPOS=X\n";

    #[test]
    fn lexicon_lookup_keeps_order() {
        let lex = LexiconAnalyzer::parse(LEX, false).unwrap();
        let set = lex.analyze("koera");
        assert_eq!(set.analyses, vec![l("POS=Noun|Case=Gen"), l("POS=Noun|Case=Par")]);
    }

    #[test]
    fn guesser_longest_suffix_then_file_order() {
        let lex = LexiconAnalyzer::parse(LEX, false).unwrap();
        assert_eq!(lex.analyze("laulis").analyses, vec![l("POS=Verb|Tense=Past|Person=3")]);
        assert_eq!(lex.analyze("koeras").analyses, vec![l("POS=Verb|Tense=Past")]);
        assert!(lex.analyze("xyz").is_empty());
    }

    #[test]
    fn single_suffix_rule_fires() {
        let lex = LexiconAnalyzer::parse("SUFFIX -s\tPOS=Verb|Tense=Past\n", false).unwrap();
        assert_eq!(lex.analyze("laulis").analyses, vec![l("POS=Verb|Tense=Past")]);
    }

    #[test]
    fn case_folding() {
        let lex = LexiconAnalyzer::parse(LEX, true).unwrap();
        assert_eq!(lex.analyze("Koera").len(), 2);
        let lex = LexiconAnalyzer::parse(LEX, false).unwrap();
        assert_eq!(lex.analyze("Koera").len(), 0);
    }

    #[test]
    fn malformed_lexicon_lines() {
        assert!(matches!(LexiconAnalyzer::parse("koer\n", false), Err(Error::Parse { line: 1, .. })));
        assert!(LexiconAnalyzer::parse("SUFFIX s\tPOS=X\n", false).is_err());
        assert!(LexiconAnalyzer::parse("a\tPOS=X\nb\tPOS\n", false).is_err());
        let merged = LexiconAnalyzer::parse("a\tPOS=X\na\tPOS=X\tPOS=Y\n", false).unwrap();
        assert_eq!(merged.analyze("a").len(), 2);
    }

    #[test]
    fn attach_is_idempotent_and_matches_lookup() {
        let lex = LexiconAnalyzer::parse(LEX, false).unwrap();
        let c = Corpus::new(
            "t",
            vec![Sentence::new("s", vec![Token::new("koera", l("POS=Noun")), Token::new("laulis", l("POS=Verb"))]).unwrap()],
        );
        let once = attach_analyses(&c, &lex);
        assert_eq!(attach_analyses(&once, &lex), once);
        for (t, orig) in once.tokens().zip(c.tokens()) {
            assert_eq!(t.candidates.as_ref().unwrap(), &lex.analyze(&t.surface));
            assert_eq!(t.gold, orig.gold);
        }
    }

    #[test]
    fn stats_hand_counted() {
        let mut toks = vec![
            tok_with("POS=A", &["POS=A", "POS=B"]),
            tok_with("POS=A", &["POS=B", "POS=C"]),
        ];
        for i in 0..7 {
            toks.push(if i < 6 { tok_with("POS=A", &["POS=A"]) } else { tok_with("POS=A", &["POS=B"]) });
        }
        toks.push(tok_with("POS=A", &[]));
        let r = ambiguity_stats(&corpus(toks)).unwrap();
        assert_eq!(r.pct_ambiguous, Some(20.0));
        assert_eq!(r.recall_in_list_ambiguous, Some(50.0));
        assert!((r.accuracy_unambiguous.unwrap() - 600.0 / 7.0).abs() < 1e-12);
        assert_eq!(r.pct_no_analysis, Some(10.0));
    }

    #[test]
    fn stats_undefined_marker() {
        let r = ambiguity_stats(&corpus(vec![tok_with("POS=A", &["POS=A"])])).unwrap();
        assert_eq!(r.pct_ambiguous, Some(0.0));
        assert_eq!(r.recall_in_list_ambiguous, None);
        assert_eq!(r.accuracy_unambiguous, Some(100.0));
        assert!(r.to_string().contains("undefined"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"recall_in_list_ambiguous\":null"));
    }

    #[test]
    fn stats_require_candidates() {
        let c = corpus(vec![Token::new("x", l("POS=A"))]);
        assert!(ambiguity_stats(&c).is_err());
        assert!(resolve_first(&c).is_err());
    }

    #[test]
    fn first_resolution() {
        let c = corpus(vec![
            tok_with("POS=A", &["POS=A", "POS=B"]),
            tok_with("POS=A", &["POS=A"]),
            tok_with("POS=B", &["POS=B", "POS=A"]),
            tok_with("POS=B", &["POS=A", "POS=B"]),
        ]);
        assert_eq!(resolve_first(&c).unwrap(), 75.0);
    }

    #[test]
    fn random_resolution() {
        let c = corpus((0..50).map(|_| tok_with("POS=A", &["POS=A", "POS=B"])).collect());
        let a = resolve_random(&c, 11, 1000).unwrap();
        assert_eq!(a, resolve_random(&c, 11, 1000).unwrap());
        // Mean over 50,000 Bernoulli(0.5) draws.
        let sigma = 100.0 * (0.25f64 / 50_000.0).sqrt();
        assert!((a - 50.0).abs() < 3.0 * sigma, "{a}");

        let sure = corpus(vec![tok_with("POS=A", &["POS=A"])]);
        assert_eq!(resolve_random(&sure, 99, 3).unwrap(), 100.0);
        assert!(resolve_random(&sure, 1, 0).is_err());
    }
}
