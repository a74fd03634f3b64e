use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::corpus::{category_cmp, Corpus, Token};
use crate::error::{Error, Result};

/// Full-tag accuracy and per-category macro-F1, all in percent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub full_tag_accuracy: f64,
    pub per_feature_f1: BTreeMap<String, f64>,
    pub macro_average: f64,
    pub token_count: usize,
}

impl EvalReport {
    /// Categories in canonical order (POS first).
    pub fn categories(&self) -> Vec<&str> {
        let mut cats: Vec<&str> = self.per_feature_f1.keys().map(String::as_str).collect();
        cats.sort_by(|a, b| category_cmp(a, b));
        cats
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tokens\t{}", self.token_count)?;
        writeln!(f, "accuracy\t{:.2}", self.full_tag_accuracy)?;
        for c in self.categories() {
            writeln!(f, "{c}\t{:.2}", self.per_feature_f1[c])?;
        }
        write!(f, "macro\t{:.2}", self.macro_average)
    }
}

fn aligned<'a>(gold: &'a Corpus, pred: &'a Corpus) -> Result<Vec<(&'a Token, &'a Token)>> {
    let n = gold.sentences.len().max(pred.sentences.len());
    for i in 0..n {
        match (gold.sentences.get(i), pred.sentences.get(i)) {
            (Some(g), Some(p)) if g.len() == p.len() => {}
            (g, p) => {
                let id = g.or(p).map(|s| s.id.as_str()).unwrap_or_default();
                return Err(Error::Data(format!(
                    "gold and predicted corpora diverge at sentence {} ('{id}'): {} vs {} tokens",
                    i + 1,
                    g.map_or(0, |s| s.len()),
                    p.map_or(0, |s| s.len()),
                )));
            }
        }
    }
    Ok(gold.tokens().zip(pred.tokens()).collect())
}

fn f1(tp: usize, fp: usize, fneg: usize) -> f64 {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fneg > 0 { tp as f64 / (tp + fneg) as f64 } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Compares predictions against gold token by token.
///
/// Per category, F1 is averaged over the values that occur in gold; a
/// category that only appears in predictions scores 0.
pub fn evaluate(gold: &Corpus, pred: &Corpus) -> Result<EvalReport> {
    let pairs = aligned(gold, pred)?;
    if pairs.is_empty() {
        return Err(Error::Data("cannot evaluate an empty corpus".into()));
    }
    let correct = pairs.iter().filter(|(g, p)| g.gold == p.gold).count();

    let mut categories: BTreeSet<&str> = BTreeSet::new();
    let mut gold_values: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (g, p) in &pairs {
        for (c, v) in g.gold.pairs() {
            categories.insert(c);
            gold_values.entry(c).or_default().insert(v);
        }
        for (c, _) in p.gold.pairs() {
            categories.insert(c);
        }
    }

    let mut per_feature_f1 = BTreeMap::new();
    for c in categories {
        let values = gold_values.get(c);
        let scores: Vec<f64> = values
            .into_iter()
            .flatten()
            .map(|v| {
                let (mut tp, mut fp, mut fneg) = (0, 0, 0);
                for (g, p) in &pairs {
                    match (g.gold.get(c) == Some(v), p.gold.get(c) == Some(v)) {
                        (true, true) => tp += 1,
                        (false, true) => fp += 1,
                        (true, false) => fneg += 1,
                        (false, false) => {}
                    }
                }
                f1(tp, fp, fneg)
            })
            .collect();
        let mean = if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        per_feature_f1.insert(c.to_owned(), 100.0 * mean);
    }
    let macro_average = if per_feature_f1.is_empty() {
        0.0
    } else {
        per_feature_f1.values().sum::<f64>() / per_feature_f1.len() as f64
    };
    Ok(EvalReport {
        full_tag_accuracy: 100.0 * correct as f64 / pairs.len() as f64,
        per_feature_f1,
        macro_average,
        token_count: pairs.len(),
    })
}

/// One row of a report comparison; `None` marks a category missing from
/// that report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffRow {
    pub category: String,
    pub baseline: Option<f64>,
    pub system: Option<f64>,
}

impl DiffRow {
    /// `system − baseline`.
    pub fn diff(&self) -> Option<f64> {
        Some(self.system? - self.baseline?)
    }
}

/// Signed, two decimals: `+1.78`, `-0.40`.
pub fn format_diff(d: f64) -> String {
    let r = format!("{d:+.2}");
    if r == "-0.00" {
        "+0.00".into()
    } else {
        r
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

/// Per-category F1 of `system` against `baseline` over the union of their
/// categories, in canonical order.
pub fn compare_reports(baseline: &EvalReport, system: &EvalReport) -> Vec<DiffRow> {
    let mut cats: Vec<&String> = baseline
        .per_feature_f1
        .keys()
        .chain(system.per_feature_f1.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    cats.sort_by(|a, b| category_cmp(a, b));
    cats.into_iter()
        .map(|c| DiffRow {
            category: c.clone(),
            baseline: baseline.per_feature_f1.get(c).copied(),
            system: system.per_feature_f1.get(c).copied(),
        })
        .collect()
}

/// Tab-separated `feature  baseline  system  diff` lines.
pub fn format_comparison(rows: &[DiffRow]) -> String {
    let mut out = String::from("feature\tbaseline\tsystem\tdiff\n");
    for r in rows {
        let d = r.diff().map_or_else(|| "-".into(), format_diff);
        out.push_str(&format!("{}\t{}\t{}\t{d}\n", r.category, cell(r.baseline), cell(r.system)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{decompose_tag, Sentence};

    fn corpus(tags: &[&str]) -> Corpus {
        let tokens = tags
            .iter()
            .enumerate()
            .map(|(i, t)| Token::new(format!("w{i}"), decompose_tag(t).unwrap()))
            .collect();
        Corpus::new("c", vec![Sentence::new("s1", tokens).unwrap()])
    }

    #[test]
    fn identical_corpora_score_perfectly() {
        let c = corpus(&["POS=N|Case=Nom", "POS=V", "POS=N|Case=Gen"]);
        let r = evaluate(&c, &c).unwrap();
        assert_eq!(r.full_tag_accuracy, 100.0);
        assert!(r.per_feature_f1.values().all(|&f| f == 100.0));
        assert_eq!(r.macro_average, 100.0);
    }

    #[test]
    fn three_of_four() {
        let g = corpus(&["POS=N", "POS=V", "POS=N", "POS=A"]);
        let p = corpus(&["POS=N", "POS=V", "POS=N", "POS=N"]);
        assert_eq!(evaluate(&g, &p).unwrap().full_tag_accuracy, 75.0);
    }

    #[test]
    fn hand_computed_f1() {
        // Case values Nom, Gen in gold; one Nom→Gen confusion, one Gen missing.
        let g = corpus(&["POS=N|Case=Nom", "POS=N|Case=Nom", "POS=N|Case=Gen", "POS=N|Case=Gen", "POS=N", "POS=N"]);
        let p = corpus(&["POS=N|Case=Nom", "POS=N|Case=Gen", "POS=N|Case=Gen", "POS=N", "POS=N", "POS=N|Mood=Ind"]);
        let r = evaluate(&g, &p).unwrap();
        // Nom: tp1 fp0 fn1 → 2/3. Gen: tp1 fp1 fn1 → 1/2.
        let case = 100.0 * (2.0 / 3.0 + 0.5) / 2.0;
        assert!((r.per_feature_f1["Case"] - case).abs() < 1e-12);
        assert_eq!(r.per_feature_f1["POS"], 100.0);
        assert_eq!(r.per_feature_f1["Mood"], 0.0);
        assert!((r.macro_average - (case + 100.0) / 3.0).abs() < 1e-12);
        assert_eq!(r.categories(), vec!["POS", "Case", "Mood"]);
    }

    #[test]
    fn misalignment_names_sentence() {
        let g = corpus(&["POS=N", "POS=V"]);
        let p = corpus(&["POS=N"]);
        match evaluate(&g, &p) {
            Err(Error::Data(m)) => assert!(m.contains("s1"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diff_arithmetic() {
        let mk = |pos: f64| EvalReport {
            full_tag_accuracy: 0.0,
            per_feature_f1: BTreeMap::from([("POS".to_owned(), pos)]),
            macro_average: pos,
            token_count: 1,
        };
        let rows = compare_reports(&mk(93.34), &mk(95.12));
        assert_eq!(format_diff(rows[0].diff().unwrap()), "+1.78");
        let rows = compare_reports(&mk(50.0), &mk(50.0));
        assert_eq!(format_diff(rows[0].diff().unwrap()), "+0.00");
        assert_eq!(format_diff(-0.4), "-0.40");
        let mut other = mk(1.0);
        other.per_feature_f1.insert("Case".into(), 3.0);
        let rows = compare_reports(&mk(2.0), &other);
        assert_eq!(rows[1].category, "Case");
        assert_eq!(rows[1].diff(), None);
        assert!(format_comparison(&rows).contains("Case\t-\t3.00\t-"));
    }
}
