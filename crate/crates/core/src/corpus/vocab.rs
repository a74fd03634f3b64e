use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{category_cmp, decompose_tag, Corpus, MorphLabel};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Dense string-to-index mapping. Reserved entries take the lowest indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    items: Vec<String>,
    counts: Vec<u64>,
    reserved: usize,
    frozen: bool,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    reserved: usize,
    items: Vec<String>,
    counts: Vec<u64>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r.items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab {
            items: r.items,
            counts: r.counts,
            reserved: r.reserved,
            frozen: true,
            index,
        }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            reserved: v.reserved,
            items: v.items,
            counts: v.counts,
        }
    }
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
            && self.counts == other.counts
            && self.reserved == other.reserved
            && self.frozen == other.frozen
    }
}

impl Vocab {
    pub fn new(reserved: &[&str]) -> Self {
        let mut v = Vocab {
            items: Vec::new(),
            counts: Vec::new(),
            reserved: reserved.len(),
            frozen: false,
            index: HashMap::new(),
        };
        for r in reserved {
            v.index.insert((*r).to_owned(), v.items.len());
            v.items.push((*r).to_owned());
            v.counts.push(0);
        }
        v
    }

    /// Adds one occurrence of `item`, returning its index.
    pub fn insert(&mut self, item: &str) -> Result<usize> {
        self.insert_count(item, 1)
    }

    pub fn insert_count(&mut self, item: &str, count: u64) -> Result<usize> {
        if let Some(&i) = self.index.get(item) {
            if self.frozen {
                return Err(Error::FrozenVocab(item.to_owned()));
            }
            self.counts[i] += count;
            return Ok(i);
        }
        if self.frozen {
            return Err(Error::FrozenVocab(item.to_owned()));
        }
        let i = self.items.len();
        self.index.insert(item.to_owned(), i);
        self.items.push(item.to_owned());
        self.counts.push(count);
        Ok(i)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn item(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn reserved(&self) -> usize {
        self.reserved
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Non-reserved items in index order.
    pub fn entries(&self) -> &[String] {
        &self.items[self.reserved..]
    }

    fn from_counts(reserved: &[&str], counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut v = Vocab::new(reserved);
        for (item, n) in counts {
            v.insert_count(&item, n).expect("fresh vocab is not frozen");
        }
        v.freeze();
        v
    }
}

pub(crate) fn catval_key(category: &str, value: &str) -> String {
    format!("{category}={value}")
}

/// All vocabularies a model needs, built from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabSet {
    pub word: Vocab,
    pub char: Vocab,
    /// Full training tags; the multiclass output space.
    pub tag: Vocab,
    /// Gold category-value pairs plus `BOS`/`EOS`.
    pub catval: Vocab,
    /// Categories in canonical order.
    pub category: Vocab,
    /// Full tags seen among training candidates, plus `UNK`.
    pub analysis_tag: Vocab,
    /// Category-value pairs seen among training candidates, plus `UNK`.
    pub analysis_catval: Vocab,
}

impl VocabSet {
    pub fn tag_label(&self, index: usize) -> MorphLabel {
        decompose_tag(self.tag.item(index)).expect("tag vocab holds canonical tags")
    }

    /// The (category, value) pair behind a non-reserved catval index.
    pub fn catval_pair(&self, index: usize) -> Option<(&str, &str)> {
        if index < self.catval.reserved() {
            return None;
        }
        self.catval.item(index).split_once('=')
    }

    pub fn catval_index(&self, category: &str, value: &str) -> Option<usize> {
        self.catval.get(&catval_key(category, value))
    }

    pub fn bos(&self) -> usize {
        0
    }

    pub fn eos(&self) -> usize {
        1
    }
}

fn sorted_pairs(counts: BTreeMap<(String, String), u64>) -> Vec<(String, u64)> {
    let mut pairs: Vec<_> = counts.into_iter().collect();
    pairs.sort_by(|((c1, v1), _), ((c2, v2), _)| category_cmp(c1, c2).then_with(|| v1.cmp(v2)));
    pairs
        .into_iter()
        .map(|((c, v), n)| (catval_key(&c, &v), n))
        .collect()
}

/// Builds and freezes every vocabulary from a training corpus.
///
/// Non-reserved entries are sorted (tags and words lexicographically,
/// category-value pairs by category order then value), so the result does
/// not depend on sentence order.
pub fn build_vocabs(train: &Corpus) -> Result<VocabSet> {
    if train.token_count() == 0 {
        return Err(Error::Data("cannot build vocabularies from an empty corpus".into()));
    }
    let mut words: BTreeMap<String, u64> = BTreeMap::new();
    let mut chars: BTreeMap<String, u64> = BTreeMap::new();
    let mut tags: BTreeMap<String, u64> = BTreeMap::new();
    let mut catvals: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut categories: BTreeMap<String, u64> = BTreeMap::new();
    let mut a_tags: BTreeMap<String, u64> = BTreeMap::new();
    let mut a_catvals: BTreeMap<(String, String), u64> = BTreeMap::new();

    for tok in train.tokens() {
        *words.entry(tok.surface.clone()).or_default() += 1;
        for ch in tok.surface.chars() {
            *chars.entry(ch.to_string()).or_default() += 1;
        }
        *tags.entry(tok.gold.full_tag()).or_default() += 1;
        for (c, v) in tok.gold.pairs() {
            *catvals.entry((c.clone(), v.clone())).or_default() += 1;
            *categories.entry(c.clone()).or_default() += 1;
        }
        if let Some(cands) = &tok.candidates {
            for a in &cands.analyses {
                *a_tags.entry(a.full_tag()).or_default() += 1;
                for (c, v) in a.pairs() {
                    *a_catvals.entry((c.clone(), v.clone())).or_default() += 1;
                    categories.entry(c.clone()).or_default();
                }
            }
        }
    }

    let mut category_order: Vec<(String, u64)> = categories.into_iter().collect();
    category_order.sort_by(|a, b| category_cmp(&a.0, &b.0));

    Ok(VocabSet {
        word: Vocab::from_counts(&[UNK], words),
        char: Vocab::from_counts(&[UNK, PAD], chars),
        tag: Vocab::from_counts(&[], tags),
        catval: Vocab::from_counts(&[BOS, EOS], sorted_pairs(catvals)),
        category: Vocab::from_counts(&[], category_order),
        analysis_tag: Vocab::from_counts(&[UNK], a_tags),
        analysis_catval: Vocab::from_counts(&[UNK], sorted_pairs(a_catvals)),
    })
}
