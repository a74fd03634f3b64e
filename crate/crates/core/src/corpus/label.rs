use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Category name reserved for the part of speech. It always sorts first.
pub const POS: &str = "POS";

/// Ordering of categories: `POS` first, every other category lexicographically.
pub fn category_cmp(a: &str, b: &str) -> Ordering {
    match (a == POS, b == POS) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => a.cmp(b),
    }
}

/// A full morphological tag, stored as its canonical list of
/// category-value pairs.
///
/// Pairs are kept in canonical order and categories are unique, so two
/// labels are equal exactly when their serialized tags are equal. The empty
/// label serializes as `_`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MorphLabel {
    pairs: Vec<(String, String)>,
}

fn check_part(tag: &str, part: &str, what: &str, forbid_eq: bool) -> Result<()> {
    if part.is_empty() {
        return Err(Error::format(tag, format!("empty {what}")));
    }
    let bad = |c: char| c == '|' || c.is_whitespace() || (forbid_eq && c == '=');
    if part.chars().any(bad) {
        return Err(Error::format(tag, format!("illegal character in {what} '{part}'")));
    }
    Ok(())
}

impl MorphLabel {
    pub fn empty() -> Self {
        MorphLabel::default()
    }

    /// Builds a label from pairs in any order.
    pub fn from_pairs<I, C, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, V)>,
        C: Into<String>,
        V: Into<String>,
    {
        let mut pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(c, v)| (c.into(), v.into()))
            .collect();
        for (c, v) in &pairs {
            let shown = format!("{c}={v}");
            check_part(&shown, c, "category", true)?;
            check_part(&shown, v, "value", false)?;
        }
        pairs.sort_by(|a, b| category_cmp(&a.0, &b.0));
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            let tag = pairs
                .iter()
                .map(|(c, v)| format!("{c}={v}"))
                .collect::<Vec<_>>()
                .join("|");
            return Err(Error::format(&tag, format!("duplicate category '{}'", w[0].0)));
        }
        Ok(MorphLabel { pairs })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn get(&self, category: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, v)| v.as_str())
    }

    pub fn pos(&self) -> Option<&str> {
        self.get(POS)
    }

    /// Pairs other than `POS`, in canonical order.
    pub fn features(&self) -> impl Iterator<Item = &(String, String)> {
        self.pairs.iter().filter(|(c, _)| c != POS)
    }

    /// Canonical serialization: `CAT=Val` pairs joined by `|`, or `_`.
    pub fn full_tag(&self) -> String {
        if self.pairs.is_empty() {
            return "_".to_owned();
        }
        self.pairs
            .iter()
            .map(|(c, v)| format!("{c}={v}"))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Parses `_` or `CAT=Val|CAT=Val...` with pairs in any order.
pub fn decompose_tag(tag: &str) -> Result<MorphLabel> {
    if tag == "_" {
        return Ok(MorphLabel::empty());
    }
    if tag.is_empty() {
        return Err(Error::format(tag, "empty tag"));
    }
    let mut pairs = Vec::new();
    for part in tag.split('|') {
        let (c, v) = part
            .split_once('=')
            .ok_or_else(|| Error::format(tag, format!("missing '=' in '{part}'")))?;
        pairs.push((c, v));
    }
    MorphLabel::from_pairs(pairs).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(tag, message),
        other => other,
    })
}

impl fmt::Display for MorphLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.full_tag())
    }
}

impl FromStr for MorphLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        decompose_tag(s)
    }
}

impl Serialize for MorphLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.full_tag())
    }
}

impl<'de> Deserialize<'de> for MorphLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        decompose_tag(&s).map_err(serde::de::Error::custom)
    }
}
