//! CoNLL-U reading and writing.
//!
//! Only FORM, UPOS and FEATS feed the tagger; the remaining columns are
//! carried along so that tagged output keeps them. Analyser candidates, when
//! attached, travel in the MISC column under the `MA` key.

use std::fs;
use std::path::Path;

use super::{decompose_tag, Corpus, MorphLabel, Sentence, Token, POS};
use crate::error::{Error, Result};
use crate::morph::AnalysisSet;

const MA_KEY: &str = "MA=";

/// The CoNLL-U columns the tagger does not interpret.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConlluFields {
    pub id: Option<String>,
    pub lemma: Option<String>,
    pub xpos: Option<String>,
    pub head: Option<String>,
    pub deprel: Option<String>,
    pub deps: Option<String>,
    /// MISC entries other than `MA`.
    pub misc: Vec<String>,
}

fn field(s: &str) -> Option<String> {
    (s != "_").then(|| s.to_owned())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            '|' => out.push_str("%7C"),
            ';' => out.push_str("%3B"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    s.replace("%7C", "|").replace("%3B", ";").replace("%25", "%")
}

fn encode_candidates(set: &AnalysisSet) -> String {
    let parts: Vec<String> = set.analyses.iter().map(|l| escape(&l.full_tag())).collect();
    format!("{MA_KEY}{}", parts.join(";"))
}

fn decode_candidates(value: &str, line: usize) -> Result<AnalysisSet> {
    let mut analyses = Vec::new();
    if !value.is_empty() {
        for part in value.split(';') {
            let label = decompose_tag(&unescape(part)).map_err(|e| Error::parse(line, e.to_string()))?;
            analyses.push(label);
        }
    }
    AnalysisSet::new(analyses, "conllu").map_err(|e| Error::parse(line, e.to_string()))
}

fn parse_token(cols: &[&str], line: usize) -> Result<Token> {
    let form = cols[1];
    if form.is_empty() {
        return Err(Error::parse(line, "empty FORM"));
    }
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    if cols[3] != "_" {
        pairs.push((POS, cols[3]));
    }
    if cols[5] != "_" {
        for feat in cols[5].split('|') {
            let (c, v) = feat
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("malformed feature '{feat}'")))?;
            pairs.push((c, v));
        }
    }
    let gold = MorphLabel::from_pairs(pairs).map_err(|e| Error::parse(line, e.to_string()))?;

    let mut misc = Vec::new();
    let mut candidates = None;
    if cols[9] != "_" {
        for entry in cols[9].split('|') {
            match entry.strip_prefix(MA_KEY) {
                Some(value) => candidates = Some(decode_candidates(value, line)?),
                None => misc.push(entry.to_owned()),
            }
        }
    }

    Ok(Token {
        surface: form.to_owned(),
        gold,
        candidates,
        conllu: ConlluFields {
            id: Some(cols[0].to_owned()),
            lemma: field(cols[2]),
            xpos: field(cols[4]),
            head: field(cols[6]),
            deprel: field(cols[7]),
            deps: field(cols[8]),
            misc,
        },
    })
}

#[derive(Default)]
struct Block {
    first_line: usize,
    comments: Vec<String>,
    tokens: Vec<Token>,
    extra: Vec<(usize, String)>,
}

impl Block {
    fn is_blank(&self) -> bool {
        self.comments.is_empty() && self.tokens.is_empty() && self.extra.is_empty()
    }

    fn finish(self, index: usize) -> Result<Sentence> {
        if self.tokens.is_empty() {
            return Err(Error::parse(self.first_line, "sentence has no tokens"));
        }
        let id = self
            .comments
            .iter()
            .find_map(|c| {
                c.trim()
                    .strip_prefix("sent_id")
                    .and_then(|rest| rest.trim_start().strip_prefix('='))
                    .map(|id| id.trim().to_owned())
            })
            .unwrap_or_else(|| format!("s{}", index + 1));
        Ok(Sentence {
            id,
            tokens: self.tokens,
            comments: self.comments,
            extra_lines: self.extra,
        })
    }
}

/// Parses CoNLL-U text. LF and CRLF line endings are accepted.
pub fn parse_conllu(text: &str) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut block = Block::default();

    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !block.is_blank() {
                let done = std::mem::take(&mut block);
                sentences.push(done.finish(sentences.len())?);
            }
            continue;
        }
        if block.is_blank() {
            block.first_line = line_no;
        }
        if let Some(comment) = line.strip_prefix('#') {
            block.comments.push(comment.to_owned());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                line_no,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            block.extra.push((block.tokens.len(), line.to_owned()));
            continue;
        }
        block.tokens.push(parse_token(&cols, line_no)?);
    }
    if !block.is_blank() {
        sentences.push(block.finish(sentences.len())?);
    }

    Ok(Corpus::new("", sentences))
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut corpus = parse_conllu(&text)?;
    corpus.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(corpus)
}

fn or_blank(value: &Option<String>) -> &str {
    value.as_deref().unwrap_or("_")
}

fn token_line(token: &Token, position: usize) -> String {
    let c = &token.conllu;
    let id = c.id.clone().unwrap_or_else(|| (position + 1).to_string());
    let upos = token.gold.pos().unwrap_or("_");
    let feats: Vec<String> = token.gold.features().map(|(k, v)| format!("{k}={v}")).collect();
    let feats = if feats.is_empty() { "_".to_owned() } else { feats.join("|") };
    let mut misc = c.misc.clone();
    if let Some(set) = &token.candidates {
        misc.push(encode_candidates(set));
    }
    let misc = if misc.is_empty() { "_".to_owned() } else { misc.join("|") };
    [
        id.as_str(),
        token.surface.as_str(),
        or_blank(&c.lemma),
        upos,
        or_blank(&c.xpos),
        &feats,
        or_blank(&c.head),
        or_blank(&c.deprel),
        or_blank(&c.deps),
        &misc,
    ]
    .join("\t")
}

/// Serializes a corpus as CoNLL-U with LF line endings.
pub fn write_conllu(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for c in &sentence.comments {
            out.push('#');
            out.push_str(c);
            out.push('\n');
        }
        let mut extra = sentence.extra_lines.iter().peekable();
        for (i, token) in sentence.tokens.iter().enumerate() {
            while let Some((_, line)) = extra.next_if(|(pos, _)| *pos <= i) {
                out.push_str(line);
                out.push('\n');
            }
            out.push_str(&token_line(token, i));
            out.push('\n');
        }
        for (_, line) in extra {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "1\tkoer\t_\tNOUN\t_\tCase=Nom|Number=Sing\t0\troot\t_\t_\n";

    #[test]
    fn maps_upos_and_feats() {
        let c = parse_conllu(ONE).unwrap();
        assert_eq!(c.sentences.len(), 1);
        let t = &c.sentences[0].tokens[0];
        assert_eq!(t.surface, "koer");
        assert_eq!(t.gold.full_tag(), "POS=NOUN|Case=Nom|Number=Sing");
        assert!(t.candidates.is_none());
    }

    #[test]
    fn empty_feats() {
        let c = parse_conllu("1\t.\t.\tPUNCT\t_\t_\t1\tpunct\t_\t_\n").unwrap();
        assert_eq!(c.sentences[0].tokens[0].gold.full_tag(), "POS=PUNCT");
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(parse_conllu("").unwrap().is_empty());
        assert!(parse_conllu("\n\n\r\n").unwrap().is_empty());
    }

    #[test]
    fn bad_column_count_names_line() {
        let text = format!("# sent_id = a\n{ONE}2\tbad\tline\n");
        match parse_conllu(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_feature_is_error() {
        let text = "1\tx\t_\tNOUN\t_\tCase=Nom|Case=Gen\t_\t_\t_\t_\n";
        assert!(matches!(parse_conllu(text), Err(Error::Parse { line: 1, .. })));
        let text = "1\tx\t_\tNOUN\t_\tPOS=Adj\t_\t_\t_\t_\n";
        assert!(parse_conllu(text).is_err());
    }

    #[test]
    fn skips_multiword_and_empty_nodes_but_keeps_them() {
        let text = "# sent_id = mw\n1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\tde\tADP\t_\t_\t0\troot\t_\t_\n\
                    2\tel\tel\tDET\t_\t_\t1\tdet\t_\t_\n2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let c = parse_conllu(text).unwrap();
        let s = &c.sentences[0];
        assert_eq!(s.id, "mw");
        assert_eq!(s.tokens.len(), 2);
        assert_eq!(s.extra_lines.len(), 2);
        assert_eq!(write_conllu(&c), text);
    }

    #[test]
    fn crlf_is_accepted_and_lf_written() {
        let text = "1\ta\t_\tX\t_\t_\t_\t_\t_\t_\r\n\r\n";
        let c = parse_conllu(text).unwrap();
        assert_eq!(write_conllu(&c), "1\ta\t_\tX\t_\t_\t_\t_\t_\t_\n\n");
    }

    #[test]
    fn candidates_round_trip_through_misc() {
        let a = decompose_tag("POS=Noun|Case=Gen").unwrap();
        let b = decompose_tag("_").unwrap();
        let set = AnalysisSet::new(vec![a, b], "lex").unwrap();
        let tok = Token::new("koera", decompose_tag("POS=Noun").unwrap()).with_candidates(set);
        let mut tok_misc = tok.clone();
        tok_misc.conllu.misc.push("SpaceAfter=No".into());
        let corpus = Corpus::new("", vec![Sentence::new("s1", vec![tok_misc]).unwrap()]);
        let text = write_conllu(&corpus);
        assert!(text.contains("SpaceAfter=No|MA=POS=Noun%7CCase=Gen;_"));
        let back = parse_conllu(&text).unwrap();
        let t = &back.sentences[0].tokens[0];
        assert_eq!(t.candidates.as_ref().unwrap().analyses, corpus.sentences[0].tokens[0].candidates.as_ref().unwrap().analyses);
        assert_eq!(t.conllu.misc, vec!["SpaceAfter=No".to_owned()]);

        let empty = Token::new("x", MorphLabel::empty()).with_candidates(AnalysisSet::default());
        let corpus = Corpus::new("", vec![Sentence::new("s1", vec![empty]).unwrap()]);
        let back = parse_conllu(&write_conllu(&corpus)).unwrap();
        assert_eq!(back.sentences[0].tokens[0].candidates.as_ref().unwrap().len(), 0);
    }
}
