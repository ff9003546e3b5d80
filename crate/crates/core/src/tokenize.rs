//! Tokenization, identifier canonicalization and vocabularies.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits source text on whitespace; every ASCII punctuation character
/// except `_` becomes its own token.
pub fn tokenize_code(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_ascii_punctuation() && ch != '_' {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdentifierKind {
    Variable,
    Type,
    Method,
}

impl IdentifierKind {
    pub fn prefix(self) -> &'static str {
        match self {
            IdentifierKind::Variable => "VARIABLE",
            IdentifierKind::Type => "TYPE",
            IdentifierKind::Method => "METHOD",
        }
    }

    fn slot(self) -> usize {
        match self {
            IdentifierKind::Variable => 0,
            IdentifierKind::Type => 1,
            IdentifierKind::Method => 2,
        }
    }
}

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally",
    "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface",
    "long", "native", "new", "package", "private", "protected", "public", "return", "short",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while", "true", "false", "null", "var",
];

fn is_generic_name(tok: &str) -> bool {
    ["VARIABLE_", "TYPE_", "METHOD_"].iter().any(|p| {
        tok.strip_prefix(p)
            .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
    })
}

/// Heuristic identifier classifier for raw-text fixtures: a token followed
/// by `(` is a method, a capitalized token is a type, any other identifier
/// is a variable. Keywords, literals, punctuation and already-generic names
/// are left alone.
pub fn classify_identifier(tokens: &[String], idx: usize) -> Option<IdentifierKind> {
    let tok = tokens[idx].as_str();
    let first = tok.chars().next()?;
    if !(first.is_alphabetic() || first == '_' || first == '$') {
        return None;
    }
    if JAVA_KEYWORDS.contains(&tok) || is_generic_name(tok) {
        return None;
    }
    if tokens.get(idx + 1).map(String::as_str) == Some("(") {
        Some(IdentifierKind::Method)
    } else if first.is_uppercase() {
        Some(IdentifierKind::Type)
    } else {
        Some(IdentifierKind::Variable)
    }
}

/// Original identifier to generic name mapping, in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMap {
    entries: Vec<(String, String)>,
    counters: [usize; 3],
}

impl CanonicalMap {
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: IdentifierKind) -> usize {
        self.counters[kind.slot()]
    }

    pub fn generic_for(&self, original: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(o, _)| o == original)
            .map(|(_, g)| g.as_str())
    }

    pub fn original_for(&self, generic: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, g)| g == generic)
            .map(|(o, _)| o.as_str())
    }

    fn assign(&mut self, original: &str, kind: IdentifierKind) -> String {
        if let Some(g) = self.generic_for(original) {
            return g.to_string();
        }
        self.counters[kind.slot()] += 1;
        let generic = format!("{}_{}", kind.prefix(), self.counters[kind.slot()]);
        self.entries.push((original.to_string(), generic.clone()));
        generic
    }

    /// Maps generic names back to their originals; other tokens pass through.
    pub fn decanonicalize(&self, tokens: &[String]) -> Vec<String> {
        let inverse: HashMap<&str, &str> = self
            .entries
            .iter()
            .map(|(o, g)| (g.as_str(), o.as_str()))
            .collect();
        tokens
            .iter()
            .map(|t| inverse.get(t.as_str()).map_or_else(|| t.clone(), |o| o.to_string()))
            .collect()
    }
}

/// Replaces identifiers in both versions of a change with generic names.
///
/// Numbering follows first occurrence scanning `before` and then `after`, so
/// an identifier shared by both versions gets one name.
pub fn canonicalize_pair<F>(
    before: &[String],
    after: &[String],
    classify: F,
) -> (Vec<String>, Vec<String>, CanonicalMap)
where
    F: Fn(&[String], usize) -> Option<IdentifierKind>,
{
    let mut map = CanonicalMap::default();
    let rewrite = |seq: &[String], map: &mut CanonicalMap| -> Vec<String> {
        (0..seq.len())
            .map(|i| match map.generic_for(&seq[i]) {
                Some(g) => g.to_string(),
                None => match classify(seq, i) {
                    Some(kind) => map.assign(&seq[i], kind),
                    None => seq[i].clone(),
                },
            })
            .collect()
    };
    let b = rewrite(before, &mut map);
    let a = rewrite(after, &mut map);
    (b, a, map)
}

pub const PAD: &str = "<PAD>";
pub const SOS: &str = "<SOS>";
pub const EOS: &str = "<EOS>";
pub const UNK: &str = "<UNK>";
pub const EMPTY: &str = "<EMPTY>";

/// Reserved symbols occupy the lowest ids, in this order.
pub const RESERVED: [&str; 9] = [
    PAD, SOS, EOS, UNK, EMPTY, "<EQUAL>", "<REPLACE>", "<ADD>", "<DELETE>",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const PAD: TokenId = TokenId(0);
    pub const SOS: TokenId = TokenId(1);
    pub const EOS: TokenId = TokenId(2);
    pub const UNK: TokenId = TokenId(3);
    pub const EMPTY: TokenId = TokenId(4);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self.index() < RESERVED.len()
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const VOCAB_HEADER: &str = "# editembed-vocab v1";
pub const DEFAULT_VOCAB_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn reserved_only() -> Self {
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect())
            .expect("reserved symbols are distinct")
    }

    /// Builds a vocabulary from a full id-ordered token list whose prefix
    /// must be the reserved symbols.
    pub fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        if id_to_token.len() < RESERVED.len()
            || id_to_token.iter().zip(RESERVED).any(|(a, b)| a != b)
        {
            return Err(Error::Validation(
                "vocabulary must start with the reserved symbols".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            id_to_token,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id.index()).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, seq: &[S]) -> Vec<TokenId> {
        seq.iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(TokenId::UNK))
            .collect()
    }

    /// Reserved ids are dropped except UNK, which prints as `<UNK>`.
    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or_else(|| {
                Error::Validation(format!(
                    "token id {id} out of range for vocabulary of size {}",
                    self.len()
                ))
            })?;
            if id == TokenId::UNK || !id.is_reserved() {
                out.push(tok.to_string());
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 8);
        s.push_str(VOCAB_HEADER);
        s.push('\n');
        for t in &self.id_to_token {
            s.push_str(&t.replace('\\', "\\\\").replace('\n', "\\n"));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        match lines.next() {
            Some(VOCAB_HEADER) => {}
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {VOCAB_HEADER:?}, found {other:?}"),
                })
            }
        }
        let mut tokens: Vec<String> = lines.map(unescape).collect();
        // trailing newline leaves one empty element
        if tokens.last().is_some_and(String::is_empty) {
            tokens.pop();
        }
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn unescape(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Frequency-ranked vocabulary: descending count, ties broken
/// lexicographically, tokens under `min_freq` excluded, total size ≤ `cap`.
pub fn build_vocabulary<'a, I, S>(corpus: I, cap: usize, min_freq: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    if cap <= RESERVED.len() {
        return Err(Error::Config(format!(
            "vocabulary cap {cap} must exceed the {} reserved symbols",
            RESERVED.len()
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in corpus {
        for t in seq {
            let t = t.as_ref();
            if !RESERVED.contains(&t) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_freq)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(
        ranked
            .into_iter()
            .take(cap - RESERVED.len())
            .map(|(t, _)| t.to_string()),
    );
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize_code("a = b;"), toks("a = b ;"));
        assert!(tokenize_code("").is_empty());
        assert_eq!(tokenize_code("foo(bar, 1)"), toks("foo ( bar , 1 )"));
        assert_eq!(tokenize_code("my_var+=2"), toks("my_var + = 2"));
    }

    #[test]
    fn canonicalize_shared_identifiers() {
        let only_ids = |s: &[String], i: usize| (s[i] != "=").then_some(IdentifierKind::Variable);
        let (b, a, map) = canonicalize_pair(&toks("x = x"), &toks("x = y"), only_ids);
        assert_eq!(b, toks("VARIABLE_1 = VARIABLE_1"));
        assert_eq!(a, toks("VARIABLE_1 = VARIABLE_2"));
        assert_eq!(map.count(IdentifierKind::Variable), 2);
    }

    #[test]
    fn canonicalize_without_identifiers() {
        let (b, a, map) = canonicalize_pair(&toks("1 + 2"), &toks("( 3 )"), classify_identifier);
        assert_eq!(b, toks("1 + 2"));
        assert_eq!(a, toks("( 3 )"));
        assert!(map.is_empty());
    }

    #[test]
    fn heuristic_classifier() {
        let t = toks("List foo ( bar ) return null");
        assert_eq!(classify_identifier(&t, 0), Some(IdentifierKind::Type));
        assert_eq!(classify_identifier(&t, 1), Some(IdentifierKind::Method));
        assert_eq!(classify_identifier(&t, 2), None);
        assert_eq!(classify_identifier(&t, 3), Some(IdentifierKind::Variable));
        assert_eq!(classify_identifier(&t, 5), None);
        assert_eq!(classify_identifier(&t, 6), None);
    }

    #[test]
    fn vocabulary_frequency_order() {
        let corpus = [toks("a a b")];
        let v = build_vocabulary(corpus.iter().map(Vec::as_slice), 100, 1).unwrap();
        assert!(v.id("a").unwrap() < v.id("b").unwrap());
        assert_eq!(v.id("a").unwrap().index(), RESERVED.len());
    }

    #[test]
    fn empty_corpus_gives_reserved_only() {
        let v = build_vocabulary(std::iter::empty::<&[String]>(), 100, 1).unwrap();
        assert_eq!(v, Vocabulary::reserved_only());
    }

    #[test]
    fn cap_must_exceed_reserved() {
        let corpus = [toks("a")];
        assert!(build_vocabulary(corpus.iter().map(Vec::as_slice), RESERVED.len(), 1).is_err());
    }

    #[test]
    fn min_freq_excludes_rare() {
        let corpus = [toks("a a b")];
        let v = build_vocabulary(corpus.iter().map(Vec::as_slice), 100, 2).unwrap();
        assert!(v.contains("a"));
        assert!(!v.contains("b"));
    }

    #[test]
    fn encode_decode() {
        let corpus = [toks("x y z")];
        let v = build_vocabulary(corpus.iter().map(Vec::as_slice), 100, 1).unwrap();
        let s = toks("z y x");
        assert_eq!(v.decode(&v.encode(&s)).unwrap(), s);
        assert_eq!(v.encode(&toks("w")), vec![TokenId::UNK]);
        assert_eq!(v.decode(&[TokenId::UNK]).unwrap(), vec![UNK.to_string()]);
        assert_eq!(
            v.decode(&[TokenId::SOS, v.id("x").unwrap(), TokenId::EOS]).unwrap(),
            toks("x")
        );
        assert!(v.decode(&[TokenId(999)]).is_err());
    }

    #[test]
    fn vocabulary_text_round_trip() {
        let corpus = [vec!["a\\b".to_string(), "new\nline".to_string(), "c".to_string()]];
        let v = build_vocabulary(corpus.iter().map(Vec::as_slice), 100, 1).unwrap();
        let text = v.to_text();
        assert!(text.starts_with(VOCAB_HEADER));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_text(), text);
    }
}
