//! Dataset ingest, filtering, deduplication and splitting.
//!
//! Records are JSON lines. A change pair is
//! `{"before": [..], "after": [..], "label": ".."?}` and a commit sample is
//! `{"diff_tokens": [..], "message": "..", "files_changed": n, "whole_file_change": b}`.
//!
//! Diff token streams use one marker token per line: lines are separated by
//! [`DIFF_NEWLINE`] and each line starts with `=` (context), `-` (removed),
//! `+` (added) or a file header marker (`mmm` / `ppp`), which is skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::tokenize_code;

pub const DIFF_NEWLINE: &str = "<nl>";
pub const DIFF_CONTEXT: &str = "=";
pub const DIFF_REMOVED: &str = "-";
pub const DIFF_ADDED: &str = "+";
const DIFF_HEADERS: [&str; 2] = ["mmm", "ppp"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangePair {
    pub before: Vec<String>,
    pub after: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ChangePair {
    pub fn new(before: Vec<String>, after: Vec<String>) -> Self {
        ChangePair {
            before,
            after,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// A pair whose before or after side is empty: a file added or deleted
    /// outright.
    pub fn is_whole_file_change(&self) -> bool {
        self.before.is_empty() || self.after.is_empty()
    }

    pub fn without_label(&self) -> ChangePair {
        ChangePair::new(self.before.clone(), self.after.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitSample {
    pub diff_tokens: Vec<String>,
    pub message: String,
    pub files_changed: u32,
    pub whole_file_change: bool,
}

fn read_jsonl<T, F>(path: &Path, mut validate: F) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    F: FnMut(&T, usize) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let record: T = serde_json::from_value(value).map_err(|e| Error::Schema {
            line: lineno,
            message: e.to_string(),
        })?;
        validate(&record, lineno)?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_change_pairs(path: &Path) -> Result<Vec<ChangePair>> {
    read_jsonl(path, |p: &ChangePair, line| {
        if p.label.as_deref() == Some("") {
            return Err(Error::Schema {
                line,
                message: "label, when present, must be non-empty".into(),
            });
        }
        Ok(())
    })
}

pub fn load_commit_samples(path: &Path) -> Result<Vec<CommitSample>> {
    read_jsonl(path, |s: &CommitSample, line| {
        if s.files_changed == 0 {
            return Err(Error::Validation(format!(
                "line {line}: files_changed must be at least 1"
            )));
        }
        if s.diff_tokens.is_empty() {
            return Err(Error::Validation(format!(
                "line {line}: diff_tokens must be non-empty"
            )));
        }
        Ok(())
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Validation(e.to_string()))?);
        text.push('\n');
    }
    crate::io::write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRules {
    pub drop_whole_file: bool,
    pub drop_multi_file: bool,
    /// Inclusive bounds on the diff token count.
    pub diff_len: Option<(usize, usize)>,
    /// Messages must have strictly fewer tokens than this.
    pub message_len_below: Option<usize>,
    pub dedupe: bool,
}

impl FilterRules {
    pub fn none() -> Self {
        FilterRules {
            drop_whole_file: false,
            drop_multi_file: false,
            diff_len: None,
            message_len_below: None,
            dedupe: false,
        }
    }

    /// Whole-file and multi-file commits removed, exact duplicates dropped.
    pub fn filtered() -> Self {
        FilterRules {
            drop_whole_file: true,
            drop_multi_file: true,
            diff_len: None,
            message_len_below: None,
            dedupe: true,
        }
    }

    fn admits(&self, s: &CommitSample) -> bool {
        if self.drop_whole_file && s.whole_file_change {
            return false;
        }
        if self.drop_multi_file && s.files_changed > 1 {
            return false;
        }
        if let Some((lo, hi)) = self.diff_len {
            if s.diff_tokens.len() < lo || s.diff_tokens.len() > hi {
                return false;
            }
        }
        if let Some(bound) = self.message_len_below {
            if tokenize_code(&s.message).len() >= bound {
                return false;
            }
        }
        true
    }
}

/// Keeps the samples satisfying every enabled rule, in input order. With
/// dedupe on, only the first occurrence of each `(diff_tokens, message)`
/// survives.
pub fn filter_commits(samples: &[CommitSample], rules: &FilterRules) -> Vec<CommitSample> {
    let mut seen: HashSet<(&[String], &str)> = HashSet::new();
    samples
        .iter()
        .filter(|s| rules.admits(s))
        .filter(|s| !rules.dedupe || seen.insert((s.diff_tokens.as_slice(), s.message.as_str())))
        .cloned()
        .collect()
}

pub fn filter_change_pairs(pairs: &[ChangePair], max_len: usize) -> Vec<ChangePair> {
    pairs
        .iter()
        .filter(|p| p.before.len() <= max_len && p.after.len() <= max_len)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self> {
        let spec = SplitSpec { ratios, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!(
                "split ratios must be non-negative, got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// (train, valid, test) sizes for `n` items; the rounding remainder goes
    /// to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let part = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let valid = part(self.ratios[1]);
        let test = part(self.ratios[2]);
        (n - valid - test, valid, test)
    }
}

pub type Split<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Seeded shuffle followed by a floor-allocated three-way partition.
pub fn split_dataset<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    spec.validate()?;
    if items.len() < 3 && spec.ratios.iter().all(|r| *r > 0.0) {
        return Err(Error::Validation(format!(
            "cannot split {} items three ways",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (n_train, n_valid, _) = spec.sizes(items.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_valid]),
        pick(&order[n_train + n_valid..]),
    ))
}

/// First sentence of a commit message.
///
/// `.`, `!` and `?` end a sentence when followed by whitespace or the end
/// of the message; a newline always ends it. The earliest terminator wins
/// and a message without one is returned whole (trimmed).
pub fn first_sentence(message: &str) -> Result<String> {
    let msg = message.trim();
    if msg.is_empty() {
        return Err(Error::Validation("commit message is empty".into()));
    }
    let mut chars = msg.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '\n' | '\r' => return Ok(msg[..i].trim_end().to_string()),
            '.' | '!' | '?' => {
                let at_boundary = chars.peek().is_none_or(|&(_, next)| next.is_whitespace());
                if at_boundary {
                    return Ok(msg[..i + c.len_utf8()].to_string());
                }
            }
            _ => {}
        }
    }
    Ok(msg.to_string())
}

/// Rebuilds the before/after token sequences from a marked diff stream.
pub fn diff_to_pair<S: AsRef<str>>(diff_tokens: &[S]) -> Result<ChangePair> {
    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut start = 0usize;
    while start < diff_tokens.len() {
        let end = diff_tokens[start..]
            .iter()
            .position(|t| t.as_ref() == DIFF_NEWLINE)
            .map_or(diff_tokens.len(), |p| start + p);
        if end > start {
            let marker = diff_tokens[start].as_ref();
            let body = diff_tokens[start + 1..end].iter().map(|t| t.as_ref().to_string());
            match marker {
                DIFF_CONTEXT => {
                    let body: Vec<String> = body.collect();
                    before.extend(body.iter().cloned());
                    after.extend(body);
                }
                DIFF_REMOVED => before.extend(body),
                DIFF_ADDED => after.extend(body),
                m if DIFF_HEADERS.contains(&m) => {}
                other => {
                    return Err(Error::DiffFormat {
                        index: start,
                        message: format!("line does not start with a diff marker: {other:?}"),
                    })
                }
            }
        }
        start = end + 1;
    }
    Ok(ChangePair::new(before, after))
}
