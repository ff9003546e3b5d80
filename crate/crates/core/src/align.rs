//! Token-level Levenshtein alignment.
//!
//! [`align`] turns a before/after pair of token sequences into a column
//! sequence where every column carries an action marker plus the token on
//! each side (`None` stands for the empty padding symbol). The traceback
//! uses the fixed preference `EQUAL > REPLACE > DELETE > ADD`, so the
//! alignment of any pair is unique.
//!
//! ```
//! use editembed_core::align::{align, apply_edit, EditAction};
//!
//! let before = ["a", "b", "c"].map(String::from);
//! let after = ["a", "d", "c"].map(String::from);
//! let seq = align(&before, &after);
//! assert_eq!(seq.columns()[1].action, EditAction::Replace);
//! assert_eq!(apply_edit(&before, &seq).unwrap(), after.to_vec());
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Textual spelling of the empty padding symbol in renderings.
pub const EMPTY_TEXT: &str = "<EMPTY>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditAction {
    Equal,
    Replace,
    Add,
    Delete,
}

impl EditAction {
    pub const ALL: [EditAction; 4] = [
        EditAction::Equal,
        EditAction::Replace,
        EditAction::Add,
        EditAction::Delete,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            EditAction::Equal => "=",
            EditAction::Replace => "↔",
            EditAction::Add => "+",
            EditAction::Delete => "-",
        }
    }

    /// Dense index used by the action embedding table.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for EditAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "=" => Ok(EditAction::Equal),
            "↔" | "<->" => Ok(EditAction::Replace),
            "+" => Ok(EditAction::Add),
            "-" | "−" => Ok(EditAction::Delete),
            other => Err(Error::Validation(format!("unknown edit action {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditColumn {
    pub action: EditAction,
    pub before: Option<String>,
    pub after: Option<String>,
}

impl EditColumn {
    pub fn equal(tok: impl Into<String>) -> Self {
        let tok = tok.into();
        EditColumn {
            action: EditAction::Equal,
            before: Some(tok.clone()),
            after: Some(tok),
        }
    }

    pub fn replace(before: impl Into<String>, after: impl Into<String>) -> Self {
        EditColumn {
            action: EditAction::Replace,
            before: Some(before.into()),
            after: Some(after.into()),
        }
    }

    pub fn add(after: impl Into<String>) -> Self {
        EditColumn {
            action: EditAction::Add,
            before: None,
            after: Some(after.into()),
        }
    }

    pub fn delete(before: impl Into<String>) -> Self {
        EditColumn {
            action: EditAction::Delete,
            before: Some(before.into()),
            after: None,
        }
    }

    /// Checks the action/padding invariants of a single column.
    pub fn is_well_formed(&self) -> bool {
        match (self.action, &self.before, &self.after) {
            (EditAction::Equal, Some(b), Some(a)) => a == b,
            (EditAction::Replace, Some(b), Some(a)) => a != b,
            (EditAction::Add, None, Some(_)) => true,
            (EditAction::Delete, Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditForm {
    /// Every column, including unchanged context.
    Full,
    /// Only the changed columns.
    Compressed,
}

impl FromStr for EditForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(EditForm::Full),
            "compressed" => Ok(EditForm::Compressed),
            other => Err(Error::Config(format!("unknown edit form {other:?}"))),
        }
    }
}

impl fmt::Display for EditForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditForm::Full => "full",
            EditForm::Compressed => "compressed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditSequence {
    columns: Vec<EditColumn>,
    form: EditForm,
}

impl EditSequence {
    /// Builds a sequence after checking every column and, for compressed
    /// form, the absence of unchanged columns.
    pub fn new(columns: Vec<EditColumn>, form: EditForm) -> Result<Self> {
        if let Some(i) = columns.iter().position(|c| !c.is_well_formed()) {
            return Err(Error::Validation(format!(
                "edit column {} is malformed: {:?}",
                i + 1,
                columns[i]
            )));
        }
        if form == EditForm::Compressed && columns.iter().any(|c| c.action == EditAction::Equal)
        {
            return Err(Error::Validation(
                "compressed edit sequence contains an unchanged column".into(),
            ));
        }
        Ok(EditSequence { columns, form })
    }

    pub fn columns(&self) -> &[EditColumn] {
        &self.columns
    }

    pub fn form(&self) -> EditForm {
        self.form
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Number of columns whose action is not `Equal`.
    pub fn distance(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.action != EditAction::Equal)
            .count()
    }

    pub fn before_tokens(&self) -> Vec<String> {
        self.columns.iter().filter_map(|c| c.before.clone()).collect()
    }

    pub fn after_tokens(&self) -> Vec<String> {
        self.columns.iter().filter_map(|c| c.after.clone()).collect()
    }

    /// One column per line: `action<TAB>before<TAB>after`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            out.push_str(c.action.symbol());
            out.push('\t');
            out.push_str(c.before.as_deref().unwrap_or(EMPTY_TEXT));
            out.push('\t');
            out.push_str(c.after.as_deref().unwrap_or(EMPTY_TEXT));
            out.push('\n');
        }
        out
    }

    /// Inverse of [`EditSequence::render`].
    pub fn parse_rendered(text: &str, form: EditForm) -> Result<Self> {
        let mut columns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", parts.len()),
                });
            }
            let side = |s: &str| (s != EMPTY_TEXT).then(|| s.to_string());
            columns.push(EditColumn {
                action: parts[0].parse()?,
                before: side(parts[1]),
                after: side(parts[2]),
            });
        }
        EditSequence::new(columns, form)
    }
}

/// Aligns two token sequences with unit-cost Levenshtein distance.
pub fn align<S: AsRef<str>>(before: &[S], after: &[S]) -> EditSequence {
    let n = before.len();
    let m = after.len();
    let w = m + 1;
    let mut dist = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        dist[j] = j;
    }
    for i in 1..=n {
        dist[i * w] = i;
        for j in 1..=m {
            let sub = usize::from(before[i - 1].as_ref() != after[j - 1].as_ref());
            let diag = dist[(i - 1) * w + j - 1] + sub;
            let del = dist[(i - 1) * w + j] + 1;
            let ins = dist[i * w + j - 1] + 1;
            dist[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut columns = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i * w + j];
        if i > 0 && j > 0 {
            let b = before[i - 1].as_ref();
            let a = after[j - 1].as_ref();
            let diag = dist[(i - 1) * w + j - 1];
            if b == a && here == diag {
                columns.push(EditColumn::equal(b));
                i -= 1;
                j -= 1;
                continue;
            }
            if b != a && here == diag + 1 {
                columns.push(EditColumn::replace(b, a));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dist[(i - 1) * w + j] + 1 {
            columns.push(EditColumn::delete(before[i - 1].as_ref()));
            i -= 1;
        } else {
            columns.push(EditColumn::add(after[j - 1].as_ref()));
            j -= 1;
        }
    }
    columns.reverse();
    EditSequence {
        columns,
        form: EditForm::Full,
    }
}

/// Drops every unchanged column, keeping the order of the rest.
pub fn compress(seq: &EditSequence) -> Result<EditSequence> {
    if seq.form != EditForm::Full {
        return Err(Error::Validation(
            "compress expects a full edit sequence; input is already compressed".into(),
        ));
    }
    Ok(EditSequence {
        columns: seq
            .columns
            .iter()
            .filter(|c| c.action != EditAction::Equal)
            .cloned()
            .collect(),
        form: EditForm::Compressed,
    })
}

/// Aligns and, for [`EditForm::Compressed`], compresses.
pub fn edit_sequence<S: AsRef<str>>(before: &[S], after: &[S], form: EditForm) -> EditSequence {
    let full = align(before, after);
    match form {
        EditForm::Full => full,
        EditForm::Compressed => compress(&full).expect("align returns full form"),
    }
}

/// Replays a full edit sequence over `before`.
///
/// The before-side of `seq` must project exactly onto `before`; the first
/// disagreeing column (1-based) is reported otherwise.
pub fn apply_edit<S: AsRef<str>>(before: &[S], seq: &EditSequence) -> Result<Vec<String>> {
    if seq.form != EditForm::Full {
        return Err(Error::Validation(
            "apply_edit needs a full edit sequence; compressed sequences lack anchoring context"
                .into(),
        ));
    }
    let mut out = Vec::with_capacity(seq.columns.len());
    let mut pos = 0usize;
    for (col_idx, col) in seq.columns.iter().enumerate() {
        if let Some(expected) = &col.before {
            let found = before.get(pos).map(|s| s.as_ref());
            if found != Some(expected.as_str()) {
                return Err(Error::EditMismatch {
                    column: col_idx + 1,
                    expected: Some(expected.clone()),
                    found: found.map(str::to_string),
                });
            }
            pos += 1;
        }
        match col.action {
            EditAction::Equal => out.push(col.before.clone().unwrap_or_default()),
            EditAction::Replace | EditAction::Add => {
                out.push(col.after.clone().unwrap_or_default())
            }
            EditAction::Delete => {}
        }
    }
    if pos != before.len() {
        return Err(Error::EditMismatch {
            column: seq.columns.len() + 1,
            expected: None,
            found: Some(before[pos].as_ref().to_string()),
        });
    }
    Ok(out)
}
