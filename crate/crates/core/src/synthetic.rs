//! Small generated corpora for smoke runs and tests.
//!
//! Eight parametric edit classes (a literal change, a boolean flip, two
//! method renames, two guard insertions and two operand swaps) are planted
//! into statement templates with canonical identifier names. Members of a
//! class share the changed tokens and differ only in surrounding code, which
//! is what transfer evaluation probes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{align, EditAction};
use crate::corpus::{ChangePair, CommitSample, DIFF_ADDED, DIFF_CONTEXT, DIFF_NEWLINE, DIFF_REMOVED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditClass {
    pub label: &'static str,
    pub message: &'static str,
    before: &'static str,
    after: &'static str,
}

pub const CLASSES: [EditClass; 8] = [
    EditClass {
        label: "literal-change",
        message: "Change default value",
        before: "VARIABLE_0 = 0 ;",
        after: "VARIABLE_0 = 1 ;",
    },
    EditClass {
        label: "boolean-flip",
        message: "Disable flag by default",
        before: "VARIABLE_1 = true ;",
        after: "VARIABLE_1 = false ;",
    },
    EditClass {
        label: "rename-get",
        message: "Use fetch instead of get",
        before: "VARIABLE_2 = VARIABLE_0 . get ( ) ;",
        after: "VARIABLE_2 = VARIABLE_0 . fetch ( ) ;",
    },
    EditClass {
        label: "rename-add",
        message: "Use put instead of add",
        before: "VARIABLE_0 . add ( VARIABLE_1 ) ;",
        after: "VARIABLE_0 . put ( VARIABLE_1 ) ;",
    },
    EditClass {
        label: "null-guard",
        message: "Add null check",
        before: "VARIABLE_0 . run ( ) ;",
        after: "if ( VARIABLE_0 != null ) VARIABLE_0 . run ( ) ;",
    },
    EditClass {
        label: "empty-guard",
        message: "Skip empty input",
        before: "METHOD_0 ( VARIABLE_1 ) ;",
        after: "if ( ! VARIABLE_1 . isEmpty ( ) ) METHOD_0 ( VARIABLE_1 ) ;",
    },
    EditClass {
        label: "swap-subtraction",
        message: "Fix subtraction order",
        before: "VARIABLE_2 = VARIABLE_0 - VARIABLE_1 ;",
        after: "VARIABLE_2 = VARIABLE_1 - VARIABLE_0 ;",
    },
    EditClass {
        label: "swap-division",
        message: "Fix division order",
        before: "VARIABLE_2 = VARIABLE_0 / VARIABLE_1 ;",
        after: "VARIABLE_2 = VARIABLE_1 / VARIABLE_0 ;",
    },
];

/// Surrounding code; `@` marks where the edited statement goes and `%`
/// where the filler statement goes.
const CONTEXTS: [&str; 2] = [
    "if ( VARIABLE_5 > 0 ) { @ % }",
    "while ( VARIABLE_6 ) { % @ }",
];

const FILLERS: [&str; 8] = [
    "VARIABLE_3 = VARIABLE_4 + 2 ;",
    "METHOD_1 ( VARIABLE_3 ) ;",
    "VARIABLE_4 ++ ;",
    "return VARIABLE_3 ;",
    "VARIABLE_3 = METHOD_2 ( ) ;",
    "VARIABLE_4 = VARIABLE_4 * 3 ;",
    "METHOD_1 ( VARIABLE_4 , 5 ) ;",
    "VARIABLE_3 += VARIABLE_4 ;",
];

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn instantiate(context: &str, stmt: &str, filler: &str) -> Vec<String> {
    let mut out = Vec::new();
    for t in context.split_whitespace() {
        match t {
            "@" => out.extend(toks(stmt)),
            "%" => out.extend(toks(filler)),
            other => out.push(other.to_string()),
        }
    }
    out
}

/// A change of `class` in context `context` with filler `filler`.
pub fn change(class: &EditClass, context: usize, filler: usize) -> ChangePair {
    let ctx = CONTEXTS[context % CONTEXTS.len()];
    let fill = FILLERS[filler % FILLERS.len()];
    ChangePair::new(instantiate(ctx, class.before, fill), instantiate(ctx, class.after, fill)).with_label(class.label)
}

/// Labeled transfer benchmark: every class in both contexts with five
/// fillers each, 80 pairs in class order.
pub fn transfer_corpus(seed: u64) -> Vec<ChangePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in &CLASSES {
        for context in 0..CONTEXTS.len() {
            let mut fillers: Vec<usize> = (0..FILLERS.len()).collect();
            fillers.shuffle(&mut rng);
            for &f in &fillers[..5] {
                out.push(change(class, context, f));
            }
        }
    }
    out
}

/// `n` random unlabeled changes drawn over classes, contexts and fillers.
pub fn pretraining_corpus(n: usize, seed: u64) -> Vec<ChangePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let class = &CLASSES[rng.gen_range(0..CLASSES.len())];
            change(class, rng.gen_range(0..CONTEXTS.len()), rng.gen_range(0..FILLERS.len())).without_label()
        })
        .collect()
}

/// Renders a pair as a marked diff token stream that
/// [`crate::corpus::diff_to_pair`] reverses exactly.
pub fn pair_to_diff(pair: &ChangePair) -> Vec<String> {
    let seq = align(&pair.before, &pair.after);
    let mut out: Vec<String> = Vec::new();
    let mut line = |marker: &str, body: &mut Vec<String>| {
        if body.is_empty() {
            return;
        }
        if !out.is_empty() {
            out.push(DIFF_NEWLINE.to_string());
        }
        out.push(marker.to_string());
        out.append(body);
    };
    let (mut same, mut removed, mut added) = (Vec::new(), Vec::new(), Vec::new());
    for col in seq.columns() {
        if col.action == EditAction::Equal {
            line(DIFF_REMOVED, &mut removed);
            line(DIFF_ADDED, &mut added);
            same.extend(col.before.clone());
        } else {
            line(DIFF_CONTEXT, &mut same);
            removed.extend(col.before.clone());
            added.extend(col.after.clone());
        }
    }
    line(DIFF_CONTEXT, &mut same);
    line(DIFF_REMOVED, &mut removed);
    line(DIFF_ADDED, &mut added);
    out
}

/// `n` single-file commits whose message is fixed by the edit class.
pub fn commit_corpus(n: usize, seed: u64) -> Vec<CommitSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = &CLASSES[i % CLASSES.len()];
            let pair = change(class, rng.gen_range(0..CONTEXTS.len()), rng.gen_range(0..FILLERS.len()));
            CommitSample {
                diff_tokens: pair_to_diff(&pair),
                message: format!("{}.\n\nDetails follow in the body.", class.message),
                files_changed: 1,
                whole_file_change: false,
            }
        })
        .collect()
}
