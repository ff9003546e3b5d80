//! Metrics and experiment protocols.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ChangePair;
use crate::decode::generate;
use crate::error::{Error, Result};
use crate::model::{CodeChangeEmbedder, EditVector};
use crate::nn::Real;

fn check_lengths(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Validation(format!(
            "{hyps} hypotheses but {refs} references"
        )));
    }
    if refs == 0 {
        return Err(Error::Validation("empty evaluation set".into()));
    }
    Ok(())
}

/// Fraction of positions where the hypothesis equals the reference.
pub fn exact_match_accuracy<S: AsRef<str> + PartialEq>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64> {
    check_lengths(hyps.len(), refs.len())?;
    let hits = hyps.iter().zip(refs).filter(|(h, r)| h == r).count();
    Ok(hits as f64 / refs.len() as f64)
}

/// Fraction of positions where any of the first `k` ranked candidates equals
/// the reference.
pub fn top_k_accuracy<S: AsRef<str> + PartialEq>(candidates: &[Vec<Vec<S>>], refs: &[Vec<S>], k: usize) -> Result<f64> {
    check_lengths(candidates.len(), refs.len())?;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let hits = candidates
        .iter()
        .zip(refs)
        .filter(|(c, r)| c.iter().take(k).any(|h| h == *r))
        .count();
    Ok(hits as f64 / refs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// In `[0, 100]`.
    pub bleu: f64,
    /// Clipped n-gram precisions for n = 1..4. An order with no hypothesis
    /// n-grams anywhere in the corpus counts as 1.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub matches: [u64; 4],
    pub totals: [u64; 4],
    pub hypothesis_length: u64,
    pub reference_length: u64,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus-level BLEU-4 with pooled clipped counts and no smoothing.
pub fn corpus_bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<BleuReport> {
    check_lengths(hyps.len(), refs.len())?;
    let mut matches = [0u64; 4];
    let mut totals = [0u64; 4];
    let (mut c, mut r) = (0u64, 0u64);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len() as u64;
        r += rf.len() as u64;
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(rf, n);
            for (g, &count) in &hc {
                matches[n - 1] += count.min(rc.get(g).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }
    let mut precisions = [1.0; 4];
    for n in 0..4 {
        if totals[n] > 0 {
            precisions[n] = matches[n] as f64 / totals[n] as f64;
        }
    }
    let brevity_penalty = if c > r {
        1.0
    } else if c == 0 {
        if r == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let bleu = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        matches,
        totals,
        hypothesis_length: c,
        reference_length: r,
    })
}

/// Something that can embed a change and re-apply it to other code.
pub trait EditApplier: Sync {
    type Edit;

    fn embed(&self, before: &[String], after: &[String]) -> Result<Self::Edit>;

    /// Ranked candidate after-sequences, best first.
    fn apply(&self, edit: &Self::Edit, before: &[String]) -> Result<Vec<Vec<String>>>;
}

/// The network with a fixed beam width.
pub struct BeamApplier<'m, T: Real> {
    pub model: &'m CodeChangeEmbedder<T>,
    pub width: usize,
}

impl<T: Real> EditApplier for BeamApplier<'_, T> {
    type Edit = EditVector<T>;

    fn embed(&self, before: &[String], after: &[String]) -> Result<EditVector<T>> {
        self.model.embed_change(before, after)
    }

    fn apply(&self, edit: &EditVector<T>, before: &[String]) -> Result<Vec<Vec<String>>> {
        Ok(generate(self.model, before, edit.clone(), self.width, None)?
            .into_iter()
            .map(|g| g.tokens)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub label: String,
    pub size: usize,
    /// Index into the evaluated pairs.
    pub representative: usize,
    pub attempts: usize,
    pub top1_matches: usize,
    pub topk_matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub k: usize,
    pub classes: Vec<ClassResult>,
    /// Labels of classes with fewer than two members.
    pub skipped: Vec<String>,
    pub attempts: usize,
    pub top1_matches: usize,
    pub topk_matches: usize,
    pub accuracy_top1: f64,
    pub accuracy_topk: f64,
}

impl TransferReport {
    pub fn all_skipped(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Applies each class representative's edit to every other member of its
/// class and counts exact reconstructions of the member's after-code.
/// Classes are visited in label order and representatives drawn from one
/// seeded generator, so the report is a function of the inputs and `seed`.
pub fn transfer_eval<A: EditApplier>(applier: &A, pairs: &[ChangePair], k: usize, seed: u64) -> Result<TransferReport>
where
    A::Edit: Sync,
{
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let label = p
            .label
            .as_deref()
            .ok_or_else(|| Error::Validation(format!("pair {i} has no label")))?;
        classes.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = TransferReport {
        k,
        classes: Vec::new(),
        skipped: Vec::new(),
        attempts: 0,
        top1_matches: 0,
        topk_matches: 0,
        accuracy_top1: 0.0,
        accuracy_topk: 0.0,
    };
    for (label, members) in classes {
        if members.len() < 2 {
            report.skipped.push(label.to_string());
            continue;
        }
        let rep = members[rng.gen_range(0..members.len())];
        let edit = applier.embed(&pairs[rep].before, &pairs[rep].after)?;
        let mut result = ClassResult {
            label: label.to_string(),
            size: members.len(),
            representative: rep,
            attempts: 0,
            top1_matches: 0,
            topk_matches: 0,
        };
        for &m in members.iter().filter(|&&m| m != rep) {
            let cands = applier.apply(&edit, &pairs[m].before)?;
            let target = &pairs[m].after;
            result.attempts += 1;
            if cands.first() == Some(target) {
                result.top1_matches += 1;
            }
            if cands.iter().take(k).any(|c| c == target) {
                result.topk_matches += 1;
            }
        }
        report.attempts += result.attempts;
        report.top1_matches += result.top1_matches;
        report.topk_matches += result.topk_matches;
        report.classes.push(result);
    }
    if report.attempts > 0 {
        report.accuracy_top1 = report.top1_matches as f64 / report.attempts as f64;
        report.accuracy_topk = report.topk_matches as f64 / report.attempts as f64;
    }
    Ok(report)
}

/// Seeded fold assignment: shuffle, then deal indices round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds for {n} items")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// Population standard deviation (divides by the number of folds).
    pub std: f64,
}

/// The data a protocol sees for one fold.
pub struct FoldData<'d, D> {
    pub fold: usize,
    pub train: Vec<&'d D>,
    pub valid: Vec<&'d D>,
    pub test: Vec<&'d D>,
}

/// k-fold cross-validation. Each fold holds out one part for testing; the
/// rest is split into training and validation with `valid_fraction` going
/// to validation. Folds may run on up to `jobs` threads; results are
/// reported in fold order either way.
pub fn cross_validate<D, F>(
    data: &[D],
    k: usize,
    valid_fraction: f64,
    seed: u64,
    jobs: usize,
    protocol: F,
) -> Result<CrossValReport>
where
    D: Sync,
    F: Fn(&FoldData<'_, D>) -> Result<f64> + Sync,
{
    if !(0.0..1.0).contains(&valid_fraction) {
        return Err(Error::Config(format!(
            "valid_fraction must be in [0, 1), got {valid_fraction}"
        )));
    }
    let folds = fold_assignment(data.len(), k, seed)?;
    let build = |fold: usize| -> FoldData<'_, D> {
        let rest: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let n_valid = ((rest.len() as f64) * valid_fraction + 1e-9).floor() as usize;
        let (valid, train) = rest.split_at(n_valid.min(rest.len().saturating_sub(1)));
        FoldData {
            fold,
            train: train.iter().map(|&i| &data[i]).collect(),
            valid: valid.iter().map(|&i| &data[i]).collect(),
            test: folds[fold].iter().map(|&i| &data[i]).collect(),
        }
    };
    let run = |fold: usize| -> Result<FoldResult> {
        let fd = build(fold);
        let metric = protocol(&fd)?;
        Ok(FoldResult {
            fold,
            train: fd.train.len(),
            valid: fd.valid.len(),
            test: fd.test.len(),
            metric,
        })
    };
    let results: Vec<FoldResult> = if jobs <= 1 {
        (0..k).map(run).collect::<Result<_>>()?
    } else {
        let per = k.div_ceil(jobs);
        std::thread::scope(|s| {
            let run = &run;
            let handles: Vec<_> = (0..k)
                .collect::<Vec<_>>()
                .chunks(per)
                .map(|c| {
                    let c = c.to_vec();
                    s.spawn(move || c.into_iter().map(run).collect::<Result<Vec<_>>>())
                })
                .collect();
            let mut out = Vec::with_capacity(k);
            for h in handles {
                out.extend(h.join().expect("fold worker panicked")?);
            }
            Ok::<_, Error>(out)
        })?
    };
    let metrics: Vec<f64> = results.iter().map(|r| r.metric).collect();
    let (mean, std) = mean_std(&metrics);
    Ok(CrossValReport {
        folds: results,
        mean,
        std,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
