//! Pre-training, frozen-encoder fine-tuning and checkpoints.
//!
//! Pre-training teaches the network to reproduce the code after a change
//! from the code before it and the change's edit sequence, so it needs no
//! labels. Fine-tuning keeps both encoders fixed and trains a fresh decoder
//! on another target, here the first sentence of a commit message.

mod checkpoint;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{diff_to_pair, first_sentence, ChangePair, CommitSample};
use crate::decode::{beam_search, greedy, DecodeSession};
use crate::error::{Error, Result};
use crate::model::{CodeChangeEmbedder, EditVector, EncodedCode, ModelConfig, PreparedSample};
use crate::nn::{Gradients, Real};
use crate::tokenize::{build_vocabulary, tokenize_code, Vocabulary};

pub use checkpoint::{Checkpoint, Stage, TrainMeta, FORMAT_VERSION, MAGIC};
pub use optim::{clip_gradients, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Worker threads for per-sample gradients. Results are summed in sample
    /// order, so any value gives the same parameters.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            clip_norm: 5.0,
            seed: 13,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
            ("clip_norm", self.clip_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("moment decay rates must be below 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.jobs == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs, patience and jobs must be at least 1".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// A change with nothing but its two sides; pre-training only ever sees
/// these.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnlabeledPair {
    pub before: Vec<String>,
    pub after: Vec<String>,
}

impl From<&ChangePair> for UnlabeledPair {
    fn from(p: &ChangePair) -> Self {
        UnlabeledPair {
            before: p.before.clone(),
            after: p.after.clone(),
        }
    }
}

pub fn strip_labels(pairs: &[ChangePair]) -> Vec<UnlabeledPair> {
    pairs.iter().map(UnlabeledPair::from).collect()
}

/// Code vocabulary over both sides of the training pairs.
pub fn build_code_vocab(pairs: &[UnlabeledPair], cap: usize) -> Result<Vocabulary> {
    build_vocabulary(
        pairs
            .iter()
            .flat_map(|p| [p.before.as_slice(), p.after.as_slice()]),
        cap,
        1,
    )
}

/// A diff with the tokens of its message's first sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSample {
    pub before: Vec<String>,
    pub after: Vec<String>,
    pub message: Vec<String>,
}

impl MessageSample {
    pub fn from_commit(c: &CommitSample) -> Result<Self> {
        let pair = diff_to_pair(&c.diff_tokens)?;
        Ok(MessageSample {
            before: pair.before,
            after: pair.after,
            message: message_tokens(&c.message)?,
        })
    }
}

pub fn message_tokens(message: &str) -> Result<Vec<String>> {
    Ok(tokenize_code(&first_sentence(message)?))
}

pub fn build_message_vocab(samples: &[MessageSample], cap: usize) -> Result<Vocabulary> {
    build_vocabulary(samples.iter().map(|s| s.message.as_slice()), cap, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One JSON object per line. Wall-clock seconds are left out so logs of
    /// identical runs compare equal.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| {
                format!(
                    "{{\"epoch\":{},\"train_loss\":{},\"valid_loss\":{}}}\n",
                    e.epoch, e.train_loss, e.valid_loss
                )
            })
            .collect()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRecord>, e| match best {
                Some(b) if b.valid_loss <= e.valid_loss => Some(b),
                _ => Some(e),
            })
    }
}

#[derive(Debug, Clone)]
pub struct Trained<T: Real> {
    pub checkpoint: Checkpoint<T>,
    pub log: TrainLog,
}

/// Loss and gradients of one sample.
trait Objective<T: Real>: Sync {
    type Sample: Sync;

    fn loss_and_grads(&self, model: &CodeChangeEmbedder<T>, s: &Self::Sample) -> Result<(f64, Gradients<T>)>;

    fn loss(&self, model: &CodeChangeEmbedder<T>, s: &Self::Sample) -> Result<f64>;
}

struct FullObjective;

impl<T: Real> Objective<T> for FullObjective {
    type Sample = PreparedSample;

    fn loss_and_grads(&self, model: &CodeChangeEmbedder<T>, s: &PreparedSample) -> Result<(f64, Gradients<T>)> {
        let mut tape = model.tape();
        let loss = model.loss_vars(&mut tape, s)?;
        let value = tape.scalar(loss).as_f64();
        Ok((value, tape.backward(loss)?))
    }

    fn loss(&self, model: &CodeChangeEmbedder<T>, s: &PreparedSample) -> Result<f64> {
        Ok(model.compute_loss(s)?.as_f64())
    }
}

/// A sample whose encoder outputs were computed once by frozen encoders.
struct FrozenSample<T> {
    sample: PreparedSample,
    encoded: EncodedCode<T>,
    edit: EditVector<T>,
}

struct DecoderObjective;

impl<T: Real> Objective<T> for DecoderObjective {
    type Sample = FrozenSample<T>;

    fn loss_and_grads(&self, model: &CodeChangeEmbedder<T>, s: &FrozenSample<T>) -> Result<(f64, Gradients<T>)> {
        let mut tape = model.tape();
        let (enc, edit) = model.encoded_constants(&mut tape, &s.encoded, &s.edit)?;
        let loss = model.decoder_loss_vars(&mut tape, &enc, edit, &s.sample)?;
        let value = tape.scalar(loss).as_f64();
        Ok((value, tape.backward(loss)?))
    }

    fn loss(&self, model: &CodeChangeEmbedder<T>, s: &FrozenSample<T>) -> Result<f64> {
        let mut tape = model.tape();
        let (enc, edit) = model.encoded_constants(&mut tape, &s.encoded, &s.edit)?;
        let loss = model.decoder_loss_vars(&mut tape, &enc, edit, &s.sample)?;
        Ok(tape.scalar(loss).as_f64())
    }
}

fn per_sample<T, O>(
    obj: &O,
    model: &CodeChangeEmbedder<T>,
    samples: &[&O::Sample],
    jobs: usize,
) -> Result<Vec<(f64, Gradients<T>)>>
where
    T: Real,
    O: Objective<T>,
{
    if jobs <= 1 || samples.len() <= 1 {
        return samples.iter().map(|s| obj.loss_and_grads(model, s)).collect();
    }
    let chunk = samples.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|s| obj.loss_and_grads(model, s)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for h in handles {
            out.extend(h.join().expect("gradient worker panicked")?);
        }
        Ok(out)
    })
}

fn mean_loss<T: Real, O: Objective<T>>(obj: &O, model: &CodeChangeEmbedder<T>, samples: &[O::Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += obj.loss(model, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch training with early stopping. Returns the parameters of the
/// epoch with the lowest validation loss (training loss when there is no
/// validation data) and the per-epoch log.
fn fit<T: Real, O: Objective<T>>(
    obj: &O,
    model: &mut CodeChangeEmbedder<T>,
    train: &[O::Sample],
    valid: &[O::Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(CodeChangeEmbedder<T>, usize, f64, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let mut adam = Adam::new(model.params(), cfg);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut train_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<&O::Sample> = batch.iter().map(|&i| &train[i]).collect();
            let results = per_sample(obj, model, &samples, cfg.jobs)?;
            let mut grads = Gradients::new(model.params().len());
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
                }
                train_total += loss;
                grads.accumulate(g);
            }
            grads.scale(T::from_f64(1.0 / batch.len() as f64));
            adam.step(model.params_mut(), &mut grads)?;
        }
        let train_loss = train_total / train.len() as f64;
        let valid_loss = if valid.is_empty() {
            mean_loss(obj, model, train)?
        } else {
            mean_loss(obj, model, valid)?
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);
        if valid_loss < best.2 {
            best = (model.clone(), epoch, valid_loss);
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    Ok((best.0, best.1, best.2, log))
}

/// Unsupervised pre-training on change pairs.
pub fn pretrain<T: Real>(
    train: &[UnlabeledPair],
    valid: &[UnlabeledPair],
    code_vocab: Vocabulary,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Trained<T>> {
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let mut model = CodeChangeEmbedder::<T>::new(model_cfg, code_vocab.clone(), code_vocab)?;
    let prep = |p: &UnlabeledPair| model.prepare_pair(&p.before, &p.after);
    let train_s: Vec<_> = train.iter().map(prep).collect();
    let valid_s: Vec<_> = valid.iter().map(prep).collect();
    let (best, best_epoch, best_loss, log) = fit(&FullObjective, &mut model, &train_s, &valid_s, cfg, on_epoch)?;
    Ok(Trained {
        checkpoint: Checkpoint {
            model: best,
            meta: TrainMeta {
                stage: Stage::Pretrained,
                best_epoch,
                epochs_run: log.epochs.len(),
                best_valid_loss: Some(best_loss),
                seed: cfg.seed,
            },
        },
        log,
    })
}

/// A model whose encoders are copied bit-for-bit from `base` and whose
/// decoder and output head are freshly initialized for `output_vocab`.
pub fn replace_decoder<T: Real>(base: &CodeChangeEmbedder<T>, output_vocab: Vocabulary, seed: u64) -> Result<CodeChangeEmbedder<T>> {
    let encoders: Vec<_> = base.params().entries().iter().filter(|e| e.tag.is_encoder()).collect();
    if encoders.is_empty() {
        return Err(Error::Validation(
            "base checkpoint has no tensors tagged code-encoder or edit-encoder".into(),
        ));
    }
    let cfg = ModelConfig {
        seed,
        ..base.config().clone()
    };
    let mut model = CodeChangeEmbedder::new(cfg, base.code_vocab().clone(), output_vocab)?;
    for e in encoders {
        let id = model.params().require(&e.name)?;
        if model.params().entry(id).tag != e.tag || model.params().tensor(id).shape() != e.tensor.shape() {
            return Err(Error::Validation(format!("encoder tensor {} does not fit the model", e.name)));
        }
        *model.params_mut().tensor_mut(id) = e.tensor.clone();
    }
    Ok(model)
}

/// Fine-tunes a new decoder on commit messages with both encoders frozen.
pub fn finetune_messages<T: Real>(
    base: &Checkpoint<T>,
    train: &[MessageSample],
    valid: &[MessageSample],
    message_vocab: Vocabulary,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Trained<T>> {
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let mut model = replace_decoder(&base.model, message_vocab, cfg.seed)?;
    let freeze = |s: &MessageSample| -> Result<FrozenSample<T>> {
        let sample = model.prepare(&s.before, &s.after, &s.message);
        let encoded = model.encode_code(&sample.code_ids)?;
        let edit = model.encode_edit(&sample.edit)?;
        Ok(FrozenSample { sample, encoded, edit })
    };
    let train_s = train.iter().map(freeze).collect::<Result<Vec<_>>>()?;
    let valid_s = valid.iter().map(freeze).collect::<Result<Vec<_>>>()?;
    let (best, best_epoch, best_loss, log) = fit(&DecoderObjective, &mut model, &train_s, &valid_s, cfg, on_epoch)?;
    Ok(Trained {
        checkpoint: Checkpoint {
            model: best,
            meta: TrainMeta {
                stage: Stage::Finetuned,
                best_epoch,
                epochs_run: log.epochs.len(),
                best_valid_loss: Some(best_loss),
                seed: cfg.seed,
            },
        },
        log,
    })
}

/// Greedy reconstruction of `after` from `before` and their edit.
pub fn greedy_apply<T: Real>(model: &CodeChangeEmbedder<T>, before: &[String], after: &[String]) -> Result<Vec<String>> {
    let edit = model.embed_change(before, after)?;
    let session = DecodeSession::new(model, before, edit)?;
    let hyp = greedy(&session, session.default_max_len())?;
    Ok(session.tokens(&hyp))
}

/// Top-`width` message candidates for a diff, best first.
pub fn generate_message<T: Real>(
    model: &CodeChangeEmbedder<T>,
    before: &[String],
    after: &[String],
    width: usize,
) -> Result<Vec<Vec<String>>> {
    let edit = model.embed_change(before, after)?;
    let session = DecodeSession::new(model, before, edit)?;
    let hyps = beam_search(&session, width, session.default_max_len())?;
    Ok(hyps.iter().map(|h| session.tokens(h)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::EditForm;
    use crate::tokenize::DEFAULT_VOCAB_CAP;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn pairs() -> Vec<UnlabeledPair> {
        [
            ("x = 0 ;", "x = 1 ;"),
            ("y = a - b ;", "y = b - a ;"),
            ("return foo ( x ) ;", "return bar ( x ) ;"),
        ]
        .iter()
        .map(|(b, a)| UnlabeledPair {
            before: toks(b),
            after: toks(a),
        })
        .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 2,
            max_epochs: 4,
            patience: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 60,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let v = build_code_vocab(&pairs(), DEFAULT_VOCAB_CAP).unwrap();
        let r = pretrain::<f32>(&[], &pairs(), v, ModelConfig::tiny(EditForm::Compressed, 1), &small_cfg(), |_| {});
        assert!(r.is_err());
    }

    #[test]
    fn loss_decreases_on_one_sample() {
        for seed in 0..5 {
            let data = &pairs()[..1];
            let v = build_code_vocab(data, DEFAULT_VOCAB_CAP).unwrap();
            let mut model = CodeChangeEmbedder::<f64>::new(ModelConfig::tiny(EditForm::Compressed, seed), v.clone(), v).unwrap();
            let sample = model.prepare_pair(&data[0].before, &data[0].after);
            let mut adam = Adam::new(model.params(), &small_cfg());
            let mut last = f64::INFINITY;
            for step in 0..50 {
                let (loss, mut g) = FullObjective.loss_and_grads(&model, &sample).unwrap();
                assert!(loss < last, "seed {seed} step {step}: {loss} !< {last}");
                last = loss;
                adam.step(model.params_mut(), &mut g).unwrap();
            }
        }
    }

    #[test]
    fn best_epoch_has_lowest_valid_loss() {
        let data = pairs();
        let v = build_code_vocab(&data, DEFAULT_VOCAB_CAP).unwrap();
        let t = pretrain::<f32>(&data, &data[..1], v, ModelConfig::tiny(EditForm::Compressed, 2), &small_cfg(), |_| {}).unwrap();
        let best = t.checkpoint.meta.best_valid_loss.unwrap();
        assert!(t.log.epochs.iter().all(|e| best <= e.valid_loss));
        assert_eq!(t.log.best().unwrap().epoch, t.checkpoint.meta.best_epoch);
    }

    #[test]
    fn pretraining_is_deterministic_across_job_counts() {
        let data = pairs();
        let v = build_code_vocab(&data, DEFAULT_VOCAB_CAP).unwrap();
        let run = |jobs| {
            let cfg = TrainConfig { jobs, ..small_cfg() };
            pretrain::<f32>(&data, &[], v.clone(), ModelConfig::tiny(EditForm::Full, 3), &cfg, |_| {})
                .unwrap()
                .checkpoint
                .to_bytes()
                .unwrap()
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a, run(3));
    }

    #[test]
    fn finetuning_freezes_encoders() {
        let data = pairs();
        let v = build_code_vocab(&data, DEFAULT_VOCAB_CAP).unwrap();
        let base = pretrain::<f32>(&data, &[], v, ModelConfig::tiny(EditForm::Compressed, 4), &small_cfg(), |_| {})
            .unwrap()
            .checkpoint;
        let msgs: Vec<MessageSample> = data
            .iter()
            .zip(["Change literal", "Swap operands", "Rename call"])
            .map(|(p, m)| MessageSample {
                before: p.before.clone(),
                after: p.after.clone(),
                message: toks(m),
            })
            .collect();
        let mv = build_message_vocab(&msgs, DEFAULT_VOCAB_CAP).unwrap();
        let tuned = finetune_messages(&base, &msgs, &[], mv, &small_cfg(), |_| {}).unwrap().checkpoint;
        for (a, b) in base.model.params().entries().iter().zip(tuned.model.params().entries()) {
            assert_eq!(a.name, b.name);
            if a.tag.is_encoder() {
                assert_eq!(a.tensor.data(), b.tensor.data(), "{}", a.name);
            }
        }
        let dec = |c: &Checkpoint<f32>| c.model.params().tensor(c.model.params().require("dec.cell.weight").unwrap()).clone();
        assert_ne!(dec(&base), dec(&tuned));
        assert_eq!(tuned.meta.stage, Stage::Finetuned);
    }

    #[test]
    fn message_sample_from_commit() {
        let c = CommitSample {
            diff_tokens: toks("= x = <nl> - 0 <nl> + 1 <nl> = ;"),
            message: "Fix the default. Also more.".into(),
            files_changed: 1,
            whole_file_change: false,
        };
        let s = MessageSample::from_commit(&c).unwrap();
        assert_eq!(s.before, toks("x = 0 ;"));
        assert_eq!(s.after, toks("x = 1 ;"));
        assert_eq!(s.message, toks("Fix the default ."));
    }
}
