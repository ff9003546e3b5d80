//! The code-change embedding network.
//!
//! Two encoders feed one decoder:
//!
//! * the code encoder runs a bidirectional recurrent pass over the code
//!   before the change and exposes per-token states for attention and
//!   copying;
//! * the edit encoder runs a bidirectional pass over the edit columns
//!   (action, before token, after token) and yields the edit vector;
//! * the decoder starts from an affine map of the code summary and the edit
//!   vector, receives the edit vector again at every step, attends over the
//!   code states and mixes a generation distribution with a copy
//!   distribution through a learned gate.
//!
//! The [`EditForm`] of the configuration decides whether the edit encoder
//! sees every column or only the changed ones.

mod source;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{edit_sequence, EditAction, EditForm, EditSequence};
use crate::error::{Error, Result};
use crate::nn::{Component, LstmCell, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::tokenize::{TokenId, Vocabulary};

pub use source::SourceMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input (code) vocabulary size; set from the vocabulary at construction.
    pub vocab_size: usize,
    /// Decoder output vocabulary size; equals `vocab_size` for pre-training.
    pub output_vocab_size: usize,
    pub token_dim: usize,
    pub action_dim: usize,
    /// Per direction.
    pub encoder_hidden: usize,
    /// Per direction; the edit vector has twice this many entries.
    pub edit_hidden: usize,
    pub decoder_hidden: usize,
    pub edit_form: EditForm,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            output_vocab_size: 0,
            token_dim: 64,
            action_dim: 8,
            encoder_hidden: 64,
            edit_hidden: 64,
            decoder_hidden: 128,
            edit_form: EditForm::Compressed,
            seed: 13,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for tests and gradient checks.
    pub fn tiny(edit_form: EditForm, seed: u64) -> Self {
        ModelConfig {
            token_dim: 4,
            action_dim: 2,
            encoder_hidden: 3,
            edit_hidden: 3,
            decoder_hidden: 4,
            edit_form,
            seed,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("output_vocab_size", self.output_vocab_size),
            ("token_dim", self.token_dim),
            ("action_dim", self.action_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("edit_hidden", self.edit_hidden),
            ("decoder_hidden", self.decoder_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn code_state_dim(&self) -> usize {
        2 * self.encoder_hidden
    }

    pub fn edit_vector_dim(&self) -> usize {
        2 * self.edit_hidden
    }

    fn decoder_input_dim(&self) -> usize {
        self.token_dim + self.edit_vector_dim()
    }
}

#[derive(Debug, Clone, Copy)]
struct ParamIds {
    code_embed: ParamId,
    code_fwd: LstmCell,
    code_bwd: LstmCell,
    action_embed: ParamId,
    edit_fwd: LstmCell,
    edit_bwd: LstmCell,
    no_edit: ParamId,
    dec_embed: ParamId,
    init_weight: ParamId,
    init_bias: ParamId,
    dec_cell: LstmCell,
    attn_weight: ParamId,
    out_weight: ParamId,
    out_bias: ParamId,
    gate_weight: ParamId,
    gate_bias: ParamId,
}

impl ParamIds {
    fn register<T: Real>(store: &mut ParamStore<T>, cfg: &ModelConfig) -> Result<Self> {
        use Component::*;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let rng = &mut rng;
        let e = cfg.token_dim;
        let code_embed = store.add(
            "code.embed",
            CodeEncoder,
            Tensor::uniform(vec![cfg.vocab_size, e], e, rng),
        )?;
        let code_fwd = LstmCell::register(store, "code.fwd", CodeEncoder, e, cfg.encoder_hidden, rng)?;
        let code_bwd = LstmCell::register(store, "code.bwd", CodeEncoder, e, cfg.encoder_hidden, rng)?;

        let column_dim = cfg.action_dim + 2 * e;
        let action_embed = store.add(
            "edit.action_embed",
            EditEncoder,
            Tensor::uniform(vec![EditAction::ALL.len(), cfg.action_dim], cfg.action_dim, rng),
        )?;
        let edit_fwd = LstmCell::register(store, "edit.fwd", EditEncoder, column_dim, cfg.edit_hidden, rng)?;
        let edit_bwd = LstmCell::register(store, "edit.bwd", EditEncoder, column_dim, cfg.edit_hidden, rng)?;
        let no_edit = store.add(
            "edit.no_edit",
            EditEncoder,
            Tensor::uniform(vec![cfg.edit_vector_dim()], cfg.edit_hidden, rng),
        )?;

        let hd = cfg.decoder_hidden;
        let dec_embed = store.add(
            "dec.embed",
            Decoder,
            Tensor::uniform(vec![cfg.output_vocab_size, e], e, rng),
        )?;
        let init_in = cfg.code_state_dim() + cfg.edit_vector_dim();
        let init_weight = store.add(
            "dec.init.weight",
            Decoder,
            Tensor::uniform(vec![init_in, 2 * hd], init_in, rng),
        )?;
        let init_bias = store.add(
            "dec.init.bias",
            Decoder,
            Tensor::uniform(vec![2 * hd], init_in, rng),
        )?;
        let dec_cell = LstmCell::register(store, "dec.cell", Decoder, cfg.decoder_input_dim(), hd, rng)?;
        let attn_weight = store.add(
            "dec.attn.weight",
            Decoder,
            Tensor::uniform(vec![hd, cfg.code_state_dim()], hd, rng),
        )?;

        let head_in = hd + cfg.code_state_dim();
        let out_weight = store.add(
            "out.weight",
            OutputHead,
            Tensor::uniform(vec![head_in, cfg.output_vocab_size], head_in, rng),
        )?;
        let out_bias = store.add(
            "out.bias",
            OutputHead,
            Tensor::uniform(vec![cfg.output_vocab_size], head_in, rng),
        )?;
        let gate_in = head_in + cfg.decoder_input_dim();
        let gate_weight = store.add(
            "out.gate.weight",
            OutputHead,
            Tensor::uniform(vec![gate_in, 1], gate_in, rng),
        )?;
        let gate_bias = store.add(
            "out.gate.bias",
            OutputHead,
            Tensor::uniform(vec![1], gate_in, rng),
        )?;
        Ok(ParamIds {
            code_embed,
            code_fwd,
            code_bwd,
            action_embed,
            edit_fwd,
            edit_bwd,
            no_edit,
            dec_embed,
            init_weight,
            init_bias,
            dec_cell,
            attn_weight,
            out_weight,
            out_bias,
            gate_weight,
            gate_bias,
        })
    }

    fn bind<T: Real>(store: &ParamStore<T>, cfg: &ModelConfig) -> Result<Self> {
        let ids = ParamIds {
            code_embed: store.require("code.embed")?,
            code_fwd: LstmCell::bind(store, "code.fwd")?,
            code_bwd: LstmCell::bind(store, "code.bwd")?,
            action_embed: store.require("edit.action_embed")?,
            edit_fwd: LstmCell::bind(store, "edit.fwd")?,
            edit_bwd: LstmCell::bind(store, "edit.bwd")?,
            no_edit: store.require("edit.no_edit")?,
            dec_embed: store.require("dec.embed")?,
            init_weight: store.require("dec.init.weight")?,
            init_bias: store.require("dec.init.bias")?,
            dec_cell: LstmCell::bind(store, "dec.cell")?,
            attn_weight: store.require("dec.attn.weight")?,
            out_weight: store.require("out.weight")?,
            out_bias: store.require("out.bias")?,
            gate_weight: store.require("out.gate.weight")?,
            gate_bias: store.require("out.gate.bias")?,
        };
        // Shapes must agree with a freshly registered model of this config.
        let mut reference = ParamStore::<T>::new();
        ParamIds::register(&mut reference, cfg)?;
        if reference.len() != store.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                reference.len(),
                store.len()
            )));
        }
        for r in reference.entries() {
            let id = store.require(&r.name)?;
            let e = store.entry(id);
            if e.tensor.shape() != r.tensor.shape() || e.tag != r.tag {
                return Err(Error::Validation(format!(
                    "parameter {} has shape {:?} / tag {}, expected {:?} / {}",
                    r.name,
                    e.tensor.shape(),
                    e.tag,
                    r.tensor.shape(),
                    r.tag
                )));
            }
        }
        Ok(ids)
    }
}

/// Per-token contextual states and the sequence summary, as tape values.
#[derive(Debug, Clone, Copy)]
pub struct EncodedVars {
    /// `len x 2·encoder_hidden`.
    pub states: Var,
    states_t: Var,
    /// `1 x 2·encoder_hidden`: forward final state then backward final state.
    pub summary: Var,
    pub len: usize,
}

/// One decoder step's outputs on a tape.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    pub generate: Var,
    pub attention: Var,
    pub gate: Var,
    pub hidden: Var,
    pub cell: Var,
}

/// Materialized code encoding, reusable across decoding steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCode<T> {
    pub states: Tensor<T>,
    pub summary: Vec<T>,
}

impl<T: Real> EncodedCode<T> {
    pub fn len(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditVector<T>(pub Vec<T>);

impl<T: Real> EditVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub hidden: Vec<T>,
    pub cell: Vec<T>,
}

/// Generation probabilities over the output vocabulary, copy probabilities
/// over source positions, and the gate mixing them.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution<T> {
    pub generate: Vec<T>,
    pub copy: Vec<T>,
    pub gate: T,
}

impl<T: Real> OutputDistribution<T> {
    /// Total mass of `gate·generate + (1 - gate)·copy`.
    pub fn total(&self) -> f64 {
        let g = self.gate.as_f64();
        let gen: f64 = self.generate.iter().map(|v| v.as_f64()).sum();
        let copy: f64 = self.copy.iter().map(|v| v.as_f64()).sum();
        g * gen + (1.0 - g) * copy
    }

    pub fn copy_mass(&self) -> f64 {
        (1.0 - self.gate.as_f64()) * self.copy.iter().map(|v| v.as_f64()).sum::<f64>()
    }

    /// Probability of every extended output id: copy mass is credited to the
    /// token at each source position.
    pub fn extended(&self, source: &SourceMap) -> Vec<f64> {
        let g = self.gate.as_f64();
        let mut out = vec![0.0; source.extended_len()];
        for (o, p) in out.iter_mut().zip(&self.generate) {
            *o = g * p.as_f64();
        }
        for (&ext, a) in source.positions().iter().zip(&self.copy) {
            out[ext] += (1.0 - g) * a.as_f64();
        }
        out
    }
}

/// Inputs and teacher-forcing targets for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub code_ids: Vec<TokenId>,
    pub source: SourceMap,
    pub edit: EditSequence,
    /// Extended target ids, ending with EOS.
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeChangeEmbedder<T: Real> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: ParamIds,
    code_vocab: Vocabulary,
    output_vocab: Vocabulary,
}

impl PartialEq for ParamIds {
    fn eq(&self, other: &Self) -> bool {
        self.code_embed == other.code_embed && self.gate_bias == other.gate_bias
    }
}

impl<T: Real> CodeChangeEmbedder<T> {
    /// Freshly initialized model; vocabulary sizes in `config` are taken
    /// from the vocabularies.
    pub fn new(mut config: ModelConfig, code_vocab: Vocabulary, output_vocab: Vocabulary) -> Result<Self> {
        config.vocab_size = code_vocab.len();
        config.output_vocab_size = output_vocab.len();
        config.validate()?;
        let mut params = ParamStore::new();
        let ids = ParamIds::register(&mut params, &config)?;
        Ok(CodeChangeEmbedder {
            config,
            params,
            ids,
            code_vocab,
            output_vocab,
        })
    }

    /// Rebuilds a model from stored parameters, checking every tensor.
    pub fn from_parts(
        config: ModelConfig,
        params: ParamStore<T>,
        code_vocab: Vocabulary,
        output_vocab: Vocabulary,
    ) -> Result<Self> {
        config.validate()?;
        if config.vocab_size != code_vocab.len() || config.output_vocab_size != output_vocab.len() {
            return Err(Error::Validation(format!(
                "vocabulary sizes {}/{} disagree with config {}/{}",
                code_vocab.len(),
                output_vocab.len(),
                config.vocab_size,
                config.output_vocab_size
            )));
        }
        let ids = ParamIds::bind(&params, &config)?;
        Ok(CodeChangeEmbedder {
            config,
            params,
            ids,
            code_vocab,
            output_vocab,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn code_vocab(&self) -> &Vocabulary {
        &self.code_vocab
    }

    pub fn output_vocab(&self) -> &Vocabulary {
        &self.output_vocab
    }

    pub fn into_parts(self) -> (ModelConfig, ParamStore<T>, Vocabulary, Vocabulary) {
        (self.config, self.params, self.code_vocab, self.output_vocab)
    }

    pub fn tape(&self) -> Tape<'_, T> {
        Tape::with_params(&self.params)
    }

    fn bidirectional(
        &self,
        tape: &mut Tape<'_, T>,
        inputs: &[Var],
        fwd: LstmCell,
        bwd: LstmCell,
    ) -> Result<(Vec<Var>, Vec<Var>)> {
        let h = fwd.hidden_dim;
        let z0 = (tape.zeros(1, h), tape.zeros(1, h));
        let forward = fwd.unroll(tape, inputs, z0)?;
        let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
        let z1 = (tape.zeros(1, h), tape.zeros(1, h));
        let mut backward = bwd.unroll(tape, &reversed, z1)?;
        backward.reverse();
        Ok((forward, backward))
    }

    pub fn encode_code_vars(&self, tape: &mut Tape<'_, T>, ids: &[TokenId]) -> Result<EncodedVars> {
        if ids.is_empty() {
            return Err(Error::Validation("cannot encode an empty code sequence".into()));
        }
        let table = tape.param(self.ids.code_embed);
        let inputs = ids
            .iter()
            .map(|id| tape.row(table, id.index()))
            .collect::<Result<Vec<_>>>()?;
        let (fwd, bwd) = self.bidirectional(tape, &inputs, self.ids.code_fwd, self.ids.code_bwd)?;
        let rows = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        let states = tape.stack_rows(&rows)?;
        let states_t = tape.transpose(states);
        let summary = tape.concat(&[*fwd.last().unwrap(), bwd[0]])?;
        Ok(EncodedVars {
            states,
            states_t,
            summary,
            len: ids.len(),
        })
    }

    fn check_form(&self, edit: &EditSequence) -> Result<()> {
        if edit.form() != self.config.edit_form {
            return Err(Error::Validation(format!(
                "model consumes {} edit sequences, got {}",
                self.config.edit_form,
                edit.form()
            )));
        }
        Ok(())
    }

    pub fn encode_edit_vars(&self, tape: &mut Tape<'_, T>, edit: &EditSequence) -> Result<Var> {
        self.check_form(edit)?;
        if edit.is_empty() {
            return Ok(tape.param(self.ids.no_edit));
        }
        let actions = tape.param(self.ids.action_embed);
        let tokens = tape.param(self.ids.code_embed);
        let side = |t: &Option<String>| match t {
            Some(tok) => self.code_vocab.id(tok).unwrap_or(TokenId::UNK),
            None => TokenId::EMPTY,
        };
        let mut inputs = Vec::with_capacity(edit.len());
        for col in edit.columns() {
            let a = tape.row(actions, col.action.index())?;
            let b = tape.row(tokens, side(&col.before).index())?;
            let c = tape.row(tokens, side(&col.after).index())?;
            inputs.push(tape.concat(&[a, b, c])?);
        }
        let (fwd, bwd) = self.bidirectional(tape, &inputs, self.ids.edit_fwd, self.ids.edit_bwd)?;
        tape.concat(&[*fwd.last().unwrap(), bwd[0]])
    }

    pub fn init_state_vars(&self, tape: &mut Tape<'_, T>, summary: Var, edit: Var) -> Result<(Var, Var)> {
        let w = tape.param(self.ids.init_weight);
        let b = tape.param(self.ids.init_bias);
        let x = tape.concat(&[summary, edit])?;
        let z = tape.linear(x, w, b)?;
        let hd = self.config.decoder_hidden;
        Ok((tape.slice_cols(z, 0, hd)?, tape.slice_cols(z, hd, hd)?))
    }

    pub fn decoder_step_vars(
        &self,
        tape: &mut Tape<'_, T>,
        prev: TokenId,
        state: (Var, Var),
        edit: Var,
        enc: &EncodedVars,
    ) -> Result<StepVars> {
        if prev.index() >= self.config.output_vocab_size {
            return Err(Error::shape(
                "decoder_step",
                format!("previous token {prev} outside output vocabulary"),
            ));
        }
        let table = tape.param(self.ids.dec_embed);
        let emb = tape.row(table, prev.index())?;
        let x = tape.concat(&[emb, edit])?;
        let (hidden, cell) = self.ids.dec_cell.step(tape, x, state)?;

        let wa = tape.param(self.ids.attn_weight);
        let query = tape.matmul(hidden, wa)?;
        let scores = tape.matmul(query, enc.states_t)?;
        let attention = tape.softmax(scores);
        let context = tape.matmul(attention, enc.states)?;

        let hc = tape.concat(&[hidden, context])?;
        let wo = tape.param(self.ids.out_weight);
        let bo = tape.param(self.ids.out_bias);
        let logits = tape.linear(hc, wo, bo)?;
        let generate = tape.softmax(logits);

        let gate_in = tape.concat(&[hc, x])?;
        let wg = tape.param(self.ids.gate_weight);
        let bg = tape.param(self.ids.gate_bias);
        let gate_logit = tape.linear(gate_in, wg, bg)?;
        let gate = tape.sigmoid(gate_logit);
        Ok(StepVars {
            generate,
            attention,
            gate,
            hidden,
            cell,
        })
    }

    /// Probability of extended id `target` under one step's mixture.
    pub fn target_prob_var(
        &self,
        tape: &mut Tape<'_, T>,
        step: &StepVars,
        target: usize,
        source: &SourceMap,
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(2);
        if target < self.config.output_vocab_size {
            let g = tape.pick_sum(step.generate, &[target])?;
            parts.push(tape.mul_scalar(g, step.gate)?);
        }
        let positions = source.positions_of(target);
        if !positions.is_empty() {
            let c = tape.pick_sum(step.attention, &positions)?;
            let not_gate = tape.one_minus(step.gate);
            parts.push(tape.mul_scalar(c, not_gate)?);
        }
        match parts.as_slice() {
            [p] => Ok(*p),
            [a, b] => tape.add(*a, *b),
            _ => Err(Error::Validation(format!(
                "target id {target} is neither generable nor copyable"
            ))),
        }
    }

    /// Teacher-forced mean negative log-likelihood of the targets.
    pub fn loss_vars(&self, tape: &mut Tape<'_, T>, sample: &PreparedSample) -> Result<Var> {
        let enc = self.encode_code_vars(tape, &sample.code_ids)?;
        let edit = self.encode_edit_vars(tape, &sample.edit)?;
        self.decoder_loss_vars(tape, &enc, edit, sample)
    }

    /// Decoder half of [`Self::loss_vars`], given encoder outputs already on
    /// the tape (as graph values or as constants when encoders are frozen).
    pub fn decoder_loss_vars(
        &self,
        tape: &mut Tape<'_, T>,
        enc: &EncodedVars,
        edit: Var,
        sample: &PreparedSample,
    ) -> Result<Var> {
        let mut state = self.init_state_vars(tape, enc.summary, edit)?;
        let mut prev = TokenId::SOS;
        let mut terms = Vec::with_capacity(sample.targets.len());
        for &target in &sample.targets {
            let step = self.decoder_step_vars(tape, prev, state, edit, enc)?;
            let p = self.target_prob_var(tape, &step, target, &sample.source)?;
            let lp = tape.log(p);
            terms.push(tape.scale(lp, -T::one()));
            state = (step.hidden, step.cell);
            prev = sample.source.input_id(target);
        }
        tape.mean(&terms)
    }

    /// Puts materialized encoder outputs on a tape as constants.
    pub fn encoded_constants<'a>(
        &self,
        tape: &mut Tape<'a, T>,
        enc: &'a EncodedCode<T>,
        edit: &'a EditVector<T>,
    ) -> Result<(EncodedVars, Var)> {
        self.check_edit_dim(edit)?;
        let (n, d) = (enc.states.shape()[0], enc.states.shape()[1]);
        let states = tape.borrowed(n, d, enc.states.data())?;
        let states_t = tape.transpose(states);
        let summary = tape.borrowed(1, enc.summary.len(), &enc.summary)?;
        let e = tape.borrowed(1, edit.dim(), edit.as_slice())?;
        Ok((
            EncodedVars {
                states,
                states_t,
                summary,
                len: n,
            },
            e,
        ))
    }

    /// Sample whose edit is `before -> after` and whose decoder target is
    /// `target`.
    pub fn prepare<S: AsRef<str>>(&self, before: &[S], after: &[S], target: &[S]) -> PreparedSample {
        let code_ids = self.code_vocab.encode(before);
        let source = SourceMap::new(before, &self.output_vocab);
        let edit = edit_sequence(before, after, self.config.edit_form);
        let mut targets: Vec<usize> = target
            .iter()
            .map(|t| source.target_id(t.as_ref(), &self.output_vocab))
            .collect();
        targets.push(TokenId::EOS.index());
        PreparedSample {
            code_ids,
            source,
            edit,
            targets,
        }
    }

    /// The pre-training sample: decode `after` from `before` and their edit.
    pub fn prepare_pair<S: AsRef<str>>(&self, before: &[S], after: &[S]) -> PreparedSample {
        self.prepare(before, after, after)
    }

    pub fn compute_loss(&self, sample: &PreparedSample) -> Result<T> {
        let mut tape = self.tape();
        let loss = self.loss_vars(&mut tape, sample)?;
        Ok(tape.scalar(loss))
    }

    pub fn encode_code(&self, ids: &[TokenId]) -> Result<EncodedCode<T>> {
        let mut tape = self.tape();
        let enc = self.encode_code_vars(&mut tape, ids)?;
        let (r, c) = tape.dims(enc.states);
        Ok(EncodedCode {
            states: Tensor::new(vec![r, c], tape.value(enc.states).to_vec())?,
            summary: tape.value(enc.summary).to_vec(),
        })
    }

    pub fn encode_edit(&self, edit: &EditSequence) -> Result<EditVector<T>> {
        let mut tape = self.tape();
        let v = self.encode_edit_vars(&mut tape, edit)?;
        Ok(EditVector(tape.value(v).to_vec()))
    }

    /// Aligns, compresses when configured, and encodes the edit.
    pub fn embed_change<S: AsRef<str>>(&self, before: &[S], after: &[S]) -> Result<EditVector<T>> {
        self.encode_edit(&edit_sequence(before, after, self.config.edit_form))
    }

    pub fn init_decoder_state(&self, enc: &EncodedCode<T>, edit: &EditVector<T>) -> Result<DecoderState<T>> {
        self.check_edit_dim(edit)?;
        let mut tape = self.tape();
        let s = tape.borrowed(1, enc.summary.len(), &enc.summary)?;
        let e = tape.borrowed(1, edit.dim(), edit.as_slice())?;
        let (h, c) = self.init_state_vars(&mut tape, s, e)?;
        Ok(DecoderState {
            hidden: tape.value(h).to_vec(),
            cell: tape.value(c).to_vec(),
        })
    }

    fn check_edit_dim(&self, edit: &EditVector<T>) -> Result<()> {
        if edit.dim() != self.config.edit_vector_dim() {
            return Err(Error::shape(
                "edit_vector",
                format!("expected {} entries, got {}", self.config.edit_vector_dim(), edit.dim()),
            ));
        }
        Ok(())
    }

    pub fn decoder_step(
        &self,
        prev: TokenId,
        state: &DecoderState<T>,
        edit: &EditVector<T>,
        enc: &EncodedCode<T>,
    ) -> Result<(OutputDistribution<T>, DecoderState<T>)> {
        let mut tape = self.tape();
        let (vars, e) = self.encoded_constants(&mut tape, enc, edit)?;
        let h = tape.borrowed(1, state.hidden.len(), &state.hidden)?;
        let c = tape.borrowed(1, state.cell.len(), &state.cell)?;
        let step = self.decoder_step_vars(&mut tape, prev, (h, c), e, &vars)?;
        Ok((
            OutputDistribution {
                generate: tape.value(step.generate).to_vec(),
                copy: tape.value(step.attention).to_vec(),
                gate: tape.scalar(step.gate),
            },
            DecoderState {
                hidden: tape.value(step.hidden).to_vec(),
                cell: tape.value(step.cell).to_vec(),
            },
        ))
    }
}

#[cfg(test)]
impl<T: Real> CodeChangeEmbedder<T> {
    pub(crate) fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.id(name)
    }
}
