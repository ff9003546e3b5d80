//! Command-line front end. `run` is the whole program minus process exit so
//! tests can drive it in-process.

pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use editembed_core::align::{edit_sequence, EditForm};
use editembed_core::corpus::{
    filter_change_pairs, filter_commits, load_change_pairs, load_commit_samples, split_dataset, write_jsonl, ChangePair,
};
use editembed_core::decode::{apply_change, DEFAULT_BEAM_WIDTH};
use editembed_core::eval::{corpus_bleu, cross_validate, transfer_eval, BeamApplier, BleuReport};
use editembed_core::io::write_atomic;
use editembed_core::synthetic;
use editembed_core::tokenize::{build_vocabulary, tokenize_code, Vocabulary};
use editembed_core::train::{
    finetune_messages, generate_message, message_tokens, pretrain, strip_labels, Checkpoint, EpochRecord,
    MessageSample, TrainLog,
};
use editembed_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{CommitFilter, Overrides, RunConfig};
use crate::manifest::{file_sha256, now_unix, Artifact, RunManifest};

pub const DEFAULT_SEED: u64 = 13;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "editembed", version, about = "Learn and use vector embeddings of code changes")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the token alignment of two code files.
    Align(AlignArgs),
    /// Build a token vocabulary from change pairs.
    BuildVocab(BuildVocabArgs),
    /// Pre-train the change embedder on unlabeled change pairs.
    Pretrain(PretrainArgs),
    /// Apply a donor change to new code and print the beam.
    Apply(ApplyArgs),
    /// Print the embedding of a change.
    Embed(EmbedArgs),
    /// Train a message decoder on top of frozen pre-trained encoders.
    FinetuneMsg(FinetuneArgs),
    /// Generate commit messages for a commit file.
    GenerateMsg(GenerateArgs),
    /// Transfer a representative edit within each labeled class.
    EvalTransfer(EvalTransferArgs),
    /// Corpus BLEU of generated messages.
    EvalBleu(EvalBleuArgs),
    /// k-fold fine-tuning and BLEU of the message task.
    Crossval(CrossvalArgs),
    /// Write the synthetic corpora.
    Synth(SynthArgs),
    /// Re-run a command from its manifest.
    Rerun(RerunArgs),
}

fn parse_form(s: &str) -> std::result::Result<EditForm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(long, value_parser = parse_form, default_value = "full")]
    edit_form: EditForm,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with [model], [train], [vocab] and [data] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct BuildVocabArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_parser = parse_form)]
    edit_form: Option<EditForm>,
    /// Use this vocabulary instead of building one from the training split.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Code file the change is applied to.
    #[arg(long)]
    before: PathBuf,
    /// JSON change pair whose edit is applied.
    #[arg(long)]
    donor: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam_width: usize,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    /// Pre-trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_enum)]
    filter: Option<CommitFilterArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum CommitFilterArg {
    Original,
    Filtered,
}

impl From<CommitFilterArg> for CommitFilter {
    fn from(f: CommitFilterArg) -> Self {
        match f {
            CommitFilterArg::Original => CommitFilter::Original,
            CommitFilterArg::Filtered => CommitFilter::Filtered,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam_width: usize,
}

#[derive(Debug, Args)]
struct EvalTransferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled change pairs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam_width: usize,
    /// Candidates counted by the top-k accuracy.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalBleuArgs {
    /// Commit file holding the reference messages.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "hypotheses", conflicts_with = "hypotheses")]
    checkpoint: Option<PathBuf>,
    /// Output of generate-msg, one line per commit.
    #[arg(long)]
    hypotheses: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam_width: usize,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    /// Pre-trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Folds run in parallel; training inside a fold is single-threaded.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    filter: Option<CommitFilterArg>,
    #[arg(long, default_value_t = 0.1)]
    valid_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam_width: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory receiving pretrain.jsonl, transfer.jsonl and commits.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    pretrain_size: usize,
    #[arg(long, default_value_t = 50)]
    commits: usize,
}

#[derive(Debug, Args)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Fail unless every output hashes to the value recorded in the manifest.
    #[arg(long)]
    verify: bool,
}

/// Standard streams of one invocation.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

struct Invocation {
    command: &'static str,
    argv: Vec<String>,
}

impl Invocation {
    /// Writes the manifest next to the first output.
    fn manifest(&self, config: Option<&RunConfig>, seed: Option<u64>, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
        self.manifest_at(outputs[0], config, seed, inputs, outputs)
    }

    fn manifest_at(
        &self,
        anchor: &Path,
        config: Option<&RunConfig>,
        seed: Option<u64>,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Result<()> {
        let cwd = std::env::current_dir().map_err(|e| Error::Io {
            path: PathBuf::from("."),
            source: e,
        })?;
        let m = RunManifest {
            command: self.command.to_string(),
            argv: self.argv.clone(),
            cwd,
            config: config.map_or(serde_json::Value::Null, |c| {
                serde_json::to_value(c).expect("config serializes")
            }),
            seed,
            inputs: inputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            timestamp_unix: now_unix(),
        };
        m.save(&RunManifest::path_for(anchor))
    }
}

/// Runs the program and returns its exit code: 0 on success, 1 on a usage
/// error, 2 when the data or configuration is rejected.
pub fn run<I, T>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(io.err, "{text}");
                return 1;
            }
            let _ = write!(io.out, "{text}");
            return 0;
        }
    };
    let inv = Invocation {
        command: command_name(&cli.command),
        argv: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    match dispatch(cli.command, &inv, io) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            2
        }
    }
}

/// [`run`] on the process's own streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    run(
        argv,
        &mut Io {
            out: &mut out,
            err: &mut err,
        },
    )
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Align(_) => "align",
        Command::BuildVocab(_) => "build-vocab",
        Command::Pretrain(_) => "pretrain",
        Command::Apply(_) => "apply",
        Command::Embed(_) => "embed",
        Command::FinetuneMsg(_) => "finetune-msg",
        Command::GenerateMsg(_) => "generate-msg",
        Command::EvalTransfer(_) => "eval-transfer",
        Command::EvalBleu(_) => "eval-bleu",
        Command::Crossval(_) => "crossval",
        Command::Synth(_) => "synth",
        Command::Rerun(_) => "rerun",
    }
}

fn dispatch(command: Command, inv: &Invocation, io: &mut Io<'_>) -> Result<()> {
    match command {
        Command::Align(a) => align(&a, io),
        Command::BuildVocab(a) => build_vocab(&a, inv),
        Command::Pretrain(a) => pretrain_cmd(&a, inv, io),
        Command::Apply(a) => apply(&a, io),
        Command::Embed(a) => embed(&a, io),
        Command::FinetuneMsg(a) => finetune(&a, inv, io),
        Command::GenerateMsg(a) => generate_msg(&a, inv),
        Command::EvalTransfer(a) => eval_transfer(&a, inv, io),
        Command::EvalBleu(a) => eval_bleu(&a, inv, io),
        Command::Crossval(a) => crossval(&a, inv, io),
        Command::Synth(a) => synth(&a, inv),
        Command::Rerun(a) => rerun(&a, io),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".log.jsonl");
    PathBuf::from(s)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<f32>> {
    Checkpoint::load(path)
}

fn epoch_line(err: &mut dyn Write, e: &EpochRecord) {
    let _ = writeln!(
        err,
        "epoch {:>3}  train {:.4}  valid {:.4}  {:.1}s",
        e.epoch, e.train_loss, e.valid_loss, e.seconds
    );
}

fn align(a: &AlignArgs, io: &mut Io<'_>) -> Result<()> {
    let before = tokenize_code(&read_text(&a.before)?);
    let after = tokenize_code(&read_text(&a.after)?);
    let seq = edit_sequence(&before, &after, a.edit_form);
    let _ = write!(io.out, "{}", seq.render());
    Ok(())
}

fn build_vocab(a: &BuildVocabArgs, inv: &Invocation) -> Result<()> {
    let mut cfg = RunConfig::load(a.common.config.as_deref(), &overrides(a.common.seed, None, None, None))?;
    cfg.vocab.cap = a.cap.unwrap_or(cfg.vocab.cap);
    cfg.vocab.min_freq = a.min_freq.unwrap_or(cfg.vocab.min_freq);
    let pairs = load_change_pairs(&a.data)?;
    let vocab = build_vocabulary(
        pairs.iter().flat_map(|p| [p.before.as_slice(), p.after.as_slice()]),
        cfg.vocab.cap,
        cfg.vocab.min_freq,
    )?;
    vocab.save(&a.out)?;
    inv.manifest(Some(&cfg), Some(a.common.seed), &[&a.data], &[&a.out])
}

fn overrides(seed: u64, edit_form: Option<EditForm>, jobs: Option<usize>, epochs: Option<usize>) -> Overrides {
    Overrides {
        seed,
        edit_form,
        jobs,
        epochs,
    }
}

fn save_trained(out: &Path, checkpoint: &Checkpoint<f32>, log: &TrainLog) -> Result<PathBuf> {
    checkpoint.save(out)?;
    let log_file = log_path(out);
    write_atomic(&log_file, log.to_jsonl().as_bytes())?;
    Ok(log_file)
}

fn pretrain_cmd(a: &PretrainArgs, inv: &Invocation, io: &mut Io<'_>) -> Result<()> {
    let seed = a.common.seed;
    let cfg = RunConfig::load(
        a.common.config.as_deref(),
        &overrides(seed, a.edit_form, a.train.jobs, a.train.epochs),
    )?;
    let pairs = filter_change_pairs(&load_change_pairs(&a.data)?, cfg.data.max_len);
    let (train, valid, _) = split_dataset(&strip_labels(&pairs), &cfg.data.split_spec(seed)?)?;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => build_vocabulary(
            train.iter().flat_map(|p| [p.before.as_slice(), p.after.as_slice()]),
            cfg.vocab.cap,
            cfg.vocab.min_freq,
        )?,
    };
    let _ = writeln!(
        io.err,
        "pre-training on {} pairs ({} held out for validation), vocabulary {}",
        train.len(),
        valid.len(),
        vocab.len()
    );
    let err = &mut *io.err;
    let trained = pretrain::<f32>(&train, &valid, vocab, cfg.model.clone(), &cfg.train, |e| epoch_line(err, e))?;
    let log = save_trained(&a.out, &trained.checkpoint, &trained.log)?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.vocab.as_deref());
    inputs.extend(a.common.config.as_deref());
    inv.manifest(Some(&cfg), Some(seed), &inputs, &[&a.out, &log])
}

fn load_donor(path: &Path) -> Result<ChangePair> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

fn apply(a: &ApplyArgs, io: &mut Io<'_>) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let target = tokenize_code(&read_text(&a.before)?);
    let donor = load_donor(&a.donor)?;
    for g in apply_change(&ckpt.model, &donor.before, &donor.after, &target, a.beam_width)? {
        let _ = writeln!(io.out, "{:.6}\t{}", g.log_prob, g.tokens.join(" "));
    }
    Ok(())
}

fn embed(a: &EmbedArgs, io: &mut Io<'_>) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let before = tokenize_code(&read_text(&a.before)?);
    let after = tokenize_code(&read_text(&a.after)?);
    let v = ckpt.model.embed_change(&before, &after)?;
    let text: Vec<String> = v.as_slice().iter().map(|x| x.to_string()).collect();
    let _ = writeln!(io.out, "{}", text.join(" "));
    Ok(())
}

fn message_samples(data: &Path, cfg: &RunConfig) -> Result<Vec<MessageSample>> {
    let commits = filter_commits(&load_commit_samples(data)?, &cfg.data.filter_rules());
    commits.iter().map(MessageSample::from_commit).collect()
}

fn message_vocab(train: &[MessageSample], cfg: &RunConfig) -> Result<Vocabulary> {
    build_vocabulary(train.iter().map(|s| s.message.as_slice()), cfg.vocab.cap, cfg.vocab.min_freq)
}

fn finetune(a: &FinetuneArgs, inv: &Invocation, io: &mut Io<'_>) -> Result<()> {
    let seed = a.common.seed;
    let mut cfg = RunConfig::load(
        a.common.config.as_deref(),
        &overrides(seed, None, a.train.jobs, a.train.epochs),
    )?;
    if let Some(f) = a.filter {
        cfg.data.commit_filter = f.into();
    }
    let base = load_checkpoint(&a.checkpoint)?;
    cfg.model = base.model.config().clone();
    let samples = message_samples(&a.data, &cfg)?;
    let (train, valid, _) = split_dataset(&samples, &cfg.data.split_spec(seed)?)?;
    let vocab = message_vocab(&train, &cfg)?;
    let _ = writeln!(
        io.err,
        "fine-tuning on {} commits ({} held out for validation), vocabulary {}",
        train.len(),
        valid.len(),
        vocab.len()
    );
    let err = &mut *io.err;
    let trained = finetune_messages(&base, &train, &valid, vocab, &cfg.train, |e| epoch_line(err, e))?;
    let log = save_trained(&a.out, &trained.checkpoint, &trained.log)?;
    let mut inputs = vec![a.checkpoint.as_path(), a.data.as_path()];
    inputs.extend(a.common.config.as_deref());
    inv.manifest(Some(&cfg), Some(seed), &inputs, &[&a.out, &log])
}

/// One line of generate-msg output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMessage {
    pub tokens: Vec<String>,
    pub reference: Vec<String>,
}

fn generate_all(model: &Checkpoint<f32>, samples: &[MessageSample], width: usize) -> Result<Vec<Vec<String>>> {
    samples
        .iter()
        .map(|s| {
            Ok(generate_message(&model.model, &s.before, &s.after, width)?
                .into_iter()
                .next()
                .unwrap_or_default())
        })
        .collect()
}

fn unfiltered_samples(data: &Path) -> Result<Vec<MessageSample>> {
    load_commit_samples(data)?.iter().map(MessageSample::from_commit).collect()
}

fn generate_msg(a: &GenerateArgs, inv: &Invocation) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let samples = unfiltered_samples(&a.data)?;
    let records: Vec<GeneratedMessage> = generate_all(&ckpt, &samples, a.beam_width)?
        .into_iter()
        .zip(&samples)
        .map(|(tokens, s)| GeneratedMessage {
            tokens,
            reference: s.message.clone(),
        })
        .collect();
    write_jsonl(&a.out, &records)?;
    inv.manifest(None, None, &[&a.checkpoint, &a.data], &[&a.out])
}

#[derive(Serialize)]
struct TransferOutput<'a> {
    checkpoint_sha256: String,
    seed: u64,
    beam_width: usize,
    edit_form: EditForm,
    report: &'a editembed_core::eval::TransferReport,
}

fn eval_transfer(a: &EvalTransferArgs, inv: &Invocation, io: &mut Io<'_>) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let pairs = load_change_pairs(&a.data)?;
    let applier = BeamApplier {
        model: &ckpt.model,
        width: a.beam_width,
    };
    let report = transfer_eval(&applier, &pairs, a.top_k, a.seed)?;
    if report.all_skipped() {
        let _ = writeln!(io.err, "warning: every class has fewer than two members");
    }
    let _ = writeln!(
        io.out,
        "top-1 {:.4}  top-{} {:.4}  ({} attempts)",
        report.accuracy_top1, report.k, report.accuracy_topk, report.attempts
    );
    write_json(
        &a.out,
        &TransferOutput {
            checkpoint_sha256: file_sha256(&a.checkpoint)?,
            seed: a.seed,
            beam_width: a.beam_width,
            edit_form: ckpt.model.config().edit_form,
            report: &report,
        },
    )?;
    inv.manifest(None, Some(a.seed), &[&a.checkpoint, &a.data], &[&a.out])
}

#[derive(Serialize)]
struct BleuOutput {
    source_sha256: String,
    beam_width: Option<usize>,
    exact_match: f64,
    bleu: BleuReport,
}

fn eval_bleu(a: &EvalBleuArgs, inv: &Invocation, io: &mut Io<'_>) -> Result<()> {
    let commits = load_commit_samples(&a.data)?;
    let refs: Vec<Vec<String>> = commits
        .iter()
        .map(|c| message_tokens(&c.message))
        .collect::<Result<_>>()?;
    let (hyps, source, width): (Vec<Vec<String>>, &Path, _) = match (&a.hypotheses, &a.checkpoint) {
        (Some(h), _) => {
            let mut hyps = Vec::new();
            for (i, line) in read_text(h)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let g: GeneratedMessage = serde_json::from_str(line).map_err(|e| Error::Schema {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                hyps.push(g.tokens);
            }
            (hyps, h, None)
        }
        (None, Some(c)) => {
            let ckpt = load_checkpoint(c)?;
            let samples = unfiltered_samples(&a.data)?;
            (generate_all(&ckpt, &samples, a.beam_width)?, c, Some(a.beam_width))
        }
        (None, None) => unreachable!("clap requires one of --checkpoint and --hypotheses"),
    };
    let bleu = corpus_bleu(&hyps, &refs)?;
    let exact_match = editembed_core::eval::exact_match_accuracy(&hyps, &refs)?;
    let _ = writeln!(io.out, "BLEU {:.2}  exact match {:.4}", bleu.bleu, exact_match);
    write_json(
        &a.out,
        &BleuOutput {
            source_sha256: file_sha256(source)?,
            beam_width: width,
            exact_match,
            bleu,
        },
    )?;
    inv.manifest(None, None, &[source, &a.data], &[&a.out])
}

#[derive(Serialize)]
struct CrossvalOutput<'a> {
    checkpoint_sha256: String,
    seed: u64,
    beam_width: usize,
    valid_fraction: f64,
    config: &'a RunConfig,
    report: editembed_core::eval::CrossValReport,
}

fn crossval(a: &CrossvalArgs, inv: &Invocation, io: &mut Io<'_>) -> Result<()> {
    let seed = a.common.seed;
    let mut cfg = RunConfig::load(a.common.config.as_deref(), &overrides(seed, None, Some(1), a.epochs))?;
    if let Some(f) = a.filter {
        cfg.data.commit_filter = f.into();
    }
    let base = load_checkpoint(&a.checkpoint)?;
    cfg.model = base.model.config().clone();
    let samples = message_samples(&a.data, &cfg)?;
    let report = cross_validate(&samples, a.folds, a.valid_fraction, seed, a.jobs, |fd| {
        let train: Vec<MessageSample> = fd.train.iter().map(|&s| s.clone()).collect();
        let valid: Vec<MessageSample> = fd.valid.iter().map(|&s| s.clone()).collect();
        let test: Vec<MessageSample> = fd.test.iter().map(|&s| s.clone()).collect();
        let vocab = message_vocab(&train, &cfg)?;
        let trained = finetune_messages(&base, &train, &valid, vocab, &cfg.train, |_| {})?;
        let hyps = generate_all(&trained.checkpoint, &test, a.beam_width)?;
        let refs: Vec<Vec<String>> = test.iter().map(|s| s.message.clone()).collect();
        Ok(corpus_bleu(&hyps, &refs)?.bleu)
    })?;
    for f in &report.folds {
        let _ = writeln!(io.err, "fold {:>2}  test {:>4}  BLEU {:.2}", f.fold, f.test, f.metric);
    }
    let _ = writeln!(io.out, "BLEU {:.2} ± {:.2} over {} folds", report.mean, report.std, report.folds.len());
    write_json(
        &a.out,
        &CrossvalOutput {
            checkpoint_sha256: file_sha256(&a.checkpoint)?,
            seed,
            beam_width: a.beam_width,
            valid_fraction: a.valid_fraction,
            config: &cfg,
            report,
        },
    )?;
    let mut inputs = vec![a.checkpoint.as_path(), a.data.as_path()];
    inputs.extend(a.common.config.as_deref());
    inv.manifest(Some(&cfg), Some(seed), &inputs, &[&a.out])
}

fn synth(a: &SynthArgs, inv: &Invocation) -> Result<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let pretrain_file = a.out.join("pretrain.jsonl");
    let transfer_file = a.out.join("transfer.jsonl");
    let commits_file = a.out.join("commits.jsonl");
    write_jsonl(&pretrain_file, &synthetic::pretraining_corpus(a.pretrain_size, a.seed))?;
    write_jsonl(&transfer_file, &synthetic::transfer_corpus(a.seed))?;
    write_jsonl(&commits_file, &synthetic::commit_corpus(a.commits, a.seed))?;
    inv.manifest_at(&a.out, None, Some(a.seed), &[], &[&pretrain_file, &transfer_file, &commits_file])
}

fn rerun(a: &RerunArgs, io: &mut Io<'_>) -> Result<()> {
    let m = RunManifest::load(&a.manifest)?;
    let prev = std::env::current_dir().map_err(|e| Error::Io {
        path: PathBuf::from("."),
        source: e,
    })?;
    std::env::set_current_dir(&m.cwd).map_err(|e| Error::Io {
        path: m.cwd.clone(),
        source: e,
    })?;
    let argv = std::iter::once("editembed".to_string()).chain(m.argv.iter().cloned());
    let code = run(argv, io);
    let checked = if code != 0 {
        Err(Error::Validation(format!("re-run of {} exited with {code}", m.command)))
    } else if a.verify {
        verify_outputs(&m, io)
    } else {
        Ok(())
    };
    std::env::set_current_dir(&prev).map_err(|e| Error::Io { path: prev, source: e })?;
    checked
}

fn verify_outputs(m: &RunManifest, io: &mut Io<'_>) -> Result<()> {
    let mut differing = Vec::new();
    for o in &m.outputs {
        let now = file_sha256(&o.path)?;
        if now == o.sha256 {
            let _ = writeln!(io.out, "identical\t{}", o.path.display());
        } else {
            let _ = writeln!(io.out, "DIFFERS\t{}", o.path.display());
            differing.push(o.path.display().to_string());
        }
    }
    if differing.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!("outputs differ from the manifest: {}", differing.join(", "))))
    }
}
