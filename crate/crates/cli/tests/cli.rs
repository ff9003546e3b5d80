use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
[model]
token_dim = 8
action_dim = 4
encoder_hidden = 8
edit_hidden = 8
decoder_hidden = 16

[train]
learning_rate = 0.01
batch_size = 8
max_epochs = 2
patience = 2
";

fn editembed(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_editembed"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = editembed(dir, args);
    assert_eq!(o.status.code(), Some(0), "{args:?} failed: {}", stderr(&o));
    o
}

#[test]
fn no_arguments_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = editembed(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_subcommand_and_flag_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(editembed(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(editembed(dir.path(), &["align", "--nope"]).status.code(), Some(1));
}

#[test]
fn help_goes_to_stdout_with_success() {
    let dir = tempfile::tempdir().unwrap();
    let o = editembed(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("eval-transfer"));
}

#[test]
fn align_prints_columns() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.java"), "x = 0;").unwrap();
    std::fs::write(dir.path().join("b.java"), "x = 1;").unwrap();
    let o = ok(dir.path(), &["align", "--before", "a.java", "--after", "b.java"]);
    let lines: Vec<_> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[2].split('\t').skip(1).collect::<Vec<_>>(), ["0", "1"]);
    let o = ok(
        dir.path(),
        &["align", "--before", "a.java", "--after", "b.java", "--edit-form", "compressed"],
    );
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = editembed(dir.path(), &["align", "--before", "nope", "--after", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"before\": [\"a\"]}\n").unwrap();
    let o = editembed(dir.path(), &["build-vocab", "--data", "bad.jsonl", "--out", "v.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn pretrain_then_transfer_writes_manifests_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(d, &["synth", "--out", "data", "--pretrain-size", "40", "--commits", "24"]);
    ok(
        d,
        &["pretrain", "--data", "data/pretrain.jsonl", "--out", "pre.ckpt", "--config", "tiny.toml"],
    );
    assert!(d.join("pre.ckpt.manifest.json").exists());
    assert_eq!(std::fs::read_to_string(d.join("pre.ckpt.log.jsonl")).unwrap().lines().count(), 2);

    let o = ok(
        d,
        &[
            "eval-transfer",
            "--checkpoint",
            "pre.ckpt",
            "--data",
            "data/transfer.jsonl",
            "--out",
            "transfer.json",
            "--beam-width",
            "2",
            "--top-k",
            "2",
        ],
    );
    assert!(stdout(&o).starts_with("top-1 "));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("transfer.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["attempts"], 72);
    assert_eq!(report["beam_width"], 2);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("transfer.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "eval-transfer");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);

    std::fs::write(d.join("x.java"), "VARIABLE_0 = 0 ;").unwrap();
    std::fs::write(d.join("y.java"), "VARIABLE_0 = 1 ;").unwrap();
    let o = ok(d, &["embed", "--checkpoint", "pre.ckpt", "--before", "x.java", "--after", "y.java"]);
    let reals: Vec<f64> = stdout(&o).split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(reals.len(), 16);

    std::fs::write(
        d.join("donor.json"),
        r#"{"before": ["VARIABLE_1", "=", "0", ";"], "after": ["VARIABLE_1", "=", "1", ";"]}"#,
    )
    .unwrap();
    let o = ok(
        d,
        &["apply", "--checkpoint", "pre.ckpt", "--before", "x.java", "--donor", "donor.json", "--beam-width", "3"],
    );
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split('\t').next().unwrap().parse::<f64>().unwrap() <= 0.0));

    let o = ok(d, &["rerun", "--manifest", "pre.ckpt.manifest.json", "--verify"]);
    assert!(stdout(&o).lines().all(|l| l.starts_with("identical")));
}

#[test]
fn message_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.toml"), TINY).unwrap();
    ok(d, &["synth", "--out", "data", "--pretrain-size", "30", "--commits", "24"]);
    ok(
        d,
        &["pretrain", "--data", "data/pretrain.jsonl", "--out", "pre.ckpt", "--config", "tiny.toml"],
    );
    ok(
        d,
        &[
            "finetune-msg",
            "--checkpoint",
            "pre.ckpt",
            "--data",
            "data/commits.jsonl",
            "--out",
            "msg.ckpt",
            "--config",
            "tiny.toml",
            "--filter",
            "original",
        ],
    );
    ok(
        d,
        &["generate-msg", "--checkpoint", "msg.ckpt", "--data", "data/commits.jsonl", "--out", "gen.jsonl", "--beam-width", "2"],
    );
    assert_eq!(std::fs::read_to_string(d.join("gen.jsonl")).unwrap().lines().count(), 24);
    let o = ok(
        d,
        &["eval-bleu", "--hypotheses", "gen.jsonl", "--data", "data/commits.jsonl", "--out", "bleu.json"],
    );
    assert!(stdout(&o).starts_with("BLEU "));
    let o = editembed(d, &["eval-bleu", "--data", "data/commits.jsonl", "--out", "bleu.json"]);
    assert_eq!(o.status.code(), Some(1));

    let o = ok(
        d,
        &[
            "crossval",
            "--checkpoint",
            "pre.ckpt",
            "--data",
            "data/commits.jsonl",
            "--out",
            "cv.json",
            "--config",
            "tiny.toml",
            "--folds",
            "3",
            "--jobs",
            "2",
            "--epochs",
            "1",
            "--beam-width",
            "2",
        ],
    );
    assert!(stdout(&o).contains("over 3 folds"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("cv.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["folds"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[model]\nwidth = 3\n").unwrap();
    ok(d, &["synth", "--out", "data", "--pretrain-size", "10", "--commits", "8"]);
    let o = editembed(
        d,
        &["pretrain", "--data", "data/pretrain.jsonl", "--out", "p.ckpt", "--config", "bad.toml"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.join("p.ckpt").exists());
}
