use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use kbdialog::corpus::{save_normalized, Corpus, Dialogue, Speaker, Turn};
use kbdialog::pipeline::Manifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kbdialog"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).arg("--log-level").arg("quiet").output().unwrap()
}

fn chat(checkpoint: &Path, input: &str) -> Output {
    let mut child = bin()
        .args(["chat", "--checkpoint"])
        .arg(checkpoint)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_and_usage_errors() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("train-stage1"));
    for cmd in ["prepare-data", "train-stage2", "evaluate", "run-experiment", "inspect-codes", "chat"] {
        let o = run(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
    }
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["evaluate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn data_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "latent.q = 3\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "run-experiment", "--output", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown config key"));

    let missing = dir.path().join("missing.json");
    let o = run(&["prepare-data", "--input", missing.to_str().unwrap(), "--format", "smd", "--output", "x.json"]);
    assert_eq!(o.status.code(), Some(2));

    let o = chat(dir.path(), ":quit\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

fn one_dialogue_checkpoint(dir: &Path) -> PathBuf {
    let d = Dialogue {
        id: "only".into(),
        domain: "demo".into(),
        turns: vec![
            Turn::new(Speaker::User, "hello there"),
            Turn::new(Speaker::System, "hi , what can i do ?"),
            Turn::new(Speaker::User, "book a table for two"),
            Turn::new(Speaker::System, "done , table for two at seven ."),
            Turn::new(Speaker::User, "thanks"),
            Turn::new(Speaker::System, "you are welcome"),
        ],
        kb: vec![],
    };
    let corpus_path = dir.join("one.json");
    save_normalized(&Corpus::new("one", vec![d]), &corpus_path).unwrap();
    let out = dir.join("gen");
    let o = run(&[
        "--seed",
        "7",
        "train-stage2",
        "--main",
        corpus_path.to_str().unwrap(),
        "--main-format",
        "normalized",
        "--target-domain",
        "demo",
        "--variant",
        "HRED",
        "--ratio",
        "1",
        "--output",
        out.to_str().unwrap(),
        "--set",
        "stage2.epochs=150",
        "--set",
        "optimizer.lr=0.01",
        "--set",
        "generator.embed=16",
        "--set",
        "generator.utt_hidden=32",
        "--set",
        "generator.dlg_hidden=32",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn chat_replays_an_overfit_dialogue_and_honours_commands() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = one_dialogue_checkpoint(dir.path());
    assert_eq!(Manifest::read(&ckpt).unwrap().get("seed"), Some("7"));

    let o = chat(&ckpt, ":quit\n");
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());

    let session = "hello there\nbook a table for two\nthanks\n:reset\nhello there\n:quit\nignored after quit\n";
    let o = chat(&ckpt, session);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "hi , what can i do ?\ndone , table for two at seven .\nyou are welcome\nhi , what can i do ?\n"
    );
    assert_eq!(chat(&ckpt, session).stdout, o.stdout);
}

#[test]
fn bundled_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let cfg = data("tiny.cfg");
    let cfg = cfg.to_str().unwrap();

    let o = run(&["prepare-data", "--input", data("tiny_smd.json").to_str().unwrap(), "--format", "smd", "--output", &p("main.json")]);
    assert_eq!(o.status.code(), Some(0));

    let o = run(&["--config", cfg, "train-stage1", "--output", &p("s1")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("excluded domains: WEATHER_CHECK"));

    let o = run(&[
        "--config", cfg, "train-stage2", "--stage1", &p("s1"), "--variant", "DIKTNET", "--main", &p("main.json"),
        "--main-format", "normalized", "--output", &p("gen"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["evaluate", "--checkpoint", &p("gen"), "--corpus", &p("main.json"), "--domain", "weather"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let json: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    for key in ["bleu", "entity_p", "entity_r", "entity_f1", "n_pairs"] {
        assert!(json.get(key).is_some(), "{key} missing from {out}");
    }
    assert!(out.contains("Entity F1"));

    let o = run(&["inspect-codes", "--checkpoint", &p("s1/laed"), "--top", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = chat(Path::new(&p("gen")), "howdy forecaster\nwill it rain today\n:quit\n");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn run_experiment_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = run(&[
        "--config",
        data("tiny.cfg").to_str().unwrap(),
        "run-experiment",
        "--output",
        out.to_str().unwrap(),
        "--set",
        "experiment.runs=2",
        "--set",
        "experiment.ratios=0.1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("HRED@10%") && report.contains("DIKTNET@10%"), "{report}");
    assert!(out.join("runs.json").exists());
}
