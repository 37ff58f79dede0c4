use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/desk")
        .join(name)
        .canonicalize()
        .unwrap()
}

/// A temp workspace whose config reads the desk fixture and writes
/// everything else under `out/`.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = format!(
            r#"
[paths]
comments = {comments:?}
verdicts = {verdicts:?}
manual_labels = {manual:?}
batches = {batches:?}
vocab = {vocab:?}
sentences = "out/sentences.jsonl"
gpt_labeled = "out/gpt_labeled.jsonl"
prompts = "out/prompts.jsonl"
event_log = "out/labels.jsonl"
dataset = "out/dataset.jsonl"
train = "out/train.jsonl"
eval = "out/eval.jsonl"
model = "out/model.json"
reports = "out/reports"

[assembly]
synthetic_sample_n = 120
target_strata = []
{extra}
"#,
            comments = fixture("comments.jsonl"),
            verdicts = fixture("verdicts.jsonl"),
            manual = fixture("manual_labels.jsonl"),
            batches = fixture("batches.jsonl"),
            vocab = fixture("vocab.txt"),
        );
        std::fs::write(dir.path().join("burnout.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn cmd(&self) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_burnout"));
        c.current_dir(self.dir.path()).env_remove("BURNOUT_LOG");
        for (k, _) in std::env::vars() {
            if k.starts_with("BURNOUT_") {
                c.env_remove(k);
            }
        }
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd().args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "burnout {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn pipeline(&self) {
        for step in ["ingest", "reconcile", "assemble", "split", "train"] {
            self.ok(&[step]);
        }
    }
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_pipeline_on_the_desk_fixture() {
    let ws = Workspace::new("");
    let out = ws.ok(&["ingest"]);
    assert!(out.contains("462 comments -> 500 sentences"), "{out}");

    let out = ws.ok(&["reconcile"]);
    assert!(out.contains("400 agreed"), "{out}");
    assert!(out.contains("100 discrepant (100 newly queued)"), "{out}");
    assert!(out.contains("100 manual labels recorded"), "{out}");
    assert_eq!(lines(&ws.path("out/labels.jsonl")), 100 + 200 + 1 + 100);

    let out = ws.ok(&["assemble"]);
    assert!(out.contains("600 records"), "{out}");
    assert!(out.contains("synthetic share 0.200"), "{out}");
    assert!(ws.path("out/reports/composition.json").is_file());

    let out = ws.ok(&["split"]);
    assert!(out.starts_with("480 train"), "{out}");
    assert_eq!(lines(&ws.path("out/train.jsonl")), 480);
    assert_eq!(lines(&ws.path("out/eval.jsonl")), 120);

    let out = ws.ok(&["train"]);
    assert_eq!(out.matches("epoch ").count(), 5, "{out}");
    let trace: Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("out/reports/train_trace.json")).unwrap()).unwrap();
    assert_eq!(trace["total_steps"], 10);

    let report: Value = serde_json::from_str(&ws.ok(&["eval"])).unwrap();
    assert!(report["metrics"]["accuracy"].as_f64().unwrap() >= 0.95, "{report}");
    assert_eq!(report["n"], 120);
    let roc = std::fs::read_to_string(ws.path("out/reports/roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold"), "{roc}");

    let stats: Value = serde_json::from_str(&ws.ok(&["stats", "--json"])).unwrap();
    assert_eq!(stats["total"]["count"], 600, "{stats}");
    assert!(ws.ok(&["stats"]).contains("YouTube comments with manual labelling"));
}

#[test]
fn reruns_are_idempotent_and_training_is_reproducible() {
    let ws = Workspace::new("");
    ws.pipeline();
    let first = std::fs::read(ws.path("out/model.json")).unwrap();
    let out = ws.ok(&["reconcile"]);
    assert!(
        out.contains("(0 newly queued)") && out.contains("0 manual labels recorded"),
        "{out}"
    );
    ws.ok(&["assemble"]);
    ws.ok(&["split"]);
    ws.ok(&["train"]);
    assert_eq!(first, std::fs::read(ws.path("out/model.json")).unwrap());
}

#[test]
fn score_prints_one_json_line_per_text() {
    let ws = Workspace::new("");
    ws.pipeline();
    std::fs::write(
        ws.path("texts.txt"),
        "work feels meaningful and life is good\n\nI feel drained\n",
    )
    .unwrap();
    let out = ws.ok(&[
        "score",
        "--text",
        "I feel exhausted and hopeless, and nothing helps anymore.",
        "--input",
        "texts.txt",
    ]);
    let rows: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["label"], "burnout");
    assert_eq!(rows[1]["label"], "neutral");
    for r in &rows {
        assert_eq!(r["threshold"], 0.5);
        assert_eq!(r["model_version"], rows[0]["model_version"]);
    }

    let out = ws.run(&["score"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nothing to score"));
}

#[test]
fn training_threshold_is_stored_and_used() {
    let ws = Workspace::new("");
    for step in ["ingest", "reconcile", "assemble", "split"] {
        ws.ok(&[step]);
    }
    ws.ok(&["train", "--threshold", "0.75"]);
    let model: Value = serde_json::from_str(&std::fs::read_to_string(ws.path("out/model.json")).unwrap()).unwrap();
    assert_eq!(model["threshold"], 0.75);
    let row: Value = serde_json::from_str(ws.ok(&["score", "--text", "I feel drained"]).trim()).unwrap();
    assert_eq!(row["threshold"], 0.75);
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let ws = Workspace::new("[train]\nepochs = 3\n");
    for step in ["ingest", "reconcile", "assemble", "split"] {
        ws.ok(&[step]);
    }
    let out = ws.cmd().arg("train").env("BURNOUT_TRAIN_EPOCHS", "2").output().unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("epoch ").count(), 2);
    let out = ws
        .cmd()
        .args(["train", "--epochs", "1"])
        .env("BURNOUT_TRAIN_EPOCHS", "2")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("epoch ").count(), 1);

    let cfg = ws.ok(&["config"]);
    assert!(cfg.contains("epochs = 3"), "{cfg}");
}

#[test]
fn invalid_config_lists_every_offending_key() {
    let ws = Workspace::new("split_ratio = 1.5\n[train]\nepochs = 0\nlr_initial = -1.0\n");
    let out = ws.cmd().arg("config").env("BURNOUT_THRESHOLD", "2.0").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for key in ["threshold", "assembly.split_ratio", "train.epochs", "train.lr_initial"] {
        assert!(err.contains(key), "{key} missing from: {err}");
    }
}

#[test]
fn bad_environment_value_names_the_variable() {
    let ws = Workspace::new("");
    let out = ws
        .cmd()
        .arg("config")
        .env("BURNOUT_TRAIN_EPOCHS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("BURNOUT_TRAIN_EPOCHS"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let ws = Workspace::new("[train]\nepoch = 4\n");
    let out = ws.run(&["config"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("epoch"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let ws = Workspace::new("");
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ws.run(&["train", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn missing_model_names_the_path() {
    let ws = Workspace::new("");
    let out = ws.run(&["score", "--text", "hello there friend"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("out/model.json"), "{}", stderr(&out));

    let out = ws.run(&["eval", "--model", "elsewhere/m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("elsewhere/m.json"), "{}", stderr(&out));
}

#[test]
fn missing_input_names_the_path() {
    let ws = Workspace::new("");
    let out = ws.run(&["ingest", "--input", "nowhere.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nowhere.jsonl"), "{}", stderr(&out));
}

#[test]
fn promptgen_enumerate_writes_the_default_matrix() {
    let ws = Workspace::new("");
    let out = ws.ok(&["promptgen", "enumerate"]);
    assert!(out.starts_with("3264 prompts"), "{out}");
    assert_eq!(lines(&ws.path("out/prompts.jsonl")), 3264);

    std::fs::write(
        ws.path("factors.toml"),
        "gender = [\"female\"]\nage = [\"young\", \"old\"]\njob_experience = [\"with\"]\njob_position = [\"executive\"]\n\
         communication_method = [\"verbal\"]\ncommunication_type = [\"casual\"]\nprofessional_sphere = [\"nursing\", \"law\"]\n",
    )
    .unwrap();
    let out = ws.ok(&[
        "promptgen",
        "enumerate",
        "--factors",
        "factors.toml",
        "--out",
        "small.jsonl",
    ]);
    assert!(out.starts_with("4 prompts"), "{out}");
}

#[test]
fn promptgen_sample_is_seeded() {
    let ws = Workspace::new("");
    let a = ws.ok(&["promptgen", "sample", "--n", "30", "--seed", "5"]);
    let b = ws.ok(&["promptgen", "sample", "--n", "30", "--seed", "5"]);
    let c = ws.ok(&["promptgen", "sample", "--n", "30", "--seed", "6"]);
    assert_eq!(a.lines().count(), 30);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let out = ws.run(&["promptgen", "sample", "--n", "100000"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_answers_until_terminated() {
    let ws = Workspace::new("");
    ws.pipeline();
    let mut child = ws
        .cmd()
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("{line}"))
        .to_string();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let result = rt.block_on(async {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .unwrap();
        let stats: Value = client
            .get(format!("{base}/v1/queue/stats"))
            .send()
            .await?
            .json()
            .await?;
        let score = client
            .post(format!("{base}/v1/score"))
            .json(&serde_json::json!({"text": "I feel drained and hopeless"}))
            .send()
            .await?;
        let status = score.status();
        let body: Value = score.json().await?;
        Ok::<_, reqwest::Error>((stats, status, body))
    });
    child.kill().unwrap();
    child.wait().unwrap();

    let (stats, status, body) = result.unwrap();
    assert_eq!(stats["completed"], 100);
    assert_eq!(status, reqwest::StatusCode::OK);
    assert_eq!(body["label"], "burnout");
}
