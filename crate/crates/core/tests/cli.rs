use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixprompt::bench::synthetic::{synthetic_task, SyntheticConfig};
use mixprompt::corpus::{save_dataset, DatasetFormat};

fn mixprompt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixprompt"))
        .args(args)
        .env_remove("MIXPROMPT_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mixprompt(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// A synthetic dataset plus a matching mock config.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let task = synthetic_task(&SyntheticConfig::default());
        save_dataset(
            &task.dataset,
            &dir.path().join("data.jsonl"),
            DatasetFormat::Jsonl,
            false,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("mock.toml"),
            toml::to_string(&task.mock).unwrap(),
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn experiment(&self, name: &str) -> PathBuf {
        let path = self.path(name);
        std::fs::write(self.path("synonyms.txt"), "good, fine, nice\nbad, poor\n").unwrap();
        std::fs::write(
            &path,
            r#"name = "synthetic"
dataset = "data.jsonl"
spec = "sst2"
amounts = [10]
augmenters = ["none", "gpt3mix", "eda"]
trials = 3

[augment]
ratio = 2.0

[eda]
lexicon = "synonyms.txt"

[features]
hash_buckets = 4096
"#,
        )
        .unwrap();
        path
    }
}

#[test]
fn normalize_and_subsample() {
    let ws = Workspace::new();
    let (data, norm, sub) = (
        ws.path("data.jsonl"),
        ws.path("norm.jsonl"),
        ws.path("sub.tsv"),
    );
    ok(&["normalize", "--dataset", s(&data), "--out", s(&norm)]);
    assert_eq!(ws.read("norm.jsonl").lines().count(), 700);
    assert!(ws.path("norm.jsonl.manifest.json").exists());

    let args = [
        "subsample",
        "--dataset",
        s(&norm),
        "--split",
        "train",
        "--amount",
        "0.05",
        "--seed",
        "3",
        "--out",
        s(&sub),
    ];
    ok(&args);
    let first = ws.read("sub.tsv");
    assert_eq!(first.lines().count(), 10);
    ok(&args);
    assert_eq!(ws.read("sub.tsv"), first);
    let manifest: serde_json::Value =
        serde_json::from_str(&ws.read("sub.tsv.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "subsample");
}

#[test]
fn augment_train_evaluate() {
    let ws = Workspace::new();
    let (data, mock) = (ws.path("data.jsonl"), ws.path("mock.toml"));
    let sub = ws.path("sub.jsonl");
    ok(&[
        "subsample",
        "--dataset",
        s(&data),
        "--split",
        "train",
        "--amount",
        "10",
        "--out",
        s(&sub),
    ]);

    let aug = ws.path("aug.jsonl");
    ok(&[
        "augment",
        "--dataset",
        s(&sub),
        "--spec",
        "sst2",
        "--ratio",
        "3",
        "--k",
        "2",
        "--backend",
        "mock",
        "--mock-config",
        s(&mock),
        "--seed",
        "5",
        "--out",
        s(&aug),
    ]);
    let records = ws.read("aug.jsonl");
    assert_eq!(records.lines().count(), 60);
    let manifest: serde_json::Value =
        serde_json::from_str(&ws.read("aug.jsonl.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "augment");
    assert_eq!(manifest["config"]["augment"]["k"], 2);

    // replaying the manifest reproduces the output
    let replay = ws.path("replay.jsonl");
    ok(&[
        "augment",
        "--config",
        s(&ws.path("aug.jsonl.manifest.json")),
        "--out",
        s(&replay),
    ]);
    assert_eq!(ws.read("replay.jsonl"), records);

    let model = ws.path("model.jsonl");
    ok(&[
        "train",
        "--dataset",
        s(&sub),
        "--augmented",
        s(&aug),
        "--validation",
        s(&data),
        "--validation-split",
        "validation",
        "--hash-buckets",
        "4096",
        "--out",
        s(&model),
    ]);
    assert!(ws.path("model.jsonl.manifest.json").exists());
    let out = ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--dataset",
        s(&data),
        "--split",
        "test",
    ]);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["examples"], 400);
    assert!(report["accuracy"].as_f64().unwrap() > 0.6, "{report}");
}

#[test]
fn bench_is_reproducible() {
    let ws = Workspace::new();
    let cfg = ws.experiment("exp.toml");
    let mock = ws.path("mock.toml");
    let run = |dir: &str| {
        let out_dir = ws.path(dir);
        let stdout = ok(&[
            "bench",
            "--config",
            s(&cfg),
            "--mock-config",
            s(&mock),
            "--out-dir",
            s(&out_dir),
        ]);
        (
            stdout,
            ws.read(&format!("{dir}/trials.jsonl")),
            ws.read(&format!("{dir}/report.md")),
        )
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    assert!(
        a.0.starts_with("| Dataset | Amount | none | gpt3mix | eda |"),
        "{}",
        a.0
    );
    assert_eq!(a.1.lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_str(&ws.read("a/manifest.json")).unwrap();
    assert_eq!(manifest["command"], "bench");

    // a manifest is accepted as a config and yields the same table
    let c = ok(&[
        "bench",
        "--config",
        s(&ws.path("a/manifest.json")),
        "--out-dir",
        s(&ws.path("c")),
    ]);
    assert_eq!(c, a.0);
}

#[test]
fn ablate_k_sweep() {
    let ws = Workspace::new();
    let cfg = ws.experiment("exp.toml");
    let out = ok(&[
        "ablate",
        "--kind",
        "k_sweep",
        "--values",
        "1,4",
        "--config",
        s(&cfg),
        "--mock-config",
        s(&ws.path("mock.toml")),
        "--trials",
        "2",
        "--style",
        "tsv",
        "--out-dir",
        s(&ws.path("abl")),
    ]);
    assert!(out.starts_with("Dataset\tAmount\tk=1\tk=4\n"), "{out}");
    assert!(ws.path("abl/report.tsv").exists());
}

#[test]
fn validate_spec_reports_problems() {
    let ws = Workspace::new();
    let out = ok(&[
        "validate-spec",
        "--spec",
        "sst2",
        "--dataset",
        s(&ws.path("data.jsonl")),
    ]);
    assert!(out.contains("positive\tpositive"), "{out}");

    let spec = ws.path("dup.toml");
    std::fs::write(
        &spec,
        "text_type = \"review\"\nlabel_type = \"rating\"\n\n[verbalizer]\ngood = \"Fine\"\nokay = \"fine\"\n",
    )
    .unwrap();
    let out = mixprompt(&["validate-spec", "--spec", s(&spec)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("good") && err.contains("okay"), "{err}");
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(mixprompt(&["subsample", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        mixprompt(&["augment", "--spec", "sst2", "--out", "x.jsonl"])
            .status
            .code(),
        Some(1)
    );
    let http_without_url = mixprompt(&[
        "augment",
        "--dataset",
        s(&ws.path("data.jsonl")),
        "--spec",
        "sst2",
        "--backend",
        "http",
        "--out",
        s(&ws.path("x.jsonl")),
    ]);
    assert_eq!(http_without_url.status.code(), Some(1));
    let missing = mixprompt(&[
        "normalize",
        "--dataset",
        s(&ws.path("nope.jsonl")),
        "--out",
        s(&ws.path("o.jsonl")),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    // nothing listens on port 9: the run aborts with a runtime error
    let unreachable = mixprompt(&[
        "augment",
        "--dataset",
        s(&ws.path("data.jsonl")),
        "--split",
        "train",
        "--spec",
        "sst2",
        "--backend",
        "http",
        "--base-url",
        "http://127.0.0.1:9",
        "--model",
        "m",
        "--max-attempts",
        "1",
        "--out",
        s(&ws.path("u.jsonl")),
    ]);
    assert_eq!(
        unreachable.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&unreachable.stderr)
    );
    assert!(ws.path("u.jsonl.manifest.json").exists());
}
