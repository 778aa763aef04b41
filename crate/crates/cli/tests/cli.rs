use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_isogcn");

fn isogcn(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, seed: &str) {
    let out = isogcn(&[
        "gen",
        "--nodes",
        "80",
        "--relations",
        "4",
        "--k",
        "3",
        "--density",
        "0.06",
        "--seed",
        seed,
        "--out",
        p(dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_writes_task_files_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = isogcn(&[
        "gen",
        "--nodes",
        "200",
        "--relations",
        "6",
        "--k",
        "4",
        "--seed",
        "7",
        "--out",
        p(&tmp.path().join("a")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    for f in ["graph.json", "iso.csv", "splits.json", "embedding.csv"] {
        assert!(tmp.path().join("a").join(f).exists(), "{f}");
    }
    isogcn(&[
        "gen",
        "--nodes",
        "200",
        "--relations",
        "6",
        "--k",
        "4",
        "--seed",
        "7",
        "--out",
        p(&tmp.path().join("b")),
    ]);
    for f in ["graph.json", "iso.csv", "splits.json", "embedding.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
    let graph: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/graph.json")).unwrap())
            .unwrap();
    assert_eq!(graph["labels"].as_array().unwrap().len(), 200);
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let out = isogcn(&["train", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(isogcn(&[]).status.code(), Some(1));
    assert_eq!(isogcn(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = isogcn(&[
        "train",
        "--task",
        p(&tmp.path().join("nope")),
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("graph.json"));

    let degenerate = isogcn(&["gen", "--density", "0", "--out", p(&tmp.path().join("t"))]);
    assert_eq!(degenerate.status.code(), Some(1));

    let task = tmp.path().join("task");
    gen(&task, "1");
    let bad = isogcn(&[
        "train",
        "--task",
        p(&task),
        "--lambda",
        "-1",
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let bad = isogcn(&[
        "train",
        "--task",
        p(&task),
        "--model",
        "gat",
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn divergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task");
    gen(&task, "2");
    let out = isogcn(&[
        "train",
        "--model",
        "baseline-rgcn",
        "--task",
        p(&task),
        "--lr",
        "1e300",
        "--steps",
        "20",
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn train_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task");
    gen(&task, "3");
    let run = tmp.path().join("run");
    let out = isogcn(&[
        "train",
        "--model",
        "baseline-rgcn",
        "--task",
        p(&task),
        "--steps",
        "40",
        "--basis",
        "2",
        "--layers",
        "1",
        "--dmsg",
        "4",
        "--k",
        "2",
        "--degree-norm",
        "--normalize-iso",
        "false",
        "--seed",
        "5",
        "--out",
        p(&run),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let history = fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert!(history.lines().all(|l| l.contains("\"iso_loss\":null")));
    let params = fs::read_to_string(run.join("params.txt")).unwrap();
    assert!(params.starts_with(
        "isogcn-params v1\nmodel baseline-rgcn aggregation mean\nlayer rgcn basis 4 2\n"
    ));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    let out = isogcn(&["eval", "--task", p(&task), "--out", p(&run)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval, summary["evaluation"]);
}

#[test]
fn verify_prints_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = isogcn(&[
        "verify",
        "--instances",
        "200",
        "--seed",
        "4",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
    assert_eq!(
        fs::read_to_string(tmp.path().join("reports.jsonl"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn pca_and_fit_alpha_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let task = tmp.path().join("task");
    gen(&task, "4");
    let out = isogcn(&[
        "pca",
        "--task",
        p(&task),
        "--k",
        "3",
        "--out",
        p(&tmp.path().join("pca")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let pca: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("pca/pca.json")).unwrap())
            .unwrap();
    let ratios: Vec<f64> = pca["explained_variance_ratio"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(ratios.len(), 3);
    assert!(ratios.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(
        isogcn(&[
            "pca",
            "--task",
            p(&task),
            "--k",
            "9",
            "--out",
            p(&tmp.path().join("pca"))
        ])
        .status
        .code(),
        Some(1)
    );

    // The generated prior is realizable with three heads.
    let out = isogcn(&[
        "fit-alpha",
        "--task",
        p(&task),
        "--k",
        "3",
        "--steps",
        "2000",
        "--out",
        p(&tmp.path().join("fit")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("fit/fit.json")).unwrap())
            .unwrap();
    assert!(fit["loss"].as_f64().unwrap() < 1e-4, "{fit}");
    let alpha = fs::read_to_string(tmp.path().join("fit/alpha.csv")).unwrap();
    assert_eq!(alpha.lines().count(), 4);
    assert!(alpha.lines().all(|l| l.split(',').count() == 3));
}
