//! The binary end to end: exit codes, manifests and determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ledgerlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ledgerlens")).args(args).env_remove("LEDGERLENS_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = ledgerlens(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every stage balances and every listed artifact exists.
fn assert_reconciles(dir: &Path) {
    let m = manifest(dir);
    for (name, st) in m["stages"].as_object().unwrap() {
        let (i, ok, failed) = (st["input"].as_u64().unwrap(), st["succeeded"].as_u64().unwrap(), st["failed"].as_u64().unwrap());
        assert_eq!(i, ok + failed, "stage {name} in {}", dir.display());
    }
    for a in m["artifacts"].as_array().unwrap() {
        assert!(dir.join(a.as_str().unwrap()).exists(), "{a}");
    }
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = ledgerlens(&["--config", s(&cfg), "cost", "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = ledgerlens(&["cost", "--preset", "nope", "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_ledgerlens"))
        .args(["cost", "--out", s(&dir.path().join("c"))])
        .env("LEDGERLENS_PIPELINE__RETAIN", "1.5")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = ledgerlens(&["train", "--features", "x.csv", "--preset", "huge", "--dry-run", "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dry_run_prints_resolved_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["train", "--features", "unused.csv", "--preset", "table4", "--dry-run", "--out", s(dir.path())]);
    let hp: Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(
        (&hp["n_estimators"], &hp["max_depth"], &hp["min_samples_split"], &hp["max_features"]),
        (&Value::from(2500), &Value::from(200), &Value::from(4), &Value::from("sqrt"))
    );
}

#[test]
fn adjust_and_cost_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.csv");
    std::fs::write(&preds, "parcel_id,predicted\nA,3085\n").unwrap();
    let out = dir.path().join("adj");
    ok(&[
        "adjust", "--predictions", s(&preds), "--mu-source", "3000", "--sigma-source", "1000", "--mu-target", "2300",
        "--sigma-target", "800", "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("adjusted.csv"));
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 2368.0);
    assert_reconciles(&out);

    let out = dir.path().join("cost");
    ok(&["cost", "--out", s(&out)]);
    let c: Value = serde_json::from_str(&std::fs::read_to_string(out.join("cost.json")).unwrap()).unwrap();
    assert!((c["manual_entry_total"].as_f64().unwrap() - 24_789.22).abs() < 1.0);
}

#[test]
fn tabular_chain_reconciles() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["--seed", "4", "synth", "parcels", "--n", "400", "--out", s(&d("data"))]);
    let features = d("data").join("features.csv");
    let labels = d("data").join("labels.csv");
    ok(&["ingest", "--features", s(&features), "--labels", s(&labels), "--out", s(&d("ingest"))]);
    ok(&[
        "train", "--features", s(&features), "--labels", s(&labels), "--n-estimators", "20", "--test-fraction", "0.2", "--out",
        s(&d("train")),
    ]);
    ok(&["predict", "--features", s(&features), "--model", s(&d("train").join("model.json")), "--out", s(&d("predict"))]);
    let preds = d("predict").join("predictions.csv");
    assert_eq!(csv_rows(&preds).len(), 400);
    ok(&["evaluate", "--predictions", s(&preds), "--labels", s(&labels), "--out", s(&d("eval"))]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(d("eval").join("metrics.json")).unwrap()).unwrap();
    assert!(m["full"]["r2"].as_f64().unwrap() > 0.5, "{m}");
    ok(&[
        "audit-bias", "--predictions", s(&preds), "--labels", s(&labels), "--tracts", s(&d("data").join("tracts.csv")),
        "--tract-map", s(&d("data").join("tract_map.csv")), "--out", s(&d("bias")),
    ]);
    ok(&["audit-mar", "--features", s(&features), "--labels", s(&labels), "--n-estimators", "20", "--out", s(&d("mar"))]);
    for step in ["data", "ingest", "train", "predict", "eval", "bias", "mar"] {
        assert_reconciles(&d(step));
    }
    assert_eq!(manifest(&d("train"))["seed"], 0);
}

#[test]
fn card_commands_reconcile_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["synth", "cards", "--n", "4", "--clean", "--out", s(&d("synth"))]);
    let cards = d("synth").join("cards");
    let tpl = d("synth").join("template.png");
    let layout = d("synth").join("layout.json");
    let log = d("events.jsonl");
    ok(&["--jsonl-log", s(&log), "align", "--in", s(&cards), "--template", s(&tpl), "--out", s(&d("align"))]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
    ok(&["segment", "--in", s(&cards), "--cells", "first", "--out", s(&d("seg"))]);
    ok(&["ocr", "--in", s(&d("seg").join("cells")), "--out", s(&d("ocr"))]);
    assert_eq!(csv_rows(&d("ocr").join("predictions.csv")).len(), 4);
    for (name, workers) in [("p1", "1"), ("p2", "2")] {
        ok(&[
            "--workers", workers, "pipeline", "--in", s(&cards), "--template", s(&tpl), "--layout", s(&layout), "--out",
            s(&d(name)),
        ]);
    }
    for f in ["predictions.csv", "dropped.csv", "documents.json"] {
        assert_eq!(std::fs::read(d("p1").join(f)).unwrap(), std::fs::read(d("p2").join(f)).unwrap(), "{f}");
    }
    for step in ["synth", "align", "seg", "ocr", "p1"] {
        assert_reconciles(&d(step));
    }
    let m = manifest(&d("p1"));
    assert_eq!(m["outputs"]["kept"].as_u64().unwrap() + m["outputs"]["dropped"].as_u64().unwrap(), m["outputs"]["cells_segmented"].as_u64().unwrap());
}

#[test]
fn unreadable_documents_fail_softly() {
    let dir = tempfile::tempdir().unwrap();
    let cards = dir.path().join("cards");
    std::fs::create_dir_all(&cards).unwrap();
    ok(&["synth", "cards", "--n", "2", "--clean", "--out", s(&dir.path().join("synth"))]);
    for e in std::fs::read_dir(dir.path().join("synth").join("cards")).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, cards.join(p.file_name().unwrap())).unwrap();
    }
    std::fs::write(cards.join("broken.png"), b"not a png").unwrap();
    let out = dir.path().join("p");
    let run = ledgerlens(&["pipeline", "--in", s(&cards), "--cells", "first", "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["stages"]["load"]["failed"], 1);
    assert_reconciles(&out);
    assert_eq!(csv_rows(&out.join("predictions.csv")).len(), 2);
}
