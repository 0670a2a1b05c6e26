use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use newsvote::ingest::{write_csv, ColumnMap, Document};
use newsvote::rng::SplitMix64;

const BIN: &str = env!("CARGO_BIN_EXE_newsvote");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("{prefix}{}", (b'a' + i as u8) as char))
        .collect()
}

fn documents(n: usize, labeled: bool) -> Vec<Document> {
    let shared = words("plim", 20);
    let sides = [words("fakx", 10), words("relq", 10)];
    let mut rng = SplitMix64::new(5);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let body: Vec<&str> = (0..30)
                .map(|_| {
                    if rng.next_f64() < 0.3 {
                        sides[label as usize][rng.below(10)].as_str()
                    } else {
                        shared[rng.below(20)].as_str()
                    }
                })
                .collect();
            Document {
                id: i as i64,
                title: shared[rng.below(20)].clone(),
                author: "Pat Doe".into(),
                body: body.join(" "),
                label: labeled.then_some(label),
            }
        })
        .collect()
}

fn write(path: &Path, docs: &[Document]) {
    let mut f = std::fs::File::create(path).unwrap();
    write_csv(&mut f, docs, &ColumnMap::default()).unwrap();
}

const CONFIG: &str = r#"
[data]
path = "news.csv"

[output]
dir = "out"

[learners.random_forest]
n_trees = 5
[learners.extra_trees]
n_trees = 5
[learners.adaboost]
n_rounds = 10
[learners.gradient_boost]
n_rounds = 10
max_depth = 3
"#;

/// Writes a corpus and config, trains, and returns the bundle path.
fn trained(dir: &Path) -> PathBuf {
    write(&dir.join("news.csv"), &documents(120, true));
    std::fs::write(dir.join("newsvote.toml"), CONFIG).unwrap();
    let cfg = dir.join("newsvote.toml");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("naive_bayes"), "{text}");
    dir.join("out").join("model.nvb")
}

#[test]
fn train_evaluate_predict_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = trained(dir.path());
    assert!(bundle.exists());
    let b = bundle.to_str().unwrap();

    let out = run(&["evaluate", "--bundle", b]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("out").join("report");
    assert!(report.join("report.json").exists());
    assert!(report.join("report.txt").exists());
    assert!(report.join("roc").join("ensemble.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["models"].as_array().unwrap().len(), 10);

    let out = run(&["predict", "--bundle", b, "--text", ""]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1);

    let texts = dir.path().join("texts.txt");
    std::fs::write(&texts, "fakxa fakxb plima\nrelqa relqc\n\n").unwrap();
    let out = run(&["predict", "--bundle", b, "--file", texts.to_str().unwrap()]);
    assert!(out.status.success());
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let label = line.split('\t').next().unwrap();
        assert!(label == "0" || label == "1", "{line}");
    }

    let out = run(&["inspect", "--bundle", b]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("gradient_boost"));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = trained(dir.path());
    let cfg = dir.path().join("newsvote.toml");

    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--ratio", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[split]\nratoi = 0.5\n").unwrap();
    assert_eq!(
        run(&["train", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let unlabeled = dir.path().join("unlabeled.csv");
    write(&unlabeled, &documents(10, false));
    let out = run(&[
        "evaluate",
        "--bundle",
        bundle.to_str().unwrap(),
        "--data",
        unlabeled.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let missing = dir.path().join("missing.csv");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let junk = dir.path().join("junk.nvb");
    std::fs::write(&junk, b"not a bundle at all, just some bytes to fill the header area").unwrap();
    assert_eq!(
        run(&["inspect", "--bundle", junk.to_str().unwrap()]).status.code(),
        Some(4)
    );

    let mut bytes = std::fs::read(&bundle).unwrap();
    bytes.truncate(bytes.len() / 2);
    let cut = dir.path().join("cut.nvb");
    std::fs::write(&cut, bytes).unwrap();
    let out = run(&["predict", "--bundle", cut.to_str().unwrap(), "--text", "x"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn predict_csv_keeps_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = trained(dir.path());
    let docs = documents(7, false);
    let input = dir.path().join("new.csv");
    write(&input, &docs);
    let out = run(&[
        "predict",
        "--bundle",
        bundle.to_str().unwrap(),
        "--file",
        input.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 7);

    // A single document predicted alone matches its line in the batch.
    let batch: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    let one = dir.path().join("one.csv");
    write(&one, &docs[3..4]);
    let out = run(&[
        "predict",
        "--bundle",
        bundle.to_str().unwrap(),
        "--file",
        one.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&out).trim_end(), batch[3]);
}
