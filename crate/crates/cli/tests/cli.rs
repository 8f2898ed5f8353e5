use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 9] = ["ingest", "aggregate", "iaa", "features", "train", "predict", "evaluate", "experiment", "demo"];

fn aq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aq"))
        .args(args)
        .current_dir(cwd)
        .env_remove("AQ_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const THREE_RATINGS: &str = r#"{"doc_id":"d1","annotator_id":"a","group":"crowd","scores":{"overall":3}}
{"doc_id":"d1","annotator_id":"b","group":"crowd","scores":{"overall":4}}
{"doc_id":"d1","annotator_id":"c","group":"expert","scores":{"overall":5}}
"#;

#[test]
fn help_on_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let o = aq(&[sub, "--help"], dir.path());
        assert!(o.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{sub}");
    }
    assert!(aq(&["--version"], dir.path()).status.success());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aq(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(aq(&[], dir.path()).status.code(), Some(1));
    assert_eq!(aq(&["aggregate", "--method", "nope"], dir.path()).status.code(), Some(1));
    // Valid syntax, missing required option.
    let o = aq(&["aggregate", "--method", "mean"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--annotations"));
}

#[test]
fn missing_spec_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = aq(&["experiment", "--spec", "missing.json", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.json"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn aggregate_mean_fixture() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ann.jsonl"), THREE_RATINGS).unwrap();
    let o = aq(&["aggregate", "--annotations", "ann.jsonl", "--method", "mean", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = std::fs::read_to_string(dir.path().join("out/scores.tsv")).unwrap();
    let row: Vec<&str> = tsv.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "d1");
    assert_eq!(row.last().unwrap().parse::<f64>().unwrap(), 4.0);

    // Without --out the table goes to stdout.
    let o = aq(&["aggregate", "--annotations", "ann.jsonl", "--method", "mean", "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["scores"]["overall"], 4.0);
}

#[test]
fn config_file_and_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("ann.jsonl"), THREE_RATINGS).unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"method": "crowd", "aggregate": {"annotations": "ann.jsonl", "method": "expert"}}"#,
    )
    .unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", "cfg.json", "aggregate", "--format", "json"];
        args.extend(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_aq"))
            .args(&args)
            .current_dir(dir.path())
            .env("AQ_DATA_DIR", &data)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    // The section beats the top level; a flag beats both.
    assert_eq!(run(&[])[0]["scores"]["overall"], 5.0);
    assert_eq!(run(&["--method", "crowd"])[0]["scores"]["overall"], 3.5);
}

#[test]
fn iaa_blocks_disagreeing_annotator() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = String::new();
    for i in 0..40 {
        let q = 1 + i % 5;
        for (who, v) in [("a", q), ("b", q), ("c", q), ("z", 5 - (i * 7) % 5)] {
            lines.push_str(&format!(
                "{{\"doc_id\":\"d{i}\",\"annotator_id\":\"{who}\",\"group\":\"crowd\",\"scores\":{{\"overall\":{v}}}}}\n"
            ));
        }
    }
    std::fs::write(dir.path().join("ann.jsonl"), lines).unwrap();
    let o = aq(&["iaa", "--annotations", "ann.jsonl", "--threshold", "0.1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("annotator\talpha\tstatus\n"));
    let status: Vec<(&str, &str)> = out
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0], f[2])
        })
        .collect();
    assert_eq!(status, vec![("a", "ok"), ("b", "ok"), ("c", "ok"), ("z", "blocked")]);
}

#[test]
fn writes_only_under_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = aq(&["demo", "--out", "d", "--docs-per-domain", "20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = aq(&["experiment", "--spec", "d/experiment.json", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mut top: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, vec!["d", "run"]);
    for f in ["eval.tsv", "grid.tsv", "model.json", "manifest.json", "history.csv"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn ingest_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.jsonl"),
        "{\"id\":\"a\",\"text\":\"short\"}\n{\"id\":\"a\",\"text\":\"dup\"}\n",
    )
    .unwrap();
    let o = aq(&["ingest", "--corpus", "c.jsonl", "--domain", "cqa", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
