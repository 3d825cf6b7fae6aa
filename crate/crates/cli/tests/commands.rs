mod common;

use std::fs;

use codetext::formats::{parse_dataset, DatasetCheck};
use codetext::snapshot::Snapshot;
use common::{run, run_ok, run_pipeline, TINY_CONFIG};

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let files = run_pipeline(dir.path());
    for name in [
        "o.txt",
        "d.jsonl",
        "dcca/dcca.snap",
        "dcca/history.csv",
        "ft_both/model.snap",
        "base_code/history.csv",
        "eval_ft_text.csv",
        "unseen.csv",
        "standard.csv",
    ] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let header = "task,view,variant,fold,seed,auroc,ap,corr,seconds\n";
    for name in ["eval_ft_code.csv", "unseen.csv", "standard.csv", "stdout/eval"] {
        assert!(files[name].starts_with(header.as_bytes()), "{name}");
    }
    let unseen = String::from_utf8(files["unseen.csv"].clone()).unwrap();
    for fold in ["0:1", "2:0"] {
        for variant in ["base", "labeling", "dcca", "dcca+labeling"] {
            let tag = format!(",code,{variant},{fold},4,");
            assert!(unseen.contains(&tag), "{tag} missing from\n{unseen}");
        }
    }
    let base = String::from_utf8(files["eval_base_code.csv"].clone()).unwrap();
    assert!(base.lines().nth(1).unwrap().starts_with("synthetic,code,base,-,0,"));
    let grad = String::from_utf8(files["stdout/gradcheck"].clone()).unwrap();
    assert_eq!(grad.lines().count(), 7);
    assert!(grad.lines().skip(1).all(|l| l.ends_with(",true")), "{grad}");

    let snap = Snapshot::from_bytes(&files["ft_both/model.snap"]).unwrap();
    assert_eq!(snap.meta("view").unwrap(), "both");
    assert_eq!(snap.meta("variant").unwrap(), "dcca");
    let records = parse_dataset(std::str::from_utf8(&files["d.jsonl"]).unwrap(), DatasetCheck::default()).unwrap();
    assert_eq!(records.len(), 200);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_pipeline(a.path());
    let fb = run_pipeline(b.path());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{k} differs between runs");
    }
}

#[test]
fn failures_exit_non_zero_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.cfg"), TINY_CONFIG).unwrap();
    run_ok(d, &["gen-ontology", "--config", "tiny.cfg", "--out", "o.txt"]);

    let out = run(d, &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(d, &["gradcheck", "--hidden", "many"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--hidden"), "{}", stderr(&out));

    fs::write(d.join("bad.cfg"), "hidden = 4\nwidth = 3\n").unwrap();
    let out = run(d, &["gradcheck", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let codes = fs::read_to_string(d.join("o.txt")).unwrap();
    let first = codes.lines().find(|l| !l.starts_with('#')).unwrap();
    fs::write(
        d.join("bad.jsonl"),
        format!("{{\"codes\":[\"{first}\"],\"tokens\":[1],\"label\":0}}\n{{\"codes\":[\"QQQ\"],\"tokens\":[1],\"label\":1}}\n"),
    )
    .unwrap();
    let args = ["--config", "tiny.cfg", "--ontology", "o.txt"];
    let out = run(d, &[&["train-dcca"][..], &args, &["--data", "bad.jsonl", "--out", "x"]].concat());
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("line 2") && msg.contains("\"QQQ\""), "{msg}");

    fs::write(d.join("empty.jsonl"), "").unwrap();
    let out = run(d, &[&["train-dcca"][..], &args, &["--data", "empty.jsonl", "--out", "x"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("0 records"), "{}", stderr(&out));

    let out = run(d, &[&["finetune", "--view", "both"][..], &args, &["--out", "x"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--dcca"));
}

#[test]
fn snapshots_are_bound_to_their_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.cfg"), TINY_CONFIG).unwrap();
    let base = ["--config", "tiny.cfg", "--records", "120"];
    run_ok(d, &[&["train-dcca"][..], &base, &["--out", "dc"]].concat());
    run_ok(d, &[&["finetune", "--view", "text"][..], &base, &["--out", "ft"]].concat());

    let out = run(d, &[&["eval"][..], &base, &["--dropout", "0.25", "--model", "ft/model.snap"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("config hash"), "{}", stderr(&out));

    let out = run(d, &[&["eval"][..], &base, &["--model", "dc/dcca.snap"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("classifier"), "{}", stderr(&out));

    let out = run_ok(d, &[&["eval"][..], &base, &["--model", "ft/model.snap"]].concat());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("synthetic,text,base,-,0,"), "{csv}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.cfg"), TINY_CONFIG).unwrap();
    run_ok(d, &["gen-ontology", "--config", "tiny.cfg", "--branching", "2,2", "--out", "small.txt"]);
    let codes = fs::read_to_string(d.join("small.txt")).unwrap();
    let leaves: Vec<&str> = codes.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(leaves.len() <= 4 && leaves.iter().all(|c| c.len() == 2), "{leaves:?}");

    run_ok(d, &["gen-data", "--config", "tiny.cfg", "--ontology", "small.txt", "--n", "7", "--seed", "1", "--out", "a.jsonl"]);
    run_ok(d, &["gen-data", "--config", "tiny.cfg", "--ontology", "small.txt", "--n", "7", "--data_seed", "1", "--out", "b.jsonl"]);
    run_ok(d, &["gen-data", "--config", "tiny.cfg", "--ontology", "small.txt", "--n", "7", "--out", "c.jsonl"]);
    let read = |n: &str| fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(String::from_utf8(read("a.jsonl")).unwrap().lines().count(), 7);
}
