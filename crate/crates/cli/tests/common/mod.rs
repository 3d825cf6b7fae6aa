#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY_CONFIG: &str = "\
# small enough for a few seconds per command
hidden = 4
rgcn_layers = 2
block_size = 5
dims = 3
branching = 4,3,2
records = 300
classes = 2
codes_min = 1
codes_max = 3
tokens_min = 10
tokens_max = 20
vocab_size = 60
dcca_epochs = 3
task_epochs = 3
dcca_batch = 100
task_batch = 50
k = 3
";

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_codetext"))
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn codetext")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "codetext {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs every subcommand once in `dir`; returns each artifact's bytes by
/// relative path, with stdout captures under `stdout/<command>`.
pub fn run_pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::write(dir.join("tiny.cfg"), TINY_CONFIG).unwrap();
    let data = ["--config", "tiny.cfg", "--ontology", "o.txt", "--data", "d.jsonl"];
    let with = |extra: &[&'static str]| -> Vec<&'static str> { data.iter().chain(extra).copied().collect() };
    let mut stdout = BTreeMap::new();
    run_ok(dir, &["gen-ontology", "--config", "tiny.cfg", "--seed", "3", "--out", "o.txt"]);
    run_ok(dir, &["gen-data", "--config", "tiny.cfg", "--ontology", "o.txt", "--n", "200", "--out", "d.jsonl"]);
    run_ok(dir, &[&["train-dcca"][..], &with(&["--out", "dcca"])].concat());
    for (view, out) in [("code", "ft_code"), ("text", "ft_text"), ("both", "ft_both")] {
        let args = [&["finetune", "--view", view][..], &with(&["--dcca", "dcca/dcca.snap", "--out"]), &[out]].concat();
        run_ok(dir, &args);
    }
    run_ok(dir, &[&["finetune", "--view", "code"][..], &with(&["--out", "base_code"])].concat());
    for m in ["ft_code", "ft_text", "ft_both", "base_code"] {
        let model = format!("{m}/model.snap");
        let out = format!("eval_{m}.csv");
        run_ok(dir, &[&["eval"][..], &with(&["--model"]), &[model.as_str(), "--out", out.as_str()]].concat());
    }
    run_ok(dir, &["unseen-exp", "--config", "tiny.cfg", "--folds", "0,1;2,0", "--seed", "4", "--out", "unseen.csv"]);
    run_ok(dir, &["standard-exp", "--config", "tiny.cfg", "--out", "standard.csv"]);
    let out = run_ok(dir, &["gradcheck"]);
    stdout.insert("stdout/gradcheck".to_string(), out.stdout);
    let out = run_ok(dir, &[&["eval"][..], &with(&["--model", "ft_text/model.snap"])].concat());
    stdout.insert("stdout/eval".to_string(), out.stdout);

    let mut files = collect(dir, dir);
    files.extend(stdout);
    files
}

fn collect(root: &Path, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(collect(root, &p));
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, fs::read(&p).unwrap());
        }
    }
    out
}
