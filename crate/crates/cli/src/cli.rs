//! Command-line entry point.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};
use codetext_core::data::{encode_records, gen_admissions, EncodedRecord};
use codetext_core::harness::{
    finetune, gradient_suite, metrics_csv, run_experiment, split_811, train_dcca, ExperimentConfig, JointView, Mode,
    MetricsRow, RunObserver, SingleView, TrainReport, CSV_HEADER,
};
use codetext_core::ontology::generate_codes;
use codetext_core::OntologyGraph;

use crate::formats::{format_dataset, format_ontology, read_dataset, read_ontology, write_file, DatasetCheck};
use crate::models::{load_classifier, load_dcca, save_classifier, save_dcca, AnyClassifier, ModelInfo};
use crate::snapshot::Snapshot;

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .visible_alias("spec")
            .value_name("FILE")
            .help("key = value config file; flags override it"),
    );
    ExperimentConfig::KEYS.iter().fold(cmd, |cmd, &key| {
        cmd.arg(
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .help_heading("Config overrides"),
        )
    })
}

fn data_args(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("ontology")
            .long("ontology")
            .value_name("FILE")
            .help("ontology file; generated from the config when absent"),
    )
    .arg(
        Arg::new("data")
            .long("data")
            .value_name("FILE")
            .help("dataset JSONL; generated from the config when absent"),
    )
}

fn out_arg(help: &'static str, required: bool) -> Arg {
    Arg::new("out").long("out").value_name("PATH").required(required).help(help)
}

pub fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| config_args(Command::new(name).about(about));
    Command::new("codetext")
        .about("Multi-view joint learning of code ontologies and clinical text")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            sub("gen-ontology", "Generate a random code ontology (--seed sets ontology_seed)")
                .arg(out_arg("ontology file to write", true)),
        )
        .subcommand(
            sub("gen-data", "Generate synthetic admissions (--seed sets data_seed)")
                .arg(Arg::new("ontology").long("ontology").value_name("FILE"))
                .arg(Arg::new("n").long("n").value_name("N").help("number of records"))
                .arg(out_arg("dataset JSONL to write", true)),
        )
        .subcommand(
            data_args(sub("train-dcca", "Correlation phase on the 8:1:1 training split"))
                .arg(out_arg("directory for dcca.snap and history.csv", true)),
        )
        .subcommand(
            data_args(sub("finetune", "Fine-tune one view on the 8:1:1 training split"))
                .arg(
                    Arg::new("view")
                        .long("view")
                        .required(true)
                        .value_parser(["code", "text", "both"]),
                )
                .arg(
                    Arg::new("dcca")
                        .long("dcca")
                        .value_name("FILE")
                        .help("dcca.snap to start from; required for --view both"),
                )
                .arg(out_arg("directory for model.snap and history.csv", true)),
        )
        .subcommand(
            data_args(sub("eval", "Evaluate a model snapshot on the 8:1:1 test split"))
                .arg(Arg::new("model").long("model").value_name("FILE").required(true))
                .arg(out_arg("metrics CSV; stdout when absent", false)),
        )
        .subcommand(
            data_args(sub("unseen-exp", "Unseen-code experiment (--seed runs that seed only)"))
                .arg(
                    Arg::new("folds")
                        .long("folds")
                        .value_name("all|i,j[;i,j...]")
                        .default_value("all")
                        .help("fold pairings (eval fold, dcca fold)"),
                )
                .arg(out_arg("metrics CSV; stdout when absent", false)),
        )
        .subcommand(
            data_args(sub("standard-exp", "Standard 8:1:1 experiment (--seed runs that seed only)"))
                .arg(out_arg("metrics CSV; stdout when absent", false)),
        )
        .subcommand(
            sub("gradcheck", "Finite-difference checks of every gradient at a tiny config")
                .arg(
                    Arg::new("tol")
                        .long("tol")
                        .value_name("TOL")
                        .default_value("1e-4")
                        .value_parser(clap::value_parser!(f64)),
                )
                .arg(out_arg("results CSV; stdout when absent", false)),
        )
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = load_config(sub).with_context(|| format!("{name}: configuration"))?;
    match name {
        "gen-ontology" => gen_ontology(sub, cfg),
        "gen-data" => gen_data(sub, cfg),
        "train-dcca" => cmd_train_dcca(sub, &cfg),
        "finetune" => cmd_finetune(sub, &cfg),
        "eval" => cmd_eval(sub, &cfg),
        "unseen-exp" => cmd_experiment(sub, cfg, true),
        "standard-exp" => cmd_experiment(sub, cfg, false),
        "gradcheck" => cmd_gradcheck(sub, &cfg),
        _ => unreachable!("unknown subcommand"),
    }
    .with_context(|| name.to_string())
}

fn given(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn load_config(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        cfg.apply_text(&text).with_context(|| format!("parsing {path}"))?;
    }
    for &key in ExperimentConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).with_context(|| format!("--{key}"))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn path_arg(m: &ArgMatches, id: &str) -> Option<PathBuf> {
    m.try_get_one::<String>(id).ok().flatten().map(PathBuf::from)
}

fn load_graph(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<(Vec<String>, OntologyGraph)> {
    match path_arg(m, "ontology") {
        Some(p) => read_ontology(&p),
        None => {
            let codes = generate_codes(&cfg.branching, cfg.ontology_seed)?;
            let graph = OntologyGraph::build(&codes)?;
            Ok((codes, graph))
        }
    }
}

fn load_records(m: &ArgMatches, cfg: &ExperimentConfig, graph: &OntologyGraph) -> Result<Vec<EncodedRecord>> {
    let raw = match path_arg(m, "data") {
        Some(p) => read_dataset(
            &p,
            DatasetCheck {
                graph: Some(graph),
                vocab_size: Some(cfg.vocab_size),
            },
        )?,
        None => gen_admissions(graph, &cfg.generator_spec(), cfg.records)?,
    };
    Ok(encode_records(graph, &raw, cfg.vocab_size)?)
}

fn write_or_print(out: Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(&p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen_ontology(m: &ArgMatches, mut cfg: ExperimentConfig) -> Result<()> {
    if given(m, "seed") {
        cfg.ontology_seed = cfg.seed;
    }
    let codes = generate_codes(&cfg.branching, cfg.ontology_seed)?;
    OntologyGraph::build(&codes)?;
    let out = path_arg(m, "out").expect("required");
    write_file(&out, format_ontology(&codes))?;
    eprintln!("wrote {} codes to {}", codes.len(), out.display());
    Ok(())
}

fn gen_data(m: &ArgMatches, mut cfg: ExperimentConfig) -> Result<()> {
    if given(m, "seed") {
        cfg.data_seed = cfg.seed;
    }
    if let Some(n) = m.get_one::<String>("n") {
        cfg.set("records", n).context("--n")?;
    }
    let (_, graph) = load_graph(m, &cfg)?;
    let records = gen_admissions(&graph, &cfg.generator_spec(), cfg.records)?;
    let out = path_arg(m, "out").expect("required");
    write_file(&out, format_dataset(&records))?;
    let positives = records.iter().filter(|r| r.label == 1).count();
    eprintln!("wrote {} records ({positives} positive) to {}", records.len(), out.display());
    Ok(())
}

fn history_csv(phase: &str, r: &TrainReport, out: &mut String) {
    for e in &r.history {
        let _ = writeln!(out, "{phase},{},{:.9},{:.9}", e.epoch, e.train_objective, e.valid_metric);
    }
}

fn report_warnings(label: &str, r: &TrainReport) {
    for w in &r.warnings {
        eprintln!("warning: {label}: {w}");
    }
}

struct Splits<'a> {
    train: Vec<&'a EncodedRecord>,
    valid: Vec<&'a EncodedRecord>,
    test: Vec<&'a EncodedRecord>,
}

fn splits<'a>(records: &'a [EncodedRecord], seed: u64) -> Result<Splits<'a>> {
    let (tr, va, te) = split_811(records.len(), seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| &records[i]).collect();
    Ok(Splits {
        train: pick(tr),
        valid: pick(va),
        test: pick(te),
    })
}

fn cmd_train_dcca(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<()> {
    let (_, graph) = load_graph(m, cfg)?;
    let records = load_records(m, cfg, &graph)?;
    let s = splits(&records, cfg.seed)?;
    let outcome = train_dcca(
        cfg.code_encoder(&graph, None, cfg.seed),
        cfg.text_encoder(cfg.seed),
        &s.train,
        &s.valid,
        &cfg.dcca_options(),
        &cfg.dcca_settings(cfg.seed),
    )?;
    report_warnings("dcca", &outcome.report);
    let dir = path_arg(m, "out").expect("required");
    save_dcca(cfg, cfg.seed, &outcome).write(&dir.join("dcca.snap"))?;
    let mut hist = String::from("phase,epoch,train_objective,valid_metric\n");
    history_csv("dcca", &outcome.report, &mut hist);
    write_file(&dir.join("history.csv"), hist)?;
    eprintln!(
        "best validation correlation {:.4} at epoch {}",
        outcome.report.best_valid, outcome.report.best_epoch
    );
    Ok(())
}

fn cmd_finetune(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<()> {
    let (_, graph) = load_graph(m, cfg)?;
    let records = load_records(m, cfg, &graph)?;
    let s = splits(&records, cfg.seed)?;
    let seed = cfg.seed;
    let dcca = match path_arg(m, "dcca") {
        Some(p) => Some(load_dcca(&Snapshot::read(&p)?, cfg, &graph).with_context(|| format!("{}", p.display()))?),
        None => None,
    };
    let info = ModelInfo {
        variant: if dcca.is_some() { "dcca" } else { "base" }.into(),
        seed,
        corr: dcca.as_ref().map_or(f64::NAN, |d| d.corr),
    };
    let task = cfg.task_settings(seed);
    let trained = match m.get_one::<String>("view").expect("required").as_str() {
        "code" => {
            let (encoder, projection) = match dcca {
                Some(d) => (d.code, Some(d.projection)),
                None => (cfg.code_encoder(&graph, None, seed), None),
            };
            let (c, r) = finetune(cfg.classifier(SingleView { encoder, projection }, seed), &s.train, &s.valid, &task)?;
            (AnyClassifier::Code(c), r)
        }
        "text" => {
            let (encoder, projection) = match dcca {
                Some(d) => (d.text, Some(d.projection)),
                None => (cfg.text_encoder(seed), None),
            };
            let (c, r) = finetune(cfg.classifier(SingleView { encoder, projection }, seed), &s.train, &s.valid, &task)?;
            (AnyClassifier::Text(c), r)
        }
        _ => {
            let d = dcca.context("--view both needs --dcca")?;
            let stack = JointView::new(d.code, d.text, d.projection);
            let (c, r) = finetune(cfg.classifier(stack, seed), &s.train, &s.valid, &task)?;
            (AnyClassifier::Both(c), r)
        }
    };
    finish_finetune(m, cfg, trained, info)
}

fn finish_finetune(
    m: &ArgMatches,
    cfg: &ExperimentConfig,
    (clf, report): (AnyClassifier<'_>, TrainReport),
    info: ModelInfo,
) -> Result<()> {
    let label = format!("{}/{}", clf.view(), info.variant);
    report_warnings(&label, &report);
    let dir = path_arg(m, "out").expect("required");
    save_classifier(cfg, &clf, &info).write(&dir.join("model.snap"))?;
    let mut hist = String::from("phase,epoch,train_objective,valid_metric\n");
    history_csv(&label, &report, &mut hist);
    write_file(&dir.join("history.csv"), hist)?;
    eprintln!(
        "{label}: best validation metric {:.4} at epoch {}",
        report.best_valid, report.best_epoch
    );
    Ok(())
}

fn cmd_eval(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<()> {
    let (_, graph) = load_graph(m, cfg)?;
    let records = load_records(m, cfg, &graph)?;
    let model = path_arg(m, "model").expect("required");
    let snap = Snapshot::read(&model)?;
    let (clf, info) = load_classifier(&snap, cfg, &graph).with_context(|| format!("{}", model.display()))?;
    let s = splits(&records, info.seed)?;
    let e = clf.evaluate(&s.test)?;
    let row = MetricsRow {
        task: cfg.task.clone(),
        view: clf.view().into(),
        variant: info.variant,
        fold: "-".into(),
        seed: info.seed.to_string(),
        auroc: e.auroc,
        ap: e.ap,
        corr: info.corr,
        seconds: 0.0,
    };
    write_or_print(path_arg(m, "out"), &format!("{CSV_HEADER}\n{}\n", row.to_csv_line()))
}

struct Progress {
    start: Instant,
}

impl RunObserver for Progress {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_row(&mut self, row: &MetricsRow) {
        eprintln!(
            "[{:>7.1}s] seed {} fold {} {}/{}: auroc {:.4} ap {:.4}",
            self.now(),
            row.seed,
            row.fold,
            row.view,
            row.variant,
            row.auroc,
            row.ap
        );
    }

    fn on_report(&mut self, label: &str, report: &TrainReport) {
        report_warnings(label, report);
    }
}

/// `all` or `i,j` pairs separated by `;`.
pub fn parse_pairings(s: &str, k: usize) -> Result<Option<Vec<(usize, usize)>>> {
    if s.trim() == "all" {
        return Ok(None);
    }
    let mut out = Vec::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (i, j) = part.split_once(',').with_context(|| format!("fold pairing {part:?} is not i,j"))?;
        let i: usize = i.trim().parse().with_context(|| format!("fold pairing {part:?}"))?;
        let j: usize = j.trim().parse().with_context(|| format!("fold pairing {part:?}"))?;
        ensure!(i < k && j < k && i != j, "fold pairing {i},{j} needs distinct folds below k = {k}");
        out.push((i, j));
    }
    ensure!(!out.is_empty(), "no fold pairings given");
    Ok(Some(out))
}

fn cmd_experiment(m: &ArgMatches, mut cfg: ExperimentConfig, unseen: bool) -> Result<()> {
    if given(m, "seed") {
        cfg.seeds = vec![cfg.seed];
    }
    let (_, graph) = load_graph(m, &cfg)?;
    let records = load_records(m, &cfg, &graph)?;
    let mode = if unseen {
        let folds = m.get_one::<String>("folds").expect("defaulted");
        Mode::Unseen {
            pairings: parse_pairings(folds, cfg.k)?,
        }
    } else {
        Mode::Standard
    };
    let mut progress = Progress { start: Instant::now() };
    let rows = run_experiment(&graph, &records, &cfg, &mode, &mut progress)?;
    write_or_print(path_arg(m, "out"), &metrics_csv(&rows))
}

fn cmd_gradcheck(m: &ArgMatches, cfg: &ExperimentConfig) -> Result<()> {
    let tol = *m.get_one::<f64>("tol").expect("defaulted");
    let results = gradient_suite(cfg.seed)?;
    let mut out = String::from("check,max_rel_error,pass\n");
    let mut failed = Vec::new();
    for r in &results {
        let pass = r.check.passes(tol);
        let _ = writeln!(out, "{},{:.3e},{pass}", r.name, r.check.max_rel_error);
        if !pass {
            failed.push(r.name.clone());
        }
    }
    write_or_print(path_arg(m, "out"), &out)?;
    ensure!(failed.is_empty(), "gradient checks failed: {}", failed.join(", "));
    Ok(())
}
