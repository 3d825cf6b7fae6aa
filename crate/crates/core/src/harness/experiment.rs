use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::config::ExperimentConfig;
use super::metrics::mean_std;
use super::model::{Classifier, CodeEncoder, JointView, SingleView, TextEncoder};
use super::train::{evaluate, finetune, train_dcca, DccaOutcome, Evaluation, TrainReport, TrainSettings};
use crate::data::EncodedRecord;
use crate::dcca::DccaProjection;
use crate::numeric::Rng;
use crate::ontology::OntologyGraph;
use crate::unseen::{build_unseen_experiment, default_dcca_fold, kfold_code_split, label_column, SeenSet};
use crate::{Error, Result};

/// Header of the metrics CSV.
pub const CSV_HEADER: &str = "task,view,variant,fold,seed,auroc,ap,corr,seconds";

/// One evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub task: String,
    /// `code`, `text` or `both`.
    pub view: String,
    /// `base`, `labeling`, `dcca` or `dcca+labeling`.
    pub variant: String,
    pub fold: String,
    pub seed: String,
    pub auroc: f64,
    pub ap: f64,
    /// Validation total correlation of the DCCA phase; NaN without one.
    pub corr: f64,
    pub seconds: f64,
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.task,
            self.view,
            self.variant,
            self.fold,
            self.seed,
            fmt(self.auroc),
            fmt(self.ap),
            fmt(self.corr),
            format!("{:.3}", self.seconds)
        )
    }
}

/// Mean and standard-deviation rows per `(task, view, variant)`, in first
/// appearance order. Their `fold` column reads `mean` or `std`.
pub fn summary_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut keys: Vec<(&str, &str, &str)> = Vec::new();
    for r in rows {
        let k = (r.task.as_str(), r.view.as_str(), r.variant.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (task, view, variant) in keys {
        let group: Vec<&MetricsRow> = rows
            .iter()
            .filter(|r| r.task == task && r.view == view && r.variant == variant)
            .collect();
        let col = |f: fn(&MetricsRow) -> f64| mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (am, asd) = col(|r| r.auroc);
        let (pm, psd) = col(|r| r.ap);
        let (cm, csd) = col(|r| r.corr);
        let (sm, ssd) = col(|r| r.seconds);
        for (label, a, p, c, s) in [("mean", am, pm, cm, sm), ("std", asd, psd, csd, ssd)] {
            out.push(MetricsRow {
                task: task.to_string(),
                view: view.to_string(),
                variant: variant.to_string(),
                fold: label.to_string(),
                seed: "all".to_string(),
                auroc: a,
                ap: p,
                corr: c,
                seconds: s,
            });
        }
    }
    out
}

/// Header, the rows, then their summary rows.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows.iter().cloned().chain(summary_rows(rows)) {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Hooks for timing and progress; all optional.
pub trait RunObserver {
    /// Seconds on some monotonic clock; only read when wall time is recorded.
    fn now(&self) -> f64 {
        0.0
    }
    fn on_row(&mut self, _row: &MetricsRow) {}
    fn on_report(&mut self, _label: &str, _report: &TrainReport) {}
}

/// Observer that ignores everything.
pub struct Silent;

impl RunObserver for Silent {}

/// Which experiment protocol to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    /// 8:1:1 split per seed; base and DCCA variants of both views plus the
    /// joint model.
    Standard,
    /// Unseen-code folds `(eval, dcca)`; `None` runs every eval fold with
    /// the default DCCA fold.
    Unseen { pairings: Option<Vec<(usize, usize)>> },
}

const INIT_CODE: u64 = 0x1C0D;
const INIT_TEXT: u64 = 0x17E7;
const INIT_HEAD: u64 = 0x1EAD;
const SPLIT: u64 = 0x5B17;

impl ExperimentConfig {
    pub fn dcca_settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            lr: self.dcca_lr,
            batch: self.dcca_batch,
            epochs: self.dcca_epochs,
            patience: self.patience,
            seed,
        }
    }

    pub fn task_settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            lr: self.task_lr,
            batch: self.task_batch,
            epochs: self.task_epochs,
            patience: self.patience,
            seed,
        }
    }

    /// Freshly initialised code encoder; identical across variants for a seed.
    pub fn code_encoder<'g>(&self, graph: &'g OntologyGraph, flags: Option<Vec<f64>>, seed: u64) -> CodeEncoder<'g> {
        let mut rng = Rng::new(seed, INIT_CODE);
        let mut enc = CodeEncoder::new(graph, self.hidden, self.rgcn_layers, flags.is_some(), &mut rng);
        enc.flags = flags;
        enc
    }

    pub fn text_encoder(&self, seed: u64) -> TextEncoder {
        let mut rng = Rng::new(seed, INIT_TEXT);
        TextEncoder::new(self.vocab_size, self.hidden, self.block_size, self.bidirectional, &mut rng)
    }

    pub fn classifier<S: super::model::FeatureStack>(&self, stack: S, seed: u64) -> Classifier<S> {
        let mut rng = Rng::new(seed, INIT_HEAD);
        Classifier::new(stack, self.mlp_layers, self.hidden, self.dropout, &mut rng)
    }
}

/// Seeded 8:1:1 split of `0..n` into train, validation and test indices.
pub fn split_811(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::Invalid(format!("{n} records cannot be split 8:1:1")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed, SPLIT).shuffle(&mut idx);
    let n_train = n * 8 / 10;
    let n_valid = (n - n_train) / 2;
    let test = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok((idx, valid, test))
}

fn pick<'a>(records: &'a [EncodedRecord], idx: &[usize]) -> Vec<&'a EncodedRecord> {
    idx.iter().map(|&i| &records[i]).collect()
}

struct RowKey<'a> {
    cfg: &'a ExperimentConfig,
    fold: String,
    seed: u64,
}

impl RowKey<'_> {
    fn row(&self, view: &str, variant: &str, e: Evaluation, corr: f64, seconds: f64) -> MetricsRow {
        MetricsRow {
            task: self.cfg.task.clone(),
            view: view.into(),
            variant: variant.into(),
            fold: self.fold.clone(),
            seed: self.seed.to_string(),
            auroc: e.auroc,
            ap: e.ap,
            corr,
            seconds: if self.cfg.record_time { seconds } else { 0.0 },
        }
    }
}

/// Runs every configured seed under `mode`.
pub fn run_experiment(
    graph: &OntologyGraph,
    records: &[EncodedRecord],
    cfg: &ExperimentConfig,
    mode: &Mode,
    observer: &mut dyn RunObserver,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let new = match mode {
            Mode::Standard => run_standard_seed(graph, records, cfg, seed, observer),
            Mode::Unseen { pairings } => run_unseen_seed(graph, records, cfg, pairings.as_deref(), seed, observer),
        }
        .map_err(|e| e.context(format!("seed {seed}")))?;
        rows.extend(new);
    }
    Ok(rows)
}

fn emit(rows: &mut Vec<MetricsRow>, row: MetricsRow, observer: &mut dyn RunObserver) {
    observer.on_row(&row);
    rows.push(row);
}

fn run_standard_seed(
    graph: &OntologyGraph,
    records: &[EncodedRecord],
    cfg: &ExperimentConfig,
    seed: u64,
    observer: &mut dyn RunObserver,
) -> Result<Vec<MetricsRow>> {
    let (tr, va, te) = split_811(records.len(), seed)?;
    let (train, valid, test) = (pick(records, &tr), pick(records, &va), pick(records, &te));
    let key = RowKey {
        cfg,
        fold: "-".into(),
        seed,
    };
    let task = cfg.task_settings(seed);
    let mut rows = Vec::new();
    let nan = f64::NAN;

    let t0 = observer.now();
    let base = cfg.classifier(SingleView { encoder: cfg.code_encoder(graph, None, seed), projection: None }, seed);
    let (clf, rep) = finetune(base, &train, &valid, &task).map_err(|e| e.context("code/base"))?;
    observer.on_report("code/base", &rep);
    let row = key.row("code", "base", evaluate(&clf, &test)?, nan, observer.now() - t0);
    emit(&mut rows, row, observer);

    let t0 = observer.now();
    let base = cfg.classifier(SingleView { encoder: cfg.text_encoder(seed), projection: None }, seed);
    let (clf, rep) = finetune(base, &train, &valid, &task).map_err(|e| e.context("text/base"))?;
    observer.on_report("text/base", &rep);
    let row = key.row("text", "base", evaluate(&clf, &test)?, nan, observer.now() - t0);
    emit(&mut rows, row, observer);

    let t0 = observer.now();
    let outcome = train_dcca(
        cfg.code_encoder(graph, None, seed),
        cfg.text_encoder(seed),
        &train,
        &valid,
        &cfg.dcca_options(),
        &cfg.dcca_settings(seed),
    )
    .map_err(|e| e.context("dcca phase"))?;
    observer.on_report("dcca", &outcome.report);
    let dcca_seconds = observer.now() - t0;
    let corr = outcome.report.best_valid;
    let DccaOutcome { code, text, projection, .. } = outcome;

    let t0 = observer.now();
    let clf = cfg.classifier(SingleView { encoder: code.clone(), projection: Some(projection.clone()) }, seed);
    let (clf, rep) = finetune(clf, &train, &valid, &task).map_err(|e| e.context("code/dcca"))?;
    observer.on_report("code/dcca", &rep);
    let row = key.row("code", "dcca", evaluate(&clf, &test)?, corr, dcca_seconds + observer.now() - t0);
    emit(&mut rows, row, observer);

    let t0 = observer.now();
    let clf = cfg.classifier(SingleView { encoder: text.clone(), projection: Some(projection.clone()) }, seed);
    let (clf, rep) = finetune(clf, &train, &valid, &task).map_err(|e| e.context("text/dcca"))?;
    observer.on_report("text/dcca", &rep);
    let row = key.row("text", "dcca", evaluate(&clf, &test)?, corr, dcca_seconds + observer.now() - t0);
    emit(&mut rows, row, observer);

    let t0 = observer.now();
    let clf = cfg.classifier(JointView::new(code, text, projection), seed);
    let (clf, rep) = finetune(clf, &train, &valid, &task).map_err(|e| e.context("both/dcca"))?;
    observer.on_report("both/dcca", &rep);
    let row = key.row("both", "dcca", evaluate(&clf, &test)?, corr, dcca_seconds + observer.now() - t0);
    emit(&mut rows, row, observer);
    Ok(rows)
}

/// Fold pairings to run for `k` folds.
pub fn resolve_pairings(pairings: Option<&[(usize, usize)]>, k: usize) -> Vec<(usize, usize)> {
    match pairings {
        Some(p) => p.to_vec(),
        None => (0..k).map(|i| (i, default_dcca_fold(i, k))).collect(),
    }
}

fn run_unseen_seed(
    graph: &OntologyGraph,
    records: &[EncodedRecord],
    cfg: &ExperimentConfig,
    pairings: Option<&[(usize, usize)]>,
    seed: u64,
    observer: &mut dyn RunObserver,
) -> Result<Vec<MetricsRow>> {
    let folds = kfold_code_split(graph.leaves(), cfg.k, seed)?;
    let mut rows = Vec::new();
    for (i, j) in resolve_pairings(pairings, cfg.k) {
        let new = run_unseen_pairing(graph, records, cfg, &folds, i, j, seed, observer)
            .map_err(|e| e.context(format!("fold pairing {i},{j}")))?;
        rows.extend(new);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_unseen_pairing(
    graph: &OntologyGraph,
    records: &[EncodedRecord],
    cfg: &ExperimentConfig,
    folds: &[Vec<usize>],
    i: usize,
    j: usize,
    seed: u64,
    observer: &mut dyn RunObserver,
) -> Result<Vec<MetricsRow>> {
    let split = build_unseen_experiment(records, folds, i, j, seed)?;
    let full_train = pick(records, &split.full_train);
    let dcca_train = pick(records, &split.dcca_train);
    let valid = pick(records, &split.valid);
    let test = pick(records, &split.test);
    let seen: SeenSet = split.seen_set(graph, records)?;
    let flags = label_column(graph, &seen, cfg.internal_labels);
    let key = RowKey {
        cfg,
        fold: format!("{i}:{j}"),
        seed,
    };
    let task = cfg.task_settings(seed);
    let mut rows = Vec::new();

    for (variant, labeled, dcca) in [
        ("base", false, false),
        ("labeling", true, false),
        ("dcca", false, true),
        ("dcca+labeling", true, true),
    ] {
        let t0 = observer.now();
        let f = labeled.then(|| flags.clone());
        let (encoder, projection, corr): (CodeEncoder<'_>, Option<DccaProjection>, f64) = if dcca {
            let outcome = train_dcca(
                cfg.code_encoder(graph, f, seed),
                cfg.text_encoder(seed),
                &dcca_train,
                &valid,
                &cfg.dcca_options(),
                &cfg.dcca_settings(seed),
            )
            .map_err(|e| e.context(format!("{variant} dcca phase")))?;
            observer.on_report(&format!("code/{variant}/dcca"), &outcome.report);
            (outcome.code, Some(outcome.projection), outcome.report.best_valid)
        } else {
            (cfg.code_encoder(graph, f, seed), None, f64::NAN)
        };
        let clf = cfg.classifier(SingleView { encoder, projection }, seed);
        let (clf, rep) = finetune(clf, &full_train, &valid, &task).map_err(|e| e.context(variant))?;
        observer.on_report(&format!("code/{variant}"), &rep);
        let row = key.row("code", variant, evaluate(&clf, &test)?, corr, observer.now() - t0);
        emit(&mut rows, row, observer);
    }
    Ok(rows)
}
