use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::metrics::{auroc, average_precision};
use super::model::{bce_with_logit, Classifier, CodeEncoder, FeatureStack, TextEncoder, ViewEncoder};
use super::optim::Adam;
use crate::data::EncodedRecord;
use crate::dcca::{
    compute_projections, dcca_gradient_with_retry, total_correlation, DccaOptions, DccaProjection,
    ViewBatch,
};
use crate::encoders::{GraphEncoderParams, ParamSet, TextEncoderParams};
use crate::numeric::{Matrix, Rng};
use crate::{Error, Result};

/// Optimisation settings of one training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

/// Per-epoch record of a phase.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training objective over the epoch's batches.
    pub train_objective: f64,
    pub valid_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub best_valid: f64,
    pub history: Vec<EpochLog>,
    pub warnings: Vec<String>,
}

const SHUFFLE_STREAM: u64 = 0x5348;
const DROPOUT_STREAM: u64 = 0xD409;

/// Splits `n` shuffled items into `max(1, n / batch)` nearly equal batches,
/// so no batch is smaller than `batch` unless `n` is.
fn batch_bounds(n: usize, batch: usize) -> Vec<(usize, usize)> {
    let count = (n / batch).max(1);
    (0..count).map(|b| (b * n / count, (b + 1) * n / count)).collect()
}

fn clamp_batch(batch: usize, n: usize, report: &mut TrainReport) -> usize {
    if batch > n {
        report
            .warnings
            .push(format!("batch size {batch} clamped to training size {n}"));
        n
    } else {
        batch
    }
}

fn check_sets(train: &[&EncodedRecord], valid: &[&EncodedRecord]) -> Result<()> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Invalid("training and validation sets must be non-empty".into()));
    }
    Ok(())
}

/// Encoders after the correlation phase, with projections solved on the
/// full training set.
#[derive(Debug, Clone)]
pub struct DccaOutcome<'g> {
    pub code: CodeEncoder<'g>,
    pub text: TextEncoder,
    pub projection: DccaProjection,
    pub report: TrainReport,
}

fn encode_view<E: ViewEncoder>(enc: &E, records: &[&EncodedRecord]) -> Result<Matrix> {
    let inputs: Vec<&[usize]> = records.iter().map(|r| E::input(r)).collect();
    Ok(enc.encode(&inputs)?.0)
}

/// Trains both encoders to maximise total correlation, keeping the snapshot
/// with the best validation correlation.
pub fn train_dcca<'g>(
    mut code: CodeEncoder<'g>,
    mut text: TextEncoder,
    train: &[&EncodedRecord],
    valid: &[&EncodedRecord],
    opts: &DccaOptions,
    s: &TrainSettings,
) -> Result<DccaOutcome<'g>> {
    check_sets(train, valid)?;
    let mut report = TrainReport::default();
    let batch = clamp_batch(s.batch, train.len(), &mut report);
    let mut rng = Rng::new(s.seed, SHUFFLE_STREAM);
    let mut opt = Adam::new(s.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(GraphEncoderParams, TextEncoderParams)> = None;
    let mut best_valid = f64::NEG_INFINITY;

    for epoch in 1..=s.epochs {
        rng.shuffle(&mut order);
        let mut objective = 0.0;
        let bounds = batch_bounds(order.len(), batch);
        for (b, &(lo, hi)) in bounds.iter().enumerate() {
            let diverged = || Error::Diverged { epoch, batch: b };
            let non_finite = |e: Error| match e {
                Error::NonFinite(_) => diverged(),
                other => other,
            };
            let recs: Vec<&EncodedRecord> = order[lo..hi].iter().map(|&i| train[i]).collect();
            let codes: Vec<&[usize]> = recs.iter().map(|r| r.codes.as_slice()).collect();
            let rows: Vec<&[usize]> = recs.iter().map(|r| r.rows.as_slice()).collect();
            let (ec, cc) = code.encode(&codes).map_err(non_finite)?;
            let (et, tc) = text.encode(&rows).map_err(non_finite)?;
            let g = match dcca_gradient_with_retry(ViewBatch::new(&ec, &et)?, opts, 3) {
                Ok(g) if g.correlation.is_finite() => g,
                Ok(_) | Err(Error::NonFinite(_)) => return Err(diverged()),
                Err(Error::DegenerateGap(a, b2)) => {
                    report.warnings.push(format!(
                        "epoch {epoch}, batch {b} skipped: top-L boundary {a:e} / {b2:e} not separable"
                    ));
                    continue;
                }
                Err(e) => return Err(e.context(format!("epoch {epoch}, batch {b}"))),
            };
            objective += g.correlation;
            // minimise the negated correlation
            let mut gc = code.params.zeros_like();
            code.backward(&cc, &g.d_code.scale(-1.0), &mut gc)?;
            let mut gt = text.params.zeros_like();
            text.backward(&tc, &g.d_text.scale(-1.0), &mut gt)?;
            if !gc.all_finite() || !gt.all_finite() {
                return Err(diverged());
            }
            let mut params = code.params.blocks_mut();
            params.extend(text.params.blocks_mut());
            let mut grads = gc.blocks();
            grads.extend(gt.blocks());
            opt.update_blocks(params, grads);
        }
        let vc = encode_view(&code, valid)?;
        let vt = encode_view(&text, valid)?;
        let corr = total_correlation(ViewBatch::new(&vc, &vt)?, opts)
            .map_err(|e| e.context(format!("validation correlation, epoch {epoch}")))?;
        report.history.push(EpochLog {
            epoch,
            train_objective: objective / bounds.len() as f64,
            valid_metric: corr,
        });
        if corr > best_valid {
            best_valid = corr;
            report.best_epoch = epoch;
            best = Some((code.params.clone(), text.params.clone()));
        } else if epoch - report.best_epoch >= s.patience {
            break;
        }
    }
    if let Some((c, t)) = best {
        code.params = c;
        text.params = t;
    }
    report.best_valid = best_valid;
    let tc = encode_view(&code, train)?;
    let tt = encode_view(&text, train)?;
    let projection = compute_projections(ViewBatch::new(&tc, &tt)?, opts)
        .map_err(|e| e.context("projections on the training set"))?;
    Ok(DccaOutcome {
        code,
        text,
        projection,
        report,
    })
}

/// Ranking metrics of a classifier on labelled records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub auroc: f64,
    pub ap: f64,
}

fn labels_of(records: &[&EncodedRecord]) -> Vec<u8> {
    records.iter().map(|r| u8::from(r.label > 0.5)).collect()
}

fn scores<S: FeatureStack>(clf: &Classifier<S>, records: &[&EncodedRecord]) -> Result<Vec<f64>> {
    let inputs: Vec<&S::Input> = records.iter().map(|r| S::input(r)).collect();
    clf.predict_batch(&inputs)
}

pub fn evaluate<S: FeatureStack>(clf: &Classifier<S>, records: &[&EncodedRecord]) -> Result<Evaluation> {
    let s = scores(clf, records)?;
    let l = labels_of(records);
    Ok(Evaluation {
        auroc: auroc(&s, &l)?,
        ap: average_precision(&s, &l)?,
    })
}

/// Validation AUROC, or the negated mean cross-entropy when the validation
/// labels are all one class.
fn validation_metric<S: FeatureStack>(clf: &Classifier<S>, valid: &[&EncodedRecord]) -> Result<f64> {
    let s = scores(clf, valid)?;
    let l = labels_of(valid);
    if l.iter().all(|&x| x == l[0]) {
        let loss: f64 = s
            .iter()
            .zip(valid)
            .map(|(&p, r)| {
                let z = libm::log(p.max(1e-300)) - libm::log((1.0 - p).max(1e-300));
                bce_with_logit(z, r.label)
            })
            .sum();
        return Ok(-loss / valid.len() as f64);
    }
    auroc(&s, &l)
}

/// Minimises binary cross-entropy end to end with early stopping on the
/// validation metric; returns the best snapshot. Frozen projections inside
/// the stack are not trainable parameters and stay fixed.
pub fn finetune<S: FeatureStack>(
    mut clf: Classifier<S>,
    train: &[&EncodedRecord],
    valid: &[&EncodedRecord],
    s: &TrainSettings,
) -> Result<(Classifier<S>, TrainReport)> {
    check_sets(train, valid)?;
    let mut report = TrainReport::default();
    let batch = clamp_batch(s.batch, train.len(), &mut report);
    let mut shuffle = Rng::new(s.seed, SHUFFLE_STREAM);
    let mut dropout = Rng::new(s.seed, DROPOUT_STREAM);
    let mut opt = Adam::new(s.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = None;
    let mut best_valid = f64::NEG_INFINITY;

    for epoch in 1..=s.epochs {
        shuffle.shuffle(&mut order);
        let bounds = batch_bounds(order.len(), batch);
        let mut objective = 0.0;
        for (b, &(lo, hi)) in bounds.iter().enumerate() {
            let recs: Vec<&EncodedRecord> = order[lo..hi].iter().map(|&i| train[i]).collect();
            let inputs: Vec<&S::Input> = recs.iter().map(|r| S::input(r)).collect();
            let labels: Vec<f64> = recs.iter().map(|r| r.label).collect();
            let (loss, grads) = clf
                .loss_and_grad(&inputs, &labels, Some(&mut dropout))
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged { epoch, batch: b },
                    other => other,
                })?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            objective += loss;
            opt.update_blocks(clf.blocks_mut(), grads.blocks());
        }
        let metric = validation_metric(&clf, valid)?;
        report.history.push(EpochLog {
            epoch,
            train_objective: objective / bounds.len() as f64,
            valid_metric: metric,
        });
        if metric > best_valid {
            best_valid = metric;
            report.best_epoch = epoch;
            best = Some(clf.clone());
        } else if epoch - report.best_epoch >= s.patience {
            break;
        }
    }
    report.best_valid = best_valid;
    Ok((best.unwrap_or(clf), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_records, gen_admissions, GeneratorSpec};
    use crate::harness::model::SingleView;
    use crate::ontology::{generate_codes, OntologyGraph};

    #[test]
    fn batches_cover_everything() {
        assert_eq!(batch_bounds(10, 4), [(0, 5), (5, 10)]);
        assert_eq!(batch_bounds(3, 4), [(0, 3)]);
        let b = batch_bounds(1000, 256);
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|(lo, hi)| hi - lo >= 256));
        assert_eq!(b.last().unwrap().1, 1000);
    }

    fn fixture(n: usize, noise: f64) -> (OntologyGraph, Vec<EncodedRecord>) {
        let g = OntologyGraph::build(&generate_codes(&[6, 3, 2], 0).unwrap()).unwrap();
        let spec = GeneratorSpec {
            tokens_min: 6,
            tokens_max: 12,
            vocab_size: 40,
            code_noise: noise,
            token_noise: noise,
            ..GeneratorSpec::default()
        };
        let recs = gen_admissions(&g, &spec, n).unwrap();
        let enc = encode_records(&g, &recs, spec.vocab_size).unwrap();
        (g, enc)
    }

    #[test]
    fn all_zero_labels_drive_probabilities_down() {
        let (g, mut recs) = fixture(120, 0.3);
        for r in &mut recs {
            r.label = 0.0;
        }
        let refs: Vec<&EncodedRecord> = recs.iter().collect();
        let mut rng = Rng::new(0, 0);
        let enc = CodeEncoder::new(&g, 4, 2, false, &mut rng);
        let clf = Classifier::new(SingleView { encoder: enc, projection: None }, 2, 4, 0.0, &mut rng);
        let before = clf.predict(&recs[0].codes).unwrap();
        let s = TrainSettings {
            lr: 0.05,
            batch: 40,
            epochs: 40,
            patience: 40,
            seed: 1,
        };
        let (clf, report) = finetune(clf, &refs[..100], &refs[100..], &s).unwrap();
        let after = clf.predict(&recs[0].codes).unwrap();
        assert!(after < 0.02 && after < before, "{before} -> {after}");
        assert!(report.history.last().unwrap().train_objective < 0.02);
    }

    #[test]
    fn early_stopping_keeps_the_best_snapshot() {
        let (g, recs) = fixture(200, 0.3);
        let refs: Vec<&EncodedRecord> = recs.iter().collect();
        let mut rng = Rng::new(2, 0);
        let enc = CodeEncoder::new(&g, 4, 2, false, &mut rng);
        let clf = Classifier::new(SingleView { encoder: enc, projection: None }, 2, 4, 0.2, &mut rng);
        let s = TrainSettings {
            lr: 0.02,
            batch: 32,
            epochs: 15,
            patience: 3,
            seed: 3,
        };
        let (best, report) = finetune(clf, &refs[..150], &refs[150..], &s).unwrap();
        let max = report.history.iter().map(|e| e.valid_metric).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_valid, max);
        assert_eq!(report.history[report.best_epoch - 1].valid_metric, max);
        assert_eq!(validation_metric(&best, &refs[150..]).unwrap(), max);
        let last = report.history.len();
        assert!(last == s.epochs || last - report.best_epoch == s.patience);
    }

    #[test]
    fn dcca_phase_is_deterministic_and_clamps_batches() {
        let (g, recs) = fixture(160, 0.0);
        let refs: Vec<&EncodedRecord> = recs.iter().collect();
        let run = || {
            let mut rng = Rng::new(4, 0);
            let code = CodeEncoder::new(&g, 3, 2, false, &mut rng);
            let text = TextEncoder::new(40, 3, 4, true, &mut rng);
            let opts = DccaOptions {
                dims: 3,
                ..DccaOptions::default()
            };
            let s = TrainSettings {
                lr: 0.01,
                batch: 1024,
                epochs: 4,
                patience: 4,
                seed: 5,
            };
            train_dcca(code, text, &refs[..120], &refs[120..], &opts, &s).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.report, b.report);
        assert_eq!(a.projection, b.projection);
        assert_eq!(a.report.warnings.len(), 1);
        assert!(a.report.best_valid > 0.0);
    }
}
