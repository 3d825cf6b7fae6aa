//! Saving and restoring trained models through [`Snapshot`]s.

use anyhow::{bail, ensure, Context, Result};
use codetext_core::dcca::DccaProjection;
use codetext_core::encoders::ParamSet;
use codetext_core::harness::{
    evaluate, Classifier, CodeEncoder, DccaOutcome, Evaluation, ExperimentConfig, FeatureStack, JointView,
    SingleView, TextEncoder,
};
use codetext_core::data::EncodedRecord;
use codetext_core::{Matrix, OntologyGraph};

use crate::snapshot::Snapshot;

const PROJECTION_BLOCKS: usize = 5;

fn row(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("one row")
}

fn push_projection(s: &mut Snapshot, p: &DccaProjection) {
    s.push([&p.u, &p.v, &row(&p.mean_code), &row(&p.mean_text), &row(&p.correlations)]);
    s.meta.insert("reg_code".into(), p.reg_code.to_string());
    s.meta.insert("reg_text".into(), p.reg_text.to_string());
}

fn read_projection(s: &Snapshot, start: usize) -> Result<DccaProjection> {
    ensure!(s.blocks.len() >= start + PROJECTION_BLOCKS, "snapshot is missing projection blocks");
    let b = &s.blocks[start..start + PROJECTION_BLOCKS];
    let p = DccaProjection {
        u: b[0].clone(),
        v: b[1].clone(),
        mean_code: b[2].as_slice().to_vec(),
        mean_text: b[3].as_slice().to_vec(),
        correlations: b[4].as_slice().to_vec(),
        reg_code: s.meta("reg_code")?.parse().context("reg_code")?,
        reg_text: s.meta("reg_text")?.parse().context("reg_text")?,
    };
    let l = p.u.cols();
    ensure!(
        p.v.cols() == l && p.mean_code.len() == p.u.rows() && p.mean_text.len() == p.v.rows() && p.correlations.len() == l,
        "inconsistent projection blocks"
    );
    Ok(p)
}

/// Encoders and projection of a correlation phase.
pub fn save_dcca(cfg: &ExperimentConfig, seed: u64, out: &DccaOutcome<'_>) -> Snapshot {
    let mut s = Snapshot::new(cfg)
        .with_meta("kind", "dcca")
        .with_meta("seed", seed)
        .with_meta("best_epoch", out.report.best_epoch)
        .with_meta("corr", out.report.best_valid);
    s.push(out.code.params.blocks());
    s.push(out.text.params.blocks());
    push_projection(&mut s, &out.projection);
    s
}

pub struct LoadedDcca<'g> {
    pub code: CodeEncoder<'g>,
    pub text: TextEncoder,
    pub projection: DccaProjection,
    pub corr: f64,
}

pub fn load_dcca<'g>(s: &Snapshot, cfg: &ExperimentConfig, graph: &'g OntologyGraph) -> Result<LoadedDcca<'g>> {
    s.check_config(cfg)?;
    ensure!(s.meta("kind")? == "dcca", "expected a dcca snapshot, got {:?}", s.meta("kind")?);
    let mut code = cfg.code_encoder(graph, None, 0);
    let mut text = cfg.text_encoder(0);
    let at = s.fill(0, code.params.blocks_mut())?;
    let at = s.fill(at, text.params.blocks_mut())?;
    let projection = read_projection(s, at)?;
    ensure!(at + PROJECTION_BLOCKS == s.blocks.len(), "unexpected trailing blocks in snapshot");
    Ok(LoadedDcca {
        code,
        text,
        projection,
        corr: s.meta("corr")?.parse().context("corr")?,
    })
}

/// A trained classifier of any view.
pub enum AnyClassifier<'g> {
    Code(Classifier<SingleView<CodeEncoder<'g>>>),
    Text(Classifier<SingleView<TextEncoder>>),
    Both(Classifier<JointView<'g>>),
}

impl AnyClassifier<'_> {
    pub fn view(&self) -> &'static str {
        match self {
            AnyClassifier::Code(_) => "code",
            AnyClassifier::Text(_) => "text",
            AnyClassifier::Both(_) => "both",
        }
    }

    pub fn evaluate(&self, records: &[&EncodedRecord]) -> Result<Evaluation> {
        Ok(match self {
            AnyClassifier::Code(c) => evaluate(c, records)?,
            AnyClassifier::Text(c) => evaluate(c, records)?,
            AnyClassifier::Both(c) => evaluate(c, records)?,
        })
    }
}

fn classifier_blocks<S: FeatureStack>(c: &Classifier<S>) -> Vec<&Matrix> {
    let mut b = c.stack.params().blocks();
    b.extend(c.head.blocks());
    b
}

pub struct ModelInfo {
    pub variant: String,
    pub seed: u64,
    pub corr: f64,
}

pub fn save_classifier(cfg: &ExperimentConfig, clf: &AnyClassifier<'_>, info: &ModelInfo) -> Snapshot {
    let mut s = Snapshot::new(cfg)
        .with_meta("kind", "classifier")
        .with_meta("view", clf.view())
        .with_meta("variant", &info.variant)
        .with_meta("seed", info.seed)
        .with_meta("corr", info.corr);
    let projection = match clf {
        AnyClassifier::Code(c) => c.stack.projection.as_ref(),
        AnyClassifier::Text(c) => c.stack.projection.as_ref(),
        AnyClassifier::Both(c) => Some(&c.stack.projection),
    };
    s.meta.insert("projection".into(), projection.is_some().to_string());
    if let Some(p) = projection {
        push_projection(&mut s, p);
    }
    match clf {
        AnyClassifier::Code(c) => s.push(classifier_blocks(c)),
        AnyClassifier::Text(c) => s.push(classifier_blocks(c)),
        AnyClassifier::Both(c) => s.push(classifier_blocks(c)),
    }
    s
}

fn restore<S: FeatureStack>(mut c: Classifier<S>, s: &Snapshot, at: usize) -> Result<Classifier<S>> {
    let end = s.fill(at, c.blocks_mut())?;
    ensure!(end == s.blocks.len(), "unexpected trailing blocks in snapshot");
    Ok(c)
}

pub fn load_classifier<'g>(
    s: &Snapshot,
    cfg: &ExperimentConfig,
    graph: &'g OntologyGraph,
) -> Result<(AnyClassifier<'g>, ModelInfo)> {
    s.check_config(cfg)?;
    ensure!(
        s.meta("kind")? == "classifier",
        "expected a classifier snapshot, got {:?}",
        s.meta("kind")?
    );
    let (projection, at) = match s.meta("projection")? {
        "true" => (Some(read_projection(s, 0)?), PROJECTION_BLOCKS),
        "false" => (None, 0),
        other => bail!("bad projection flag {other:?}"),
    };
    let clf = match s.meta("view")? {
        "code" => {
            let stack = SingleView { encoder: cfg.code_encoder(graph, None, 0), projection };
            AnyClassifier::Code(restore(cfg.classifier(stack, 0), s, at)?)
        }
        "text" => {
            let stack = SingleView { encoder: cfg.text_encoder(0), projection };
            AnyClassifier::Text(restore(cfg.classifier(stack, 0), s, at)?)
        }
        "both" => {
            let p = projection.context("joint model without a projection")?;
            let stack = JointView::new(cfg.code_encoder(graph, None, 0), cfg.text_encoder(0), p);
            AnyClassifier::Both(restore(cfg.classifier(stack, 0), s, at)?)
        }
        other => bail!("unknown view {other:?}"),
    };
    let info = ModelInfo {
        variant: s.meta("variant")?.to_string(),
        seed: s.meta("seed")?.parse().context("seed")?,
        corr: s.meta("corr")?.parse().context("corr")?,
    };
    Ok((clf, info))
}
