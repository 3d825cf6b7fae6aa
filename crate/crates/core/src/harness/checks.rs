use alloc::string::String;
use alloc::vec::Vec;

use super::model::{Classifier, CodeEncoder, FeatureStack, SingleView, TextEncoder, ViewEncoder};
use crate::data::{encode_records, gen_admissions, EncodedRecord, GeneratorSpec};
use crate::dcca::{dcca_gradient, total_correlation, DccaOptions, DccaProjection, ViewBatch};
use crate::encoders::{mlp_backward, mlp_forward, MlpParams, ParamSet};
use crate::numeric::{grad_check, GradCheck, Matrix, Rng, DEFAULT_FD_STEP};
use crate::ontology::{generate_codes, OntologyGraph};
use crate::unseen::{label_column, InternalLabels, SeenSet};
use crate::Result;

/// Outcome of one finite-difference check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub check: GradCheck,
}

fn tiny_data() -> Result<(OntologyGraph, Vec<EncodedRecord>)> {
    let g = OntologyGraph::build(&generate_codes(&[3, 2, 2], 0)?)?;
    let spec = GeneratorSpec {
        classes: 2,
        label_logits: alloc::vec![1.0, -1.0],
        tokens_min: 4,
        tokens_max: 8,
        vocab_size: 10,
        codes_min: 1,
        codes_max: 3,
        ..GeneratorSpec::default()
    };
    let recs = gen_admissions(&g, &spec, 6)?;
    let enc = encode_records(&g, &recs, spec.vocab_size)?;
    Ok((g, enc))
}

/// Checks the classifier loss with a fixed dropout mask, from a point with
/// positive head biases so hidden units start active and off their kink.
fn check_classifier<S: FeatureStack>(mut clf: Classifier<S>, recs: &[EncodedRecord]) -> Result<GradCheck> {
    let mut rng = Rng::new(77, 0);
    for l in &mut clf.head.layers {
        l.bias = rng.uniform_matrix(1, l.bias.cols(), 0.1, 0.6);
    }
    let inputs: Vec<&S::Input> = recs.iter().map(S::input).collect();
    let labels: Vec<f64> = recs.iter().map(|r| r.label).collect();
    let drop = Rng::new(5, 5);
    let (_, grads) = clf.loss_and_grad(&inputs, &labels, Some(&mut drop.clone()))?;
    let analytic = grads.flatten();
    let mut failure = None;
    let check = grad_check(
        |flat| {
            let mut c = clf.clone();
            c.assign_flat(flat);
            match c.loss_and_grad(&inputs, &labels, Some(&mut drop.clone())) {
                Ok((loss, _)) => loss,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        &clf.flatten(),
        &analytic,
        DEFAULT_FD_STEP,
    );
    match failure {
        Some(e) => Err(e),
        None => check,
    }
}

/// DCCA objective against both stacked views (`N = 40`, `d = 6 / 5`, `L = 3`).
pub fn check_dcca_objective(seed: u64) -> Result<GradCheck> {
    let mut rng = Rng::new(seed, 0);
    let shared = rng.normal_matrix(40, 3);
    let code = shared.matmul(&rng.normal_matrix(3, 6))?.add(&rng.normal_matrix(40, 6).scale(0.5))?;
    let text = shared.matmul(&rng.normal_matrix(3, 5))?.add(&rng.normal_matrix(40, 5).scale(0.5))?;
    let opts = DccaOptions {
        dims: 3,
        ..DccaOptions::default()
    };
    let g = dcca_gradient(ViewBatch::new(&code, &text)?, &opts)?;
    let mut x = code.as_slice().to_vec();
    x.extend_from_slice(text.as_slice());
    let mut analytic = g.d_code.as_slice().to_vec();
    analytic.extend_from_slice(g.d_text.as_slice());
    let split = code.as_slice().len();
    grad_check(
        |flat| {
            let c = Matrix::from_vec(40, 6, flat[..split].to_vec()).unwrap();
            let t = Matrix::from_vec(40, 5, flat[split..].to_vec()).unwrap();
            total_correlation(ViewBatch::new(&c, &t).unwrap(), &opts).unwrap_or(f64::NAN)
        },
        &x,
        &analytic,
        DEFAULT_FD_STEP,
    )
}

/// Relational encoder, seen flags, pooling and MLP head (`h = 4`, `T = 2`).
pub fn check_graph_stack(seed: u64) -> Result<GradCheck> {
    let (g, recs) = tiny_data()?;
    let mut rng = Rng::new(seed, 1);
    let mut enc = CodeEncoder::new(&g, 4, 2, true, &mut rng);
    let seen = SeenSet::new(&g, g.leaves()[..2].iter().copied())?;
    enc.flags = Some(label_column(&g, &seen, InternalLabels::Zero));
    let clf = Classifier::new(SingleView { encoder: enc, projection: None }, 2, 4, 0.3, &mut rng);
    check_classifier(clf, &recs)
}

/// Two-stage text encoder, frozen projection and MLP head (`h = 4`, `b = 3`).
pub fn check_text_stack(seed: u64) -> Result<GradCheck> {
    let (_, recs) = tiny_data()?;
    let mut rng = Rng::new(seed, 2);
    let enc = TextEncoder::new(10, 4, 3, true, &mut rng);
    let w = enc.output_width();
    let proj = DccaProjection {
        u: rng.normal_matrix(w, 2),
        v: rng.normal_matrix(w, 2),
        reg_code: 1e-4,
        reg_text: 1e-4,
        mean_code: alloc::vec![0.0; w],
        mean_text: (0..w).map(|_| rng.uniform_range(-0.2, 0.2)).collect(),
        correlations: alloc::vec![0.5, 0.4],
    };
    let clf = Classifier::new(SingleView { encoder: enc, projection: Some(proj) }, 2, 4, 0.2, &mut rng);
    check_classifier(clf, &recs)
}

/// MLP head alone, parameters then inputs, with a dropout mask.
pub fn check_mlp_head(seed: u64) -> Result<(GradCheck, GradCheck)> {
    let mut rng = Rng::new(seed, 3);
    let mut p = MlpParams::new(6, 5, 3, 0.3, &mut rng);
    for l in &mut p.layers {
        l.bias = rng.uniform_matrix(1, l.bias.cols(), 0.1, 0.6);
    }
    let x: Vec<f64> = (0..6).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let drop = Rng::new(9, 9);
    let (_, cache) = mlp_forward(&x, &p, Some(&mut drop.clone()))?;
    let mut grads = p.zeros_like();
    let dx = mlp_backward(&p, &cache, 1.0, &mut grads);
    let params = grad_check(
        |flat| {
            let mut q = p.clone();
            q.assign_flat(flat);
            mlp_forward(&x, &q, Some(&mut drop.clone())).map_or(f64::NAN, |r| r.0)
        },
        &p.flatten(),
        &grads.flatten(),
        DEFAULT_FD_STEP,
    )?;
    let inputs = grad_check(
        |xx| mlp_forward(xx, &p, Some(&mut drop.clone())).map_or(f64::NAN, |r| r.0),
        &x,
        &dx,
        DEFAULT_FD_STEP,
    )?;
    Ok((params, inputs))
}

/// Correlation objective backpropagated into both encoders' parameters.
pub fn check_dcca_through_encoders(seed: u64) -> Result<GradCheck> {
    let (g, _) = tiny_data()?;
    let spec = GeneratorSpec {
        classes: 2,
        label_logits: alloc::vec![1.0, -1.0],
        tokens_min: 3,
        tokens_max: 5,
        vocab_size: 10,
        codes_min: 1,
        codes_max: 3,
        ..GeneratorSpec::default()
    };
    let recs = encode_records(&g, &gen_admissions(&g, &spec, 24)?, spec.vocab_size)?;
    let mut rng = Rng::new(seed, 4);
    let code = CodeEncoder::new(&g, 3, 2, false, &mut rng);
    let text = TextEncoder::new(10, 3, 2, false, &mut rng);
    let opts = DccaOptions {
        dims: 2,
        ..DccaOptions::default()
    };
    let codes: Vec<&[usize]> = recs.iter().map(|r| r.codes.as_slice()).collect();
    let rows: Vec<&[usize]> = recs.iter().map(|r| r.rows.as_slice()).collect();
    let (ec, cc) = code.encode(&codes)?;
    let (et, tc) = text.encode(&rows)?;
    let dg = dcca_gradient(ViewBatch::new(&ec, &et)?, &opts)?;
    let mut gc = code.params.zeros_like();
    code.backward(&cc, &dg.d_code, &mut gc)?;
    let mut gt = text.params.zeros_like();
    text.backward(&tc, &dg.d_text, &mut gt)?;
    let params = (code.params.clone(), text.params.clone());
    grad_check(
        |flat| {
            let mut p = params.clone();
            p.assign_flat(flat);
            let c = CodeEncoder { params: p.0, ..code.clone() };
            let t = TextEncoder { params: p.1 };
            let run = || -> Result<f64> {
                let (a, _) = c.encode(&codes)?;
                let (b, _) = t.encode(&rows)?;
                total_correlation(ViewBatch::new(&a, &b)?, &opts)
            };
            run().unwrap_or(f64::NAN)
        },
        &params.flatten(),
        &(gc, gt).flatten(),
        DEFAULT_FD_STEP,
    )
}

/// Every check at its tiny configuration.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let (mlp_params, mlp_inputs) = check_mlp_head(seed)?;
    Ok([
        ("dcca objective", check_dcca_objective(seed)?),
        ("graph encoder stack", check_graph_stack(seed)?),
        ("text encoder stack", check_text_stack(seed)?),
        ("mlp head parameters", mlp_params),
        ("mlp head inputs", mlp_inputs),
        ("dcca through encoders", check_dcca_through_encoders(seed)?),
    ]
    .into_iter()
    .map(|(name, check)| CheckResult {
        name: name.into(),
        check,
    })
    .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_exercises_most_coordinates() {
        for r in gradient_suite(0).unwrap() {
            assert!(r.check.max_rel_error <= 1e-4, "{}: {:?}", r.name, r.check.max_rel_error);
            let fd = &r.check.finite_difference;
            let live = fd.iter().filter(|g| g.abs() > 1e-9).count();
            assert!(live * 3 > fd.len(), "{}: {live} of {} gradients non-zero", r.name, fd.len());
        }
    }
}
