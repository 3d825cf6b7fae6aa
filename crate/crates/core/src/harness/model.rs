use alloc::vec::Vec;

use crate::data::EncodedRecord;
use crate::dcca::{DccaProjection, View};
use crate::encoders::{
    encode_text, mlp_backward, mlp_forward, pool_backward, pool_codes, rgcn_backward,
    rgcn_forward, text_backward, GraphEncoderParams, MlpCache, MlpParams, ParamSet, PoolCache,
    RgcnCache, TextCache, TextEncoderParams,
};
use crate::numeric::{sigmoid, Matrix, Rng};
use crate::ontology::OntologyGraph;
use crate::unseen::append_column;
use crate::{Error, Result};

/// One view's encoder, reading only that view's part of a record.
pub trait ViewEncoder: Clone {
    type Params: ParamSet;
    type Cache;
    const VIEW: View;

    fn params(&self) -> &Self::Params;
    fn params_mut(&mut self) -> &mut Self::Params;
    fn output_width(&self) -> usize;
    /// The record field this view reads.
    fn input(record: &EncodedRecord) -> &[usize];
    /// One embedding row per input.
    fn encode(&self, inputs: &[&[usize]]) -> Result<(Matrix, Self::Cache)>;
    /// Accumulates parameter gradients of `Σ d ⊙ encode(inputs)`.
    fn backward(&self, cache: &Self::Cache, d: &Matrix, grads: &mut Self::Params) -> Result<()>;
}

/// `g_C`: relational convolution over the ontology, then sum⊕max pooling of
/// the record's leaves.
#[derive(Debug, Clone)]
pub struct CodeEncoder<'g> {
    pub graph: &'g OntologyGraph,
    pub params: GraphEncoderParams,
    /// Non-trainable seen flags appended to `h^0`.
    pub flags: Option<Vec<f64>>,
}

impl<'g> CodeEncoder<'g> {
    pub fn new(graph: &'g OntologyGraph, hidden: usize, layers: usize, labeled: bool, rng: &mut Rng) -> Self {
        let params = GraphEncoderParams::new(graph, hidden, layers, usize::from(labeled), rng);
        CodeEncoder {
            graph,
            params,
            flags: None,
        }
    }

    fn initial(&self) -> Result<Matrix> {
        let expects_flag = self.params.input_width() > self.params.hidden();
        match (&self.flags, expects_flag) {
            (Some(f), true) => Ok(append_column(&self.params.node_init, f)),
            (None, false) => Ok(self.params.node_init.clone()),
            _ => Err(Error::Invalid(
                "seen flags must be set exactly when the encoder was built for them".into(),
            )),
        }
    }

    /// Node embeddings after the final layer.
    pub fn node_embeddings(&self) -> Result<Matrix> {
        Ok(rgcn_forward(self.graph, &self.params, &self.initial()?)?.0)
    }
}

#[derive(Debug, Clone)]
pub struct CodeCache {
    rgcn: RgcnCache,
    pools: Vec<PoolCache>,
}

impl ViewEncoder for CodeEncoder<'_> {
    type Params = GraphEncoderParams;
    type Cache = CodeCache;
    const VIEW: View = View::Code;

    fn params(&self) -> &GraphEncoderParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut GraphEncoderParams {
        &mut self.params
    }

    fn output_width(&self) -> usize {
        2 * self.params.output_width()
    }

    fn input(record: &EncodedRecord) -> &[usize] {
        &record.codes
    }

    fn encode(&self, inputs: &[&[usize]]) -> Result<(Matrix, CodeCache)> {
        let (nodes, rgcn) = rgcn_forward(self.graph, &self.params, &self.initial()?)?;
        let mut out = Matrix::zeros(inputs.len(), self.output_width());
        let mut pools = Vec::with_capacity(inputs.len());
        for (i, codes) in inputs.iter().enumerate() {
            let (v, cache) = pool_codes(self.graph, codes, &nodes)?;
            out.row_mut(i).copy_from_slice(&v);
            pools.push(cache);
        }
        Ok((out, CodeCache { rgcn, pools }))
    }

    fn backward(&self, cache: &CodeCache, d: &Matrix, grads: &mut GraphEncoderParams) -> Result<()> {
        if d.rows() != cache.pools.len() {
            return Err(Error::shape("code backward", "one gradient row per input"));
        }
        let mut d_nodes = Matrix::zeros(self.graph.node_count(), self.params.output_width());
        for (i, pc) in cache.pools.iter().enumerate() {
            pool_backward(pc, d.row(i), &mut d_nodes)?;
        }
        let d_init = rgcn_backward(self.graph, &self.params, &cache.rgcn, &d_nodes, grads)?;
        let h = self.params.hidden();
        for u in 0..d_init.rows() {
            crate::numeric::axpy(1.0, &d_init.row(u)[..h], grads.node_init.row_mut(u));
        }
        Ok(())
    }
}

/// `g_A`: the two-stage recurrent text encoder.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub params: TextEncoderParams,
}

impl TextEncoder {
    pub fn new(vocab_size: usize, hidden: usize, block_size: usize, bidirectional: bool, rng: &mut Rng) -> Self {
        TextEncoder {
            params: TextEncoderParams::new(vocab_size, hidden, block_size, bidirectional, rng),
        }
    }
}

impl ViewEncoder for TextEncoder {
    type Params = TextEncoderParams;
    type Cache = Vec<TextCache>;
    const VIEW: View = View::Text;

    fn params(&self) -> &TextEncoderParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut TextEncoderParams {
        &mut self.params
    }

    fn output_width(&self) -> usize {
        self.params.output_width()
    }

    fn input(record: &EncodedRecord) -> &[usize] {
        &record.rows
    }

    fn encode(&self, inputs: &[&[usize]]) -> Result<(Matrix, Vec<TextCache>)> {
        let mut out = Matrix::zeros(inputs.len(), self.output_width());
        let mut caches = Vec::with_capacity(inputs.len());
        for (i, rows) in inputs.iter().enumerate() {
            let (v, cache) = encode_text(rows, &self.params)?;
            out.row_mut(i).copy_from_slice(&v);
            caches.push(cache);
        }
        Ok((out, caches))
    }

    fn backward(&self, cache: &Vec<TextCache>, d: &Matrix, grads: &mut TextEncoderParams) -> Result<()> {
        if d.rows() != cache.len() {
            return Err(Error::shape("text backward", "one gradient row per input"));
        }
        for (i, c) in cache.iter().enumerate() {
            text_backward(&self.params, c, d.row(i), grads)?;
        }
        Ok(())
    }
}

/// Features fed to a classifier head.
pub trait FeatureStack: Clone {
    type Params: ParamSet;
    type Input: ?Sized;
    type Cache;

    fn input(record: &EncodedRecord) -> &Self::Input;
    fn params(&self) -> &Self::Params;
    fn params_mut(&mut self) -> &mut Self::Params;
    fn feature_width(&self) -> usize;
    fn features(&self, inputs: &[&Self::Input]) -> Result<(Matrix, Self::Cache)>;
    fn features_backward(&self, cache: &Self::Cache, d: &Matrix, grads: &mut Self::Params) -> Result<()>;
}

/// One view's encoder, optionally followed by its frozen canonical projection.
#[derive(Debug, Clone)]
pub struct SingleView<E> {
    pub encoder: E,
    pub projection: Option<DccaProjection>,
}

impl<E: ViewEncoder> FeatureStack for SingleView<E> {
    type Params = E::Params;
    type Input = [usize];
    type Cache = E::Cache;

    fn input(record: &EncodedRecord) -> &[usize] {
        E::input(record)
    }

    fn params(&self) -> &E::Params {
        self.encoder.params()
    }

    fn params_mut(&mut self) -> &mut E::Params {
        self.encoder.params_mut()
    }

    fn feature_width(&self) -> usize {
        self.projection
            .as_ref()
            .map_or(self.encoder.output_width(), DccaProjection::dims)
    }

    fn features(&self, inputs: &[&[usize]]) -> Result<(Matrix, E::Cache)> {
        let (emb, cache) = self.encoder.encode(inputs)?;
        let feats = match &self.projection {
            Some(p) => p.project_rows(&emb, E::VIEW)?,
            None => emb,
        };
        Ok((feats, cache))
    }

    fn features_backward(&self, cache: &E::Cache, d: &Matrix, grads: &mut E::Params) -> Result<()> {
        match &self.projection {
            Some(p) => {
                let d_emb = d.matmul_tr(match E::VIEW {
                    View::Code => &p.u,
                    View::Text => &p.v,
                })?;
                self.encoder.backward(cache, &d_emb, grads)
            }
            None => self.encoder.backward(cache, d, grads),
        }
    }
}

/// Both encoders with their projected embeddings concatenated.
#[derive(Debug, Clone)]
pub struct JointView<'g> {
    graph: &'g OntologyGraph,
    flags: Option<Vec<f64>>,
    params: (GraphEncoderParams, TextEncoderParams),
    pub projection: DccaProjection,
}

impl<'g> JointView<'g> {
    pub fn new(code: CodeEncoder<'g>, text: TextEncoder, projection: DccaProjection) -> Self {
        JointView {
            graph: code.graph,
            flags: code.flags,
            params: (code.params, text.params),
            projection,
        }
    }

    /// The two encoders with the current parameters.
    pub fn encoders(&self) -> (CodeEncoder<'g>, TextEncoder) {
        let code = CodeEncoder {
            graph: self.graph,
            params: self.params.0.clone(),
            flags: self.flags.clone(),
        };
        let text = TextEncoder {
            params: self.params.1.clone(),
        };
        (code, text)
    }
}

impl FeatureStack for JointView<'_> {
    type Params = (GraphEncoderParams, TextEncoderParams);
    type Input = EncodedRecord;
    type Cache = (CodeCache, Vec<TextCache>);

    fn input(record: &EncodedRecord) -> &EncodedRecord {
        record
    }

    fn params(&self) -> &Self::Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Self::Params {
        &mut self.params
    }

    fn feature_width(&self) -> usize {
        2 * self.projection.dims()
    }

    fn features(&self, inputs: &[&EncodedRecord]) -> Result<(Matrix, Self::Cache)> {
        let (code, text) = self.encoders();
        let codes: Vec<&[usize]> = inputs.iter().map(|r| r.codes.as_slice()).collect();
        let rows: Vec<&[usize]> = inputs.iter().map(|r| r.rows.as_slice()).collect();
        let (ec, cc) = code.encode(&codes)?;
        let (et, tc) = text.encode(&rows)?;
        let pc = self.projection.project_rows(&ec, View::Code)?;
        let pt = self.projection.project_rows(&et, View::Text)?;
        let l = self.projection.dims();
        let feats = Matrix::from_fn(inputs.len(), 2 * l, |i, j| {
            if j < l {
                pc[(i, j)]
            } else {
                pt[(i, j - l)]
            }
        });
        Ok((feats, (cc, tc)))
    }

    fn features_backward(&self, cache: &Self::Cache, d: &Matrix, grads: &mut Self::Params) -> Result<()> {
        let (code, text) = self.encoders();
        let l = self.projection.dims();
        let dc = Matrix::from_fn(d.rows(), l, |i, j| d[(i, j)]);
        let dt = Matrix::from_fn(d.rows(), l, |i, j| d[(i, j + l)]);
        code.backward(&cache.0, &dc.matmul_tr(&self.projection.u)?, &mut grads.0)?;
        text.backward(&cache.1, &dt.matmul_tr(&self.projection.v)?, &mut grads.1)
    }
}

/// A feature stack topped by an MLP emitting one logit.
#[derive(Debug, Clone)]
pub struct Classifier<S> {
    pub stack: S,
    pub head: MlpParams,
}

/// Gradients of a [`Classifier`], laid out stack first.
pub type ClassifierGrads<S> = (<S as FeatureStack>::Params, MlpParams);

impl<S: FeatureStack> Classifier<S> {
    pub fn new(stack: S, mlp_layers: usize, hidden: usize, dropout: f64, rng: &mut Rng) -> Self {
        let head = MlpParams::new(stack.feature_width(), hidden, mlp_layers, dropout, rng);
        Classifier { stack, head }
    }

    /// One logit per input. `dropout_rng` selects training mode.
    fn forward(
        &self,
        inputs: &[&S::Input],
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<(Vec<f64>, S::Cache, Vec<MlpCache>)> {
        let (feats, cache) = self.stack.features(inputs)?;
        let mut logits = Vec::with_capacity(inputs.len());
        let mut heads = Vec::with_capacity(inputs.len());
        for i in 0..inputs.len() {
            let (z, c) = mlp_forward(feats.row(i), &self.head, dropout_rng.as_deref_mut())?;
            logits.push(z);
            heads.push(c);
        }
        Ok((logits, cache, heads))
    }

    /// Probability of the positive class for each input, in eval mode.
    pub fn predict_batch(&self, inputs: &[&S::Input]) -> Result<Vec<f64>> {
        Ok(self.forward(inputs, None)?.0.into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, input: &S::Input) -> Result<f64> {
        Ok(self.predict_batch(&[input])?[0])
    }

    /// Mean binary cross-entropy and its gradient.
    pub fn loss_and_grad(
        &self,
        inputs: &[&S::Input],
        labels: &[f64],
        dropout_rng: Option<&mut Rng>,
    ) -> Result<(f64, ClassifierGrads<S>)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::shape("loss_and_grad", "one label per input"));
        }
        let (logits, cache, heads) = self.forward(inputs, dropout_rng)?;
        let n = inputs.len() as f64;
        let mut grads = (self.stack.params().zeros_like(), self.head.zeros_like());
        let mut d_feats = Matrix::zeros(inputs.len(), self.stack.feature_width());
        let mut loss = 0.0;
        for (i, (&z, &y)) in logits.iter().zip(labels).enumerate() {
            loss += bce_with_logit(z, y);
            let d = (sigmoid(z) - y) / n;
            let dx = mlp_backward(&self.head, &heads[i], d, &mut grads.1);
            d_feats.row_mut(i).copy_from_slice(&dx);
        }
        self.stack.features_backward(&cache, &d_feats, &mut grads.0)?;
        Ok((loss / n, grads))
    }

    /// Every trainable block, stack first.
    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.stack.params_mut().blocks_mut();
        out.extend(self.head.blocks_mut());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.stack.params().flatten();
        out.extend(self.head.flatten());
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let n = self.stack.params().num_params();
        self.stack.params_mut().assign_flat(&flat[..n]);
        self.head.assign_flat(&flat[n..]);
    }
}

/// `-[y log σ(z) + (1-y) log(1-σ(z))]`, computed stably.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_records, gen_admissions, GeneratorSpec};
    use crate::numeric::{grad_check, DEFAULT_FD_STEP};
    use crate::ontology::generate_codes;

    fn fixture() -> (OntologyGraph, Vec<EncodedRecord>) {
        let g = OntologyGraph::build(&generate_codes(&[3, 2, 2], 0).unwrap()).unwrap();
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
        let recs = gen_admissions(&g, &spec, 6).unwrap();
        let enc = encode_records(&g, &recs, spec.vocab_size).unwrap();
        (g, enc)
    }

    /// Grad-checks the full stack at a point with positive head biases, so
    /// hidden units start active and off their kink.
    fn check_stack<S: FeatureStack>(clf: &Classifier<S>, recs: &[EncodedRecord], tol: f64) {
        let mut clf = clf.clone();
        let mut rng = Rng::new(77, 0);
        for l in &mut clf.head.layers {
            l.bias = rng.uniform_matrix(1, l.bias.cols(), 0.1, 0.6);
        }
        let clf = &clf;
        let inputs: Vec<&S::Input> = recs.iter().map(S::input).collect();
        let labels: Vec<f64> = recs.iter().map(|r| r.label).collect();
        let drop = Rng::new(5, 5);
        let (_, grads) = clf.loss_and_grad(&inputs, &labels, Some(&mut drop.clone())).unwrap();
        let mut analytic = grads.0.flatten();
        analytic.extend(grads.1.flatten());
        let r = grad_check(
            |flat| {
                let mut c = clf.clone();
                c.assign_flat(flat);
                c.loss_and_grad(&inputs, &labels, Some(&mut drop.clone())).unwrap().0
            },
            &clf.flatten(),
            &analytic,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error <= tol, "{r:?}");
        let n = clf.stack.params().num_params();
        let live = r.finite_difference[..n].iter().filter(|g| g.abs() > 1e-9).count();
        assert!(live * 3 > n, "only {live} of {n} encoder gradients are non-zero");
    }

    #[test]
    fn bce_matches_definition() {
        for (z, y) in [(0.3, 1.0), (-2.0, 0.0), (5.0, 0.0), (-40.0, 1.0)] {
            let p = sigmoid(z);
            let direct = -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p));
            assert!((bce_with_logit(z, y) - direct).abs() < 1e-9 * direct.max(1.0));
        }
    }

    #[test]
    fn code_classifier_gradients() {
        let (g, recs) = fixture();
        let mut rng = Rng::new(1, 0);
        let mut enc = CodeEncoder::new(&g, 4, 2, true, &mut rng);
        enc.flags = Some(crate::unseen::label_column(
            &g,
            &crate::unseen::SeenSet::new(&g, g.leaves()[..2].iter().copied()).unwrap(),
            crate::unseen::InternalLabels::Zero,
        ));
        let clf = Classifier::new(SingleView { encoder: enc, projection: None }, 2, 4, 0.3, &mut rng);
        check_stack(&clf, &recs, 1e-6);
    }

    #[test]
    fn text_classifier_gradients_through_projection() {
        let (_, recs) = fixture();
        let mut rng = Rng::new(2, 0);
        let enc = TextEncoder::new(10, 3, 3, true, &mut rng);
        let proj = DccaProjection {
            u: rng.normal_matrix(6, 2),
            v: rng.normal_matrix(6, 2),
            reg_code: 1e-4,
            reg_text: 1e-4,
            mean_code: alloc::vec![0.1; 6],
            mean_text: alloc::vec![-0.2; 6],
            correlations: alloc::vec![0.5, 0.4],
        };
        let clf = Classifier::new(
            SingleView { encoder: enc, projection: Some(proj) },
            2,
            3,
            0.0,
            &mut rng,
        );
        check_stack(&clf, &recs, 1e-6);
    }

    #[test]
    fn joint_classifier_gradients() {
        let (g, recs) = fixture();
        let mut rng = Rng::new(3, 0);
        let code = CodeEncoder::new(&g, 3, 2, false, &mut rng);
        let text = TextEncoder::new(10, 3, 3, false, &mut rng);
        let proj = DccaProjection {
            u: rng.normal_matrix(6, 2),
            v: rng.normal_matrix(3, 2),
            reg_code: 1e-4,
            reg_text: 1e-4,
            mean_code: alloc::vec![0.0; 6],
            mean_text: alloc::vec![0.0; 3],
            correlations: alloc::vec![0.5, 0.4],
        };
        let clf = Classifier::new(JointView::new(code, text, proj), 1, 3, 0.0, &mut rng);
        check_stack(&clf, &recs, 1e-6);
    }

    #[test]
    fn flags_must_match_construction() {
        let (g, _) = fixture();
        let mut rng = Rng::new(4, 0);
        let enc = CodeEncoder::new(&g, 3, 2, true, &mut rng);
        assert!(enc.node_embeddings().is_err());
    }
}
