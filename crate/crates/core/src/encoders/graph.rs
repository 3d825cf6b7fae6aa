use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{init_uniform, ParamSet};
use crate::numeric::{axpy, mat_vec_acc, outer_acc, vec_mat_acc, Matrix, Rng};
use crate::ontology::OntologyGraph;
use crate::{Error, Result};

/// Weights of one relational convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RgcnLayer {
    /// `W_r`, indexed by `relation - 1`; each `in x out`.
    pub relation_weights: Vec<Matrix>,
    /// `W`, the self-connection, `in x out`.
    pub self_weight: Matrix,
}

impl RgcnLayer {
    fn input_width(&self) -> usize {
        self.self_weight.rows()
    }
}

/// Trainable state of the code encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoderParams {
    /// `h_u^0`, one row per ontology node.
    pub node_init: Matrix,
    pub layers: Vec<RgcnLayer>,
}

impl GraphEncoderParams {
    /// Random initialisation. `extra_inputs` widens the first layer for
    /// appended non-trainable input columns (the seen/unseen flag).
    pub fn new(
        graph: &OntologyGraph,
        hidden: usize,
        layer_count: usize,
        extra_inputs: usize,
        rng: &mut Rng,
    ) -> Self {
        let node_init = init_uniform(rng, graph.node_count(), hidden, hidden);
        let layers = (0..layer_count)
            .map(|k| {
                let input = if k == 0 { hidden + extra_inputs } else { hidden };
                RgcnLayer {
                    relation_weights: (0..graph.relation_count())
                        .map(|_| init_uniform(rng, input, hidden, hidden))
                        .collect(),
                    self_weight: init_uniform(rng, input, hidden, hidden),
                }
            })
            .collect();
        GraphEncoderParams { node_init, layers }
    }

    pub fn hidden(&self) -> usize {
        self.node_init.cols()
    }

    /// Width of the layer-0 input (hidden plus any appended columns).
    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(self.hidden(), RgcnLayer::input_width)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.hidden(), |l| l.self_weight.cols())
    }
}

impl ParamSet for GraphEncoderParams {
    fn blocks(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.node_init];
        for l in &self.layers {
            out.extend(l.relation_weights.iter());
            out.push(&l.self_weight);
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.node_init];
        for l in &mut self.layers {
            out.extend(l.relation_weights.iter_mut());
            out.push(&mut l.self_weight);
        }
        out
    }
}

/// Activations kept from [`rgcn_forward`].
#[derive(Debug, Clone)]
pub struct RgcnCache {
    /// Layer inputs `h^(k)` for `k = 0..T`.
    inputs: Vec<Matrix>,
    /// Pre-activations of each layer.
    pre: Vec<Matrix>,
}

fn neighbour_mean(h: &Matrix, nbrs: &[usize], out: &mut [f64]) {
    out.fill(0.0);
    let inv = 1.0 / nbrs.len() as f64;
    for &v in nbrs {
        axpy(inv, h.row(v), out);
    }
}

/// Runs `T` relational convolution layers with ReLU activations.
///
/// `initial` holds one row per node; its width must match the first layer.
pub fn rgcn_forward(
    graph: &OntologyGraph,
    params: &GraphEncoderParams,
    initial: &Matrix,
) -> Result<(Matrix, RgcnCache)> {
    if params.layers.is_empty() {
        return Err(Error::Invalid("graph encoder needs at least one layer".into()));
    }
    if initial.rows() != graph.node_count() || initial.cols() != params.input_width() {
        return Err(Error::shape(
            "rgcn_forward",
            format!(
                "initial {:?}, expected ({}, {})",
                initial.shape(),
                graph.node_count(),
                params.input_width()
            ),
        ));
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pres = Vec::with_capacity(params.layers.len());
    let mut h = initial.clone();
    for layer in &params.layers {
        if layer.relation_weights.len() != graph.relation_count()
            || layer.input_width() != h.cols()
        {
            return Err(Error::shape("rgcn_forward", "layer does not match graph or input"));
        }
        let out_w = layer.self_weight.cols();
        let mut pre = Matrix::zeros(graph.node_count(), out_w);
        let mut mean = vec![0.0; h.cols()];
        for u in 0..graph.node_count() {
            let row = pre.row_mut(u);
            vec_mat_acc(h.row(u), &layer.self_weight, row);
            for (r, nbrs) in graph.relations_of(u) {
                neighbour_mean(&h, nbrs, &mut mean);
                vec_mat_acc(&mean, &layer.relation_weights[r - 1], row);
            }
        }
        if !pre.is_finite() {
            return Err(Error::NonFinite("rgcn_forward"));
        }
        let next = Matrix::from_fn(pre.rows(), pre.cols(), |i, j| pre[(i, j)].max(0.0));
        inputs.push(core::mem::replace(&mut h, next));
        pres.push(pre);
    }
    Ok((h, RgcnCache { inputs, pre: pres }))
}

/// Backpropagates `d_out` (one row per node) through the layers.
///
/// Accumulates weight gradients into `grads` and returns the gradient with
/// respect to the `initial` input. The `node_init` block of `grads` is left
/// untouched; callers map the returned input gradient onto it.
pub fn rgcn_backward(
    graph: &OntologyGraph,
    params: &GraphEncoderParams,
    cache: &RgcnCache,
    d_out: &Matrix,
    grads: &mut GraphEncoderParams,
) -> Result<Matrix> {
    let mut d_h = d_out.clone();
    for (k, layer) in params.layers.iter().enumerate().rev() {
        let h = &cache.inputs[k];
        let pre = &cache.pre[k];
        if d_h.shape() != pre.shape() {
            return Err(Error::shape("rgcn_backward", "output gradient shape"));
        }
        let g_layer = &mut grads.layers[k];
        let mut d_in = Matrix::zeros(h.rows(), h.cols());
        let mut d_pre = vec![0.0; pre.cols()];
        let mut mean = vec![0.0; h.cols()];
        let mut d_mean = vec![0.0; h.cols()];
        for u in 0..graph.node_count() {
            let mut any = false;
            for (j, dp) in d_pre.iter_mut().enumerate() {
                *dp = if pre[(u, j)] > 0.0 { d_h[(u, j)] } else { 0.0 };
                any |= *dp != 0.0;
            }
            if !any {
                continue;
            }
            outer_acc(h.row(u), &d_pre, &mut g_layer.self_weight);
            mat_vec_acc(&layer.self_weight, &d_pre, d_in.row_mut(u));
            for (r, nbrs) in graph.relations_of(u) {
                neighbour_mean(h, nbrs, &mut mean);
                outer_acc(&mean, &d_pre, &mut g_layer.relation_weights[r - 1]);
                d_mean.fill(0.0);
                mat_vec_acc(&layer.relation_weights[r - 1], &d_pre, &mut d_mean);
                let inv = 1.0 / nbrs.len() as f64;
                for &v in nbrs {
                    axpy(inv, &d_mean, d_in.row_mut(v));
                }
            }
        }
        d_h = d_in;
    }
    Ok(d_h)
}

/// Indices of the maxima chosen per coordinate during pooling.
#[derive(Debug, Clone)]
pub struct PoolCache {
    members: Vec<usize>,
    argmax: Vec<usize>,
}

fn check_members(graph: &OntologyGraph, codes: &[usize]) -> Result<()> {
    if codes.is_empty() {
        return Err(Error::Invalid("empty code set".into()));
    }
    if let Some(&bad) = codes
        .iter()
        .find(|&&c| c >= graph.node_count() || !graph.node(c).is_leaf)
    {
        return Err(Error::Invalid(format!("node {bad} is not a leaf")));
    }
    Ok(())
}

/// `g_C`: elementwise sum concatenated with elementwise max over the set.
pub fn pool_codes(
    graph: &OntologyGraph,
    codes: &[usize],
    node_vecs: &Matrix,
) -> Result<(Vec<f64>, PoolCache)> {
    check_members(graph, codes)?;
    let h = node_vecs.cols();
    let mut out = vec![0.0; 2 * h];
    let mut argmax = vec![codes[0]; h];
    out[h..].copy_from_slice(node_vecs.row(codes[0]));
    for &c in codes {
        let row = node_vecs.row(c);
        axpy(1.0, row, &mut out[..h]);
        for j in 0..h {
            if row[j] > out[h + j] {
                out[h + j] = row[j];
                argmax[j] = c;
            }
        }
    }
    Ok((
        out,
        PoolCache {
            members: codes.to_vec(),
            argmax,
        },
    ))
}

/// Sum-only pooling.
pub fn pool_sum(graph: &OntologyGraph, codes: &[usize], node_vecs: &Matrix) -> Result<Vec<f64>> {
    check_members(graph, codes)?;
    let mut out = vec![0.0; node_vecs.cols()];
    for &c in codes {
        axpy(1.0, node_vecs.row(c), &mut out);
    }
    Ok(out)
}

/// Scatters `d_pooled` (width `2h`) back onto node rows of `d_nodes`.
pub fn pool_backward(cache: &PoolCache, d_pooled: &[f64], d_nodes: &mut Matrix) -> Result<()> {
    let h = cache.argmax.len();
    if d_pooled.len() != 2 * h || d_nodes.cols() != h {
        return Err(Error::shape("pool_backward", "pooled gradient width"));
    }
    for &c in &cache.members {
        axpy(1.0, &d_pooled[..h], d_nodes.row_mut(c));
    }
    for (j, &c) in cache.argmax.iter().enumerate() {
        d_nodes[(c, j)] += d_pooled[h + j];
    }
    Ok(())
}
