use alloc::vec::Vec;

use super::{init_uniform, ParamSet};
use crate::numeric::{axpy, mat_vec_acc, outer_acc, vec_mat_acc, Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

/// Feed-forward classifier head ending in a single logit. Hidden layers use
/// ReLU followed by inverted dropout in training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

impl MlpParams {
    /// `layer_count` linear layers: `input -> hidden -> ... -> 1`.
    pub fn new(input: usize, hidden: usize, layer_count: usize, dropout: f64, rng: &mut Rng) -> Self {
        assert!(layer_count >= 1);
        let layers = (0..layer_count)
            .map(|k| {
                let i = if k == 0 { input } else { hidden };
                let o = if k + 1 == layer_count { 1 } else { hidden };
                Dense {
                    weight: init_uniform(rng, i, o, hidden),
                    bias: Matrix::zeros(1, o),
                }
            })
            .collect();
        MlpParams { layers, dropout }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }
}

impl ParamSet for MlpParams {
    fn blocks(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (after activation and dropout of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    /// Dropout multipliers per hidden layer (`1.0` everywhere in eval mode).
    masks: Vec<Vec<f64>>,
}

/// Returns the logit. Passing `dropout_rng` selects training mode.
pub fn mlp_forward(
    x: &[f64],
    p: &MlpParams,
    dropout_rng: Option<&mut Rng>,
) -> Result<(f64, MlpCache)> {
    if x.len() != p.input_width() {
        return Err(Error::shape("mlp_forward", "input width"));
    }
    let mut rng = dropout_rng;
    let keep = 1.0 - p.dropout;
    let mut cache = MlpCache {
        inputs: Vec::with_capacity(p.layers.len()),
        pre: Vec::new(),
        masks: Vec::new(),
    };
    let mut cur = x.to_vec();
    for (k, layer) in p.layers.iter().enumerate() {
        let mut z = layer.bias.row(0).to_vec();
        vec_mat_acc(&cur, &layer.weight, &mut z);
        cache.inputs.push(core::mem::take(&mut cur));
        if k + 1 == p.layers.len() {
            if !z[0].is_finite() {
                return Err(Error::NonFinite("mlp_forward"));
            }
            return Ok((z[0], cache));
        }
        let mask: Vec<f64> = match rng.as_deref_mut() {
            Some(r) if p.dropout > 0.0 => z
                .iter()
                .map(|_| if r.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                .collect(),
            _ => alloc::vec![1.0; z.len()],
        };
        cur = z.iter().zip(&mask).map(|(v, m)| v.max(0.0) * m).collect();
        cache.pre.push(z);
        cache.masks.push(mask);
    }
    unreachable!("at least one layer")
}

/// Accumulates parameter gradients of `d_logit * logit`; returns the input gradient.
pub fn mlp_backward(p: &MlpParams, cache: &MlpCache, d_logit: f64, grads: &mut MlpParams) -> Vec<f64> {
    let mut d = alloc::vec![d_logit];
    for k in (0..p.layers.len()).rev() {
        outer_acc(&cache.inputs[k], &d, &mut grads.layers[k].weight);
        axpy(1.0, &d, grads.layers[k].bias.row_mut(0));
        let mut d_in = alloc::vec![0.0; cache.inputs[k].len()];
        mat_vec_acc(&p.layers[k].weight, &d, &mut d_in);
        if k > 0 {
            let pre = &cache.pre[k - 1];
            let mask = &cache.masks[k - 1];
            for j in 0..d_in.len() {
                d_in[j] *= if pre[j] > 0.0 { mask[j] } else { 0.0 };
            }
        }
        d = d_in;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, sigmoid, DEFAULT_FD_STEP};

    #[test]
    fn zero_weights_give_even_odds() {
        let mut rng = Rng::new(0, 0);
        let p = MlpParams::new(4, 3, 2, 0.0, &mut rng).zeros_like();
        let (logit, _) = mlp_forward(&[1.0, -2.0, 3.0, 0.5], &p, None).unwrap();
        assert_eq!(logit, 0.0);
        assert_eq!(sigmoid(logit), 0.5);
    }

    #[test]
    fn single_layer_is_affine() {
        let p = MlpParams {
            layers: alloc::vec![Dense {
                weight: Matrix::from_rows(&[[2.0], [-1.0]]),
                bias: Matrix::from_rows(&[[0.5]]),
            }],
            dropout: 0.3,
        };
        let (logit, _) = mlp_forward(&[1.5, 4.0], &p, None).unwrap();
        assert_eq!(logit, 2.0 * 1.5 - 4.0 + 0.5);
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let mut rng = Rng::new(1, 0);
        let p = MlpParams::new(5, 4, 3, 0.0, &mut rng);
        let x = [0.3, -0.1, 0.8, 0.2, -0.5];
        let (eval, _) = mlp_forward(&x, &p, None).unwrap();
        let (train, _) = mlp_forward(&x, &p, Some(&mut rng)).unwrap();
        assert_eq!(eval, train);
    }

    #[test]
    fn gradients_with_dropout_mask() {
        let mut rng = Rng::new(2, 0);
        let p = MlpParams::new(4, 5, 3, 0.4, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let drop = Rng::new(9, 9);
        let (_, cache) = mlp_forward(&x, &p, Some(&mut drop.clone())).unwrap();
        let mut grads = p.zeros_like();
        let d_x = mlp_backward(&p, &cache, 1.0, &mut grads);
        let r = grad_check(
            |flat| {
                let mut q = p.clone();
                q.assign_flat(flat);
                mlp_forward(&x, &q, Some(&mut drop.clone())).unwrap().0
            },
            &p.flatten(),
            &grads.flatten(),
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-7, "{r:?}");
        let r = grad_check(
            |xx| mlp_forward(xx, &p, Some(&mut drop.clone())).unwrap().0,
            &x,
            &d_x,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-7, "{r:?}");
    }
}
