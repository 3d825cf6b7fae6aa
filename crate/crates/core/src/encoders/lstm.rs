use alloc::vec;
use alloc::vec::Vec;

use super::{init_uniform, ParamSet};
use crate::numeric::{axpy, mat_vec_acc, outer_acc, sigmoid, tanh, vec_mat_acc, Matrix, Rng};
use crate::{Error, Result};

/// One LSTM direction. Gate columns are laid out `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `in x 4h`
    pub w_x: Matrix,
    /// `h x 4h`
    pub w_h: Matrix,
    /// `1 x 4h`
    pub bias: Matrix,
}

impl LstmParams {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w_x = init_uniform(rng, input, 4 * hidden, hidden);
        let w_h = init_uniform(rng, hidden, 4 * hidden, hidden);
        let mut bias = Matrix::zeros(1, 4 * hidden);
        for j in hidden..2 * hidden {
            bias[(0, j)] = 1.0;
        }
        LstmParams { w_x, w_h, bias }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.rows()
    }

    pub fn input_width(&self) -> usize {
        self.w_x.rows()
    }

    fn blocks(&self) -> [&Matrix; 3] {
        [&self.w_x, &self.w_h, &self.bias]
    }

    fn blocks_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}

/// Per-step activations of one direction.
#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Vec<Vec<f64>>,
    /// activated gates per step, `4h`
    gates: Vec<Vec<f64>>,
    /// cell state per step, including the zero initial state at index 0
    cells: Vec<Vec<f64>>,
    /// hidden state per step, including the zero initial state at index 0
    hiddens: Vec<Vec<f64>>,
}

impl LstmParams {
    /// Runs the sequence from zero states; returns the final hidden state.
    pub fn forward(&self, inputs: &[&[f64]]) -> Result<(Vec<f64>, LstmCache)> {
        let h = self.hidden();
        let mut cells = vec![vec![0.0; h]];
        let mut hiddens = vec![vec![0.0; h]];
        let mut gates_all = Vec::with_capacity(inputs.len());
        for x in inputs {
            if x.len() != self.input_width() {
                return Err(Error::shape("lstm_forward", "input width"));
            }
            let mut a = self.bias.row(0).to_vec();
            vec_mat_acc(x, &self.w_x, &mut a);
            vec_mat_acc(hiddens.last().unwrap(), &self.w_h, &mut a);
            for j in 0..h {
                a[j] = sigmoid(a[j]);
                a[h + j] = sigmoid(a[h + j]);
                a[2 * h + j] = tanh(a[2 * h + j]);
                a[3 * h + j] = sigmoid(a[3 * h + j]);
            }
            let c_prev = cells.last().unwrap();
            let c: Vec<f64> = (0..h)
                .map(|j| a[h + j] * c_prev[j] + a[j] * a[2 * h + j])
                .collect();
            let hn: Vec<f64> = (0..h).map(|j| a[3 * h + j] * tanh(c[j])).collect();
            gates_all.push(a);
            cells.push(c);
            hiddens.push(hn);
        }
        let last = hiddens.last().unwrap().clone();
        if last.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm_forward"));
        }
        Ok((
            last,
            LstmCache {
                inputs: inputs.iter().map(|x| x.to_vec()).collect(),
                gates: gates_all,
                cells,
                hiddens,
            },
        ))
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state. Returns the gradient for every input step.
    pub fn backward(
        &self,
        cache: &LstmCache,
        d_last: &[f64],
        grads: &mut LstmParams,
    ) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let steps = cache.gates.len();
        let mut d_inputs = vec![vec![0.0; self.input_width()]; steps];
        let mut dh = d_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let g = &cache.gates[t];
            let c = &cache.cells[t + 1];
            let c_prev = &cache.cells[t];
            for j in 0..h {
                let (i, f, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = tanh(c[j]);
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                let d_i = dc[j] * cand;
                let d_cand = dc[j] * i;
                let d_f = dc[j] * c_prev[j];
                da[j] = d_i * i * (1.0 - i);
                da[h + j] = d_f * f * (1.0 - f);
                da[2 * h + j] = d_cand * (1.0 - cand * cand);
                da[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            outer_acc(&cache.inputs[t], &da, &mut grads.w_x);
            outer_acc(&cache.hiddens[t], &da, &mut grads.w_h);
            axpy(1.0, &da, grads.bias.row_mut(0));
            mat_vec_acc(&self.w_x, &da, &mut d_inputs[t]);
            dh.fill(0.0);
            mat_vec_acc(&self.w_h, &da, &mut dh);
        }
        d_inputs
    }
}

/// Forward and (optionally) backward directions over the same sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: LstmParams,
    pub backward: Option<LstmParams>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: LstmCache,
    backward: Option<LstmCache>,
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize, bidirectional: bool, rng: &mut Rng) -> Self {
        let forward = LstmParams::new(input, hidden, rng);
        let backward = bidirectional.then(|| LstmParams::new(input, hidden, rng));
        BiLstm { forward, backward }
    }

    pub fn output_width(&self) -> usize {
        self.forward.hidden() * if self.backward.is_some() { 2 } else { 1 }
    }

    /// Concatenation of the final forward and final backward hidden states.
    pub fn run(&self, inputs: &[&[f64]]) -> Result<(Vec<f64>, BiLstmCache)> {
        let (mut out, fc) = self.forward.forward(inputs)?;
        let bc = match &self.backward {
            Some(b) => {
                let reversed: Vec<&[f64]> = inputs.iter().rev().copied().collect();
                let (hb, bc) = b.forward(&reversed)?;
                out.extend_from_slice(&hb);
                Some(bc)
            }
            None => None,
        };
        Ok((
            out,
            BiLstmCache {
                forward: fc,
                backward: bc,
            },
        ))
    }

    pub fn run_backward(
        &self,
        cache: &BiLstmCache,
        d_out: &[f64],
        grads: &mut BiLstm,
    ) -> Vec<Vec<f64>> {
        let h = self.forward.hidden();
        let mut d_inputs = self
            .forward
            .backward(&cache.forward, &d_out[..h], &mut grads.forward);
        if let (Some(b), Some(bc), Some(gb)) = (&self.backward, &cache.backward, &mut grads.backward)
        {
            let d_rev = b.backward(bc, &d_out[h..], gb);
            let n = d_inputs.len();
            for (t, d) in d_rev.into_iter().enumerate() {
                axpy(1.0, &d, &mut d_inputs[n - 1 - t]);
            }
        }
        d_inputs
    }

    pub(crate) fn blocks(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.forward.blocks().into();
        if let Some(b) = &self.backward {
            out.extend(b.blocks());
        }
        out
    }

    pub(crate) fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.forward.blocks_mut().into();
        if let Some(b) = &mut self.backward {
            out.extend(b.blocks_mut());
        }
        out
    }
}

impl ParamSet for BiLstm {
    fn blocks(&self) -> Vec<&Matrix> {
        BiLstm::blocks(self)
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        BiLstm::blocks_mut(self)
    }
}
