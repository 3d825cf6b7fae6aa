//! Trainable encoders: the relational graph encoder over the ontology, the
//! two-stage recurrent text encoder, and the MLP classifier heads.
//!
//! Every forward pass returns an explicit cache; the matching backward pass
//! accumulates parameter gradients into a zero-initialised copy of the
//! parameter set and returns the gradient with respect to its input.

mod graph;
mod lstm;
mod mlp;
mod text;

use alloc::vec::Vec;

pub use graph::{
    pool_backward, pool_codes, pool_sum, rgcn_backward, rgcn_forward, GraphEncoderParams,
    PoolCache, RgcnCache, RgcnLayer,
};
pub use lstm::{BiLstm, BiLstmCache, LstmCache, LstmParams};
pub use mlp::{mlp_backward, mlp_forward, Dense, MlpCache, MlpParams};
pub use text::{
    encode_text, split_blocks, text_backward, token_row, TextCache, TextEncoderParams, PAD_ROW,
    UNK_ROW,
};

use crate::numeric::{Matrix, Rng};

/// A set of trainable matrices with a fixed, ordered layout.
///
/// The same type doubles as its own gradient container.
pub trait ParamSet: Clone {
    fn blocks(&self) -> Vec<&Matrix>;
    fn blocks_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for b in z.blocks_mut() {
            b.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.as_slice().len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in self.blocks() {
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    /// Overwrites every parameter from a flat vector laid out as [`flatten`].
    ///
    /// [`flatten`]: ParamSet::flatten
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for b in self.blocks_mut() {
            let n = b.as_slice().len();
            b.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// `self += other`, block by block.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.add_assign(b);
        }
    }

    fn scale_all(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.scale_in_place(s);
        }
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.is_finite())
    }
}

/// Uniform(-1/sqrt(h), 1/sqrt(h)) draws.
pub(crate) fn init_uniform(rng: &mut Rng, rows: usize, cols: usize, hidden: usize) -> Matrix {
    let bound = 1.0 / libm::sqrt(hidden as f64);
    rng.uniform_matrix(rows, cols, -bound, bound)
}

impl<A: ParamSet, B: ParamSet> ParamSet for (A, B) {
    fn blocks(&self) -> Vec<&Matrix> {
        let mut out = self.0.blocks();
        out.extend(self.1.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.0.blocks_mut();
        out.extend(self.1.blocks_mut());
        out
    }
}
