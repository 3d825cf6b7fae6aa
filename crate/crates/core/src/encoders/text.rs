use alloc::vec::Vec;

use super::lstm::{BiLstm, BiLstmCache};
use super::{init_uniform, ParamSet};
use crate::numeric::{axpy, Matrix, Rng};
use crate::{Error, Result};

/// Embedding row reserved for padding; always the zero vector.
pub const PAD_ROW: usize = 0;
/// Embedding row for out-of-vocabulary tokens.
pub const UNK_ROW: usize = 1;

/// Embedding row of vocabulary token `token`.
#[inline]
pub fn token_row(token: u32, vocab_size: usize) -> usize {
    let t = token as usize;
    if t < vocab_size {
        t + 2
    } else {
        UNK_ROW
    }
}

/// Two-stage text encoder: a block-level recurrence over token windows and a
/// document-level recurrence over block summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoderParams {
    /// `(vocab + 2) x e`; row [`PAD_ROW`] stays zero.
    pub embeddings: Matrix,
    pub block_level: BiLstm,
    pub document_level: BiLstm,
    pub block_size: usize,
}

impl TextEncoderParams {
    pub fn new(
        vocab_size: usize,
        hidden: usize,
        block_size: usize,
        bidirectional: bool,
        rng: &mut Rng,
    ) -> Self {
        let mut embeddings = init_uniform(rng, vocab_size + 2, hidden, hidden);
        embeddings.row_mut(PAD_ROW).fill(0.0);
        let block_level = BiLstm::new(hidden, hidden, bidirectional, rng);
        let document_level = BiLstm::new(block_level.output_width(), hidden, bidirectional, rng);
        TextEncoderParams {
            embeddings,
            block_level,
            document_level,
            block_size,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.rows() - 2
    }

    pub fn output_width(&self) -> usize {
        self.document_level.output_width()
    }
}

impl ParamSet for TextEncoderParams {
    fn blocks(&self) -> Vec<&Matrix> {
        let mut out = alloc::vec![&self.embeddings];
        out.extend(self.block_level.blocks());
        out.extend(self.document_level.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = alloc::vec![&mut self.embeddings];
        out.extend(self.block_level.blocks_mut());
        out.extend(self.document_level.blocks_mut());
        out
    }
}

/// Splits a sequence into `ceil(len / b)` blocks of exactly `b` items, right
/// padding the last one. An empty sequence yields a single all-pad block.
pub fn split_blocks<T: Copy>(tokens: &[T], block_size: usize, pad: T) -> Result<Vec<Vec<T>>> {
    if block_size < 1 {
        return Err(Error::Invalid("block size must be at least 1".into()));
    }
    if tokens.is_empty() {
        return Ok(alloc::vec![alloc::vec![pad; block_size]]);
    }
    Ok(tokens
        .chunks(block_size)
        .map(|chunk| {
            let mut block = chunk.to_vec();
            block.resize(block_size, pad);
            block
        })
        .collect())
}

/// Activations kept from [`encode_text`].
#[derive(Debug, Clone)]
pub struct TextCache {
    blocks: Vec<Vec<usize>>,
    block_caches: Vec<BiLstmCache>,
    document_cache: BiLstmCache,
}

/// `g_A`: encodes a document given as embedding rows (see [`token_row`]).
pub fn encode_text(rows: &[usize], p: &TextEncoderParams) -> Result<(Vec<f64>, TextCache)> {
    let blocks = split_blocks(rows, p.block_size, PAD_ROW)?;
    let zero = alloc::vec![0.0; p.embeddings.cols()];
    let mut summaries = Vec::with_capacity(blocks.len());
    let mut block_caches = Vec::with_capacity(blocks.len());
    for block in &blocks {
        if let Some(&bad) = block.iter().find(|&&r| r >= p.embeddings.rows()) {
            return Err(Error::Invalid(alloc::format!("embedding row {bad} out of range")));
        }
        let inputs: Vec<&[f64]> = block
            .iter()
            .map(|&r| if r == PAD_ROW { &zero[..] } else { p.embeddings.row(r) })
            .collect();
        let (summary, cache) = p.block_level.run(&inputs)?;
        summaries.push(summary);
        block_caches.push(cache);
    }
    let refs: Vec<&[f64]> = summaries.iter().map(Vec::as_slice).collect();
    let (out, document_cache) = p.document_level.run(&refs)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encode_text"));
    }
    Ok((
        out,
        TextCache {
            blocks,
            block_caches,
            document_cache,
        },
    ))
}

/// Accumulates parameter gradients of `d_out · g_A` into `grads`. The pad
/// embedding never receives gradient.
pub fn text_backward(
    p: &TextEncoderParams,
    cache: &TextCache,
    d_out: &[f64],
    grads: &mut TextEncoderParams,
) -> Result<()> {
    if d_out.len() != p.output_width() {
        return Err(Error::shape("text_backward", "output gradient width"));
    }
    let d_summaries =
        p.document_level
            .run_backward(&cache.document_cache, d_out, &mut grads.document_level);
    for ((block, bc), d_summary) in cache.blocks.iter().zip(&cache.block_caches).zip(&d_summaries) {
        let d_inputs = p
            .block_level
            .run_backward(bc, d_summary, &mut grads.block_level);
        for (&row, d) in block.iter().zip(&d_inputs) {
            if row != PAD_ROW {
                axpy(1.0, d, grads.embeddings.row_mut(row));
            }
        }
    }
    Ok(())
}
