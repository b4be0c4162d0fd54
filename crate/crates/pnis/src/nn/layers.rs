//! Attention and encoder-layer graph builders.
//!
//! Parameters live outside the graph; `register` copies them in as leaves and
//! returns an id mirror with the same structure. Id collection order matches
//! tensor collection order, which is what ties gradients to optimizer slots.

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;

/// LayerNorm stabilizer used by every encoder layer.
pub const LN_EPS: f64 = 1e-5;

// ---- multi-head self-attention ---------------------------------------------

pub struct HeadParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

pub struct MhsaParams {
    pub heads: Vec<HeadParams>,
    /// Output projection [h·d_k, D].
    pub w_out: Tensor,
    pub key_dim: usize,
}

pub struct HeadIds {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
}

pub struct MhsaIds {
    pub heads: Vec<HeadIds>,
    pub w_out: NodeId,
    pub key_dim: usize,
}

impl MhsaParams {
    pub fn init(width: usize, head_count: usize, key_dim: usize, rng: &mut impl Rng) -> Self {
        let heads = (0..head_count)
            .map(|_| HeadParams {
                w_q: Tensor::xavier_uniform(width, key_dim, rng),
                w_k: Tensor::xavier_uniform(width, key_dim, rng),
                w_v: Tensor::xavier_uniform(width, key_dim, rng),
            })
            .collect();
        let w_out = Tensor::xavier_uniform(head_count * key_dim, width, rng);
        Self { heads, w_out, key_dim }
    }

    pub fn register(&self, g: &mut Graph) -> MhsaIds {
        MhsaIds {
            heads: self
                .heads
                .iter()
                .map(|h| HeadIds {
                    w_q: g.leaf(h.w_q.clone()),
                    w_k: g.leaf(h.w_k.clone()),
                    w_v: g.leaf(h.w_v.clone()),
                })
                .collect(),
            w_out: g.leaf(self.w_out.clone()),
            key_dim: self.key_dim,
        }
    }

    pub fn tensors<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for h in &self.heads {
            out.push(&h.w_q);
            out.push(&h.w_k);
            out.push(&h.w_v);
        }
        out.push(&self.w_out);
    }

    pub fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for h in &mut self.heads {
            out.push(&mut h.w_q);
            out.push(&mut h.w_k);
            out.push(&mut h.w_v);
        }
        out.push(&mut self.w_out);
    }
}

impl MhsaIds {
    pub fn ids(&self, out: &mut Vec<NodeId>) {
        for h in &self.heads {
            out.push(h.w_q);
            out.push(h.w_k);
            out.push(h.w_v);
        }
        out.push(self.w_out);
    }
}

/// Scaled dot-product attention per head, concatenated and output-projected.
/// No masking: every token attends to every token.
pub fn mhsa(g: &mut Graph, x: NodeId, p: &MhsaIds) -> NodeId {
    let scale = 1.0 / (p.key_dim as f64).sqrt();
    let mut outs = Vec::with_capacity(p.heads.len());
    for h in &p.heads {
        let q = g.linear(x, h.w_q, None);
        let k = g.linear(x, h.w_k, None);
        let v = g.linear(x, h.w_v, None);
        let scores = g.matmul_nt(q, k);
        let scores = g.scale(scores, scale);
        let attn = g.softmax_rows(scores);
        outs.push(g.matmul(attn, v));
    }
    let cat = g.concat_cols(&outs);
    g.linear(cat, p.w_out, None)
}

// ---- encoder layer ----------------------------------------------------------

pub struct EncoderLayerParams {
    pub ln1_gain: Tensor,
    pub ln1_shift: Tensor,
    pub attn: MhsaParams,
    pub ln2_gain: Tensor,
    pub ln2_shift: Tensor,
    pub w_ff1: Tensor,
    pub b_ff1: Tensor,
    pub w_ff2: Tensor,
    pub b_ff2: Tensor,
}

pub struct EncoderLayerIds {
    pub ln1_gain: NodeId,
    pub ln1_shift: NodeId,
    pub attn: MhsaIds,
    pub ln2_gain: NodeId,
    pub ln2_shift: NodeId,
    pub w_ff1: NodeId,
    pub b_ff1: NodeId,
    pub w_ff2: NodeId,
    pub b_ff2: NodeId,
}

impl EncoderLayerParams {
    /// Feed-forward width is 4×: the conventional transformer expansion.
    pub fn init(width: usize, heads: usize, key_dim: usize, rng: &mut impl Rng) -> Self {
        let d_ff = 4 * width;
        Self {
            ln1_gain: Tensor::full(&[width], 1.0),
            ln1_shift: Tensor::zeros(&[width]),
            attn: MhsaParams::init(width, heads, key_dim, rng),
            ln2_gain: Tensor::full(&[width], 1.0),
            ln2_shift: Tensor::zeros(&[width]),
            w_ff1: Tensor::xavier_uniform(width, d_ff, rng),
            b_ff1: Tensor::zeros(&[d_ff]),
            w_ff2: Tensor::xavier_uniform(d_ff, width, rng),
            b_ff2: Tensor::zeros(&[width]),
        }
    }

    pub fn register(&self, g: &mut Graph) -> EncoderLayerIds {
        EncoderLayerIds {
            ln1_gain: g.leaf(self.ln1_gain.clone()),
            ln1_shift: g.leaf(self.ln1_shift.clone()),
            attn: self.attn.register(g),
            ln2_gain: g.leaf(self.ln2_gain.clone()),
            ln2_shift: g.leaf(self.ln2_shift.clone()),
            w_ff1: g.leaf(self.w_ff1.clone()),
            b_ff1: g.leaf(self.b_ff1.clone()),
            w_ff2: g.leaf(self.w_ff2.clone()),
            b_ff2: g.leaf(self.b_ff2.clone()),
        }
    }

    pub fn tensors<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.push(&self.ln1_gain);
        out.push(&self.ln1_shift);
        self.attn.tensors(out);
        out.push(&self.ln2_gain);
        out.push(&self.ln2_shift);
        out.push(&self.w_ff1);
        out.push(&self.b_ff1);
        out.push(&self.w_ff2);
        out.push(&self.b_ff2);
    }

    pub fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.ln1_gain);
        out.push(&mut self.ln1_shift);
        self.attn.tensors_mut(out);
        out.push(&mut self.ln2_gain);
        out.push(&mut self.ln2_shift);
        out.push(&mut self.w_ff1);
        out.push(&mut self.b_ff1);
        out.push(&mut self.w_ff2);
        out.push(&mut self.b_ff2);
    }
}

impl EncoderLayerIds {
    pub fn ids(&self, out: &mut Vec<NodeId>) {
        out.push(self.ln1_gain);
        out.push(self.ln1_shift);
        self.attn.ids(out);
        out.push(self.ln2_gain);
        out.push(self.ln2_shift);
        out.push(self.w_ff1);
        out.push(self.b_ff1);
        out.push(self.w_ff2);
        out.push(self.b_ff2);
    }
}

/// Pre-norm encoder layer. Both residuals branch from the *normed* tensor:
/// A = LN(x); A′ = A + MHSA(A); B = LN(A′); out = B + FFN(B).
pub fn encoder_layer(g: &mut Graph, x: NodeId, p: &EncoderLayerIds) -> NodeId {
    let a = g.layer_norm(x, p.ln1_gain, p.ln1_shift, LN_EPS);
    let att = mhsa(g, a, &p.attn);
    let a2 = g.add(a, att);
    let b = g.layer_norm(a2, p.ln2_gain, p.ln2_shift, LN_EPS);
    let f = g.linear(b, p.w_ff1, Some(p.b_ff1));
    let f = g.relu(f);
    let f = g.linear(f, p.w_ff2, Some(p.b_ff2));
    g.add(b, f)
}
