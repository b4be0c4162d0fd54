//! Pilot-free neural receiver: a two-stage Transformer over the decoded cube.
//!
//! Stage 1 attends across the L·N_t fast-time tokens of one frame, with the
//! known spreading code concatenated to the features as an implicit pilot.
//! A linear head collapses the width to M, the token and feature axes swap,
//! and stage 2 attends across the M blocks at width L·N_t before the bit
//! head. Everything runs on the tape in `nn`, so analytic gradients are
//! available end to end.

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comm::DecodedCube;
use crate::config::ScenarioConfig;
use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::layers::{encoder_layer, EncoderLayerIds, EncoderLayerParams};
use crate::nn::{Graph, NodeId, Tensor};
use crate::waveform::PrbsCode;

#[derive(Debug, thiserror::Error)]
pub enum T3Error {
    #[error("model config invalid: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("input scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Architecture hyperparameters plus the frame dimensions they must match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub code_length: usize,
    pub n_tx: usize,
    pub blocks: usize,
    pub embed_dim: usize,
    pub key_dim: usize,
    pub heads: usize,
    pub stage1_layers: usize,
    pub stage2_layers: usize,
    pub bits_per_symbol: usize,
}

impl ModelConfig {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        Self {
            code_length: cfg.system.code_length,
            n_tx: cfg.system.n_tx,
            blocks: cfg.system.blocks,
            embed_dim: cfg.model.embed_dim,
            key_dim: cfg.model.key_dim,
            heads: cfg.heads(),
            stage1_layers: cfg.model.stage1_layers,
            stage2_layers: cfg.model.stage2_layers,
            bits_per_symbol: cfg.bits_per_symbol(),
        }
    }

    /// Stage-1 sequence length L·N_t.
    pub fn token_count(&self) -> usize {
        self.code_length * self.n_tx
    }

    /// Input feature width 4M: I/Q of the cube plus I/Q of the code channel.
    pub fn feature_dim(&self) -> usize {
        4 * self.blocks
    }

    /// Bits emitted per block, N_t·b.
    pub fn out_dim(&self) -> usize {
        self.n_tx * self.bits_per_symbol
    }

    pub fn validate(&self) -> Result<(), T3Error> {
        if self.embed_dim != self.heads * self.key_dim {
            return Err(T3Error::Config(format!(
                "embed_dim {} != heads {} x key_dim {}",
                self.embed_dim, self.heads, self.key_dim
            )));
        }
        let positive = [
            self.code_length,
            self.n_tx,
            self.blocks,
            self.embed_dim,
            self.key_dim,
            self.heads,
            self.stage1_layers,
            self.stage2_layers,
            self.bits_per_symbol,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(T3Error::Config("all dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed sinusoidal position table: even columns sin, odd columns cos, with
/// the usual 10000^(2i/d) frequency ladder.
pub fn sinusoidal_positions(tokens: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; tokens * dim];
    for pos in 0..tokens {
        for j in 0..dim {
            let i = (j / 2) as f64;
            let freq = 1.0 / 10000f64.powf(2.0 * i / dim as f64);
            let angle = pos as f64 * freq;
            data[pos * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::from_vec(&[tokens, dim], data).expect("table shape")
}

pub struct T3formerParams {
    pub config: ModelConfig,
    pub w_emb: Tensor,
    pub b_emb: Tensor,
    /// Not trainable; regenerated from the config, never checkpointed.
    pub e_pos: Tensor,
    pub stage1: Vec<EncoderLayerParams>,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub stage2: Vec<EncoderLayerParams>,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

pub struct T3formerIds {
    pub w_emb: NodeId,
    pub b_emb: NodeId,
    pub e_pos: NodeId,
    pub stage1: Vec<EncoderLayerIds>,
    pub fc1_w: NodeId,
    pub fc1_b: NodeId,
    pub stage2: Vec<EncoderLayerIds>,
    pub fc2_w: NodeId,
    pub fc2_b: NodeId,
}

/// Names for one encoder layer, in exactly the order its `tensors()` emits.
fn layer_tensor_names(prefix: &str, heads: usize) -> Vec<String> {
    let mut names = vec![format!("{prefix}.ln1_gain"), format!("{prefix}.ln1_shift")];
    for h in 0..heads {
        names.push(format!("{prefix}.h{h}.w_q"));
        names.push(format!("{prefix}.h{h}.w_k"));
        names.push(format!("{prefix}.h{h}.w_v"));
    }
    names.push(format!("{prefix}.w_out"));
    names.push(format!("{prefix}.ln2_gain"));
    names.push(format!("{prefix}.ln2_shift"));
    names.push(format!("{prefix}.w_ff1"));
    names.push(format!("{prefix}.b_ff1"));
    names.push(format!("{prefix}.w_ff2"));
    names.push(format!("{prefix}.b_ff2"));
    names
}

impl T3formerParams {
    /// Fixed draw order (embedding, stage 1, FC1, stage 2, FC2) so a seed
    /// pins the whole initialization.
    pub fn init(config: ModelConfig, rng: &mut impl Rng) -> Result<Self, T3Error> {
        config.validate()?;
        let d = config.embed_dim;
        let l1 = config.token_count();
        let w_emb = Tensor::xavier_uniform(config.feature_dim(), d, rng);
        let stage1 = (0..config.stage1_layers)
            .map(|_| EncoderLayerParams::init(d, config.heads, config.key_dim, rng))
            .collect();
        let fc1_w = Tensor::xavier_uniform(d, config.blocks, rng);
        let stage2 = (0..config.stage2_layers)
            .map(|_| EncoderLayerParams::init(l1, config.heads, config.key_dim, rng))
            .collect();
        let fc2_w = Tensor::xavier_uniform(l1, config.out_dim(), rng);
        Ok(Self {
            e_pos: sinusoidal_positions(l1, d),
            w_emb,
            b_emb: Tensor::zeros(&[d]),
            stage1,
            fc1_w,
            fc1_b: Tensor::zeros(&[config.blocks]),
            stage2,
            fc2_w,
            fc2_b: Tensor::zeros(&[config.out_dim()]),
            config,
        })
    }

    /// Trainable tensors with stable names; e_pos is deliberately absent.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            vec![("w_emb".into(), &self.w_emb), ("b_emb".into(), &self.b_emb)];
        for (i, layer) in self.stage1.iter().enumerate() {
            let names = layer_tensor_names(&format!("s1.{i}"), self.config.heads);
            let mut ts = Vec::new();
            layer.tensors(&mut ts);
            out.extend(names.into_iter().zip(ts));
        }
        out.push(("fc1_w".into(), &self.fc1_w));
        out.push(("fc1_b".into(), &self.fc1_b));
        for (i, layer) in self.stage2.iter().enumerate() {
            let names = layer_tensor_names(&format!("s2.{i}"), self.config.heads);
            let mut ts = Vec::new();
            layer.tensors(&mut ts);
            out.extend(names.into_iter().zip(ts));
        }
        out.push(("fc2_w".into(), &self.fc2_w));
        out.push(("fc2_b".into(), &self.fc2_b));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.w_emb, &mut self.b_emb];
        for layer in &mut self.stage1 {
            layer.tensors_mut(&mut out);
        }
        out.push(&mut self.fc1_w);
        out.push(&mut self.fc1_b);
        for layer in &mut self.stage2 {
            layer.tensors_mut(&mut out);
        }
        out.push(&mut self.fc2_w);
        out.push(&mut self.fc2_b);
        out
    }

    pub fn register(&self, g: &mut Graph) -> T3formerIds {
        T3formerIds {
            w_emb: g.leaf(self.w_emb.clone()),
            b_emb: g.leaf(self.b_emb.clone()),
            e_pos: g.leaf(self.e_pos.clone()),
            stage1: self.stage1.iter().map(|l| l.register(g)).collect(),
            fc1_w: g.leaf(self.fc1_w.clone()),
            fc1_b: g.leaf(self.fc1_b.clone()),
            stage2: self.stage2.iter().map(|l| l.register(g)).collect(),
            fc2_w: g.leaf(self.fc2_w.clone()),
            fc2_b: g.leaf(self.fc2_b.clone()),
        }
    }
}

impl T3formerIds {
    /// Trainable ids in `named_tensors` order (e_pos excluded).
    pub fn trainable(&self) -> Vec<NodeId> {
        let mut out = vec![self.w_emb, self.b_emb];
        for layer in &self.stage1 {
            layer.ids(&mut out);
        }
        out.push(self.fc1_w);
        out.push(self.fc1_b);
        for layer in &self.stage2 {
            layer.ids(&mut out);
        }
        out.push(self.fc2_w);
        out.push(self.fc2_b);
        out
    }
}

/// Model input for one frame: the feature tensor in both its cube-shaped and
/// token-sequence forms (same data, two shapes).
#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// L × N_t × 4M.
    pub z0: Tensor,
    /// (L·N_t) × 4M, row l·N_t + n.
    pub z1: Tensor,
}

/// Interleaves the decoded cube as I/Q feature pairs (slots [0, 2M)), appends
/// the known code as an implicit pilot channel (c[l] in I slots of [2M, 4M),
/// zeros in Q slots), and scales the data half by 1/scale.
pub fn preprocess(
    cube: &DecodedCube,
    code: &PrbsCode,
    scale: f64,
    mc: &ModelConfig,
) -> Result<Preprocessed, T3Error> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(T3Error::BadScale(scale));
    }
    let (l, n_t, m) = cube.data.dim();
    if (l, n_t, m) != (mc.code_length, mc.n_tx, mc.blocks) {
        return Err(T3Error::Shape(format!(
            "cube {}x{}x{} vs configured {}x{}x{}",
            l, n_t, m, mc.code_length, mc.n_tx, mc.blocks
        )));
    }
    if code.len() != l {
        return Err(T3Error::Shape(format!(
            "code length {} vs cube rows {}",
            code.len(),
            l
        )));
    }
    let feat = mc.feature_dim();
    let inv = 1.0 / scale;
    let mut data = vec![0.0; l * n_t * feat];
    for li in 0..l {
        for n in 0..n_t {
            let base = (li * n_t + n) * feat;
            for mi in 0..m {
                let y = cube.data[(li, n, mi)];
                data[base + 2 * mi] = y.re * inv;
                data[base + 2 * mi + 1] = y.im * inv;
                data[base + 2 * m + 2 * mi] = code.chip(li);
                // Q slot of the code channel stays zero.
            }
        }
    }
    let z0 = Tensor::from_vec(&[l, n_t, feat], data).expect("z0 shape");
    let z1 = z0.reshaped(&[l * n_t, feat]).expect("z1 reshape");
    Ok(Preprocessed { z0, z1 })
}

/// Every named intermediate of one forward pass, as graph nodes.
pub struct ForwardTrace {
    pub z0: Tensor,
    pub z1: NodeId,
    pub x1: NodeId,
    pub h1: NodeId,
    pub h1_proj: NodeId,
    pub x2: NodeId,
    pub h2: NodeId,
    /// M × N_t × b.
    pub logits: NodeId,
}

pub fn forward(g: &mut Graph, ids: &T3formerIds, mc: &ModelConfig, pre: &Preprocessed) -> ForwardTrace {
    let z1 = g.leaf(pre.z1.clone());
    let emb = g.linear(z1, ids.w_emb, Some(ids.b_emb));
    let x1 = g.add(emb, ids.e_pos);
    let mut h = x1;
    for layer in &ids.stage1 {
        h = encoder_layer(g, h, layer);
    }
    let h1 = h;
    let h1_proj = g.linear(h1, ids.fc1_w, Some(ids.fc1_b));
    let x2 = g.transpose(h1_proj);
    let mut h = x2;
    for layer in &ids.stage2 {
        h = encoder_layer(g, h, layer);
    }
    let h2 = h;
    let flat = g.linear(h2, ids.fc2_w, Some(ids.fc2_b));
    let logits = g.reshape(flat, &[mc.blocks, mc.n_tx, mc.bits_per_symbol]);
    ForwardTrace { z0: pre.z0.clone(), z1, x1, h1, h1_proj, x2, h2, logits }
}

/// Mean binary cross-entropy over all M·N_t·b bits of one frame.
pub fn loss(g: &mut Graph, logits: NodeId, bits: &Tensor) -> NodeId {
    let targets = g.leaf(bits.clone());
    g.bce_with_logits(logits, targets)
}

/// Bit tensor (M × N_t × b of 0.0/1.0) from the transmit-side bit cube.
pub fn bits_to_tensor(bits: &Array3<u8>) -> Tensor {
    let (m, n, b) = bits.dim();
    let data: Vec<f64> = bits.iter().map(|&v| v as f64).collect();
    Tensor::from_vec(&[m, n, b], data).expect("bit tensor shape")
}

/// Hard decisions: 1 iff logit > 0 (an exact 0 decodes as 0). Row-major
/// (block, stream, bit) order, matching the transmit bit order.
pub fn predict_bits(logits: &Tensor) -> Vec<u8> {
    logits.data().iter().map(|&z| u8::from(z > 0.0)).collect()
}

// ---- persistence ------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: ModelConfig,
    /// RMS of |Y_dec| over the training dataset; preprocessing divisor.
    pub input_scale: f64,
    /// Free-form training provenance (seed, epochs, dataset digest).
    pub training: serde_json::Value,
}

pub fn save_model(
    path: &std::path::Path,
    params: &T3formerParams,
    input_scale: f64,
    training: serde_json::Value,
) -> Result<(), T3Error> {
    let meta = ModelMeta { model: params.config.clone(), input_scale, training };
    let named = params.named_tensors();
    let extra = serde_json::to_value(&meta)
        .map_err(|e| T3Error::Config(format!("meta serialization: {e}")))?;
    checkpoint::save(path, &named, &extra)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<(T3formerParams, ModelMeta), T3Error> {
    let (manifest, tensors) = checkpoint::load(path)?;
    let meta: ModelMeta = serde_json::from_value(manifest.extra.clone())
        .map_err(|e| T3Error::Config(format!("checkpoint meta: {e}")))?;
    // Zero-init a skeleton, then overwrite every trainable slot by name.
    let mut rng = crate::seeds::rng(0);
    let mut params = T3formerParams::init(meta.model.clone(), &mut rng)?;
    let expected: Vec<String> =
        params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
    if manifest.tensors.len() != expected.len() {
        return Err(T3Error::Shape(format!(
            "checkpoint holds {} tensors, model needs {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let slots = params.tensors_mut();
    for ((slot, want_name), (meta_t, stored)) in
        slots.into_iter().zip(&expected).zip(manifest.tensors.iter().zip(tensors))
    {
        if &meta_t.name != want_name {
            return Err(T3Error::Shape(format!(
                "checkpoint tensor '{}' where '{}' expected",
                meta_t.name, want_name
            )));
        }
        if stored.shape() != slot.shape() {
            return Err(T3Error::Shape(format!(
                "tensor '{}' shape {:?} vs expected {:?}",
                meta_t.name,
                stored.shape(),
                slot.shape()
            )));
        }
        *slot = stored;
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use crate::nn::gradcheck::grad_check;
    use crate::seeds;
    use crate::waveform::gen_mseq;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            code_length: 7,
            n_tx: 2,
            blocks: 4,
            embed_dim: 16,
            key_dim: 8,
            heads: 2,
            stage1_layers: 1,
            stage2_layers: 1,
            bits_per_symbol: 2,
        }
    }

    fn toy_cube(mc: &ModelConfig, seed: u64) -> DecodedCube {
        let mut rng = seeds::rng(seed);
        let data = Array3::from_shape_fn(
            (mc.code_length, mc.n_tx, mc.blocks),
            |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        );
        DecodedCube { data, user: 0 }
    }

    fn toy_pre(mc: &ModelConfig, seed: u64) -> Preprocessed {
        let code = gen_mseq(mc.code_length).unwrap();
        preprocess(&toy_cube(mc, seed), &code, 1.0, mc).unwrap()
    }

    #[test]
    fn preprocess_layout_probes() {
        let mc = toy_config();
        let code = gen_mseq(7).unwrap();
        let mut cube = toy_cube(&mc, 1);
        cube.data[(5, 1, 2)] = Complex64::new(7.5, -2.25);
        let pre = preprocess(&cube, &code, 1.5, &mc).unwrap();
        assert_eq!(pre.z0.shape(), &[7, 2, 16]);
        assert_eq!(pre.z1.shape(), &[14, 16]);
        // Row l·N_t + n; I at 2m, Q at 2m+1, scaled by 1/1.5.
        let row = 5 * 2 + 1;
        let z = pre.z1.data();
        assert!((z[row * 16 + 4] - 5.0).abs() < 1e-15);
        assert!((z[row * 16 + 5] + 1.5).abs() < 1e-15);
        // Code channel: slot 2M+2m carries c[l], odd slots zero.
        for m in 0..4 {
            assert_eq!(z[row * 16 + 8 + 2 * m], code.chip(5));
            assert_eq!(z[row * 16 + 8 + 2 * m + 1], 0.0);
        }
        // Purely real cube zeroes every Q slot of the data half.
        let real_cube = DecodedCube {
            data: cube.data.mapv(|v| Complex64::new(v.re, 0.0)),
            user: 0,
        };
        let pre = preprocess(&real_cube, &code, 1.0, &mc).unwrap();
        for r in 0..14 {
            for m in 0..4 {
                assert_eq!(pre.z1.data()[r * 16 + 2 * m + 1], 0.0);
            }
        }
        // Guards.
        assert!(preprocess(&cube, &code, 0.0, &mc).is_err());
        assert!(preprocess(&cube, &gen_mseq(15).unwrap(), 1.0, &mc).is_err());
        let wrong = toy_cube(
            &ModelConfig { blocks: 5, ..toy_config() },
            2,
        );
        assert!(preprocess(&wrong, &code, 1.0, &mc).is_err());
    }

    #[test]
    fn toy_trace_shapes() {
        let mc = toy_config();
        let mut rng = seeds::rng(3);
        let params = T3formerParams::init(mc.clone(), &mut rng).unwrap();
        let pre = toy_pre(&mc, 4);
        let mut g = Graph::new();
        let ids = params.register(&mut g);
        let tr = forward(&mut g, &ids, &mc, &pre);
        assert_eq!(g.value(tr.z1).shape(), &[14, 16]);
        assert_eq!(g.value(tr.x1).shape(), &[14, 16]);
        assert_eq!(g.value(tr.h1).shape(), &[14, 16]);
        assert_eq!(g.value(tr.h1_proj).shape(), &[14, 4]);
        assert_eq!(g.value(tr.x2).shape(), &[4, 14]);
        assert_eq!(g.value(tr.h2).shape(), &[4, 14]);
        assert_eq!(g.value(tr.logits).shape(), &[4, 2, 2]);
        assert!(g.value(tr.logits).is_finite());
    }

    #[test]
    fn zeroed_head_gives_ln2_loss() {
        let mc = toy_config();
        let mut rng = seeds::rng(5);
        let mut params = T3formerParams::init(mc.clone(), &mut rng).unwrap();
        params.fc2_w = Tensor::zeros(&[14, 4]);
        params.fc2_b = Tensor::zeros(&[4]);
        let pre = toy_pre(&mc, 6);
        let mut g = Graph::new();
        let ids = params.register(&mut g);
        let tr = forward(&mut g, &ids, &mc, &pre);
        let bits = Array3::from_shape_fn((4, 2, 2), |(m, n, b)| ((m + n + b) % 2) as u8);
        let l = loss(&mut g, tr.logits, &bits_to_tensor(&bits));
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let mc = toy_config();
        let mut rng = seeds::rng(7);
        let params = T3formerParams::init(mc.clone(), &mut rng).unwrap();
        let pre = toy_pre(&mc, 8);
        let run = || {
            let mut g = Graph::new();
            let ids = params.register(&mut g);
            let tr = forward(&mut g, &ids, &mc, &pre);
            g.value(tr.logits).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stage1_is_token_equivariant_without_positions() {
        let mc = toy_config();
        let mut rng = seeds::rng(9);
        let mut params = T3formerParams::init(mc.clone(), &mut rng).unwrap();
        params.e_pos = Tensor::zeros(&[14, 16]);
        let pre = toy_pre(&mc, 10);

        let h1_of = |p: &Preprocessed| {
            let mut g = Graph::new();
            let ids = params.register(&mut g);
            let tr = forward(&mut g, &ids, &mc, p);
            g.value(tr.h1).data().to_vec()
        };
        let base = h1_of(&pre);

        // Reverse the token order; H_1 rows must reverse identically.
        let feat = 16;
        let mut rev = vec![0.0; 14 * feat];
        for r in 0..14 {
            rev[r * feat..(r + 1) * feat]
                .copy_from_slice(&pre.z1.data()[(13 - r) * feat..(14 - r) * feat]);
        }
        let pre_rev = Preprocessed {
            z0: Tensor::from_vec(&[7, 2, 16], rev.clone()).unwrap(),
            z1: Tensor::from_vec(&[14, 16], rev).unwrap(),
        };
        let swapped = h1_of(&pre_rev);
        for r in 0..14 {
            for c in 0..feat {
                let a = base[(13 - r) * feat + c];
                let b = swapped[r * feat + c];
                assert!((a - b).abs() < 1e-9, "row {r} col {c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn predict_bits_thresholds() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![-1.0, 1.0, 0.0, 30.0]).unwrap();
        assert_eq!(predict_bits(&t), vec![0, 1, 0, 1]);
        // Positive scaling never changes decisions.
        let scaled = Tensor::from_vec(&[1, 2, 2], vec![-0.3, 0.3, 0.0, 9.0]).unwrap();
        assert_eq!(predict_bits(&scaled), predict_bits(&t));
    }

    #[test]
    fn saturated_logits_drive_loss_to_zero() {
        let bits = Array3::from_shape_fn((2, 2, 2), |(m, n, b)| ((m * n + b) % 2) as u8);
        let logits = Tensor::from_vec(
            &[2, 2, 2],
            bits.iter().map(|&b| if b == 1 { 30.0 } else { -30.0 }).collect(),
        )
        .unwrap();
        let mut g = Graph::new();
        let z = g.leaf(logits);
        let l = loss(&mut g, z, &bits_to_tensor(&bits));
        assert!(g.value(l).item() < 1e-9);
    }

    #[test]
    fn table1_and_desk_shapes() {
        // Desk profile: (60, 32) tokens → (8, 4, 2) logits.
        let desk = ModelConfig::from_scenario(&ScenarioConfig::desk());
        assert_eq!(desk.token_count(), 60);
        assert_eq!(desk.feature_dim(), 32);
        assert_eq!((desk.blocks, desk.n_tx, desk.bits_per_symbol), (8, 4, 2));
        desk.validate().unwrap();
        // Full-scale profile: (1008, 32) → (8, 16, 2), without running the
        // large forward here (the acceptance suite does).
        let t1 = ModelConfig::from_scenario(&ScenarioConfig::table1());
        assert_eq!(t1.token_count(), 1008);
        assert_eq!(t1.feature_dim(), 32);
        assert_eq!((t1.blocks, t1.n_tx, t1.bits_per_symbol), (8, 16, 2));
        assert_eq!(t1.heads, 4);
        t1.validate().unwrap();
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let mc = toy_config();
        let mut rng = seeds::rng(11);
        let params = T3formerParams::init(mc.clone(), &mut rng).unwrap();
        let pre = toy_pre(&mc, 12);
        let bits = Array3::from_shape_fn((4, 2, 2), |(m, n, b)| ((m * 2 + n + b) % 2) as u8);
        let bits_t = bits_to_tensor(&bits);

        // Analytic gradients once.
        let mut g = Graph::new();
        let ids = params.register(&mut g);
        let tr = forward(&mut g, &ids, &mc, &pre);
        let l = loss(&mut g, tr.logits, &bits_t);
        g.backward(l);
        let analytic: Vec<Tensor> = ids
            .trainable()
            .iter()
            .map(|&id| g.grad(id).expect("param grad").clone())
            .collect();

        // The architecture has exact flat directions: the last stage-1 FFN
        // biases and the FC1 bias add token-uniform column shifts to H_1,
        // which become row-uniform shifts of X_2 and die in the stage-2
        // entry norm's mean subtraction. Verify the sharpest consequence
        // analytically: those gradients vanish to rounding.
        let names: Vec<String> =
            params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
        let b_ff2_last = format!("s1.{}.b_ff2", mc.stage1_layers - 1);
        for (name, grad) in names.iter().zip(&analytic) {
            if name == &b_ff2_last || name == "fc1_b" {
                let worst = grad.data().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                assert!(worst < 1e-12, "{name} gradient {worst} should vanish");
            }
        }

        let param_values: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
        let mc2 = mc.clone();
        let report = grad_check(
            move |vals: &[Tensor]| {
                let mut p = T3formerParams::init(mc2.clone(), &mut seeds::rng(11)).unwrap();
                for (slot, v) in p.tensors_mut().into_iter().zip(vals) {
                    *slot = v.clone();
                }
                let mut g = Graph::new();
                let ids = p.register(&mut g);
                let tr = forward(&mut g, &ids, &mc2, &pre);
                let l = loss(&mut g, tr.logits, &bits_t);
                g.value(l).item()
            },
            &param_values,
            &analytic,
            1e-5,
            99,
        )
        .unwrap();
        // Flat directions (also data-dependent ones, e.g. hidden units active
        // on every token) leave both gradients under the finite-difference
        // noise floor ulp(loss)/2h ~ 1e-11, where a pure ratio test cannot
        // apply. Accept abs+rel agreement everywhere, and the strict ratio
        // bound wherever the gradient is actually resolvable.
        let bad = report.violations(1e-10, 1e-4);
        assert!(bad.is_empty(), "gradient mismatches: {:?}", &bad[..bad.len().min(5)]);
        let resolvable = report.max_rel_err_above(1e-9);
        assert!(resolvable < 1e-4, "max resolvable rel err {resolvable}");
        // min(numel, 64) coords per tensor; the toy model totals well over 1e3.
        assert!(report.coords_checked >= 1000);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_logits() {
        let mc = toy_config();
        let mut rng = seeds::rng(13);
        let params = T3formerParams::init(mc.clone(), &mut rng).unwrap();
        let pre = toy_pre(&mc, 14);
        let logits_of = |p: &T3formerParams| {
            let mut g = Graph::new();
            let ids = p.register(&mut g);
            let tr = forward(&mut g, &ids, &mc, &pre);
            g.value(tr.logits).data().to_vec()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pnck");
        save_model(&path, &params, 2.5, serde_json::json!({"seed": 13})).unwrap();
        let (loaded, meta) = load_model(&path).unwrap();
        assert_eq!(meta.input_scale, 2.5);
        assert_eq!(meta.model, mc);
        assert_eq!(meta.training["seed"], 13);
        assert_eq!(logits_of(&params), logits_of(&loaded));
        // Saving the loaded model again is byte-identical.
        let path2 = dir.path().join("model2.pnck");
        save_model(&path2, &loaded, 2.5, serde_json::json!({"seed": 13})).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
