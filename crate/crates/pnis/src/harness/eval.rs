//! BER/Goodput sweeps over the noise-figure grid with common random numbers:
//! every receiver sees the same channels, payloads, and noise draws at each
//! point, so curve orderings are not artifacts of sampling luck.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{apply_comm_channel, sample_scenario};
use crate::comm::{detect_frame, hadamard_decode_frame, BerCount};
use crate::config::ScenarioConfig;
use crate::seeds::{self, stream};
use crate::t3former::{
    self, forward, load_model, predict_bits, ModelConfig, ModelMeta, T3formerParams,
};
use crate::waveform::{build_frame, gen_hadamard, gen_mseq, TxFrame};

use super::HarnessError;

/// The four receivers under comparison. Classic receivers run the pilot
/// protocol; neural receivers run pilot-free frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    ZfFar,
    SicNear,
    T3Far,
    T3Near,
}

pub const ALL_RECEIVERS: [Receiver; 4] =
    [Receiver::ZfFar, Receiver::SicNear, Receiver::T3Far, Receiver::T3Near];

impl Receiver {
    pub fn id(self) -> &'static str {
        match self {
            Receiver::ZfFar => "zf-far",
            Receiver::SicNear => "sic-near",
            Receiver::T3Far => "t3former-far",
            Receiver::T3Near => "t3former-near",
        }
    }

    pub fn user(self) -> usize {
        match self {
            Receiver::ZfFar | Receiver::T3Far => 0,
            Receiver::SicNear | Receiver::T3Near => 1,
        }
    }

    pub fn pilot_free(self) -> bool {
        matches!(self, Receiver::T3Far | Receiver::T3Near)
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        ALL_RECEIVERS
            .into_iter()
            .find(|r| r.id() == s)
            .ok_or_else(|| {
                HarnessError::Domain(format!(
                    "unknown receiver '{s}'; expected one of zf-far, sic-near, \
                     t3former-far, t3former-near"
                ))
            })
    }
}

pub struct LoadedModel {
    pub params: T3formerParams,
    pub meta: ModelMeta,
}

/// Neural checkpoints for the two users; `None` marks a missing or unusable
/// checkpoint, which downgrades the matching receivers to a skip + warning.
#[derive(Default)]
pub struct NeuralModels {
    pub far: Option<LoadedModel>,
    pub near: Option<LoadedModel>,
}

impl NeuralModels {
    pub fn for_user(&self, user: usize) -> Option<&LoadedModel> {
        if user == 0 { self.far.as_ref() } else { self.near.as_ref() }
    }
}

/// Loads `t3former_user{0,1}.pnck` from `dir`. Missing files or checkpoints
/// whose architecture disagrees with the config are warned about and left
/// out rather than failing the sweep.
pub fn load_models(dir: &Path, cfg: &ScenarioConfig) -> NeuralModels {
    let want = ModelConfig::from_scenario(cfg);
    let mut out = NeuralModels::default();
    for user in 0..2usize {
        let path = dir.join(format!("t3former_user{user}.pnck"));
        if !path.exists() {
            eprintln!("warning: no checkpoint at {}; skipping its receiver", path.display());
            continue;
        }
        match load_model(&path) {
            Ok((params, meta)) if meta.model == want => {
                let m = LoadedModel { params, meta };
                if user == 0 { out.far = Some(m) } else { out.near = Some(m) };
            }
            Ok((_, meta)) => eprintln!(
                "warning: {} was trained for a different architecture ({:?}); skipping",
                path.display(),
                meta.model
            ),
            Err(e) => eprintln!("warning: cannot load {}: {e}; skipping", path.display()),
        }
    }
    out
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepPoint {
    pub nf_db: f64,
    pub receiver: String,
    pub user: usize,
    pub ber: f64,
    pub ber_ci: f64,
    pub goodput_bps: f64,
    pub bits: u64,
    pub errors: u64,
}

/// Half-width of the 95% Wilson score interval for `errors` in `n` trials.
pub fn wilson_radius(errors: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let z = 1.959_963_984_540_054f64;
    let (nf, p) = (n as f64, errors as f64 / n as f64);
    let z2 = z * z;
    z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf)
}

/// Peak rate in bits/s: data blocks per frame times per-block payload over
/// the frame duration. Pilot mode spends M/M_p blocks on pilots; pilot-free
/// spends none.
pub fn r_max_bps(cfg: &ScenarioConfig, pilot_free: bool) -> f64 {
    let s = &cfg.system;
    let pilots = if pilot_free { 0 } else { s.blocks / s.pilot_period };
    let factor = if cfg.eval.goodput_counts_modulation_order {
        s.modulation_order
    } else {
        cfg.bits_per_symbol()
    };
    let t_block = cfg.samples_per_block() as f64 / s.bandwidth_hz;
    ((s.blocks - pilots) * s.n_tx * factor) as f64 / (s.blocks as f64 * t_block)
}

pub fn goodput_bps(ber: f64, cfg: &ScenarioConfig, pilot_free: bool) -> Result<f64, HarnessError> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(HarnessError::Domain(format!("ber {ber} outside [0, 1]")));
    }
    Ok(r_max_bps(cfg, pilot_free) * (1.0 - ber))
}

/// One frame's worth of shared evaluation material. Bits are drawn in a
/// fixed order regardless of which receivers run, so any subset of receivers
/// sees identical realizations.
struct EvalFrame {
    classic: TxFrame,
    pilot_free: TxFrame,
    realization: crate::channel::ChannelRealization,
    seed: u64,
}

fn eval_frame(cfg: &ScenarioConfig, seed: u64) -> Result<EvalFrame, HarnessError> {
    let mut bit_rng = seeds::rng(seeds::derive(seed, stream::BITS));
    let mut draw = |n: usize| -> Vec<u8> {
        (0..n).map(|_| bit_rng.random_range(0..2u8)).collect()
    };
    let n_classic = cfg.frame_bits(false);
    let n_pf = cfg.frame_bits(true);
    let classic = build_frame(cfg, &draw(n_classic), &draw(n_classic), false)?;
    let pilot_free = build_frame(cfg, &draw(n_pf), &draw(n_pf), true)?;
    Ok(EvalFrame { classic, pilot_free, realization: sample_scenario(cfg, seed), seed })
}

fn classic_errors(
    f: &EvalFrame,
    cfg: &ScenarioConfig,
    user: usize,
    sigma: f64,
) -> Result<BerCount, HarnessError> {
    let y = apply_comm_channel(&f.classic, &f.realization, user, sigma, f.seed)?;
    let det = detect_frame(&y, cfg, &f.classic.pilot_mask, user)?;
    Ok(crate::comm::ber_count(&det.bits, &f.classic.data_bits[user])?)
}

fn neural_errors(
    f: &EvalFrame,
    user: usize,
    sigma: f64,
    model: &LoadedModel,
    code: &crate::waveform::PrbsCode,
    w: &crate::waveform::HadamardMatrix,
) -> Result<BerCount, HarnessError> {
    let y: Array2<Complex64> =
        apply_comm_channel(&f.pilot_free, &f.realization, user, sigma, f.seed)?;
    let cube = hadamard_decode_frame(&y, w, user)?;
    let pre = t3former::preprocess(&cube, code, model.meta.input_scale, &model.params.config)?;
    let mut g = crate::nn::Graph::new();
    let ids = model.params.register(&mut g);
    let tr = forward(&mut g, &ids, &model.params.config, &pre);
    let bits = predict_bits(g.value(tr.logits));
    Ok(crate::comm::ber_count(&bits, &f.pilot_free.data_bits[user])?)
}

/// Runs `frames` frames per noise-figure point for every requested receiver.
/// Receivers whose checkpoint is unavailable are skipped (with a warning
/// already printed at load time). Results come back grouped by (nf, receiver)
/// in the given order.
pub fn eval_ber_sweep(
    cfg: &ScenarioConfig,
    receivers: &[Receiver],
    nf_list: &[f64],
    frames: usize,
    seed: u64,
    models: &NeuralModels,
) -> Result<Vec<SweepPoint>, HarnessError> {
    let active: Vec<Receiver> = receivers
        .iter()
        .copied()
        .filter(|r| !r.pilot_free() || models.for_user(r.user()).is_some())
        .collect();
    if active.is_empty() {
        return Ok(Vec::new());
    }
    let code = gen_mseq(cfg.system.code_length)?;
    let w = gen_hadamard(cfg.system.n_tx)?;

    let mut out = Vec::new();
    for &nf in nf_list {
        let sigma = cfg.comm_noise_var(nf).sqrt();
        let mut counts = vec![BerCount { errors: 0, total: 0 }; active.len()];
        for i in 0..frames {
            let f = eval_frame(cfg, seeds::derive2(seed, stream::EVAL, i as u64))?;
            for (r, acc) in active.iter().zip(counts.iter_mut()) {
                let c = match r {
                    Receiver::ZfFar | Receiver::SicNear => {
                        classic_errors(&f, cfg, r.user(), sigma)?
                    }
                    Receiver::T3Far | Receiver::T3Near => {
                        let model = models.for_user(r.user()).expect("filtered above");
                        neural_errors(&f, r.user(), sigma, model, &code, &w)?
                    }
                };
                acc.merge(c);
            }
        }
        for (r, c) in active.iter().zip(&counts) {
            let ber = c.ratio();
            out.push(SweepPoint {
                nf_db: nf,
                receiver: r.id().to_string(),
                user: r.user(),
                ber,
                ber_ci: wilson_radius(c.errors, c.total),
                goodput_bps: goodput_bps(ber, cfg, r.pilot_free())?,
                bits: c.total,
                errors: c.errors,
            });
        }
    }
    Ok(out)
}

/// CSV with one row per (noise figure, receiver); every row carries the
/// config digest and seed so files are traceable to their run.
pub fn write_sweep_csv(
    path: &Path,
    rows: &[SweepPoint],
    config_digest: &str,
    seed: u64,
) -> Result<(), HarnessError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "nf_db,receiver,user,ber,ber_ci,goodput_bps,bits,config_digest,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.nf_db, r.receiver, r.user, r.ber, r.ber_ci, r.goodput_bps, r.bits,
            config_digest, seed
        )?;
    }
    w.flush()?;
    Ok(())
}
