//! Fast invariant suite behind the `selftest` subcommand: code properties,
//! the noiseless receive loop, the goodput ceiling, and byte-identical
//! dataset regeneration, all on the caller's config.

use std::path::Path;

use rand::Rng;

use crate::channel::{apply_comm_channel, sample_scenario};
use crate::comm::detect_frame;
use crate::config::ScenarioConfig;
use crate::seeds::{self, stream};
use crate::waveform::{
    build_frame, gen_hadamard, gen_mseq, noma_superpose, outer_code, qpsk_demod,
    qpsk_mod,
};

use super::dataset::{generate_dataset, ChannelDraw};
use super::eval::r_max_bps;
use super::HarnessError;

#[derive(Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn check(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match body() {
        Ok(detail) => CheckResult { name, ok: true, detail },
        Err(detail) => CheckResult { name, ok: false, detail },
    }
}

/// Runs the suite; scratch files land under `scratch_dir` and are removed.
/// The caller decides what a failed check means for the exit status.
pub fn run_selftest(
    cfg: &ScenarioConfig,
    seed: u64,
    scratch_dir: &Path,
) -> Result<Vec<CheckResult>, HarnessError> {
    let mut out = Vec::new();
    let l = cfg.system.code_length;
    let n_t = cfg.system.n_tx;

    out.push(check("code-autocorrelation", || {
        let code = gen_mseq(l).map_err(|e| e.to_string())?;
        if code.periodic_autocorrelation(0) != l as i64 {
            return Err(format!("R(0) = {}", code.periodic_autocorrelation(0)));
        }
        for tau in 1..l {
            if code.periodic_autocorrelation(tau) != -1 {
                return Err(format!(
                    "R({tau}) = {}",
                    code.periodic_autocorrelation(tau)
                ));
            }
        }
        Ok(format!("R(0)={l}, all {} sidelobes -1", l - 1))
    }));

    out.push(check("outer-code-orthogonality", || {
        let code = gen_mseq(l).map_err(|e| e.to_string())?;
        let w = gen_hadamard(n_t).map_err(|e| e.to_string())?;
        let p = outer_code(&code, &w);
        let want = (l * n_t) as f64;
        let mut worst = 0.0f64;
        for j in 0..n_t {
            for k in 0..n_t {
                let dot: f64 = (0..p.rows()).map(|t| p.entry(t, j) * p.entry(t, k)).sum();
                let target = if j == k { want } else { 0.0 };
                worst = worst.max((dot - target).abs() / want);
            }
        }
        if worst > 1e-10 {
            return Err(format!("Pᵀ P off by rel {worst:.3e}"));
        }
        Ok(format!("Pᵀ P = {want}·I, worst rel {worst:.1e}"))
    }));

    out.push(check("qpsk-roundtrip", || {
        let bits = [0u8, 0, 0, 1, 1, 0, 1, 1];
        let sym = qpsk_mod(&bits).map_err(|e| e.to_string())?;
        for s in &sym {
            if (s.norm() - 1.0).abs() > 1e-12 {
                return Err(format!("|s| = {}", s.norm()));
            }
        }
        if qpsk_demod(&sym) != bits {
            return Err("demod != mod input".into());
        }
        Ok("4 symbols, unit modulus, exact roundtrip".into())
    }));

    out.push(check("superposition-magnitudes", || {
        let [p1, p2] = cfg.system.power_split;
        let cross = 2.0 * (p1 * p2).sqrt();
        let mut min_mag = f64::INFINITY;
        for a in 0..4u8 {
            for b in 0..4u8 {
                let s1 = qpsk_mod(&[a >> 1, a & 1]).map_err(|e| e.to_string())?;
                let s2 = qpsk_mod(&[b >> 1, b & 1]).map_err(|e| e.to_string())?;
                let s = noma_superpose(&s1, &s2, p1, p2).map_err(|e| e.to_string())?;
                let m2 = s[0].norm_sqr();
                let fits = [1.0 - cross, 1.0, 1.0 + cross]
                    .iter()
                    .any(|lvl| (m2 - lvl).abs() < 1e-9);
                if !fits {
                    return Err(format!("|s|² = {m2} not on the 3-level set"));
                }
                min_mag = min_mag.min(m2.sqrt());
            }
        }
        Ok(format!("16 pairs on 3 levels, min |s| = {min_mag:.4}"))
    }));

    out.push(check("noiseless-loop", || {
        let n_bits = cfg.frame_bits(false);
        let mut errs = 0usize;
        let mut worst_ls = 0.0f64;
        for k in 0..3u64 {
            let fs = seeds::derive2(seed, stream::EVAL, k);
            let mut rng = seeds::rng(seeds::derive(fs, stream::BITS));
            let mut draw = |n: usize| -> Vec<u8> {
                (0..n).map(|_| rng.random_range(0..2u8)).collect()
            };
            let frame = build_frame(cfg, &draw(n_bits), &draw(n_bits), false)
                .map_err(|e| e.to_string())?;
            let real = sample_scenario(cfg, fs);
            for user in 0..2 {
                let y = apply_comm_channel(&frame, &real, user, 0.0, fs)
                    .map_err(|e| e.to_string())?;
                let det = detect_frame(&y, cfg, &frame.pilot_mask, user)
                    .map_err(|e| e.to_string())?;
                errs += det
                    .bits
                    .iter()
                    .zip(&frame.data_bits[user])
                    .filter(|(a, b)| a != b)
                    .count();
                let h = real.comm_channel_at(user, 0.0).map_err(|e| e.to_string())?;
                for j in 0..n_t {
                    let rel = (det.estimate.gains[j] - h[j]).norm()
                        / h[j].norm().max(1e-300);
                    worst_ls = worst_ls.max(rel);
                }
            }
        }
        if errs > 0 {
            return Err(format!("{errs} bit errors at σ = 0"));
        }
        if worst_ls > 1e-9 {
            return Err(format!("LS estimate rel err {worst_ls:.3e}"));
        }
        Ok(format!("0 errors over 3 frames, LS rel err ≤ {worst_ls:.1e}"))
    }));

    out.push(check("goodput-ceiling", || {
        let m = cfg.system.blocks as f64;
        let pilots = (cfg.system.blocks / cfg.system.pilot_period) as f64;
        let want = m / (m - pilots);
        let ratio = r_max_bps(cfg, true) / r_max_bps(cfg, false);
        if (ratio - want).abs() > 1e-12 {
            return Err(format!("ratio {ratio} vs {want}"));
        }
        Ok(format!("pilot-free/pilot rate ratio = {want}"))
    }));

    out.push(check("dataset-regeneration", || {
        let a = scratch_dir.join("selftest_a.pnis");
        let b = scratch_dir.join("selftest_b.pnis");
        let gen = |p: &Path| {
            generate_dataset(cfg, 0, 2, seed, ChannelDraw::PerRecord, p)
                .map_err(|e| e.to_string())
        };
        gen(&a)?;
        gen(&b)?;
        let same = std::fs::read(&a).map_err(|e| e.to_string())?
            == std::fs::read(&b).map_err(|e| e.to_string())?;
        let _ = std::fs::remove_file(&a);
        let _ = std::fs::remove_file(&b);
        if !same {
            return Err("regeneration differs".into());
        }
        Ok("2-record dataset regenerates byte-identically".into())
    }));

    Ok(out)
}
