//! Mini-batch training of the neural receiver on a generated dataset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::nn::optim::{adam_step, AdamHyper, AdamState};
use crate::nn::{Graph, Tensor};
use crate::seeds::{self, stream};
use crate::t3former::{
    self, forward, loss, predict_bits, save_model, ModelConfig, T3formerParams,
};
use crate::waveform::gen_mseq;

use super::dataset::{dataset_rms, record_cube, DatasetReader, DatasetRecord};
use super::HarnessError;

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub ber: f64,
    /// Loss/BER over the held-back validation slice; `None` when the
    /// dataset is too small to spare one.
    pub val_loss: Option<f64>,
    pub val_ber: Option<f64>,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub final_loss: f64,
    pub final_ber: f64,
    /// Batch loss of the very first step, before any update.
    pub first_batch_loss: f64,
    /// Hard-decision BER of that same untouched batch.
    pub first_batch_ber: f64,
    pub input_scale: f64,
    pub best_path: PathBuf,
    pub final_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Trains on `dataset_path` per the config's training section and writes
/// best/final checkpoints plus a per-epoch metrics CSV into `out_dir`.
/// The dataset must carry this config's digest.
pub fn train(
    cfg: &ScenarioConfig,
    dataset_path: &Path,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainOutcome, HarnessError> {
    let reader = DatasetReader::open(dataset_path)?;
    reader.check_config(cfg)?;
    let (header, records) = reader.load_all()?;
    if records.is_empty() {
        return Err(HarnessError::Domain("dataset has no records".into()));
    }
    let user = header.user;
    let scale = dataset_rms(&records);
    if !(scale.is_finite() && scale > 0.0) {
        return Err(HarnessError::Domain(format!("degenerate input scale {scale}")));
    }

    let mc = ModelConfig::from_scenario(cfg);
    let mut params = T3formerParams::init(
        mc.clone(),
        &mut seeds::rng(seeds::derive(seed, stream::PARAM_INIT)),
    )?;
    let code = gen_mseq(cfg.system.code_length)?;

    // Preprocess once; records are reread by index during shuffling.
    let mut inputs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for rec in &records {
        let cube = record_cube(rec, user);
        inputs.push(t3former::preprocess(&cube, &code, scale, &mc)?);
        labels.push(bits_tensor(rec, &mc)?);
    }

    // A tail slice never sees gradients; it scores epochs so the "best"
    // checkpoint means best generalization, not deepest memorization.
    // Small datasets (overfit probes) train whole and select by train loss.
    let val_count = if records.len() >= 200 { records.len() / 20 } else { 0 };
    let train_count = records.len() - val_count;

    let t = &cfg.training;
    let steps_per_epoch = train_count.div_ceil(t.batch_size);
    let total_steps = (t.epochs * steps_per_epoch) as u64;
    let mut adam = AdamState::new(&params.tensors(), t.base_lr, total_steps);
    let hyper = AdamHyper::default();

    std::fs::create_dir_all(out_dir)?;
    let metrics_path = out_dir.join(format!("train_user{user}.csv"));
    let best_path = out_dir.join(format!("t3former_user{user}.pnck"));
    let final_path = out_dir.join(format!("t3former_user{user}_final.pnck"));
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    let digest = cfg.digest();
    writeln!(metrics, "epoch,loss,ber,val_loss,val_ber,lr,config_digest,seed")?;

    let mut stats = Vec::with_capacity(t.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    let mut first_batch_loss = f64::NAN;
    let mut first_batch_ber = f64::NAN;
    let save = |params: &T3formerParams, path: &Path, extra: serde_json::Value| {
        save_model(path, params, scale, extra)
    };
    let meta = |label: &str, epoch: usize, loss_v: f64| {
        serde_json::json!({
            "kind": label,
            "seed": seed,
            "epoch": epoch,
            "loss": loss_v,
            "epochs_configured": t.epochs,
            "dataset_seed": header.seed,
            "dataset_count": header.count,
            "config_digest": cfg.digest(),
        })
    };

    for epoch in 0..t.epochs {
        let mut order: Vec<usize> = (0..train_count).collect();
        shuffle(&mut order, seeds::derive2(seed, stream::SHUFFLE, epoch as u64));

        let mut epoch_loss = 0.0;
        let mut epoch_bits = 0u64;
        let mut epoch_errs = 0u64;
        let epoch_lr = adam.current_lr();
        for batch in order.chunks(t.batch_size) {
            let (batch_loss, grads, errs, bits) =
                batch_pass(&params, &mc, batch, &inputs, &labels, &records)?;
            if !batch_loss.is_finite() {
                // Keep the best checkpoint reachable before bailing out.
                if let Some((be, bl, snap)) = &best {
                    save(&clone_with(&params, snap), &best_path, meta("best", *be, *bl))?;
                }
                return Err(HarnessError::Diverged(format!(
                    "non-finite batch loss {batch_loss} at epoch {epoch}, \
                     step {}, lr {:.3e}, grad norm {:.3e}",
                    adam.step_count(),
                    adam.current_lr(),
                    grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt(),
                )));
            }
            if first_batch_loss.is_nan() {
                first_batch_loss = batch_loss;
                first_batch_ber = errs as f64 / bits as f64;
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            adam_step(&mut params.tensors_mut(), &grad_refs, &mut adam, &hyper);
            epoch_loss += batch_loss * batch.len() as f64;
            epoch_errs += errs;
            epoch_bits += bits;
        }

        let mean_loss = epoch_loss / train_count as f64;
        let ber = epoch_errs as f64 / epoch_bits as f64;
        let (val_loss, val_ber) = if val_count > 0 {
            let (vl, verrs, vbits) =
                eval_pass(&params, &mc, train_count..records.len(), &inputs, &labels)?;
            (Some(vl / val_count as f64), Some(verrs as f64 / vbits as f64))
        } else {
            (None, None)
        };
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        writeln!(
            metrics,
            "{},{},{},{},{},{},{},{}",
            epoch, mean_loss, ber, opt(val_loss), opt(val_ber), epoch_lr, digest, seed
        )?;
        stats.push(EpochStats { epoch, loss: mean_loss, ber, val_loss, val_ber, lr: epoch_lr });
        let selector = val_loss.unwrap_or(mean_loss);
        if best.as_ref().is_none_or(|(_, b, _)| selector < *b) {
            best = Some((
                epoch,
                selector,
                params.tensors().into_iter().cloned().collect(),
            ));
        }
    }
    metrics.flush()?;

    let (best_epoch, best_loss, best_snap) = best.expect("at least one epoch");
    let best_params = clone_with(&params, &best_snap);
    save(&best_params, &best_path, meta("best", best_epoch, best_loss))?;
    let last = stats.last().expect("at least one epoch").clone();
    save(&params, &final_path, meta("final", last.epoch, last.loss))?;

    Ok(TrainOutcome {
        epochs: stats,
        best_epoch,
        best_loss,
        final_loss: last.loss,
        final_ber: last.ber,
        first_batch_loss,
        first_batch_ber,
        input_scale: scale,
        best_path,
        final_path,
        metrics_path,
    })
}

/// Forward/backward over one batch. Returns the mean loss, summed-then-
/// averaged gradients in trainable order, and hard-decision error counts.
fn batch_pass(
    params: &T3formerParams,
    mc: &ModelConfig,
    batch: &[usize],
    inputs: &[t3former::Preprocessed],
    labels: &[Tensor],
    records: &[DatasetRecord],
) -> Result<(f64, Vec<Tensor>, u64, u64), HarnessError> {
    let mut grads: Vec<Tensor> =
        params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut loss_sum = 0.0;
    let mut errs = 0u64;
    let mut bits_n = 0u64;
    for &idx in batch {
        let mut g = Graph::new();
        let ids = params.register(&mut g);
        let tr = forward(&mut g, &ids, mc, &inputs[idx]);
        let l = loss(&mut g, tr.logits, &labels[idx]);
        g.backward(l);
        loss_sum += g.value(l).item();
        for (acc, id) in grads.iter_mut().zip(ids.trainable()) {
            let gt = g.grad(id).expect("trainable gradient");
            for (a, &v) in acc.data_mut().iter_mut().zip(gt.data()) {
                *a += v;
            }
        }
        let pred = predict_bits(g.value(tr.logits));
        for (p, &t) in pred.iter().zip(&records[idx].bits) {
            errs += u64::from(*p != t);
        }
        bits_n += pred.len() as u64;
    }
    let inv = 1.0 / batch.len() as f64;
    for acc in &mut grads {
        for v in acc.data_mut() {
            *v *= inv;
        }
    }
    Ok((loss_sum * inv, grads, errs, bits_n))
}

/// Forward-only scoring over the index range; summed loss plus error counts.
fn eval_pass(
    params: &T3formerParams,
    mc: &ModelConfig,
    idxs: std::ops::Range<usize>,
    inputs: &[t3former::Preprocessed],
    labels: &[Tensor],
) -> Result<(f64, u64, u64), HarnessError> {
    let mut loss_sum = 0.0;
    let mut errs = 0u64;
    let mut bits_n = 0u64;
    for idx in idxs {
        let mut g = Graph::new();
        let ids = params.register(&mut g);
        let tr = forward(&mut g, &ids, mc, &inputs[idx]);
        let l = loss(&mut g, tr.logits, &labels[idx]);
        loss_sum += g.value(l).item();
        let pred = predict_bits(g.value(tr.logits));
        for (p, &t) in pred.iter().zip(labels[idx].data()) {
            errs += u64::from(f64::from(*p) != t);
        }
        bits_n += pred.len() as u64;
    }
    Ok((loss_sum, errs, bits_n))
}

pub(crate) fn bits_tensor(
    rec: &DatasetRecord,
    mc: &ModelConfig,
) -> Result<Tensor, HarnessError> {
    let want = mc.blocks * mc.n_tx * mc.bits_per_symbol;
    if rec.bits.len() != want {
        return Err(HarnessError::Format(format!(
            "record carries {} bits, model expects {want}",
            rec.bits.len()
        )));
    }
    Ok(Tensor::from_vec(
        &[mc.blocks, mc.n_tx, mc.bits_per_symbol],
        rec.bits.iter().map(|&b| b as f64).collect(),
    )
    .expect("bit tensor"))
}

/// Fisher-Yates with the crate RNG; avoids coupling epoch order to any
/// library's shuffle implementation details.
fn shuffle(order: &mut [usize], seed: u64) {
    use rand::Rng;
    let mut rng = seeds::rng(seed);
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// params' config with the given tensor values.
fn clone_with(params: &T3formerParams, values: &[Tensor]) -> T3formerParams {
    let mut out = T3formerParams::init(
        params.config.clone(),
        &mut seeds::rng(0),
    )
    .expect("config already validated");
    for (slot, v) in out.tensors_mut().into_iter().zip(values) {
        *slot = v.clone();
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::{polar_position, ScenarioConfig, TargetSpec};
    use crate::harness::dataset::{generate_dataset, ChannelDraw};

    /// Small waveform + small model so a training run takes a second.
    pub(crate) fn micro_cfg() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk();
        c.system.code_length = 7;
        c.system.n_tx = 2;
        c.system.n_rx = 2;
        c.system.blocks = 4;
        c.system.pilot_period = 4;
        c.model.embed_dim = 16;
        c.model.key_dim = 8;
        c.model.stage1_layers = 1;
        c.model.stage2_layers = 1;
        c.training.dataset_size = 8;
        c.training.batch_size = 4;
        c.training.epochs = 3;
        c.training.noise_figure_range_db = [0.0, 5.0];
        // 7 delay taps only resolve ~7 m at 150 MHz.
        c.geometry.sensing_range_m = [0.0, 6.0];
        c.geometry.targets = vec![
            TargetSpec {
                position_m: polar_position(2.0, -20.0),
                velocity_mps: [0.0, 0.0, 0.0],
                gain_db: 0.0,
            },
            TargetSpec {
                position_m: polar_position(5.0, 25.0),
                velocity_mps: [0.0, 0.0, 0.0],
                gain_db: 0.0,
            },
        ];
        c.validate().unwrap();
        c
    }

    fn micro_dataset(cfg: &ScenarioConfig, dir: &Path, user: usize, seed: u64) -> PathBuf {
        let path = dir.join(format!("u{user}.pnis"));
        generate_dataset(cfg, user, cfg.training.dataset_size, seed, ChannelDraw::Shared, &path)
            .unwrap();
        path
    }

    #[test]
    fn untrained_model_starts_at_chance() {
        // Before the first update the model carries no information about the
        // payload: hard decisions sit at BER 1/2 and the BCE cannot drop
        // meaningfully below ln 2. (It sits above ln 2 by ~E[logit^2]/8
        // because the freshly initialised head emits nonzero logits; the
        // exact-ln2 case for a zeroed head is pinned elsewhere.)
        let mut cfg = micro_cfg();
        cfg.training.dataset_size = 32;
        cfg.training.batch_size = 16;
        cfg.training.epochs = 1;
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("u0.pnis");
        generate_dataset(&cfg, 0, 32, 21, ChannelDraw::PerRecord, &ds).unwrap();
        let out = train(&cfg, &ds, 21, dir.path()).unwrap();
        // 256 bits in the first batch: 4 sigma of a fair coin is 0.125.
        assert!(
            (out.first_batch_ber - 0.5).abs() < 0.125,
            "first batch ber {}",
            out.first_batch_ber
        );
        assert!(
            out.first_batch_loss > std::f64::consts::LN_2 - 0.05
                && out.first_batch_loss < 1.2,
            "first batch loss {}",
            out.first_batch_loss
        );
    }

    #[test]
    fn loss_drops_and_artifacts_exist() {
        let mut cfg = micro_cfg();
        cfg.training.epochs = 30;
        cfg.training.base_lr = 3e-3;
        let dir = tempfile::tempdir().unwrap();
        let ds = micro_dataset(&cfg, dir.path(), 0, 22);
        let out = train(&cfg, &ds, 22, dir.path()).unwrap();
        assert_eq!(out.epochs.len(), 30);
        assert!(
            out.final_loss < 0.5 * out.epochs[0].loss,
            "loss {} -> {}",
            out.epochs[0].loss,
            out.final_loss
        );
        assert!(out.best_loss <= out.final_loss + 1e-12);
        assert!(out.best_path.exists() && out.final_path.exists());

        let text = std::fs::read_to_string(&out.metrics_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epoch,loss,ber,val_loss,val_ber,lr,config_digest,seed"));
        assert_eq!(lines.clone().count(), 30);
        let digest = cfg.digest();
        assert!(lines.all(|l| l.contains(&digest) && l.ends_with(",22")));

        // Checkpoints reload with the stored scale and config.
        let (loaded, meta) = t3former::load_model(&out.best_path).unwrap();
        assert_eq!(meta.model, ModelConfig::from_scenario(&cfg));
        assert!((meta.input_scale - out.input_scale).abs() < 1e-15);
        assert_eq!(meta.training["kind"], "best");
        assert_eq!(loaded.config, ModelConfig::from_scenario(&cfg));
    }

    #[test]
    fn same_seed_reproduces_checkpoints_byte_for_byte() {
        let cfg = micro_cfg();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let ds_a = micro_dataset(&cfg, dir_a.path(), 1, 33);
        let ds_b = micro_dataset(&cfg, dir_b.path(), 1, 33);
        let out_a = train(&cfg, &ds_a, 33, dir_a.path()).unwrap();
        let out_b = train(&cfg, &ds_b, 33, dir_b.path()).unwrap();
        assert_eq!(
            std::fs::read(&out_a.best_path).unwrap(),
            std::fs::read(&out_b.best_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&out_a.final_path).unwrap(),
            std::fs::read(&out_b.final_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&out_a.metrics_path).unwrap(),
            std::fs::read(&out_b.metrics_path).unwrap()
        );
        // A different training seed changes the outcome.
        let out_c = train(&cfg, &ds_a, 34, dir_a.path()).unwrap();
        assert_ne!(
            std::fs::read(&out_c.final_path).unwrap(),
            std::fs::read(&out_b.final_path).unwrap()
        );
    }

    #[test]
    fn digest_mismatch_is_refused() {
        let cfg = micro_cfg();
        let dir = tempfile::tempdir().unwrap();
        let ds = micro_dataset(&cfg, dir.path(), 0, 44);
        let mut other = cfg.clone();
        other.training.base_lr *= 2.0;
        assert!(matches!(
            train(&other, &ds, 44, dir.path()),
            Err(HarnessError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let mut a: Vec<usize> = (0..50).collect();
        let mut b: Vec<usize> = (0..50).collect();
        shuffle(&mut a, 5);
        shuffle(&mut b, 5);
        assert_eq!(a, b);
        let mut c: Vec<usize> = (0..50).collect();
        shuffle(&mut c, 6);
        assert_ne!(a, c);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
