//! Finite-difference validation of the model's analytic gradients on one
//! real decoded record.

use crate::config::ScenarioConfig;
use crate::nn::gradcheck::{grad_check, GradCheckReport};
use crate::nn::{Graph, Tensor};
use crate::seeds::{self, stream};
use crate::t3former::{self, forward, loss, ModelConfig, T3formerParams};
use crate::waveform::gen_mseq;

use super::dataset::{dataset_rms, make_record, record_cube};
use super::train::bits_tensor;
use super::HarnessError;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Absolute slack covering the finite-difference noise floor ulp(loss)/2h.
pub const FD_ATOL: f64 = 1e-10;
/// Relative agreement demanded wherever the gradient is resolvable.
pub const FD_RTOL: f64 = 1e-4;
/// Below this magnitude a coordinate sits inside finite-difference noise
/// and only the absolute rule applies.
pub const FD_FLOOR: f64 = 1e-9;
/// Bound on gradients the architecture forces to exact zero.
pub const FLAT_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct GradCheckRun {
    pub report: GradCheckReport,
    /// Trainable tensor names, index-aligned with the report.
    pub names: Vec<String>,
    /// (name, max |analytic|) for tensors whose gradients vanish by
    /// construction: the last stage-one FFN output bias and the FC1 bias
    /// only shift H_1 columns uniformly, and the stage-two entry norm's
    /// mean subtraction erases that direction.
    pub flat: Vec<(String, f64)>,
    /// Worst relative error over coordinates above the resolvability floor.
    pub resolvable_rel_err: f64,
    /// Coordinates violating the absolute-plus-relative accept rule.
    pub violations: usize,
    pub passed: bool,
}

/// Checks every trainable tensor of the config's model against central
/// differences on one record drawn from the config's own data distribution.
pub fn run_gradcheck(cfg: &ScenarioConfig, seed: u64) -> Result<GradCheckRun, HarnessError> {
    let mc = ModelConfig::from_scenario(cfg);
    let gc_seed = seeds::derive(seed, stream::GRADCHECK);
    let rec = make_record(cfg, 0, gc_seed, None)?;
    let scale = dataset_rms(std::slice::from_ref(&rec));
    let code = gen_mseq(cfg.system.code_length)?;
    let pre = t3former::preprocess(&record_cube(&rec, 0), &code, scale, &mc)?;
    let bits_t = bits_tensor(&rec, &mc)?;

    let params = T3formerParams::init(
        mc.clone(),
        &mut seeds::rng(seeds::derive(seed, stream::PARAM_INIT)),
    )?;
    let mut g = Graph::new();
    let ids = params.register(&mut g);
    let tr = forward(&mut g, &ids, &mc, &pre);
    let l = loss(&mut g, tr.logits, &bits_t);
    g.backward(l);
    let analytic: Vec<Tensor> = ids
        .trainable()
        .iter()
        .map(|&id| g.grad(id).expect("trainable gradient").clone())
        .collect();
    let names: Vec<String> =
        params.named_tensors().iter().map(|(n, _)| n.clone()).collect();

    let flat_names =
        [format!("s1.{}.b_ff2", mc.stage1_layers - 1), "fc1_b".to_string()];
    let flat: Vec<(String, f64)> = names
        .iter()
        .zip(&analytic)
        .filter(|(n, _)| flat_names.contains(n))
        .map(|(n, grad)| {
            let worst = grad.data().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            (n.clone(), worst)
        })
        .collect();

    let param_values: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let mc2 = mc.clone();
    let report = grad_check(
        move |vals: &[Tensor]| {
            let mut p = T3formerParams::init(mc2.clone(), &mut seeds::rng(0))
                .expect("config already validated");
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
        FD_STEP,
        gc_seed,
    )?;

    let violations = report.violations(FD_ATOL, FD_RTOL).len();
    let resolvable_rel_err = report.max_rel_err_above(FD_FLOOR);
    let passed = violations == 0
        && resolvable_rel_err < FD_RTOL
        && flat.iter().all(|(_, w)| *w < FLAT_TOL);
    Ok(GradCheckRun { report, names, flat, resolvable_rel_err, violations, passed })
}
