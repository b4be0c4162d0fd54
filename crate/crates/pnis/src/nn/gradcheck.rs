//! Central-difference verification of reverse-mode gradients.

use rand::Rng;

use super::tensor::Tensor;
use super::NnError;

/// Default finite-difference perturbation.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Minimum coordinates sampled per tensor (fewer only if the tensor is smaller).
pub const MIN_COORDS: usize = 64;

#[derive(Debug, Clone)]
pub struct CoordReport {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst: CoordReport,
    /// Per-tensor maxima, index-aligned with the input parameter list.
    pub per_tensor_max: Vec<f64>,
    /// Every sampled coordinate, for callers that need a finer accept rule
    /// than one scalar (e.g. flat directions where both gradients sit under
    /// the finite-difference noise floor).
    pub coords: Vec<CoordReport>,
}

impl GradCheckReport {
    /// Coordinates violating |g_a − g_n| ≤ atol + rtol·max(|g_a|, |g_n|).
    pub fn violations(&self, atol: f64, rtol: f64) -> Vec<&CoordReport> {
        self.coords
            .iter()
            .filter(|c| {
                (c.analytic - c.numeric).abs()
                    > atol + rtol * c.analytic.abs().max(c.numeric.abs())
            })
            .collect()
    }

    /// Max relative error over coordinates where either gradient clears
    /// `floor`; below that, central differences only measure rounding noise.
    pub fn max_rel_err_above(&self, floor: f64) -> f64 {
        self.coords
            .iter()
            .filter(|c| c.analytic.abs().max(c.numeric.abs()) >= floor)
            .fold(0.0, |a, c| a.max(c.rel_err))
    }
}

/// Compares `analytic` (one gradient tensor per parameter) against central
/// differences of `loss_fn` at `params`. `loss_fn` must be a pure function of
/// the parameter values; it is evaluated twice at the base point and any
/// discrepancy is reported as nondeterminism.
///
/// Relative error per coordinate: |g_a − g_n| / max(|g_a|, |g_n|, 1e-8).
pub fn grad_check(
    mut loss_fn: impl FnMut(&[Tensor]) -> f64,
    params: &[Tensor],
    analytic: &[Tensor],
    step: f64,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    assert_eq!(params.len(), analytic.len(), "grad_check: params vs grads length");
    let base = loss_fn(params);
    let again = loss_fn(params);
    if base.to_bits() != again.to_bits() {
        return Err(NnError::Nondeterministic { first: base, second: again });
    }
    if !base.is_finite() {
        return Err(NnError::NonFinite(format!("loss at base point: {}", base)));
    }

    let mut rng = crate::seeds::rng(crate::seeds::derive(seed, crate::seeds::stream::GRADCHECK));
    let mut work: Vec<Tensor> = params.to_vec();
    let mut coords_checked = 0;
    let mut per_tensor_max = vec![0.0f64; params.len()];
    let mut coords = Vec::new();
    let mut worst: Option<CoordReport> = None;

    for (ti, p) in params.iter().enumerate() {
        assert_eq!(
            p.shape(),
            analytic[ti].shape(),
            "grad_check: tensor {} shape {:?} vs grad {:?}",
            ti,
            p.shape(),
            analytic[ti].shape()
        );
        let n = p.numel();
        let picks = sample_indices(n, MIN_COORDS, &mut rng);
        for idx in picks {
            let orig = work[ti].data()[idx];
            work[ti].data_mut()[idx] = orig + step;
            let up = loss_fn(&work);
            work[ti].data_mut()[idx] = orig - step;
            let down = loss_fn(&work);
            work[ti].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * step);
            let ga = analytic[ti].data()[idx];
            let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
            coords_checked += 1;
            per_tensor_max[ti] = per_tensor_max[ti].max(rel);
            let candidate = CoordReport { tensor: ti, index: idx, analytic: ga, numeric, rel_err: rel };
            match &worst {
                Some(w) if w.rel_err >= rel => {}
                _ => worst = Some(candidate.clone()),
            }
            coords.push(candidate);
        }
    }

    let worst = worst.expect("grad_check needs at least one parameter coordinate");
    Ok(GradCheckReport {
        coords_checked,
        max_rel_err: worst.rel_err,
        worst,
        per_tensor_max,
        coords,
    })
}

/// All indices if the tensor is small, otherwise `want` distinct draws.
fn sample_indices(n: usize, want: usize, rng: &mut impl Rng) -> Vec<usize> {
    if n <= want {
        return (0..n).collect();
    }
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < want {
        seen.insert(rng.random_range(0..n));
    }
    seen.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;

    /// f(w) = Σ wᵢ²: analytic gradient 2w, exact for central differences.
    #[test]
    fn quadratic_is_exact() {
        let w = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let grads = Tensor::from_vec(&[3], w.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let report = grad_check(
            |p| p[0].data().iter().map(|v| v * v).sum(),
            &[w],
            &[grads],
            DEFAULT_STEP,
            1,
        )
        .unwrap();
        assert_eq!(report.coords_checked, 3);
        assert!(report.max_rel_err < 1e-8, "max err {}", report.max_rel_err);
    }

    #[test]
    fn detects_nondeterminism() {
        let mut calls = 0u64;
        let w = Tensor::scalar(1.0);
        let g = Tensor::scalar(2.0);
        let err = grad_check(
            |_| {
                calls += 1;
                calls as f64
            },
            &[w],
            &[g],
            DEFAULT_STEP,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, NnError::Nondeterministic { .. }));
    }

    #[test]
    fn one_encoder_layer_passes_fd() {
        use crate::nn::layers::{encoder_layer, EncoderLayerParams};
        let mut rng = crate::seeds::rng(21);
        let p = EncoderLayerParams::init(6, 2, 3, &mut rng);
        let mut params = Vec::new();
        p.tensors(&mut params);
        let params: Vec<Tensor> = params.into_iter().cloned().collect();
        use rand::Rng;
        let xdata: Vec<f64> = (0..4 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bits: Vec<f64> = (0..24).map(|_| f64::from(rng.random_range(0..2u8))).collect();

        // Rebuild the whole graph from raw parameter values each call.
        let eval = |vals: &[Tensor]| -> f64 {
            let mut rebuilt = EncoderLayerParams::init(6, 2, 3, &mut crate::seeds::rng(21));
            let mut slots = Vec::new();
            rebuilt.tensors_mut(&mut slots);
            for (slot, v) in slots.into_iter().zip(vals) {
                *slot = v.clone();
            }
            let mut g = Graph::new();
            let ids = rebuilt.register(&mut g);
            let x = g.leaf(Tensor::from_vec(&[4, 6], xdata.clone()).unwrap());
            let y = encoder_layer(&mut g, x, &ids);
            let flat = g.reshape(y, &[24]);
            let t = g.leaf(Tensor::from_vec(&[24], bits.clone()).unwrap());
            let loss = g.bce_with_logits(flat, t);
            g.value(loss).item()
        };

        // Analytic grads once.
        let mut rebuilt = EncoderLayerParams::init(6, 2, 3, &mut crate::seeds::rng(21));
        let mut slots = Vec::new();
        rebuilt.tensors_mut(&mut slots);
        for (slot, v) in slots.into_iter().zip(&params) {
            *slot = v.clone();
        }
        let mut g = Graph::new();
        let ids = rebuilt.register(&mut g);
        let x = g.leaf(Tensor::from_vec(&[4, 6], xdata.clone()).unwrap());
        let y = encoder_layer(&mut g, x, &ids);
        let flat = g.reshape(y, &[24]);
        let tt = g.leaf(Tensor::from_vec(&[24], bits.clone()).unwrap());
        let loss = g.bce_with_logits(flat, tt);
        g.backward(loss);
        let mut idlist = Vec::new();
        ids.ids(&mut idlist);
        let analytic: Vec<Tensor> =
            idlist.iter().map(|&i| g.grad(i).cloned().unwrap_or_else(|| Tensor::zeros(g.value(i).shape()))).collect();

        let report = grad_check(eval, &params, &analytic, DEFAULT_STEP, 2).unwrap();
        assert!(report.max_rel_err < 1e-4, "max err {:e}", report.max_rel_err);
        assert!(report.coords_checked >= params.len().min(64));
    }
}
