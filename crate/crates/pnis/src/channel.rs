//! Sensing and communication channels.
//!
//! Sensing: each target is a rank-1 round-trip response α·e^{j2πf_d t}·
//! a_r(θ_A)·a_t(θ_D)ᵀ on the delay tap round(2rB/c); clutter adds cluster
//! scatterers with aggregate 1/√(C_b·S_c) normalization. Communication: per
//! user a flat multipath vector Σ_p β_p·e^{j2πf_d t}·a_t(θ_p), held constant
//! within a block (block fading at t_m = m·T_block). Fast-time delays are
//! circular, matching continuous-wave repetition, and quantized to whole
//! inner chips (N_t samples).
//!
//! Doppler sign convention: positive radial speed means approaching, giving
//! positive Doppler 2·v/λ.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{planar_angle_rad, planar_range, ScenarioConfig};
use crate::seeds;
use crate::waveform::TxFrame;

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const T0_KELVIN: f64 = 290.0;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("user index {0} out of range (have {1})")]
    BadUser(usize, usize),
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelDims {
    pub n_tx: usize,
    pub n_rx: usize,
    pub wavelength_m: f64,
    pub bandwidth_hz: f64,
    pub t_block_s: f64,
    pub samples_per_block: usize,
    pub tap_count: usize,
}

#[derive(Debug, Clone)]
pub struct TargetParams {
    pub gain: Complex64,
    pub doppler_hz: f64,
    pub depart_rad: f64,
    pub arrive_rad: f64,
    pub range_m: f64,
    pub radial_mps: f64,
    pub tap: usize,
}

#[derive(Debug, Clone)]
pub struct ClutterScatterer {
    /// Effective gain including the 1/√(C_b·S_c) aggregate normalization.
    pub gain: Complex64,
    pub doppler_hz: f64,
    pub angle_rad: f64,
    pub tap: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ClutterParams {
    pub clusters: Vec<Vec<ClutterScatterer>>,
}

#[derive(Debug, Clone)]
pub struct UserPath {
    pub gain: Complex64,
    pub doppler_hz: f64,
    pub depart_rad: f64,
}

#[derive(Debug, Clone)]
pub struct UserPathParams {
    pub user: usize,
    pub position_m: [f64; 3],
    /// Sorted by descending |gain|.
    pub paths: Vec<UserPath>,
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub dims: ChannelDims,
    pub targets: Vec<TargetParams>,
    pub clutter: ClutterParams,
    pub users: Vec<UserPathParams>,
    pub seed: u64,
}

/// Half-wavelength ULA steering: element n = exp(−jπ·n·sin θ).
pub fn steering_vector(theta_rad: f64, n: usize) -> Array1<Complex64> {
    let s = theta_rad.sin();
    Array1::from_iter(
        (0..n).map(|i| Complex64::from_polar(1.0, -std::f64::consts::PI * i as f64 * s)),
    )
}

fn complex_normal(rng: &mut impl Rng, std: f64) -> Complex64 {
    let scale = std * std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

fn uniform_phase(rng: &mut impl Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Draws one frame-level channel realization. Draw order is fixed (targets,
/// clutter, users) so a seed pins every parameter.
pub fn sample_scenario(cfg: &ScenarioConfig, seed: u64) -> ChannelRealization {
    let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::CHANNEL));
    let lambda = cfg.wavelength_m();
    let dims = ChannelDims {
        n_tx: cfg.system.n_tx,
        n_rx: cfg.system.n_rx,
        wavelength_m: lambda,
        bandwidth_hz: cfg.system.bandwidth_hz,
        t_block_s: cfg.t_block_s(),
        samples_per_block: cfg.samples_per_block(),
        tap_count: cfg.tap_count(),
    };

    let targets: Vec<TargetParams> = cfg
        .geometry
        .targets
        .iter()
        .map(|spec| {
            let range = planar_range(&spec.position_m);
            let angle = planar_angle_rad(&spec.position_m);
            // Closing speed: −v⃗·r̂ (approaching target has positive value).
            let radial = if range > 0.0 {
                -(spec.velocity_mps[0] * spec.position_m[0]
                    + spec.velocity_mps[1] * spec.position_m[1]
                    + spec.velocity_mps[2] * spec.position_m[2])
                    / range
            } else {
                0.0
            };
            let amp = 10f64.powf(spec.gain_db / 20.0);
            TargetParams {
                gain: amp * uniform_phase(&mut rng),
                doppler_hz: 2.0 * radial / lambda,
                depart_rad: angle,
                arrive_rad: angle, // monostatic
                range_m: range,
                radial_mps: radial,
                tap: cfg.range_to_tap(range),
            }
        })
        .collect();

    let c = &cfg.channel;
    let n_scatter = c.clutter_clusters * c.clutter_scatterers;
    let clutter_norm = if n_scatter > 0 { 1.0 / (n_scatter as f64).sqrt() } else { 0.0 };
    let clutter_amp = 10f64.powf(c.clutter_gain_db / 20.0);
    let [ang_lo, ang_hi] = cfg.geometry.sensing_angle_deg;
    let [r_lo, r_hi] = cfg.geometry.sensing_range_m;
    let clusters = (0..c.clutter_clusters)
        .map(|_| {
            (0..c.clutter_scatterers)
                .map(|_| {
                    let angle = rng.random_range(ang_lo..=ang_hi).to_radians();
                    let range = rng.random_range(r_lo..=r_hi);
                    let speed = if c.clutter_speed_max_mps > 0.0 {
                        rng.random_range(-c.clutter_speed_max_mps..=c.clutter_speed_max_mps)
                    } else {
                        0.0
                    };
                    ClutterScatterer {
                        gain: clutter_norm * clutter_amp * complex_normal(&mut rng, 1.0),
                        doppler_hz: 2.0 * speed / lambda,
                        angle_rad: angle,
                        tap: cfg.range_to_tap(range),
                    }
                })
                .collect()
        })
        .collect();

    // Large-scale gains normalized to the nearest user.
    let distances: Vec<f64> = cfg.geometry.users.iter().map(|u| planar_range(&u.position_m)).collect();
    let d_min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let scatter_amp = 10f64.powf(c.scattered_gain_db / 20.0);
    let users = cfg
        .geometry
        .users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let gain_scale = (d_min / distances[k]).powf(c.path_loss_exponent / 2.0);
            let los_angle = planar_angle_rad(&u.position_m);
            // The direct path's phase is set by its length: users sit at fixed
            // positions, so it is the same in every realization. Only the
            // scattered paths (and their phases) vary. Randomizing the direct
            // phase too would make the flat channel uniformly rotation
            // invariant, and no pilot-free detector can resolve bits through
            // that; the fixed geometry is what anchors the phase reference.
            let los_phase = -std::f64::consts::TAU * (distances[k] / lambda).fract();
            let mut paths = vec![UserPath {
                gain: Complex64::from_polar(gain_scale, los_phase),
                doppler_hz: 0.0,
                depart_rad: los_angle,
            }];
            for p in 1..c.paths_per_user {
                // Scattered paths bounce off the sensing targets in turn.
                let radial = if targets.is_empty() {
                    0.0
                } else {
                    targets[(p - 1) % targets.len()].radial_mps
                };
                paths.push(UserPath {
                    gain: gain_scale * scatter_amp * complex_normal(&mut rng, 1.0),
                    doppler_hz: 2.0 * radial / lambda,
                    depart_rad: rng.random_range(ang_lo..=ang_hi).to_radians(),
                });
            }
            paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
            UserPathParams { user: k, position_m: u.position_m, paths }
        })
        .collect();

    ChannelRealization { dims, targets, clutter: ClutterParams { clusters }, users, seed }
}

impl ChannelRealization {
    /// Per-tap sensing channel at time t: sparse list of (tap, N_r×N_t),
    /// sorted by tap, taps beyond the fast-time window dropped.
    pub fn sensing_channel_at(&self, t: f64) -> Vec<(usize, Array2<Complex64>)> {
        let mut taps: std::collections::BTreeMap<usize, Array2<Complex64>> =
            std::collections::BTreeMap::new();
        let mut add = |tap: usize, gain: Complex64, doppler: f64, arrive: f64, depart: f64| {
            if tap >= self.dims.tap_count {
                return;
            }
            let a_r = steering_vector(arrive, self.dims.n_rx);
            let a_t = steering_vector(depart, self.dims.n_tx);
            let phase = gain * Complex64::from_polar(1.0, std::f64::consts::TAU * doppler * t);
            let h = taps
                .entry(tap)
                .or_insert_with(|| Array2::zeros((self.dims.n_rx, self.dims.n_tx)));
            for (r, ar) in a_r.iter().enumerate() {
                for (c, at) in a_t.iter().enumerate() {
                    h[(r, c)] += phase * ar * at;
                }
            }
        };
        for q in &self.targets {
            add(q.tap, q.gain, q.doppler_hz, q.arrive_rad, q.depart_rad);
        }
        for cluster in &self.clutter.clusters {
            for s in cluster {
                add(s.tap, s.gain, s.doppler_hz, s.angle_rad, s.angle_rad);
            }
        }
        taps.into_iter().collect()
    }

    /// Flat comm channel for user k at time t, length N_t.
    pub fn comm_channel_at(&self, user: usize, t: f64) -> Result<Array1<Complex64>, ChannelError> {
        let u = self
            .users
            .get(user)
            .ok_or(ChannelError::BadUser(user, self.users.len()))?;
        let mut h = Array1::zeros(self.dims.n_tx);
        for p in &u.paths {
            let rot = p.gain * Complex64::from_polar(1.0, std::f64::consts::TAU * p.doppler_hz * t);
            let a_t = steering_vector(p.depart_rad, self.dims.n_tx);
            for (j, a) in a_t.iter().enumerate() {
                h[j] += rot * a;
            }
        }
        Ok(h)
    }
}

/// Monostatic echo cube N_r × (L·N_t) × M.
#[derive(Debug, Clone)]
pub struct RadarCube {
    pub data: Array3<Complex64>,
    pub noise_sigma: f64,
    pub t_block_s: f64,
}

/// Y_m = Σ_taps H_tap(t_m)·(X_m delayed by tap·N_t)ᵀ + Z, Z ~ CN(0, σ²).
/// Noise draw order is (block, rx antenna, fast time), fixed.
pub fn apply_sensing_channel(
    frame: &TxFrame,
    real: &ChannelRealization,
    sigma: f64,
    seed: u64,
) -> RadarCube {
    let d = real.dims;
    let span = d.samples_per_block;
    let m_blocks = frame.block_count();
    let mut data = Array3::zeros((d.n_rx, span, m_blocks));
    let mut rng = seeds::rng(seeds::derive(seed, seeds::stream::NOISE_RADAR));
    for m in 0..m_blocks {
        let t_m = m as f64 * d.t_block_s;
        let x = &frame.blocks[m];
        for (tap, h) in real.sensing_channel_at(t_m) {
            let shift = tap * d.n_tx;
            for t in 0..span {
                let src = (t + span - shift) % span;
                for r in 0..d.n_rx {
                    let mut acc = Complex64::ZERO;
                    for c in 0..d.n_tx {
                        acc += h[(r, c)] * x[(src, c)];
                    }
                    data[(r, t, m)] += acc;
                }
            }
        }
        if sigma > 0.0 {
            for r in 0..d.n_rx {
                for t in 0..span {
                    data[(r, t, m)] += complex_normal(&mut rng, sigma);
                }
            }
        }
    }
    RadarCube { data, noise_sigma: sigma, t_block_s: d.t_block_s }
}

/// y_{k,m} = X_m·h_k(t_m) + z, per block; output (L·N_t) × M.
/// Noise draw order is (block, fast time), fixed.
pub fn apply_comm_channel(
    frame: &TxFrame,
    real: &ChannelRealization,
    user: usize,
    sigma: f64,
    seed: u64,
) -> Result<Array2<Complex64>, ChannelError> {
    let d = real.dims;
    let span = d.samples_per_block;
    let m_blocks = frame.block_count();
    let mut out = Array2::zeros((span, m_blocks));
    let mut rng = seeds::rng(seeds::derive2(seed, seeds::stream::NOISE_COMM, user as u64));
    for m in 0..m_blocks {
        let h = real.comm_channel_at(user, m as f64 * d.t_block_s)?;
        let x = &frame.blocks[m];
        for t in 0..span {
            let mut acc = Complex64::ZERO;
            for j in 0..d.n_tx {
                acc += x[(t, j)] * h[j];
            }
            if sigma > 0.0 {
                acc += complex_normal(&mut rng, sigma);
            }
            out[(t, m)] = acc;
        }
    }
    Ok(out)
}

/// Thermal noise power k_B·T_0·B·10^(nf/10) in watts.
pub fn thermal_noise_watts(nf_db: f64, bandwidth_hz: f64) -> f64 {
    BOLTZMANN * T0_KELVIN * bandwidth_hz * 10f64.powf(nf_db / 10.0)
}

/// Noise standard deviation on the simulation's normalized power scale.
///
/// The physical chain is σ² ∝ k_B·T_0·B·10^(nf/10); the proportionality
/// constant (transmit power, reference loss) is folded into the configured
/// reference SNR, making the whole mapping affine in dB:
/// SNR(nf) = snr_at_ref − (nf − ref_nf).
pub fn noise_sigma_from_nf(nf_db: f64, cfg: &ScenarioConfig) -> f64 {
    cfg.comm_noise_var(nf_db).sqrt()
}
