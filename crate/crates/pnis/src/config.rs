//! Scenario configuration: the single source of truth for a run.
//!
//! A config serializes canonically (fixed struct field order), so its SHA-256
//! digest identifies a run; every emitted artifact carries that digest.
//! Angles are degrees and positions are metres in the JSON; code works in
//! radians. The dual-function base station sits at the origin, broadside
//! along +y, so a position [x, y, z] has azimuth atan2(x, y).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    pub geometry: GeometrySection,
    pub channel: ChannelSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub radar: RadarSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Inner code length L, one full m-sequence period.
    pub code_length: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Blocks per frame M.
    pub blocks: usize,
    /// Pilot period M_p: pilot mode reserves one block in every M_p.
    pub pilot_period: usize,
    /// Constellation order; 4 = QPSK, the only supported value.
    pub modulation_order: usize,
    /// NOMA power fractions [far, near]; must sum to 1 with far > near.
    pub power_split: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// Exactly two users: index 0 is the far user, index 1 the near user.
    pub users: Vec<UserSpec>,
    pub sensing_range_m: [f64; 2],
    pub sensing_angle_deg: [f64; 2],
    pub targets: Vec<TargetSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub position_m: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub position_m: [f64; 3],
    pub velocity_mps: [f64; 3],
    /// Reflection gain relative to a unit target.
    pub gain_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Paths per user including the dominant one.
    pub paths_per_user: usize,
    /// Mean power of each scattered path relative to the dominant path.
    pub scattered_gain_db: f64,
    pub clutter_clusters: usize,
    pub clutter_scatterers: usize,
    /// Aggregate clutter power relative to a unit target.
    pub clutter_gain_db: f64,
    /// Clutter scatterer radial speeds are uniform in ± this value.
    pub clutter_speed_max_mps: f64,
    /// Large-scale path loss exponent; gains normalized to the nearest user.
    pub path_loss_exponent: f64,
    /// Noise mapping: at `ref_noise_figure_db` the near user sees
    /// `snr_at_ref_db` per received sample; each extra dB of noise figure
    /// costs one dB of SNR.
    pub ref_noise_figure_db: f64,
    pub snr_at_ref_db: f64,
    /// Radar-side per-sample SNR for sensing runs (echo power over σ²).
    pub sensing_snr_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub key_dim: usize,
    pub stage1_layers: usize,
    pub stage2_layers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// Dataset size N_s.
    pub dataset_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    /// Records draw their noise figure uniformly from this range, so one
    /// model serves the whole evaluation sweep.
    pub noise_figure_range_db: [f64; 2],
    /// Seed used when the CLI does not pass one.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSection {
    /// Doppler FFT length = factor × M, zero padded.
    pub doppler_fft_factor: usize,
    /// Points on the angle grid spanning the sensing angle window.
    pub angle_grid_points: usize,
    /// Guard cells masked around an extracted peak, per axis.
    pub peak_guard_cells: usize,
    /// Guard cells for the angle axis of range-angle extraction. A small
    /// array on a fine grid has a beam main lobe spanning many grid steps,
    /// so this must cover the lobe or the second extraction lands on the
    /// first peak's shoulder.
    pub angle_guard_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub noise_figures_db: Vec<f64>,
    pub frames_per_point: usize,
    /// When true, Goodput uses the constellation order O instead of
    /// log2(O) bits as the per-symbol information factor.
    pub goodput_counts_modulation_order: bool,
}

impl ScenarioConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.system;
        if !matches!(s.code_length, 7 | 15 | 31 | 63) {
            return Err(invalid(format!(
                "code_length {} unsupported; use one of 7, 15, 31, 63",
                s.code_length
            )));
        }
        if !s.n_tx.is_power_of_two() {
            return Err(invalid(format!("n_tx {} must be a power of two", s.n_tx)));
        }
        if s.n_rx == 0 {
            return Err(invalid("n_rx must be positive"));
        }
        if s.blocks == 0 || s.pilot_period == 0 || s.blocks % s.pilot_period != 0 {
            return Err(invalid(format!(
                "blocks {} must be a positive multiple of pilot_period {}",
                s.blocks, s.pilot_period
            )));
        }
        if s.modulation_order != 4 {
            return Err(invalid("modulation_order must be 4 (QPSK)"));
        }
        let [p1, p2] = s.power_split;
        if !(p1 > p2 && p2 > 0.0 && (p1 + p2 - 1.0).abs() < 1e-12) {
            return Err(invalid(format!(
                "power_split [{}, {}] must satisfy p1 > p2 > 0 and p1 + p2 = 1",
                p1, p2
            )));
        }
        if s.carrier_hz <= 0.0 || s.bandwidth_hz <= 0.0 {
            return Err(invalid("carrier_hz and bandwidth_hz must be positive"));
        }

        let g = &self.geometry;
        if g.users.len() != 2 {
            return Err(invalid(format!("need exactly 2 users, got {}", g.users.len())));
        }
        if g.sensing_range_m[0] < 0.0 || g.sensing_range_m[1] <= g.sensing_range_m[0] {
            return Err(invalid("sensing_range_m must be an increasing nonnegative pair"));
        }
        // Delays are circular with period L chips; a window past that aliases.
        if self.range_to_tap(g.sensing_range_m[1]) >= s.code_length {
            return Err(invalid(format!(
                "sensing window up to {} m needs {} delay taps but the waveform \
                 resolves only {} (L chips of c/2B = {:.2} m each)",
                g.sensing_range_m[1],
                self.range_to_tap(g.sensing_range_m[1]) + 1,
                s.code_length,
                self.range_bin_m()
            )));
        }
        if g.sensing_angle_deg[1] <= g.sensing_angle_deg[0] {
            return Err(invalid("sensing_angle_deg must be increasing"));
        }
        for u in &g.users {
            if u.position_m[1] < 0.0 {
                return Err(invalid("user y-coordinates must be nonnegative (front sector)"));
            }
        }
        for (q, t) in g.targets.iter().enumerate() {
            let r = planar_range(&t.position_m);
            if r < g.sensing_range_m[0] || r > g.sensing_range_m[1] {
                return Err(invalid(format!(
                    "target {} range {:.2} m outside sensing window [{}, {}]",
                    q, r, g.sensing_range_m[0], g.sensing_range_m[1]
                )));
            }
            let deg = planar_angle_rad(&t.position_m).to_degrees();
            if deg < g.sensing_angle_deg[0] || deg > g.sensing_angle_deg[1] {
                return Err(invalid(format!(
                    "target {} angle {:.1}° outside sensing sector",
                    q, deg
                )));
            }
        }

        let c = &self.channel;
        if c.paths_per_user == 0 {
            return Err(invalid("paths_per_user must be positive"));
        }
        if c.clutter_clusters > 0 && c.clutter_scatterers == 0 {
            return Err(invalid("clutter_scatterers must be positive when clusters exist"));
        }

        let m = &self.model;
        if m.key_dim == 0 || m.embed_dim % m.key_dim != 0 {
            return Err(invalid(format!(
                "embed_dim {} must be a positive multiple of key_dim {}",
                m.embed_dim, m.key_dim
            )));
        }
        if m.stage1_layers == 0 || m.stage2_layers == 0 {
            return Err(invalid("layer counts must be positive"));
        }

        let t = &self.training;
        if t.dataset_size == 0 || t.batch_size == 0 || t.epochs == 0 {
            return Err(invalid("dataset_size, batch_size, epochs must be positive"));
        }
        if !(t.base_lr > 0.0) {
            return Err(invalid("base_lr must be positive"));
        }
        if t.noise_figure_range_db[1] < t.noise_figure_range_db[0] {
            return Err(invalid("noise_figure_range_db must be ordered"));
        }

        let r = &self.radar;
        if r.doppler_fft_factor == 0 || r.angle_grid_points < 2 {
            return Err(invalid("doppler_fft_factor and angle_grid_points too small"));
        }
        if r.angle_guard_cells == 0 || r.angle_guard_cells >= r.angle_grid_points {
            return Err(invalid("angle_guard_cells must be in 1..angle_grid_points"));
        }

        let e = &self.eval;
        if e.noise_figures_db.is_empty() || e.frames_per_point == 0 {
            return Err(invalid("eval needs noise figures and frames_per_point"));
        }
        Ok(())
    }

    // ---- derived quantities -------------------------------------------------

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.system.carrier_hz
    }

    /// Block duration T = L·N_t / B.
    pub fn t_block_s(&self) -> f64 {
        (self.system.code_length * self.system.n_tx) as f64 / self.system.bandwidth_hz
    }

    /// One inner-code chip of delay, c/(2B) metres.
    pub fn range_bin_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.system.bandwidth_hz)
    }

    /// Delay tap index for a given range.
    pub fn range_to_tap(&self, range_m: f64) -> usize {
        (2.0 * range_m * self.system.bandwidth_hz / SPEED_OF_LIGHT).round() as usize
    }

    /// Tap count covering the sensing window, capped by the fast-time period.
    pub fn tap_count(&self) -> usize {
        (self.range_to_tap(self.geometry.sensing_range_m[1]) + 1).min(self.system.code_length)
    }

    /// Fast-time samples per block.
    pub fn samples_per_block(&self) -> usize {
        self.system.code_length * self.system.n_tx
    }

    pub fn bits_per_symbol(&self) -> usize {
        (self.system.modulation_order as f64).log2().round() as usize
    }

    /// Payload bits a frame carries per user.
    pub fn frame_bits(&self, pilot_free: bool) -> usize {
        self.data_blocks(pilot_free) * self.system.n_tx * self.bits_per_symbol()
    }

    pub fn pilot_block_count(&self) -> usize {
        self.system.blocks / self.system.pilot_period
    }

    pub fn data_blocks(&self, pilot_free: bool) -> usize {
        if pilot_free {
            self.system.blocks
        } else {
            self.system.blocks - self.pilot_block_count()
        }
    }

    pub fn heads(&self) -> usize {
        self.model.embed_dim / self.model.key_dim
    }

    pub fn angle_grid_rad(&self) -> Vec<f64> {
        let [lo, hi] = self.geometry.sensing_angle_deg;
        let n = self.radar.angle_grid_points;
        (0..n)
            .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).to_radians())
            .collect()
    }

    /// Per-sample comm noise variance at a given downlink noise figure.
    ///
    /// Calibration: a unit-gain single-path channel delivers N_t per-sample
    /// signal power, so σ² = N_t·10^(−snr/10) pins the near user at
    /// `snr_at_ref_db` when nf = ref, and each dB of nf costs one dB.
    pub fn comm_noise_var(&self, noise_figure_db: f64) -> f64 {
        let snr_db =
            self.channel.snr_at_ref_db - (noise_figure_db - self.channel.ref_noise_figure_db);
        self.system.n_tx as f64 * 10f64.powf(-snr_db / 10.0)
    }

    /// Radar-side noise variance from the configured sensing SNR: echo power
    /// for a unit target is N_t per sample ( ‖a_t‖² spread over the codes ).
    pub fn radar_noise_var(&self) -> f64 {
        self.system.n_tx as f64 * 10f64.powf(-self.channel.sensing_snr_db / 10.0)
    }

    // ---- profiles -----------------------------------------------------------

    /// Desk-scale communication profile: small enough that the acceptance
    /// suite trains and sweeps in minutes. Static geometry (all speeds zero)
    /// so block fading is literal coherence.
    pub fn desk() -> Self {
        Self {
            system: SystemSection {
                carrier_hz: 77e9,
                bandwidth_hz: 150e6,
                code_length: 15,
                n_tx: 4,
                n_rx: 4,
                blocks: 8,
                pilot_period: 4,
                modulation_order: 4,
                power_split: [0.7, 0.3],
            },
            geometry: GeometrySection {
                users: vec![
                    UserSpec { position_m: [15.0, 15.0, 0.0] },
                    UserSpec { position_m: [5.0, 5.0, 0.0] },
                ],
                // 150 MHz and L = 15 resolve 15 bins of ~1 m: keep the whole
                // sensing window inside that unambiguous span.
                sensing_range_m: [0.0, 14.0],
                sensing_angle_deg: [-90.0, 90.0],
                targets: vec![
                    TargetSpec {
                        position_m: polar_position(6.0, -20.0),
                        velocity_mps: [0.0, 0.0, 0.0],
                        gain_db: 0.0,
                    },
                    TargetSpec {
                        position_m: polar_position(12.0, 25.0),
                        velocity_mps: [0.0, 0.0, 0.0],
                        gain_db: 0.0,
                    },
                ],
            },
            channel: ChannelSection {
                paths_per_user: 5,
                scattered_gain_db: -10.0,
                clutter_clusters: 3,
                clutter_scatterers: 5,
                clutter_gain_db: -15.0,
                clutter_speed_max_mps: 0.5,
                path_loss_exponent: 2.0,
                ref_noise_figure_db: 0.0,
                snr_at_ref_db: 26.0,
                sensing_snr_db: 20.0,
            },
            model: ModelSection {
                embed_dim: 32,
                key_dim: 16,
                stage1_layers: 2,
                stage2_layers: 2,
            },
            training: TrainingSection {
                dataset_size: 2000,
                batch_size: 16,
                epochs: 40,
                base_lr: 1e-3,
                noise_figure_range_db: [0.0, 25.0],
                seed: 1,
            },
            radar: RadarSection {
                doppler_fft_factor: 4,
                angle_grid_points: 181,
                peak_guard_cells: 2,
                // 4 tx elements put the first beam null ~30 deg out; on the
                // 1 deg grid the guard must reach past the shoulder.
                angle_guard_cells: 15,
            },
            eval: EvalSection {
                noise_figures_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
                frames_per_point: 200,
                goodput_counts_modulation_order: false,
            },
        }
    }

    /// Desk-scale sensing profile. Doppler observability fixes the numbers:
    /// with M=8 blocks the frame must span ≳1/f_d, so the bandwidth drops to
    /// 4 MHz (range bin 37.5 m) and the range window widens to 500 m, putting
    /// the two targets in distinct range bins *and* distinct Doppler bins.
    pub fn desk_sense() -> Self {
        let mut cfg = Self::desk();
        cfg.system.bandwidth_hz = 4e6;
        cfg.geometry.sensing_range_m = [0.0, 500.0];
        cfg.geometry.targets = vec![
            TargetSpec {
                position_m: polar_position(80.0, -20.0),
                velocity_mps: [0.0, 0.0, 0.0],
                gain_db: 0.0,
            },
            TargetSpec {
                position_m: polar_position(300.0, 25.0),
                velocity_mps: radial_velocity(300.0, 25.0, -5.0),
                gain_db: 0.0,
            },
        ];
        cfg
    }

    /// Full-scale profile. Training at this scale is supported but not part
    /// of the acceptance runs.
    pub fn table1() -> Self {
        Self {
            system: SystemSection {
                carrier_hz: 77e9,
                bandwidth_hz: 150e6,
                code_length: 63,
                n_tx: 16,
                n_rx: 16,
                blocks: 8,
                pilot_period: 4,
                modulation_order: 4,
                power_split: [0.7, 0.3],
            },
            geometry: GeometrySection {
                users: vec![
                    UserSpec { position_m: [15.0, 15.0, 0.0] },
                    UserSpec { position_m: [5.0, 5.0, 0.0] },
                ],
                sensing_range_m: [0.0, 60.0],
                sensing_angle_deg: [-90.0, 90.0],
                targets: vec![
                    TargetSpec {
                        position_m: polar_position(30.0, -10.0),
                        velocity_mps: [4.0, 4.0, 2.0],
                        gain_db: 0.0,
                    },
                    TargetSpec {
                        position_m: polar_position(45.0, 20.0),
                        velocity_mps: [5.0, 5.0, 0.0],
                        gain_db: 0.0,
                    },
                ],
            },
            channel: ChannelSection {
                paths_per_user: 5,
                scattered_gain_db: -10.0,
                clutter_clusters: 3,
                clutter_scatterers: 5,
                clutter_gain_db: -15.0,
                clutter_speed_max_mps: 0.5,
                path_loss_exponent: 2.0,
                ref_noise_figure_db: 0.0,
                snr_at_ref_db: 26.0,
                sensing_snr_db: 20.0,
            },
            model: ModelSection {
                embed_dim: 256,
                key_dim: 64,
                stage1_layers: 3,
                stage2_layers: 6,
            },
            training: TrainingSection {
                dataset_size: 20000,
                batch_size: 16,
                epochs: 100,
                base_lr: 1e-4,
                noise_figure_range_db: [0.0, 25.0],
                seed: 1,
            },
            radar: RadarSection {
                doppler_fft_factor: 4,
                angle_grid_points: 181,
                peak_guard_cells: 2,
                angle_guard_cells: 8,
            },
            eval: EvalSection {
                noise_figures_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
                frames_per_point: 200,
                goodput_counts_modulation_order: false,
            },
        }
    }
}

/// Position at planar range r and azimuth θ (degrees): r·[sin θ, cos θ, 0].
pub fn polar_position(range_m: f64, angle_deg: f64) -> [f64; 3] {
    let th = angle_deg.to_radians();
    [range_m * th.sin(), range_m * th.cos(), 0.0]
}

/// Velocity purely along the line of sight; negative speed approaches.
pub fn radial_velocity(range_m: f64, angle_deg: f64, speed_mps: f64) -> [f64; 3] {
    let p = polar_position(range_m, angle_deg);
    let r = planar_range(&p).max(1e-12);
    [speed_mps * p[0] / r, speed_mps * p[1] / r, 0.0]
}

pub fn planar_range(position_m: &[f64; 3]) -> f64 {
    (position_m[0] * position_m[0] + position_m[1] * position_m[1] + position_m[2] * position_m[2])
        .sqrt()
}

/// Azimuth from broadside (+y), positive toward +x.
pub fn planar_angle_rad(position_m: &[f64; 3]) -> f64 {
    position_m[0].atan2(position_m[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ScenarioConfig::desk().validate().unwrap();
        ScenarioConfig::desk_sense().validate().unwrap();
        ScenarioConfig::table1().validate().unwrap();
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = ScenarioConfig::desk();
        let b = ScenarioConfig::desk();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let mut c = ScenarioConfig::desk();
        c.system.code_length = 31;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn json_roundtrip_preserves_digest() {
        let a = ScenarioConfig::table1();
        let text = serde_json::to_string_pretty(&a).unwrap();
        let b: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value =
            serde_json::to_value(ScenarioConfig::desk()).unwrap();
        v["system"]["mystery"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ScenarioConfig>(v).is_err());
    }

    #[test]
    fn derived_quantities_match_hand_arithmetic() {
        let t1 = ScenarioConfig::table1();
        // T_block = 63·16/150 MHz = 6.72 µs.
        assert!((t1.t_block_s() - 6.72e-6).abs() < 1e-18);
        // One range bin at 150 MHz is c/(2B) ≈ 1 m; 30 bins of range → tap 30.
        assert_eq!(t1.range_to_tap(30.0 * t1.range_bin_m()), 30);
        assert_eq!(t1.pilot_block_count(), 2);
        assert_eq!(t1.data_blocks(false), 6);
        assert_eq!(t1.data_blocks(true), 8);
        assert_eq!(t1.frame_bits(true), 8 * 16 * 2);
        assert_eq!(t1.heads(), 4);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = ScenarioConfig::desk();
        c.system.code_length = 12;
        assert!(c.validate().is_err());

        let mut c = ScenarioConfig::desk();
        c.system.power_split = [0.5, 0.5];
        assert!(c.validate().is_err());

        let mut c = ScenarioConfig::desk();
        c.system.blocks = 7;
        assert!(c.validate().is_err());

        let mut c = ScenarioConfig::desk();
        c.model.embed_dim = 30;
        assert!(c.validate().is_err());

        let mut c = ScenarioConfig::desk();
        c.geometry.targets[0].position_m = polar_position(1000.0, 0.0);
        assert!(c.validate().is_err());

        // Window wider than the circular delay span (L bins) must be rejected.
        let mut c = ScenarioConfig::desk();
        c.geometry.sensing_range_m = [0.0, 60.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn angle_grid_spans_sector_inclusive() {
        let c = ScenarioConfig::desk();
        let grid = c.angle_grid_rad();
        assert_eq!(grid.len(), 181);
        assert!((grid[0] + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((grid[180] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(grid[90].abs() < 1e-12);
    }

    #[test]
    fn noise_mapping_slope_is_one_db_per_db() {
        let c = ScenarioConfig::desk();
        let v0 = c.comm_noise_var(0.0);
        let v10 = c.comm_noise_var(10.0);
        assert!((10.0 * (v10 / v0).log10() - 10.0).abs() < 1e-9);
        // At the reference figure: σ² = N_t·10^(−26/10).
        assert!((v0 - 4.0 * 10f64.powf(-2.6)).abs() < 1e-12);
    }
}
