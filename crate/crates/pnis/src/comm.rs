//! Classic user-side receivers: Hadamard stream decoding, pilot-based LS
//! channel estimation, code-matched despreading with one-tap equalization,
//! then direct QPSK demapping for the far user and hard successive
//! interference cancellation for the near user.
//!
//! The decoded model is diagonal per stream (Hadamard orthogonality), so
//! zero-forcing reduces to scalar division by the stream gain.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;

use crate::config::ScenarioConfig;
use crate::waveform::{
    gen_hadamard, gen_mseq, qpsk_demod, qpsk_mod, HadamardMatrix, PrbsCode, WaveformError,
};

/// Streams whose estimated gain falls below this are flagged undecodable and
/// emit zero bits instead of dividing by ~0.
pub const UNDECODABLE_GAIN: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CommError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no pilot blocks in mask; classic estimation needs at least one")]
    NoPilots,
    #[error("pilot symbol magnitude ~0 cannot be divided out")]
    BadPilotSymbol,
    #[error("block {block} out of range (frame has {blocks})")]
    BlockOutOfRange { block: usize, blocks: usize },
    #[error("user index {0} out of range (have 2)")]
    BadUser(usize),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Per-user decoded tensor, L × N_t × M.
#[derive(Debug, Clone)]
pub struct DecodedCube {
    pub data: Array3<Complex64>,
    pub user: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    /// Dedicated pilot blocks (classic frames).
    Pilot,
    /// Gains supplied from outside the pilot protocol (genie or learned).
    Implicit,
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Effective per-stream gain ĥ_j, length N_t.
    pub gains: Array1<Complex64>,
    pub mode: EstimationMode,
    /// RMS spread of per-pilot-block estimates around the mean; 0 for a
    /// single pilot and for implicit estimates.
    pub residual: f64,
}

impl ChannelEstimate {
    pub fn known(gains: Array1<Complex64>) -> Self {
        Self { gains, mode: EstimationMode::Implicit, residual: 0.0 }
    }
}

/// Y_dec[l, j] = Σ_i y[l·N_t + i]·W[i, j]. For a noiseless flat channel this
/// is N_t·c[l]·h_j·s_j: streams separate exactly.
pub fn hadamard_decode(
    y: &[Complex64],
    w: &HadamardMatrix,
) -> Result<Array2<Complex64>, CommError> {
    let n_t = w.order();
    if n_t == 0 || y.len() % n_t != 0 {
        return Err(CommError::Shape(format!(
            "block length {} not divisible by Hadamard order {}",
            y.len(),
            n_t
        )));
    }
    let l = y.len() / n_t;
    let mut out = Array2::zeros((l, n_t));
    for li in 0..l {
        for j in 0..n_t {
            let mut acc = Complex64::ZERO;
            for i in 0..n_t {
                acc += y[li * n_t + i] * w.entry(i, j);
            }
            out[(li, j)] = acc;
        }
    }
    Ok(out)
}

/// Decodes every block of a received frame (L·N_t × M) into a cube.
pub fn hadamard_decode_frame(
    y: &Array2<Complex64>,
    w: &HadamardMatrix,
    user: usize,
) -> Result<DecodedCube, CommError> {
    let (span, m_blocks) = y.dim();
    let n_t = w.order();
    if span % n_t != 0 {
        return Err(CommError::Shape(format!(
            "fast time {} not divisible by Hadamard order {}",
            span, n_t
        )));
    }
    let l = span / n_t;
    let mut data = Array3::zeros((l, n_t, m_blocks));
    let mut block = vec![Complex64::ZERO; span];
    for m in 0..m_blocks {
        for t in 0..span {
            block[t] = y[(t, m)];
        }
        let dec = hadamard_decode(&block, w)?;
        for li in 0..l {
            for j in 0..n_t {
                data[(li, j, m)] = dec[(li, j)];
            }
        }
    }
    Ok(DecodedCube { data, user })
}

/// LS estimate averaged over pilot blocks:
/// ĥ_j = Σ_{pilot m} Σ_l c[l]·Y[l,j,m] / (L·N_t·s_pilot·count).
pub fn ls_channel_estimate(
    cube: &DecodedCube,
    pilot_mask: &[bool],
    code: &PrbsCode,
    pilot_symbol: Complex64,
) -> Result<ChannelEstimate, CommError> {
    let (l, n_t, m_blocks) = cube.data.dim();
    if pilot_mask.len() != m_blocks {
        return Err(CommError::Shape(format!(
            "pilot mask length {} vs {} blocks",
            pilot_mask.len(),
            m_blocks
        )));
    }
    if code.len() != l {
        return Err(CommError::Shape(format!(
            "code length {} vs decoded rows {}",
            code.len(),
            l
        )));
    }
    if pilot_symbol.norm() < 1e-12 {
        return Err(CommError::BadPilotSymbol);
    }
    let pilots: Vec<usize> =
        (0..m_blocks).filter(|&m| pilot_mask[m]).collect();
    if pilots.is_empty() {
        return Err(CommError::NoPilots);
    }
    let denom = (l * n_t) as f64 * pilot_symbol;
    // Per-block raw estimates, then average; spread becomes the residual.
    let mut raw = Array2::<Complex64>::zeros((pilots.len(), n_t));
    for (pi, &m) in pilots.iter().enumerate() {
        for j in 0..n_t {
            let mut acc = Complex64::ZERO;
            for li in 0..l {
                acc += code.chip(li) * cube.data[(li, j, m)];
            }
            raw[(pi, j)] = acc / denom;
        }
    }
    let mut gains = Array1::zeros(n_t);
    for j in 0..n_t {
        let mut acc = Complex64::ZERO;
        for pi in 0..pilots.len() {
            acc += raw[(pi, j)];
        }
        gains[j] = acc / pilots.len() as f64;
    }
    let mut spread = 0.0;
    for pi in 0..pilots.len() {
        for j in 0..n_t {
            spread += (raw[(pi, j)] - gains[j]).norm_sqr();
        }
    }
    let residual = (spread / (pilots.len() * n_t) as f64).sqrt();
    Ok(ChannelEstimate { gains, mode: EstimationMode::Pilot, residual })
}

/// One despread, equalized block of symbols.
#[derive(Debug, Clone)]
pub struct DespreadBlock {
    /// ŝ_j, length N_t; 0 where the stream is undecodable.
    pub symbols: Array1<Complex64>,
    pub undecodable: Vec<bool>,
}

/// ŝ_j = Σ_l c[l]·Y[l,j,m] / (L·N_t·ĥ_j).
pub fn despread_symbols(
    cube: &DecodedCube,
    code: &PrbsCode,
    est: &ChannelEstimate,
    block: usize,
) -> Result<DespreadBlock, CommError> {
    let (l, n_t, m_blocks) = cube.data.dim();
    if block >= m_blocks {
        return Err(CommError::BlockOutOfRange { block, blocks: m_blocks });
    }
    if code.len() != l || est.gains.len() != n_t {
        return Err(CommError::Shape(format!(
            "code {} / gains {} vs cube {}x{}",
            code.len(),
            est.gains.len(),
            l,
            n_t
        )));
    }
    let mut symbols = Array1::zeros(n_t);
    let mut undecodable = vec![false; n_t];
    for j in 0..n_t {
        let h = est.gains[j];
        if h.norm() < UNDECODABLE_GAIN {
            undecodable[j] = true;
            continue;
        }
        let mut acc = Complex64::ZERO;
        for li in 0..l {
            acc += code.chip(li) * cube.data[(li, j, block)];
        }
        symbols[j] = acc / ((l * n_t) as f64 * h);
    }
    Ok(DespreadBlock { symbols, undecodable })
}

/// Far user: the near signal is treated as noise, so hard QPSK demapping of
/// the equalized NOMA symbol recovers the dominant (far) constellation.
pub fn detect_far_zf(s_hat: &[Complex64]) -> Vec<u8> {
    qpsk_demod(s_hat)
}

/// Near user: demap the far bits, remodulate, subtract √p1·ŝ_1, then demap
/// the residual. Hard-decision at both stages; far mistakes propagate.
pub fn detect_near_sic(s_hat: &[Complex64], p1: f64, p2: f64) -> (Vec<u8>, Vec<u8>) {
    debug_assert!(p1 > p2 && p2 >= 0.0, "SIC decodes the stronger signal first");
    let far_bits = qpsk_demod(s_hat);
    let far_symbols = qpsk_mod(&far_bits).expect("demod always emits bit pairs");
    let residual: Vec<Complex64> = s_hat
        .iter()
        .zip(&far_symbols)
        .map(|(s, s1)| s - p1.sqrt() * s1)
        .collect();
    let near_bits = qpsk_demod(&residual);
    (far_bits, near_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BerCount {
    pub errors: u64,
    pub total: u64,
}

impl BerCount {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.errors as f64 / self.total as f64
        }
    }

    pub fn merge(&mut self, other: BerCount) {
        self.errors += other.errors;
        self.total += other.total;
    }
}

pub fn ber_count(estimated: &[u8], truth: &[u8]) -> Result<BerCount, CommError> {
    if estimated.len() != truth.len() {
        return Err(CommError::Shape(format!(
            "bit lengths differ: {} vs {}",
            estimated.len(),
            truth.len()
        )));
    }
    let errors = estimated
        .iter()
        .zip(truth)
        .filter(|(a, b)| (**a != 0) != (**b != 0))
        .count() as u64;
    Ok(BerCount { errors, total: truth.len() as u64 })
}

/// Full classic receive chain for one user over one frame: decode, estimate
/// from pilots, despread each data block, detect. Bits come out in transmit
/// order (data blocks only). Undecodable streams contribute zero bits.
#[derive(Debug, Clone)]
pub struct DetectedFrame {
    pub bits: Vec<u8>,
    pub estimate: ChannelEstimate,
    /// Count of (block, stream) pairs flagged undecodable.
    pub undecodable_streams: usize,
}

pub fn detect_frame(
    y: &Array2<Complex64>,
    cfg: &ScenarioConfig,
    pilot_mask: &[bool],
    user: usize,
) -> Result<DetectedFrame, CommError> {
    if user > 1 {
        return Err(CommError::BadUser(user));
    }
    let code = gen_mseq(cfg.system.code_length)?;
    let w = gen_hadamard(cfg.system.n_tx)?;
    let cube = hadamard_decode_frame(y, &w, user)?;
    let [p1, p2] = cfg.system.power_split;
    let pilot = (p1.sqrt() + p2.sqrt()) * crate::waveform::PILOT_SYMBOL;
    let estimate = ls_channel_estimate(&cube, pilot_mask, &code, pilot)?;
    detect_frame_with_estimate(&cube, cfg, pilot_mask, user, &code, estimate)
}

/// Same chain with the channel estimate supplied by the caller (genie tests,
/// or estimates produced outside the pilot protocol).
pub fn detect_frame_with_estimate(
    cube: &DecodedCube,
    cfg: &ScenarioConfig,
    pilot_mask: &[bool],
    user: usize,
    code: &PrbsCode,
    estimate: ChannelEstimate,
) -> Result<DetectedFrame, CommError> {
    let [p1, p2] = cfg.system.power_split;
    let b = cfg.bits_per_symbol();
    let mut bits = Vec::new();
    let mut undecodable_streams = 0;
    for m in 0..cube.data.dim().2 {
        if pilot_mask[m] {
            continue;
        }
        let d = despread_symbols(cube, code, &estimate, m)?;
        let symbols: Vec<Complex64> = d.symbols.to_vec();
        let mut block_bits = if user == 0 {
            detect_far_zf(&symbols)
        } else {
            detect_near_sic(&symbols, p1, p2).1
        };
        for (j, &dead) in d.undecodable.iter().enumerate() {
            if dead {
                undecodable_streams += 1;
                for k in 0..b {
                    block_bits[j * b + k] = 0;
                }
            }
        }
        bits.extend_from_slice(&block_bits);
    }
    Ok(DetectedFrame { bits, estimate, undecodable_streams })
}
