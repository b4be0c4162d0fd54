//! PMCW-NOMA transmit side: inner m-sequence, Hadamard outer code, QPSK,
//! power-domain superposition, and frame assembly with the pilot schedule.
//!
//! Conventions fixed here so frames are reproducible:
//! - m-sequences from primitive polynomials x³+x+1, x⁴+x+1, x⁵+x²+1, x⁶+x+1
//!   with all-ones seed and Fibonacci feedback; code bit b maps to 1−2b.
//! - Gray QPSK: pair (b0,b1) → ((1−2b0) + j(1−2b1))/√2; demap ties → bit 0.
//! - Pilot blocks at indices ≡ 0 (mod M_p), both users sending (1+j)/√2.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::config::ScenarioConfig;

/// Symbol sent by both users on every antenna during a pilot block.
pub const PILOT_SYMBOL: Complex64 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2);

#[derive(Debug, thiserror::Error)]
pub enum WaveformError {
    #[error("code length {0} unsupported; supported lengths: 7, 15, 31, 63")]
    UnsupportedCodeLength(usize),
    #[error("Hadamard order {0} must be a power of two")]
    BadHadamardOrder(usize),
    #[error("bit vector length {0} must be even for QPSK")]
    OddBitCount(usize),
    #[error("power split ({0}, {1}) must satisfy p1 > p2 > 0 and p1 + p2 = 1")]
    BadPowerSplit(f64, f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

// ---- inner code -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PrbsCode {
    chips: Vec<i8>,
    polynomial: &'static str,
}

impl PrbsCode {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    pub fn chip(&self, l: usize) -> f64 {
        f64::from(self.chips[l])
    }

    pub fn polynomial(&self) -> &'static str {
        self.polynomial
    }

    /// Periodic autocorrelation at lag τ, integer exact.
    pub fn periodic_autocorrelation(&self, tau: usize) -> i64 {
        let l = self.chips.len();
        (0..l)
            .map(|i| i64::from(self.chips[i]) * i64::from(self.chips[(i + tau) % l]))
            .sum()
    }
}

/// One period of the maximal-length sequence for L = 2^k − 1, k ∈ 3..=6.
///
/// Fibonacci shift register with taps at the exponents of the fixed primitive
/// trinomial x^k + x^e + 1: output and feedback come from stage k, feedback
/// additionally taps stage e, the new bit enters at stage 1.
pub fn gen_mseq(length: usize) -> Result<PrbsCode, WaveformError> {
    let (order, mid_tap, polynomial): (usize, usize, &'static str) = match length {
        7 => (3, 1, "x^3+x+1"),
        15 => (4, 1, "x^4+x+1"),
        31 => (5, 2, "x^5+x^2+1"),
        63 => (6, 1, "x^6+x+1"),
        other => return Err(WaveformError::UnsupportedCodeLength(other)),
    };
    let mut reg = vec![1u8; order]; // reg[i] = stage i+1, all-ones seed
    let mut chips = Vec::with_capacity(length);
    for _ in 0..length {
        let out = reg[order - 1];
        let fb = out ^ reg[mid_tap - 1];
        chips.push(1 - 2 * i8::try_from(out).unwrap());
        for i in (1..order).rev() {
            reg[i] = reg[i - 1];
        }
        reg[0] = fb;
    }
    debug_assert_eq!(reg, vec![1u8; order], "register must return to the seed after one period");
    Ok(PrbsCode { chips, polynomial })
}

// ---- outer code -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HadamardMatrix {
    order: usize,
    /// Row-major ±1 entries.
    entries: Vec<i8>,
}

impl HadamardMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        f64::from(self.entries[i * self.order + j])
    }
}

/// Sylvester construction: H_{2n} = [[H_n, H_n], [H_n, −H_n]].
pub fn gen_hadamard(order: usize) -> Result<HadamardMatrix, WaveformError> {
    if !order.is_power_of_two() {
        return Err(WaveformError::BadHadamardOrder(order));
    }
    let mut entries = vec![1i8];
    let mut n = 1;
    while n < order {
        let mut next = vec![0i8; 4 * n * n];
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                next[i * 2 * n + j] = v;
                next[i * 2 * n + j + n] = v;
                next[(i + n) * 2 * n + j] = v;
                next[(i + n) * 2 * n + j + n] = -v;
            }
        }
        entries = next;
        n *= 2;
    }
    Ok(HadamardMatrix { order, entries })
}

/// P = c ⊗ W: row t = l·N_t + i holds c[l]·W[i, j].
#[derive(Debug, Clone)]
pub struct OuterCodedSequence {
    rows: usize,
    cols: usize,
    entries: Vec<i8>,
}

impl OuterCodedSequence {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, t: usize, j: usize) -> f64 {
        f64::from(self.entries[t * self.cols + j])
    }
}

pub fn outer_code(code: &PrbsCode, w: &HadamardMatrix) -> OuterCodedSequence {
    let n = w.order();
    let rows = code.len() * n;
    let mut entries = vec![0i8; rows * n];
    for (l, &c) in code.chips().iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                entries[(l * n + i) * n + j] = c * w.entries[i * n + j];
            }
        }
    }
    OuterCodedSequence { rows, cols: n, entries }
}

// ---- modulation -------------------------------------------------------------

pub fn qpsk_mod(bits: &[u8]) -> Result<Vec<Complex64>, WaveformError> {
    if bits.len() % 2 != 0 {
        return Err(WaveformError::OddBitCount(bits.len()));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks_exact(2)
        .map(|p| {
            debug_assert!(p[0] <= 1 && p[1] <= 1, "qpsk bits must be 0/1");
            Complex64::new(
                (1.0 - 2.0 * f64::from(p[0])) * s,
                (1.0 - 2.0 * f64::from(p[1])) * s,
            )
        })
        .collect())
}

/// Hard decision; exact zero on an axis resolves to bit 0.
pub fn qpsk_demod(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(2 * symbols.len());
    for s in symbols {
        bits.push(u8::from(s.re < 0.0));
        bits.push(u8::from(s.im < 0.0));
    }
    bits
}

pub fn noma_superpose(
    s1: &[Complex64],
    s2: &[Complex64],
    p1: f64,
    p2: f64,
) -> Result<Vec<Complex64>, WaveformError> {
    if !(p1 > p2 && p2 > 0.0 && (p1 + p2 - 1.0).abs() < 1e-12) {
        return Err(WaveformError::BadPowerSplit(p1, p2));
    }
    if s1.len() != s2.len() {
        return Err(WaveformError::Shape(format!(
            "user symbol vectors {} vs {}",
            s1.len(),
            s2.len()
        )));
    }
    let (a1, a2) = (p1.sqrt(), p2.sqrt());
    Ok(s1.iter().zip(s2).map(|(x, y)| a1 * x + a2 * y).collect())
}

/// X_m = P ⊙ (1·s_nomaᵀ): column j of P scaled by the stream-j symbol.
pub fn build_tx_block(
    p: &OuterCodedSequence,
    s_noma: &[Complex64],
) -> Result<Array2<Complex64>, WaveformError> {
    if p.cols() != s_noma.len() {
        return Err(WaveformError::Shape(format!(
            "P has {} columns, symbol vector has {}",
            p.cols(),
            s_noma.len()
        )));
    }
    Ok(Array2::from_shape_fn((p.rows(), p.cols()), |(t, j)| {
        s_noma[j] * p.entry(t, j)
    }))
}

// ---- frames -----------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TxFrame {
    /// M transmit matrices of shape (L·N_t) × N_t.
    pub blocks: Vec<Array2<Complex64>>,
    /// Superposed symbol per (block, stream); what the radar side compensates
    /// with and what SIC reconstructs against.
    pub noma_symbols: Array2<Complex64>,
    /// Per-user symbols per (block, stream), pilots included.
    pub user_symbols: [Array2<Complex64>; 2],
    /// Data payload per user, block-major [block][antenna][bit], pilots excluded.
    pub data_bits: [Vec<u8>; 2],
    pub pilot_mask: Vec<bool>,
    pub pilot_free: bool,
}

impl TxFrame {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Indices of data-bearing blocks in order.
    pub fn data_block_indices(&self) -> Vec<usize> {
        self.pilot_mask
            .iter()
            .enumerate()
            .filter(|(_, &p)| !p)
            .map(|(m, _)| m)
            .collect()
    }
}

/// Assembles one frame. Pilot mode reserves blocks m ≡ 0 (mod M_p) for the
/// known pilot symbol on every stream of both users; bit tensors cover the
/// data blocks only, in block order.
pub fn build_frame(
    cfg: &ScenarioConfig,
    bits_far: &[u8],
    bits_near: &[u8],
    pilot_free: bool,
) -> Result<TxFrame, WaveformError> {
    let n_t = cfg.system.n_tx;
    let m_blocks = cfg.system.blocks;
    let b = cfg.bits_per_symbol();
    let expected = cfg.frame_bits(pilot_free);
    for (who, bits) in [("far", bits_far), ("near", bits_near)] {
        if bits.len() != expected {
            return Err(WaveformError::Shape(format!(
                "{} user bits: got {}, frame carries {}",
                who,
                bits.len(),
                expected
            )));
        }
    }
    let [p1, p2] = cfg.system.power_split;
    let code = gen_mseq(cfg.system.code_length)?;
    let w = gen_hadamard(n_t)?;
    let p = outer_code(&code, &w);

    let pilot_mask: Vec<bool> = (0..m_blocks)
        .map(|m| !pilot_free && m % cfg.system.pilot_period == 0)
        .collect();

    let mut blocks = Vec::with_capacity(m_blocks);
    let mut noma_symbols = Array2::zeros((m_blocks, n_t));
    let mut user_symbols = [Array2::zeros((m_blocks, n_t)), Array2::zeros((m_blocks, n_t))];
    let mut data_idx = 0usize;
    for m in 0..m_blocks {
        let (s1, s2) = if pilot_mask[m] {
            (vec![PILOT_SYMBOL; n_t], vec![PILOT_SYMBOL; n_t])
        } else {
            let lo = data_idx * n_t * b;
            let hi = lo + n_t * b;
            data_idx += 1;
            (qpsk_mod(&bits_far[lo..hi])?, qpsk_mod(&bits_near[lo..hi])?)
        };
        let s_noma = noma_superpose(&s1, &s2, p1, p2)?;
        for j in 0..n_t {
            user_symbols[0][(m, j)] = s1[j];
            user_symbols[1][(m, j)] = s2[j];
            noma_symbols[(m, j)] = s_noma[j];
        }
        blocks.push(build_tx_block(&p, &s_noma)?);
    }

    Ok(TxFrame {
        blocks,
        noma_symbols,
        user_symbols,
        data_bits: [bits_far.to_vec(), bits_near.to_vec()],
        pilot_mask,
        pilot_free,
    })
}

/// Ground-truth bits reshaped to [block][antenna][bit] over all M blocks,
/// pilot blocks filled with the pilot bit pattern (all zeros). This is the
/// label layout the neural receiver trains against in pilot-free mode.
pub fn frame_bit_tensor(frame: &TxFrame, user: usize, cfg: &ScenarioConfig) -> Array3<u8> {
    let n_t = cfg.system.n_tx;
    let b = cfg.bits_per_symbol();
    let mut out = Array3::zeros((cfg.system.blocks, n_t, b));
    let mut data_idx = 0usize;
    for m in 0..cfg.system.blocks {
        if frame.pilot_mask[m] {
            continue;
        }
        for j in 0..n_t {
            for bit in 0..b {
                out[(m, j, bit)] = frame.data_bits[user][(data_idx * n_t + j) * b + bit];
            }
        }
        data_idx += 1;
    }
    out
}
