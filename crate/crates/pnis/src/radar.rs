//! Monostatic sensing: stream separation, range compression, Doppler FFT,
//! virtual-array beamforming, and peak extraction.
//!
//! The receiver knows its own transmit frame, so the data symbols riding on
//! each stream are divided out during range compression. Without that step
//! random symbols scramble both the slow-time Doppler phase and the
//! transmit-side beamforming coherence; with it the maps are exactly
//! symbol-invariant, not just on average.

use ndarray::{Array2, Array4};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::channel::{steering_vector, RadarCube};
use crate::waveform::{OuterCodedSequence, PrbsCode};

#[derive(Debug, thiserror::Error)]
pub enum RadarError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("angle grid is empty")]
    EmptyGrid,
    #[error("fft length {n_fft} shorter than block count {blocks}")]
    FftTooShort { n_fft: usize, blocks: usize },
    #[error("transmit symbol magnitude ~0 at block {block}, stream {stream}; cannot compensate")]
    ZeroSymbol { block: usize, stream: usize },
    #[error("requested {requested} peaks but the map has only {cells} cells")]
    TooManyPeaks { requested: usize, cells: usize },
}

/// Stream-separated, range-compressed data: [rx antenna, tx stream, range bin,
/// block]. One range bin per whole inner-code chip of delay.
#[derive(Debug, Clone)]
pub struct VirtualArrayCube {
    pub data: Array4<Complex64>,
    pub t_block_s: f64,
    pub range_bin_m: f64,
}

#[derive(Debug, Clone)]
pub struct RangeAngleMap {
    /// Power grid, range bins × angle grid points.
    pub power: Array2<f64>,
    pub range_axis_m: Vec<f64>,
    pub angle_axis_rad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RangeDopplerMap {
    /// Power grid, range bins × Doppler bins (zero Doppler at column n_fft/2).
    pub power: Array2<f64>,
    pub range_axis_m: Vec<f64>,
    pub doppler_axis_hz: Vec<f64>,
}

/// Correlates each receive antenna's fast-time signal against every outer-code
/// column at every chip lag, then divides out the known transmit symbol.
///
/// Noiseless single target: output[r, j, τ0, m] = α·e^{j2πf_d·mT}·a_r[r]·a_t[j]
/// exactly, off-lag entries scaled by −1/L, other streams zero.
pub fn stream_separate_and_range_compress(
    cube: &RadarCube,
    p: &OuterCodedSequence,
    code: &PrbsCode,
    symbols: &Array2<Complex64>,
    r_bins: usize,
) -> Result<VirtualArrayCube, RadarError> {
    let (n_rx, span, m_blocks) = cube.data.dim();
    let n_tx = p.cols();
    let l = code.len();
    if p.rows() != span || l * n_tx != span {
        return Err(RadarError::Shape(format!(
            "outer code {}x{} and inner code length {} do not tile fast time {}",
            p.rows(),
            n_tx,
            l,
            span
        )));
    }
    if symbols.dim() != (m_blocks, n_tx) {
        return Err(RadarError::Shape(format!(
            "symbol grid {:?} vs {} blocks x {} streams",
            symbols.dim(),
            m_blocks,
            n_tx
        )));
    }
    if r_bins > l {
        return Err(RadarError::Shape(format!(
            "{} range bins exceed the {}-chip delay period",
            r_bins, l
        )));
    }
    let norm = 1.0 / span as f64;
    let mut data = Array4::zeros((n_rx, n_tx, r_bins, m_blocks));
    for m in 0..m_blocks {
        for j in 0..n_tx {
            let s = symbols[(m, j)];
            if s.norm_sqr() < 1e-18 {
                return Err(RadarError::ZeroSymbol { block: m, stream: j });
            }
            let comp = norm / s;
            for r in 0..n_rx {
                for tau in 0..r_bins {
                    let shift = tau * n_tx;
                    let mut acc = Complex64::ZERO;
                    for t in 0..span {
                        // P is real ±1: correlation needs no conjugation.
                        acc += cube.data[(r, t, m)] * p.entry((t + span - shift) % span, j);
                    }
                    data[(r, j, tau, m)] = acc * comp;
                }
            }
        }
    }
    // T_block = span/B, so one chip lag ↔ c/(2B) = c·T_block/(2·span).
    let range_bin_m =
        crate::config::SPEED_OF_LIGHT * cube.t_block_s / (2.0 * span as f64);
    Ok(VirtualArrayCube { data, t_block_s: cube.t_block_s, range_bin_m })
}

/// DFT across the block axis, zero padded to `n_fft` and fftshifted so column
/// n_fft/2 is zero Doppler and approaching targets land above it.
pub fn doppler_fft(
    v: &VirtualArrayCube,
    n_fft: usize,
) -> Result<Array4<Complex64>, RadarError> {
    let (n_rx, n_tx, r_bins, m_blocks) = v.data.dim();
    if n_fft < m_blocks {
        return Err(RadarError::FftTooShort { n_fft, blocks: m_blocks });
    }
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let half = n_fft / 2;
    let mut out = Array4::zeros((n_rx, n_tx, r_bins, n_fft));
    let mut buf = vec![Complex64::ZERO; n_fft];
    for r in 0..n_rx {
        for j in 0..n_tx {
            for tau in 0..r_bins {
                buf.fill(Complex64::ZERO);
                for m in 0..m_blocks {
                    buf[m] = v.data[(r, j, tau, m)];
                }
                fft.process(&mut buf);
                for (k, val) in buf.iter().enumerate() {
                    out[(r, j, tau, (k + half) % n_fft)] = *val;
                }
            }
        }
    }
    Ok(out)
}

/// Noncoherent |·|² sum over the virtual array per (range, Doppler) cell.
pub fn range_doppler_map(
    doppler: &Array4<Complex64>,
    range_bin_m: f64,
    t_block_s: f64,
) -> RangeDopplerMap {
    let (n_rx, n_tx, r_bins, n_fft) = doppler.dim();
    let mut power = Array2::zeros((r_bins, n_fft));
    for tau in 0..r_bins {
        for nu in 0..n_fft {
            let mut acc = 0.0;
            for r in 0..n_rx {
                for j in 0..n_tx {
                    acc += doppler[(r, j, tau, nu)].norm_sqr();
                }
            }
            power[(tau, nu)] = acc;
        }
    }
    let hz_per_bin = 1.0 / (n_fft as f64 * t_block_s);
    let half = n_fft / 2;
    RangeDopplerMap {
        power,
        range_axis_m: (0..r_bins).map(|t| t as f64 * range_bin_m).collect(),
        doppler_axis_hz: (0..n_fft)
            .map(|i| (i as f64 - half as f64) * hz_per_bin)
            .collect(),
    }
}

/// Per range bin, beamform each block snapshot with a_r(θ)⊗a_t(θ) and average
/// |·|² over blocks (coherent over the virtual array, noncoherent in time).
pub fn range_angle_map(
    v: &VirtualArrayCube,
    angle_grid_rad: &[f64],
) -> Result<RangeAngleMap, RadarError> {
    if angle_grid_rad.is_empty() {
        return Err(RadarError::EmptyGrid);
    }
    let (n_rx, n_tx, r_bins, m_blocks) = v.data.dim();
    let mut power = Array2::zeros((r_bins, angle_grid_rad.len()));
    for (g, &theta) in angle_grid_rad.iter().enumerate() {
        let a_r = steering_vector(theta, n_rx);
        let a_t = steering_vector(theta, n_tx);
        for tau in 0..r_bins {
            let mut acc = 0.0;
            for m in 0..m_blocks {
                let mut beam = Complex64::ZERO;
                for r in 0..n_rx {
                    for j in 0..n_tx {
                        beam += (a_r[r] * a_t[j]).conj() * v.data[(r, j, tau, m)];
                    }
                }
                acc += beam.norm_sqr();
            }
            power[(tau, g)] = acc / m_blocks as f64;
        }
    }
    Ok(RangeAngleMap {
        power,
        range_axis_m: (0..r_bins).map(|t| t as f64 * v.range_bin_m).collect(),
        angle_axis_rad: angle_grid_rad.to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub row_coord: f64,
    pub col_coord: f64,
    pub power: f64,
}

/// Iterative maximum extraction with rectangular guard masking (±guard cells
/// per axis). Ties resolve to the lower row-major index.
pub fn detect_peaks(
    power: &Array2<f64>,
    row_axis: &[f64],
    col_axis: &[f64],
    count: usize,
    guard: usize,
) -> Result<Vec<Peak>, RadarError> {
    let (rows, cols) = power.dim();
    if rows != row_axis.len() || cols != col_axis.len() {
        return Err(RadarError::Shape(format!(
            "map {}x{} vs axes {}x{}",
            rows,
            cols,
            row_axis.len(),
            col_axis.len()
        )));
    }
    if count > rows * cols {
        return Err(RadarError::TooManyPeaks { requested: count, cells: rows * cols });
    }
    let mut masked = vec![false; rows * cols];
    let mut peaks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..rows {
            for j in 0..cols {
                if masked[i * cols + j] {
                    continue;
                }
                let val = power[(i, j)];
                // Strict > keeps the first (lowest row-major index) on ties.
                if best.map_or(true, |(_, _, b)| val > b) {
                    best = Some((i, j, val));
                }
            }
        }
        let (i, j, val) = best.ok_or(RadarError::TooManyPeaks {
            requested: count,
            cells: rows * cols,
        })?;
        peaks.push(Peak {
            row: i,
            col: j,
            row_coord: row_axis[i],
            col_coord: col_axis[j],
            power: val,
        });
        for di in i.saturating_sub(guard)..=(i + guard).min(rows - 1) {
            for dj in j.saturating_sub(guard)..=(j + guard).min(cols - 1) {
                masked[di * cols + dj] = true;
            }
        }
    }
    Ok(peaks)
}

/// Axis description written alongside every exported map grid.
#[derive(Debug, Clone, Serialize)]
pub struct AxisMeta {
    pub label: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Writes the grid as CSV (header row = column axis, first column = row axis)
/// and a JSON sidecar with both axis descriptions.
pub fn export_map(
    csv_path: &std::path::Path,
    meta_path: &std::path::Path,
    power: &Array2<f64>,
    rows: &AxisMeta,
    cols: &AxisMeta,
) -> std::io::Result<()> {
    use std::io::Write;
    let (nr, nc) = power.dim();
    assert_eq!(nr, rows.values.len(), "row axis length");
    assert_eq!(nc, cols.values.len(), "column axis length");
    let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    write!(f, "{}\\{}", rows.label, cols.label)?;
    for v in &cols.values {
        write!(f, ",{}", v)?;
    }
    writeln!(f)?;
    for i in 0..nr {
        write!(f, "{}", rows.values[i])?;
        for j in 0..nc {
            write!(f, ",{}", power[(i, j)])?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    let meta = serde_json::json!({ "rows": rows, "cols": cols });
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
