//! Self-describing binary dataset of decoded cubes and their payload bits.
//!
//! Layout: magic `PNIS`, version u16 LE, header length u32 LE, JSON header,
//! then per record the cube as little-endian f32 interleaved (re, im) in
//! row-major [l][n][m] order, the label bits packed 8-per-byte MSB first,
//! and the u64 LE record seed. Footer: record count u64 LE plus the raw
//! SHA-256 of the header JSON. Every record regenerates from (config, its
//! seed), so a dataset is fully determined by (config digest, root seed).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::channel::{apply_comm_channel, sample_scenario};
use crate::comm::{hadamard_decode_frame, DecodedCube};
use crate::config::ScenarioConfig;
use crate::seeds::{self, stream};
use crate::waveform::{build_frame, gen_hadamard};

const MAGIC: [u8; 4] = *b"PNIS";
const VERSION: u16 = 1;

/// How the channel realization varies across records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelDraw {
    /// Fresh realization per record (normal training data).
    PerRecord,
    /// One realization shared by every record (overfit probes).
    Shared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub config_digest: String,
    pub code_length: usize,
    pub n_tx: usize,
    pub blocks: usize,
    pub bits_per_symbol: usize,
    pub count: u64,
    pub user: usize,
    pub dtype: String,
    pub pilot_free: bool,
    pub noise_figure_range_db: [f64; 2],
    pub channel_draw: ChannelDraw,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn bits_per_record(&self) -> usize {
        self.blocks * self.n_tx * self.bits_per_symbol
    }

    fn cube_floats(&self) -> usize {
        self.code_length * self.n_tx * self.blocks * 2
    }

    fn record_bytes(&self) -> usize {
        4 * self.cube_floats() + self.bits_per_record().div_ceil(8) + 8
    }
}

/// One sample: the per-user decoded cube and the bits that produced it.
#[derive(Debug, Clone)]
pub struct DatasetRecord {
    /// L × N_t × M.
    pub cube: Array3<Complex64>,
    /// Payload layout [block][antenna][bit], all M blocks (pilot-free).
    pub bits: Vec<u8>,
    pub noise_figure_db: f64,
    pub seed: u64,
}

/// The noise figure a record draws from its seed; uniform over the range.
pub fn record_noise_figure(rec_seed: u64, range_db: [f64; 2]) -> f64 {
    let [lo, hi] = range_db;
    if hi > lo {
        seeds::rng(seeds::derive(rec_seed, stream::NOISE_FIGURE)).random_range(lo..hi)
    } else {
        lo
    }
}

/// Builds one record: draw the noise figure and payload bits, push a
/// pilot-free frame through a channel realization and receiver noise, and
/// decode to the per-user cube. With `shared`, that realization replaces the
/// record's own.
pub fn make_record(
    cfg: &ScenarioConfig,
    user: usize,
    rec_seed: u64,
    shared: Option<&crate::channel::ChannelRealization>,
) -> Result<DatasetRecord, HarnessError> {
    let nf = record_noise_figure(rec_seed, cfg.training.noise_figure_range_db);
    let n_bits = cfg.frame_bits(true);
    let mut bit_rng = seeds::rng(seeds::derive(rec_seed, stream::BITS));
    let mut draw_bits = |n: usize| -> Vec<u8> {
        (0..n).map(|_| bit_rng.random_range(0..2u8)).collect()
    };
    let bits_far = draw_bits(n_bits);
    let bits_near = draw_bits(n_bits);
    let frame = build_frame(cfg, &bits_far, &bits_near, true)?;

    let own;
    let real = match shared {
        Some(r) => r,
        None => {
            own = sample_scenario(cfg, rec_seed);
            &own
        }
    };
    let sigma = cfg.comm_noise_var(nf).sqrt();
    let y = apply_comm_channel(&frame, real, user, sigma, rec_seed)?;
    let w = gen_hadamard(cfg.system.n_tx)?;
    let cube = hadamard_decode_frame(&y, &w, user)?;
    Ok(DatasetRecord {
        cube: cube.data,
        bits: frame.data_bits[user].clone(),
        noise_figure_db: nf,
        seed: rec_seed,
    })
}

pub fn generate_dataset(
    cfg: &ScenarioConfig,
    user: usize,
    count: usize,
    seed: u64,
    channel_draw: ChannelDraw,
    path: &Path,
) -> Result<DatasetHeader, HarnessError> {
    if user > 1 {
        return Err(HarnessError::Domain(format!("user index {user} out of range")));
    }
    let header = DatasetHeader {
        config_digest: cfg.digest(),
        code_length: cfg.system.code_length,
        n_tx: cfg.system.n_tx,
        blocks: cfg.system.blocks,
        bits_per_symbol: cfg.bits_per_symbol(),
        count: count as u64,
        user,
        dtype: "f32".into(),
        pilot_free: true,
        noise_figure_range_db: cfg.training.noise_figure_range_db,
        channel_draw,
        seed,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let header_digest = Sha256::digest(&header_bytes);

    let shared = match channel_draw {
        ChannelDraw::PerRecord => None,
        ChannelDraw::Shared => Some(sample_scenario(cfg, seed)),
    };

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for i in 0..count {
        let rec_seed = seeds::derive2(seed, stream::RECORD, i as u64);
        let rec = make_record(cfg, user, rec_seed, shared.as_ref())?;
        write_record(&mut w, &header, &rec)?;
    }
    w.write_all(&(count as u64).to_le_bytes())?;
    w.write_all(&header_digest)?;
    w.flush()?;
    Ok(header)
}

fn write_record(
    w: &mut impl Write,
    h: &DatasetHeader,
    rec: &DatasetRecord,
) -> Result<(), HarnessError> {
    let (l, n, m) = rec.cube.dim();
    if (l, n, m) != (h.code_length, h.n_tx, h.blocks) {
        return Err(HarnessError::Format(format!(
            "record cube {l}x{n}x{m} vs header {}x{}x{}",
            h.code_length, h.n_tx, h.blocks
        )));
    }
    if rec.bits.len() != h.bits_per_record() {
        return Err(HarnessError::Format(format!(
            "record bits {} vs header {}",
            rec.bits.len(),
            h.bits_per_record()
        )));
    }
    for li in 0..l {
        for ni in 0..n {
            for mi in 0..m {
                let v = rec.cube[(li, ni, mi)];
                w.write_all(&(v.re as f32).to_le_bytes())?;
                w.write_all(&(v.im as f32).to_le_bytes())?;
            }
        }
    }
    for chunk in rec.bits.chunks(8) {
        let mut byte = 0u8;
        for (k, &b) in chunk.iter().enumerate() {
            byte |= (b & 1) << (7 - k);
        }
        w.write_all(&[byte])?;
    }
    w.write_all(&rec.seed.to_le_bytes())?;
    Ok(())
}

pub struct DatasetReader {
    r: BufReader<File>,
    header: DatasetHeader,
    read_so_far: u64,
}

impl DatasetReader {
    /// Opens the file, checks magic/version, parses the header, and verifies
    /// the footer (count and header digest) before any record is served.
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let bytes_total = std::fs::metadata(path)?.len();
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(HarnessError::Format("bad magic; not a dataset file".into()));
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        if u16::from_le_bytes(v) != VERSION {
            return Err(HarnessError::Format(format!(
                "unsupported dataset version {}",
                u16::from_le_bytes(v)
            )));
        }
        let mut len4 = [0u8; 4];
        r.read_exact(&mut len4)?;
        let header_len = u32::from_le_bytes(len4) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: DatasetHeader = serde_json::from_slice(&header_bytes)?;

        let body = header.count * header.record_bytes() as u64;
        let expect_total = 4 + 2 + 4 + header_len as u64 + body + 8 + 32;
        if bytes_total != expect_total {
            return Err(HarnessError::Format(format!(
                "file is {bytes_total} bytes, layout implies {expect_total}"
            )));
        }
        // Footer check without disturbing the sequential reader.
        let mut tail = BufReader::new(File::open(path)?);
        std::io::Seek::seek(&mut tail, std::io::SeekFrom::End(-40))?;
        let mut count8 = [0u8; 8];
        tail.read_exact(&mut count8)?;
        if u64::from_le_bytes(count8) != header.count {
            return Err(HarnessError::Format(format!(
                "footer count {} vs header {}",
                u64::from_le_bytes(count8),
                header.count
            )));
        }
        let mut footer_digest = [0u8; 32];
        tail.read_exact(&mut footer_digest)?;
        if footer_digest[..] != Sha256::digest(&header_bytes)[..] {
            return Err(HarnessError::Format("header digest mismatch in footer".into()));
        }
        Ok(Self { r, header, read_so_far: 0 })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    /// Errors unless the dataset was generated from exactly this config.
    pub fn check_config(&self, cfg: &ScenarioConfig) -> Result<(), HarnessError> {
        let want = cfg.digest();
        if self.header.config_digest != want {
            return Err(HarnessError::DigestMismatch {
                found: self.header.config_digest.clone(),
                want,
            });
        }
        Ok(())
    }

    pub fn next_record(&mut self) -> Result<Option<DatasetRecord>, HarnessError> {
        if self.read_so_far >= self.header.count {
            return Ok(None);
        }
        let h = &self.header;
        let mut cube = Array3::zeros((h.code_length, h.n_tx, h.blocks));
        let mut f4 = [0u8; 4];
        for li in 0..h.code_length {
            for ni in 0..h.n_tx {
                for mi in 0..h.blocks {
                    self.r.read_exact(&mut f4)?;
                    let re = f32::from_le_bytes(f4) as f64;
                    self.r.read_exact(&mut f4)?;
                    let im = f32::from_le_bytes(f4) as f64;
                    cube[(li, ni, mi)] = Complex64::new(re, im);
                }
            }
        }
        let n_bits = h.bits_per_record();
        let mut packed = vec![0u8; n_bits.div_ceil(8)];
        self.r.read_exact(&mut packed)?;
        let bits: Vec<u8> =
            (0..n_bits).map(|i| (packed[i / 8] >> (7 - i % 8)) & 1).collect();
        let mut s8 = [0u8; 8];
        self.r.read_exact(&mut s8)?;
        let seed = u64::from_le_bytes(s8);
        self.read_so_far += 1;
        Ok(Some(DatasetRecord {
            cube,
            bits,
            noise_figure_db: record_noise_figure(seed, h.noise_figure_range_db),
            seed,
        }))
    }

    pub fn load_all(mut self) -> Result<(DatasetHeader, Vec<DatasetRecord>), HarnessError> {
        let mut out = Vec::with_capacity(self.header.count as usize);
        while let Some(rec) = self.next_record()? {
            out.push(rec);
        }
        Ok((self.header, out))
    }
}

/// Cube wrapped for the model input pipeline.
pub fn record_cube(rec: &DatasetRecord, user: usize) -> DecodedCube {
    DecodedCube { data: rec.cube.clone(), user }
}

/// RMS of |cube| entries over the whole dataset, the model's input scale.
/// Computed from the f32-quantized stored values so training and inference
/// see the same normalization.
pub fn dataset_rms(records: &[DatasetRecord]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for rec in records {
        for v in rec.cube.iter() {
            acc += v.norm_sqr();
            n += 1;
        }
    }
    if n == 0 { 0.0 } else { (acc / n as f64).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk();
        c.training.dataset_size = 4;
        c
    }

    #[test]
    fn roundtrip_preserves_records() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pnis");
        let header =
            generate_dataset(&cfg, 1, 4, 99, ChannelDraw::PerRecord, &path).unwrap();
        assert_eq!(header.count, 4);
        assert_eq!(header.bits_per_record(), 8 * 4 * 2);

        let reader = DatasetReader::open(&path).unwrap();
        reader.check_config(&cfg).unwrap();
        let (h, recs) = reader.load_all().unwrap();
        assert_eq!(h.user, 1);
        assert_eq!(recs.len(), 4);
        for (i, rec) in recs.iter().enumerate() {
            let rec_seed = seeds::derive2(99, stream::RECORD, i as u64);
            assert_eq!(rec.seed, rec_seed);
            // Post-quantization values match a fresh regeneration.
            let fresh = make_record(&cfg, 1, rec_seed, None).unwrap();
            assert_eq!(rec.bits, fresh.bits);
            assert!((rec.noise_figure_db - fresh.noise_figure_db).abs() < 1e-12);
            for (a, b) in rec.cube.iter().zip(fresh.cube.iter()) {
                assert_eq!(a.re, b.re as f32 as f64);
                assert_eq!(a.im, b.im as f32 as f64);
            }
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.pnis"), dir.path().join("b.pnis"));
        generate_dataset(&cfg, 0, 4, 7, ChannelDraw::PerRecord, &p1).unwrap();
        generate_dataset(&cfg, 0, 4, 7, ChannelDraw::PerRecord, &p2).unwrap();
        let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b);
        // A different seed moves every record.
        let p3 = dir.path().join("c.pnis");
        generate_dataset(&cfg, 0, 4, 8, ChannelDraw::PerRecord, &p3).unwrap();
        assert_ne!(a, std::fs::read(&p3).unwrap());
    }

    #[test]
    fn shared_channel_reuses_one_realization() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pnis");
        generate_dataset(&cfg, 0, 3, 5, ChannelDraw::Shared, &path).unwrap();
        let (h, recs) = DatasetReader::open(&path).unwrap().load_all().unwrap();
        assert_eq!(h.channel_draw, ChannelDraw::Shared);
        // Same channel, same user: noiseless parts of the cubes correlate
        // strongly across records; verify via explicit regeneration.
        let real = sample_scenario(&cfg, 5);
        for (i, rec) in recs.iter().enumerate() {
            let rec_seed = seeds::derive2(5, stream::RECORD, i as u64);
            let fresh = make_record(&cfg, 0, rec_seed, Some(&real)).unwrap();
            for (a, b) in rec.cube.iter().zip(fresh.cube.iter()) {
                assert_eq!(a.re, b.re as f32 as f64);
                assert_eq!(a.im, b.im as f32 as f64);
            }
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let cfg = tiny_cfg();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pnis");
        generate_dataset(&cfg, 0, 2, 11, ChannelDraw::PerRecord, &path).unwrap();

        // Truncation breaks the length check.
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.pnis");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(DatasetReader::open(&cut).is_err());

        // Flipping a header byte breaks the footer digest.
        let mut bad = bytes.clone();
        bad[12] ^= 0x01;
        let flipped = dir.path().join("flip.pnis");
        std::fs::write(&flipped, &bad).unwrap();
        assert!(DatasetReader::open(&flipped).is_err());

        // Wrong magic.
        let mut nm = bytes.clone();
        nm[0] = b'X';
        let wrong = dir.path().join("magic.pnis");
        std::fs::write(&wrong, &nm).unwrap();
        assert!(DatasetReader::open(&wrong).is_err());

        // Digest check against a different config.
        let reader = DatasetReader::open(&path).unwrap();
        let mut other = cfg.clone();
        other.training.seed += 1;
        assert!(matches!(
            reader.check_config(&other),
            Err(HarnessError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn rms_matches_hand_sum() {
        let rec = DatasetRecord {
            cube: Array3::from_shape_fn((1, 1, 2), |(_, _, m)| {
                if m == 0 { Complex64::new(3.0, 4.0) } else { Complex64::new(0.0, 0.0) }
            }),
            bits: vec![0; 4],
            noise_figure_db: 0.0,
            seed: 0,
        };
        // mean(|3+4i|^2, 0)/2 = 12.5 → rms = sqrt(12.5)
        assert!((dataset_rms(&[rec]) - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(dataset_rms(&[]), 0.0);
    }
}
