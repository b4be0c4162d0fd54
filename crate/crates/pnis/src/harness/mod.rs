//! Orchestration: dataset generation and persistence, training, evaluation
//! sweeps, sensing map export. Everything is keyed by (config digest, seed)
//! and regenerates byte-identically.

pub mod dataset;
pub mod eval;
pub mod gradcheck;
pub mod selftest;
pub mod sense;
pub mod train;

use crate::channel::ChannelError;
use crate::comm::CommError;
use crate::config::ConfigError;
use crate::nn::NnError;
use crate::radar::RadarError;
use crate::t3former::T3Error;
use crate::waveform::WaveformError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset format: {0}")]
    Format(String),
    #[error("config digest mismatch: dataset built for {found}, config is {want}")]
    DigestMismatch { found: String, want: String },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Radar(#[from] RadarError),
    #[error(transparent)]
    Model(#[from] T3Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
