//! Link-level and radar-level simulator for a pilot-free PMCW-NOMA ISAC system.
//!
//! One transmitted frame serves two jobs at once: a phase-coded MIMO radar
//! waveform (m-sequence inner code, Hadamard outer code) and a two-user
//! power-domain NOMA downlink. The crate covers the full loop:
//!
//! - [`waveform`]: codes, QPSK, superposition, frame assembly
//! - [`channel`]: sensing/communication channel sampling and application
//! - [`radar`]: stream separation, range compression, Doppler/angle maps
//! - [`comm`]: Hadamard decode, LS channel estimation, ZF/SIC detection
//! - [`nn`]: minimal reverse-mode autodiff engine (tensors, tape, Adam)
//! - [`t3former`]: two-stage transformer receiver built on [`nn`]
//! - [`harness`]: datasets, training, BER sweeps, goodput, sensing runs
//!
//! Everything is deterministic given (config, seed): fixed iteration orders,
//! counter-derived sub-seeds, no wall-clock anywhere in outputs.

pub mod channel;
pub mod comm;
pub mod config;
pub mod harness;
pub mod nn;
pub mod radar;
pub mod seeds;
pub mod t3former;
pub mod waveform;

pub use config::ScenarioConfig;
