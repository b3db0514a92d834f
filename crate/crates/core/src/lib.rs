//! Link-level simulation of zero-padded affine frequency division
//! multiplexing (ZP-AFDM) over doubly selective channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: complex FFT/DFT, banded Cholesky machinery, a small
//!   Hermitian eigensolver, scalar special functions and operation counting.
//! - [`waveform`]: the discrete affine Fourier transform pair and frame
//!   assembly with zero padding or a chirp-periodic prefix.
//! - [`channel`]: doubly selective channel sampling (Jakes Doppler, Rayleigh
//!   gains), time-domain and effective channel matrices.
//! - [`detectors`]: ML, conventional MMSE, banded-Cholesky MMSE and the
//!   iterative MRC time-domain detector.
//! - [`analysis`]: analytical BER predictors (ML union bound, MMSE SINR).
//! - [`modulation`]: Gray-mapped BPSK/QPSK/16QAM alphabets.
//! - [`simulator`]: the Monte-Carlo BER engine and complexity census.

pub mod analysis;
pub mod channel;
pub mod detectors;
pub mod modulation;
pub mod numerics;
pub mod simulator;
pub mod waveform;

pub use num_complex::Complex64;
