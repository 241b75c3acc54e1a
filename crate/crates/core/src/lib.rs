//! Blind extraction of a moving source of interest from microphone-array
//! recordings under a constant-separating-vector mixing model.
//!
//! The mixture is analyzed by a short-time Fourier transform and split into
//! blocks of frames. Within each block the SOI has its own mixing vector,
//! but one separating vector per frequency serves the whole recording.
//! Three estimators are provided: block-wise gradient ascent on the
//! contrast ([`algorithms::bogive_w`]) and auxiliary-function updates with
//! and without a pilot signal ([`algorithms::block_auxive`]).

pub mod algorithms;
pub mod config;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod simulate;
pub mod sourcemodel;
pub mod stft;
pub mod wav;

pub use algorithms::{AlgoConfig, ExtractionResult, Init, Method};
pub use error::{Error, Result};
pub use model::{ExtractionState, MixingVectors, SeparatingVectors};
pub use sourcemodel::PilotSignal;
pub use stft::{SpectralTensor, StftConfig, Waveform, WindowKind};
