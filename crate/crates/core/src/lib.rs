//! Time-frequency domain speaker separation at desk scale.
//!
//! A self-contained implementation of a cross-band / narrow-band / global
//! attention separation network: dense-tensor reverse-mode autodiff, the
//! STFT signal pipeline, the network itself, permutation-invariant training
//! losses, evaluation metrics, a synthetic mixture generator, and a training
//! loop with checkpointing.

pub mod dft;
pub mod dsp;
pub mod error;
pub mod tensor;
pub mod wav;

pub use error::{Error, Result};
pub use tensor::{grad_check, GradCheckOptions, GradCheckReport, Tape, Tensor, TensorId};
