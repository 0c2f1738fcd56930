//! Desk-scale laboratory for adversarial fine-tuning of a dual-encoder
//! image-text model.
//!
//! The crate contains everything needed to run the full study on a laptop:
//! a deterministic synthetic scene dataset with annotated captions, a small
//! reference dual encoder with its own reverse-mode differentiation tape,
//! PGD attacks with pluggable objectives, the adversarial fine-tuning
//! methods under comparison (caption-guided, embedding-preserving, and
//! label-supervised), zero-shot evaluation, and the caption analyses.
//!
//! All randomness flows from explicit seeds, and per-sample work is keyed by
//! sample index, so results are identical whether the `parallel` feature is
//! enabled or not.

pub mod attacks;
pub mod autodiff;
pub mod captions;
pub mod core_math;
pub mod datagen;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod par;
pub mod rng;
pub mod tensor_io;
pub mod training;

pub use error::{Error, Result};
