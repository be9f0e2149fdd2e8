//! Building blocks for point-cloud autoencoder experiments.
//!
//! The crate is organised around a small dense tensor engine with explicit
//! forward/backward passes ([`tensor`], [`nn`], [`optim`]), declarative
//! encoder/decoder construction with single- or multi-head decoders
//! ([`arch`], [`checkpoint`]), reference implementations of the four
//! reconstruction metrics ([`metrics`]), the differentiable multi-head
//! Chamfer loss ([`loss`]), and dataset generation/ingestion ([`data`]).
//!
//! Batch-level evaluation is data-parallel when the default `parallel`
//! feature is enabled; the sequential fallback produces bit-identical
//! results.

pub mod arch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
