//! Character-enriched intent classification for resource-constrained targets.
//!
//! Each word is represented by its (optionally pretrained) word embedding
//! concatenated with a character-level feature vector produced by parallel
//! 1-D convolutions and temporal max-pooling. The word sequence is encoded
//! by a unidirectional LSTM whose final hidden state feeds a dense softmax
//! classifier.
//!
//! The crate is self-contained: every numeric kernel (forward and backward)
//! is implemented in [`kernels`], training lives in [`trainer`], and
//! [`store`] provides int8 post-training quantization, a compact binary
//! model format and the deployment [`store::InferenceEngine`].
//!
//! ```no_run
//! use tinyintent::store::InferenceEngine;
//!
//! let engine = InferenceEngine::load("atis.q.odic")?;
//! let prediction = engine.infer("i want to fly from boston to denver")?;
//! println!("{} ({:.3})", prediction.label_name, prediction.confidence());
//! # Ok::<(), tinyintent::Error>(())
//! ```

pub mod bench;
pub mod data;
mod error;
pub mod kernels;
pub mod network;
pub mod store;
pub mod text;
pub mod trainer;

pub use error::{Error, LoadError, Result};
pub use kernels::Real;
