//! Post-training quantization, the binary model format and the inference
//! engine.

mod engine;
mod format;
mod quant;

pub use engine::{InferenceEngine, IntentPrediction};
pub use format::{checksum, ModelFile, TensorRecord, FORMAT_VERSION, MAGIC};
pub use quant::{quantize, quantize_tensor, QuantizedTensor};
