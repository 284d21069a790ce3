//! The full classifier: embeddings, character CNN, LSTM encoder and the
//! dense softmax head.

mod config;
mod model;
mod params;

pub use config::{ConvActivation, ModelConfig};
pub use model::{
    backward, char_features, encode_sentence, forward, forward_trace, predict, word_representation, Scratch, Trace,
};
pub use params::{init_parameters, ModelParameters, TensorSlot, Weights};
