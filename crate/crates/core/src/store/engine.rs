use std::path::Path;
use std::sync::Mutex;

use crate::network::{self, ModelConfig, Scratch};
use crate::text::{EncodedUtterance, TextPipeline};
use crate::{Error, Result};

use super::format::ModelFile;

#[derive(Clone, Debug, PartialEq)]
pub struct IntentPrediction {
    pub label_id: usize,
    pub label_name: String,
    pub probabilities: Vec<f32>,
}

impl IntentPrediction {
    /// Probability of the predicted label.
    pub fn confidence(&self) -> f32 {
        self.probabilities[self.label_id]
    }
}

struct Buffers {
    encoded: EncodedUtterance,
    token: String,
    net: Scratch<f32>,
}

/// Frozen float model ready for single-utterance inference.
///
/// Weights are dequantized once at construction and every buffer needed by
/// [`classify`](Self::classify) is allocated up front. Concurrent callers
/// are serialized on an internal lock.
pub struct InferenceEngine {
    config: ModelConfig,
    pipeline: TextPipeline,
    weights: Vec<Vec<f32>>,
    buffers: Mutex<Buffers>,
}

impl InferenceEngine {
    pub fn new(file: &ModelFile) -> Result<Self> {
        file.validate()?;
        let config = file.config.clone();
        let pipeline = file.pipeline();
        let longest = pipeline
            .vocabs
            .words
            .tokens()
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0);
        let buffers = Buffers {
            encoded: EncodedUtterance::empty(&pipeline.config),
            token: String::with_capacity(longest.max(64)),
            net: Scratch::new(&config),
        };
        Ok(Self {
            weights: file.values(),
            config,
            pipeline,
            buffers: Mutex::new(buffers),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(&ModelFile::load(path)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn pipeline(&self) -> &TextPipeline {
        &self.pipeline
    }

    pub fn weights(&self) -> &[Vec<f32>] {
        &self.weights
    }

    pub fn label_name(&self, id: usize) -> Option<&str> {
        self.pipeline.vocabs.labels.token(id as u32)
    }

    /// Encodes, runs the network and returns the predicted label id. Does
    /// not allocate once the token buffer has grown to the longest token.
    pub fn classify(&self, text: &str) -> Result<usize> {
        self.with_buffers(text, |label, _| label)
    }

    pub fn infer(&self, text: &str) -> Result<IntentPrediction> {
        let (label_id, probabilities) = self.with_buffers(text, |label, probs| (label, probs.to_vec()))?;
        let label_name = self
            .label_name(label_id)
            .ok_or(Error::Index {
                index: label_id,
                len: self.config.num_labels,
            })?
            .to_owned();
        Ok(IntentPrediction {
            label_id,
            label_name,
            probabilities,
        })
    }

    fn with_buffers<R>(&self, text: &str, f: impl FnOnce(usize, &[f32]) -> R) -> Result<R> {
        let mut guard = self.buffers.lock().unwrap_or_else(|p| p.into_inner());
        let Buffers { encoded, token, net } = &mut *guard;
        self.pipeline.encode_into(text, encoded, token)?;
        let label = network::forward(&self.config, self.weights.as_slice(), encoded, net)?;
        Ok(f(label, net.probabilities()))
    }

    /// Heap bytes held by weights and scratch buffers.
    pub fn heap_bytes(&self) -> usize {
        let weights: usize = self.weights.iter().map(|w| w.capacity() * 4).sum();
        let b = self.buffers.lock().unwrap_or_else(|p| p.into_inner());
        weights
            + b.net.heap_bytes()
            + (b.encoded.word_ids.capacity() + b.encoded.char_ids.capacity()) * 4
            + b.token.capacity()
    }
}
