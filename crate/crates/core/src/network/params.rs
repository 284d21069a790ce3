use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::data::PretrainedEmbeddings;
use crate::kernels::{ParameterTensor, Real};
use crate::text::Vocabulary;
use crate::{Error, Result};

/// Position of each tensor in the canonical parameter order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorSlot {
    WordEmbeddings,
    CharEmbeddings,
    ConvWeight(usize),
    ConvBias(usize),
    LstmWeight,
    LstmBias,
    DenseWeight,
    DenseBias,
}

impl TensorSlot {
    pub fn index(self, n_conv: usize) -> usize {
        match self {
            TensorSlot::WordEmbeddings => 0,
            TensorSlot::CharEmbeddings => 1,
            TensorSlot::ConvWeight(i) => 2 + 2 * i,
            TensorSlot::ConvBias(i) => 3 + 2 * i,
            TensorSlot::LstmWeight => 2 + 2 * n_conv,
            TensorSlot::LstmBias => 3 + 2 * n_conv,
            TensorSlot::DenseWeight => 4 + 2 * n_conv,
            TensorSlot::DenseBias => 5 + 2 * n_conv,
        }
    }

    /// All slots for `n_conv` convolutions in canonical order.
    pub fn all(n_conv: usize) -> Vec<TensorSlot> {
        let mut slots = vec![TensorSlot::WordEmbeddings, TensorSlot::CharEmbeddings];
        for i in 0..n_conv {
            slots.push(TensorSlot::ConvWeight(i));
            slots.push(TensorSlot::ConvBias(i));
        }
        slots.extend([
            TensorSlot::LstmWeight,
            TensorSlot::LstmBias,
            TensorSlot::DenseWeight,
            TensorSlot::DenseBias,
        ]);
        slots
    }

    pub fn name(self) -> String {
        match self {
            TensorSlot::WordEmbeddings => "word_embeddings".into(),
            TensorSlot::CharEmbeddings => "char_embeddings".into(),
            TensorSlot::ConvWeight(i) => format!("conv{i}.weight"),
            TensorSlot::ConvBias(i) => format!("conv{i}.bias"),
            TensorSlot::LstmWeight => "lstm.weight".into(),
            TensorSlot::LstmBias => "lstm.bias".into(),
            TensorSlot::DenseWeight => "dense.weight".into(),
            TensorSlot::DenseBias => "dense.bias".into(),
        }
    }

    pub fn shape(self, cfg: &ModelConfig) -> Vec<usize> {
        let h = cfg.lstm_hidden;
        match self {
            TensorSlot::WordEmbeddings => vec![cfg.word_vocab_size, cfg.word_emb_dim],
            TensorSlot::CharEmbeddings => vec![cfg.char_vocab_size, cfg.char_emb_dim],
            TensorSlot::ConvWeight(i) => vec![cfg.conv_filter_counts[i], cfg.conv_kernel_sizes[i], cfg.char_emb_dim],
            TensorSlot::ConvBias(i) => vec![cfg.conv_filter_counts[i]],
            TensorSlot::LstmWeight => vec![4 * h, cfg.word_repr_width() + h],
            TensorSlot::LstmBias => vec![4 * h],
            TensorSlot::DenseWeight => vec![cfg.num_labels, h],
            TensorSlot::DenseBias => vec![cfg.num_labels],
        }
    }
}

/// Read access to the model tensors in canonical order.
pub trait Weights<T> {
    fn tensor(&self, index: usize) -> &[T];
}

impl<T: Real> Weights<T> for [ParameterTensor<T>] {
    fn tensor(&self, index: usize) -> &[T] {
        &self[index].values
    }
}

impl<T> Weights<T> for [Vec<T>] {
    fn tensor(&self, index: usize) -> &[T] {
        &self[index]
    }
}

impl<T> Weights<T> for [&[T]] {
    fn tensor(&self, index: usize) -> &[T] {
        self[index]
    }
}

/// Every trainable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T> {
    pub config: ModelConfig,
    pub tensors: Vec<ParameterTensor<T>>,
}

impl<T: Real> ModelParameters<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = TensorSlot::all(config.conv_kernel_sizes.len())
            .into_iter()
            .map(|slot| ParameterTensor::zeros(slot.name(), &slot.shape(config)))
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn slot(&self, slot: TensorSlot) -> &ParameterTensor<T> {
        &self.tensors[slot.index(self.config.conv_kernel_sizes.len())]
    }

    pub fn slot_mut(&mut self, slot: TensorSlot) -> &mut ParameterTensor<T> {
        let i = slot.index(self.config.conv_kernel_sizes.len());
        &mut self.tensors[i]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(ParameterTensor::len).sum()
    }

    pub fn weights(&self) -> &[ParameterTensor<T>] {
        &self.tensors
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(ParameterTensor::zero_grad);
    }

    /// Value buffers only.
    pub fn into_values(self) -> Vec<Vec<T>> {
        self.tensors.into_iter().map(|t| t.values).collect()
    }

    /// Builds a parameter set from value buffers in canonical order.
    pub fn from_values(config: &ModelConfig, values: Vec<Vec<T>>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if values.len() != params.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                params.tensors.len(),
                values.len()
            )));
        }
        for (t, v) in params.tensors.iter_mut().zip(values) {
            *t = ParameterTensor::from_values(std::mem::take(&mut t.name), &t.shape.clone(), v)?;
        }
        Ok(params)
    }
}

fn fill_uniform<T: Real>(rng: &mut ChaCha8Rng, out: &mut [T], bound: f64) {
    for v in out {
        *v = T::lit(rng.random_range(-bound..bound));
    }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Embedding rows not covered by pretrained vectors are drawn from this range.
pub const EMBEDDING_INIT_BOUND: f64 = 0.05;

/// Seeded random initialization.
///
/// Embeddings are uniform in ±0.05; convolution, LSTM and dense matrices use
/// Glorot-uniform bounds; biases start at zero except the LSTM forget gate
/// (1.0). When `pretrained` is given, every word-vocabulary row whose token
/// has a pretrained vector is overwritten with that vector.
pub fn init_parameters<T: Real>(
    config: &ModelConfig,
    seed: u64,
    pretrained: Option<(&Vocabulary, &PretrainedEmbeddings)>,
) -> Result<ModelParameters<T>> {
    let mut params = ModelParameters::<T>::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_conv = config.conv_kernel_sizes.len();
    let (e, h, d) = (config.char_emb_dim, config.lstm_hidden, config.word_repr_width());

    for slot in TensorSlot::all(n_conv) {
        let values = &mut params.slot_mut(slot).values;
        match slot {
            TensorSlot::WordEmbeddings | TensorSlot::CharEmbeddings => {
                fill_uniform(&mut rng, values, EMBEDDING_INIT_BOUND)
            }
            TensorSlot::ConvWeight(i) => {
                let (k, f) = (config.conv_kernel_sizes[i], config.conv_filter_counts[i]);
                fill_uniform(&mut rng, values, glorot(k * e, k * f));
            }
            TensorSlot::LstmWeight => {
                let (input_bound, recurrent_bound) = (glorot(d, 4 * h), glorot(h, 4 * h));
                for row in values.chunks_exact_mut(d + h) {
                    fill_uniform(&mut rng, &mut row[..d], input_bound);
                    fill_uniform(&mut rng, &mut row[d..], recurrent_bound);
                }
            }
            TensorSlot::LstmBias => values[h..2 * h].fill(T::one()),
            TensorSlot::DenseWeight => fill_uniform(&mut rng, values, glorot(h, config.num_labels)),
            TensorSlot::ConvBias(_) | TensorSlot::DenseBias => {}
        }
    }

    if let Some((vocab, emb)) = pretrained {
        if vocab.len() != config.word_vocab_size {
            return Err(Error::Config(format!(
                "word vocabulary has {} entries but the model expects {}",
                vocab.len(),
                config.word_vocab_size
            )));
        }
        if !emb.is_empty() && emb.dim != config.word_emb_dim {
            return Err(Error::Config(format!(
                "pretrained vectors are {}-d but word_emb_dim is {}",
                emb.dim, config.word_emb_dim
            )));
        }
        let w = config.word_emb_dim;
        let table = &mut params.slot_mut(TensorSlot::WordEmbeddings).values;
        for (id, token) in vocab.tokens().iter().enumerate() {
            if let Some(v) = emb.get(token) {
                for (dst, &src) in table[id * w..(id + 1) * w].iter_mut().zip(v) {
                    *dst = T::lit(src as f64);
                }
            }
        }
    }
    Ok(params)
}
