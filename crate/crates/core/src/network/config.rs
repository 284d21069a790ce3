use crate::kernels::LstmCell;
use crate::text::{PipelineConfig, Vocabularies};
use crate::{Error, Result};

/// Nonlinearity applied to convolution outputs before max-pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvActivation {
    Identity,
    #[default]
    Relu,
}

impl ConvActivation {
    pub fn code(self) -> u32 {
        match self {
            ConvActivation::Identity => 0,
            ConvActivation::Relu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ConvActivation::Identity),
            1 => Some(ConvActivation::Relu),
            _ => None,
        }
    }
}

/// Architecture hyperparameters. Defaults are the benchmark settings:
/// 50-d words, 15-d characters, kernels (3, 4, 5) with (10, 20, 30)
/// filters, 128 LSTM units, 25 words of at most 20 characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub word_emb_dim: usize,
    pub char_emb_dim: usize,
    pub conv_kernel_sizes: Vec<usize>,
    pub conv_filter_counts: Vec<usize>,
    pub lstm_hidden: usize,
    pub max_seq_len: usize,
    pub max_word_len: usize,
    pub num_labels: usize,
    pub word_vocab_size: usize,
    pub char_vocab_size: usize,
    pub conv_activation: ConvActivation,
    pub lowercase: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_emb_dim: 50,
            char_emb_dim: 15,
            conv_kernel_sizes: vec![3, 4, 5],
            conv_filter_counts: vec![10, 20, 30],
            lstm_hidden: 128,
            max_seq_len: 25,
            max_word_len: 20,
            num_labels: 0,
            word_vocab_size: 0,
            char_vocab_size: 0,
            conv_activation: ConvActivation::Relu,
            lowercase: true,
        }
    }
}

impl ModelConfig {
    /// Copy of `self` sized for the given vocabularies.
    pub fn sized_for(&self, vocabs: &Vocabularies) -> Self {
        Self {
            word_vocab_size: vocabs.words.len(),
            char_vocab_size: vocabs.chars.len(),
            num_labels: vocabs.labels.len(),
            ..self.clone()
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            max_seq_len: self.max_seq_len,
            max_word_len: self.max_word_len,
            lowercase: self.lowercase,
        }
    }

    /// Width of the concatenated character features (Σ filter counts).
    pub fn char_feature_width(&self) -> usize {
        self.conv_filter_counts.iter().sum()
    }

    /// LSTM input width: word embedding plus character features.
    pub fn word_repr_width(&self) -> usize {
        self.word_emb_dim + self.char_feature_width()
    }

    pub fn lstm(&self) -> LstmCell {
        LstmCell {
            input: self.word_repr_width(),
            hidden: self.lstm_hidden,
        }
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let (d, h, e) = (self.word_repr_width(), self.lstm_hidden, self.char_emb_dim);
        let conv: usize = self
            .conv_kernel_sizes
            .iter()
            .zip(&self.conv_filter_counts)
            .map(|(k, f)| k * e * f + f)
            .sum();
        self.word_vocab_size * self.word_emb_dim
            + self.char_vocab_size * e
            + conv
            + 4 * (h * (d + h) + h)
            + (self.num_labels * h + self.num_labels)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.conv_kernel_sizes.is_empty() || self.conv_kernel_sizes.len() != self.conv_filter_counts.len() {
            return fail(format!(
                "{} kernel sizes but {} filter counts",
                self.conv_kernel_sizes.len(),
                self.conv_filter_counts.len()
            ));
        }
        for (name, v) in [
            ("word_emb_dim", self.word_emb_dim),
            ("char_emb_dim", self.char_emb_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("max_seq_len", self.max_seq_len),
            ("max_word_len", self.max_word_len),
            ("num_labels", self.num_labels),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.conv_kernel_sizes.contains(&0) || self.conv_filter_counts.contains(&0) {
            return fail("kernel sizes and filter counts must be positive".into());
        }
        let largest = *self.conv_kernel_sizes.iter().max().unwrap_or(&0);
        if largest > self.max_word_len {
            return fail(format!(
                "kernel size {largest} exceeds max_word_len {}",
                self.max_word_len
            ));
        }
        if self.word_vocab_size < 2 || self.char_vocab_size < 2 {
            return fail("word and character vocabularies need at least <pad> and <unk>".into());
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, v: &str) -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {v:?}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',').map(|x| num(key, x)).collect()
        }
        match key {
            "word_emb_dim" => self.word_emb_dim = num(key, value)?,
            "char_emb_dim" => self.char_emb_dim = num(key, value)?,
            "kernel_sizes" | "conv_kernel_sizes" => self.conv_kernel_sizes = list(key, value)?,
            "filter_counts" | "conv_filter_counts" => self.conv_filter_counts = list(key, value)?,
            "lstm_hidden" => self.lstm_hidden = num(key, value)?,
            "max_seq_len" => self.max_seq_len = num(key, value)?,
            "max_word_len" => self.max_word_len = num(key, value)?,
            "conv_activation" => {
                self.conv_activation = match value {
                    "relu" => ConvActivation::Relu,
                    "identity" | "linear" => ConvActivation::Identity,
                    other => return Err(Error::Config(format!("unknown conv_activation {other:?}"))),
                }
            }
            "lowercase" => {
                self.lowercase = value
                    .parse()
                    .map_err(|_| Error::Config(format!("lowercase: expected true/false, got {value:?}")))?
            }
            other => return Err(Error::Config(format!("unknown model setting {other:?}"))),
        }
        Ok(())
    }
}
