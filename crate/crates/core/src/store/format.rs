//! Self-describing little-endian model file.
//!
//! ```text
//! "ODIC"  u32 version
//! u32 config_len  config fields (u32 each)
//! labels, words, chars: u32 count, then (u32 len, utf-8 bytes) per token
//! u32 n_tensors, then per tensor:
//!     u32 name_len, name, u8 dtype (0 = f32, 1 = int8 affine), u32 rank, u32 dims...
//!     [f32 scale, i32 zero_point]  (int8 only)
//!     values (4 or 1 bytes each)
//! u64 FNV-1a of every preceding byte
//! ```

use std::path::Path;

use crate::network::{ConvActivation, ModelConfig, ModelParameters, TensorSlot};
use crate::text::{TextPipeline, Vocabularies, Vocabulary};
use crate::{Error, LoadError, Result};

use super::quant::{quantize_tensor, QuantizedTensor};

pub const MAGIC: [u8; 4] = *b"ODIC";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_I8_AFFINE: u8 = 1;
const HEADER_LEN: usize = 8;
const FOOTER_LEN: usize = 8;

/// 64-bit FNV-1a.
pub fn checksum(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorRecord {
    Float {
        name: String,
        shape: Vec<usize>,
        values: Vec<f32>,
    },
    Quantized(QuantizedTensor),
}

impl TensorRecord {
    pub fn name(&self) -> &str {
        match self {
            TensorRecord::Float { name, .. } => name,
            TensorRecord::Quantized(q) => &q.name,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorRecord::Float { shape, .. } => shape,
            TensorRecord::Quantized(q) => &q.shape,
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            TensorRecord::Float { values, .. } => values.clone(),
            TensorRecord::Quantized(q) => q.dequantize(),
        }
    }
}

/// A model bundled with its vocabularies, holding either float weights
/// (a trained model) or int8 weights (a quantized model).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub vocabs: Vocabularies,
    pub tensors: Vec<TensorRecord>,
}

impl ModelFile {
    pub fn from_parameters(params: &ModelParameters<f32>, vocabs: &Vocabularies) -> Result<Self> {
        let file = Self {
            config: params.config.clone(),
            vocabs: vocabs.clone(),
            tensors: params
                .tensors
                .iter()
                .map(|t| TensorRecord::Float {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    values: t.values.clone(),
                })
                .collect(),
        };
        file.validate()?;
        Ok(file)
    }

    /// Copy with every float tensor quantized to int8.
    pub fn quantized(&self) -> Result<Self> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| match t {
                TensorRecord::Float { name, shape, values } => {
                    quantize_tensor(name, shape, values).map(TensorRecord::Quantized)
                }
                TensorRecord::Quantized(q) => Ok(TensorRecord::Quantized(q.clone())),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: self.config.clone(),
            vocabs: self.vocabs.clone(),
            tensors,
        })
    }

    pub fn is_quantized(&self) -> bool {
        self.tensors.iter().all(|t| matches!(t, TensorRecord::Quantized(_)))
    }

    pub fn pipeline(&self) -> TextPipeline {
        TextPipeline::new(self.config.pipeline(), self.vocabs.clone())
    }

    /// Float value buffers in canonical order (dequantizing as needed).
    pub fn values(&self) -> Vec<Vec<f32>> {
        self.tensors.iter().map(TensorRecord::to_f32).collect()
    }

    pub fn parameters(&self) -> Result<ModelParameters<f32>> {
        ModelParameters::from_values(&self.config, self.values())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.shape().iter().product::<usize>()).sum()
    }

    /// Checks the config, vocabulary sizes and tensor names and shapes
    /// against each other.
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        for (what, have, want) in [
            ("word vocabulary", self.vocabs.words.len(), cfg.word_vocab_size),
            ("character vocabulary", self.vocabs.chars.len(), cfg.char_vocab_size),
            ("label map", self.vocabs.labels.len(), cfg.num_labels),
        ] {
            if have != want {
                return Err(Error::Config(format!(
                    "{what} has {have} entries but the config expects {want}"
                )));
            }
        }
        if !self.vocabs.words.has_reserved() || !self.vocabs.chars.has_reserved() || self.vocabs.labels.has_reserved() {
            return Err(Error::Config(
                "word and character vocabularies need <pad>/<unk>; labels must not".into(),
            ));
        }
        let slots = TensorSlot::all(cfg.conv_kernel_sizes.len());
        if slots.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                slots.len(),
                self.tensors.len()
            )));
        }
        for (slot, t) in slots.iter().zip(&self.tensors) {
            if t.name() != slot.name() || t.shape() != slot.shape(cfg).as_slice() {
                return Err(Error::Config(format!(
                    "tensor {:?} {:?} does not match expected {:?} {:?}",
                    t.name(),
                    t.shape(),
                    slot.name(),
                    slot.shape(cfg)
                )));
            }
            if let TensorRecord::Float { values, .. } = t {
                if values.len() != slot.shape(cfg).iter().product::<usize>() {
                    return Err(Error::Config(format!(
                        "tensor {} has the wrong number of values",
                        t.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(HEADER_LEN + FOOTER_LEN + 4 * self.parameter_count()));
        w.0.extend_from_slice(&MAGIC);
        w.u32(FORMAT_VERSION);

        let cfg = encode_config(&self.config);
        w.u32(cfg.len() as u32);
        for v in cfg {
            w.u32(v);
        }
        for vocab in [&self.vocabs.labels, &self.vocabs.words, &self.vocabs.chars] {
            w.u32(vocab.len() as u32);
            for t in vocab.tokens() {
                w.bytes(t.as_bytes());
            }
        }

        w.u32(self.tensors.len() as u32);
        for t in &self.tensors {
            w.bytes(t.name().as_bytes());
            w.0.push(match t {
                TensorRecord::Float { .. } => DTYPE_F32,
                TensorRecord::Quantized(_) => DTYPE_I8_AFFINE,
            });
            w.u32(t.shape().len() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            match t {
                TensorRecord::Float { values, .. } => {
                    for v in values {
                        w.0.extend_from_slice(&v.to_le_bytes());
                    }
                }
                TensorRecord::Quantized(q) => {
                    w.0.extend_from_slice(&q.scale.to_le_bytes());
                    w.0.extend_from_slice(&q.zero_point.to_le_bytes());
                    w.0.extend(q.values.iter().map(|&v| v as u8));
                }
            }
        }
        let sum = checksum(&w.0);
        w.0.extend_from_slice(&sum.to_le_bytes());
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + FOOTER_LEN {
            return Err(LoadError::Truncated(bytes.len()).into());
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if magic != MAGIC {
            return Err(LoadError::BadMagic(magic).into());
        }
        let (payload, footer) = bytes.split_at(bytes.len() - FOOTER_LEN);
        let stored = u64::from_le_bytes(footer.try_into().expect("footer is 8 bytes"));
        let computed = checksum(payload);
        if stored != computed {
            return Err(LoadError::ChecksumMismatch { stored, computed }.into());
        }
        let mut r = Reader { buf: payload, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(LoadError::UnsupportedVersion(version).into());
        }

        let cfg_len = r.u32()? as usize;
        let fields = (0..cfg_len).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let config = decode_config(&fields)?;

        let labels = Vocabulary::from_tokens(r.tokens()?, false)?;
        let words = Vocabulary::from_tokens(r.tokens()?, true)?;
        let chars = Vocabulary::from_tokens(r.tokens()?, true)?;

        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors.min(64));
        for _ in 0..n_tensors {
            let name = r.string()?;
            let dtype = r.u8()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| LoadError::Malformed(format!("tensor {name}: shape {shape:?} overflows")))?;
            match dtype {
                DTYPE_F32 => {
                    let raw = r.take(
                        count
                            .checked_mul(4)
                            .ok_or(LoadError::Malformed("tensor too large".into()))?,
                    )?;
                    let values = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                        .collect();
                    tensors.push(TensorRecord::Float { name, shape, values });
                }
                DTYPE_I8_AFFINE => {
                    let scale = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
                    let zero_point = i32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
                    if !(scale.is_finite() && scale > 0.0) || !(-128..=127).contains(&zero_point) {
                        return Err(LoadError::Malformed(format!(
                            "tensor {name}: invalid scale {scale} or zero point {zero_point}"
                        ))
                        .into());
                    }
                    let values = r.take(count)?.iter().map(|&b| b as i8).collect();
                    tensors.push(TensorRecord::Quantized(QuantizedTensor {
                        name,
                        shape,
                        values,
                        scale,
                        zero_point,
                    }));
                }
                other => return Err(LoadError::Malformed(format!("tensor {name}: unknown dtype {other}")).into()),
            }
        }
        if r.pos != payload.len() {
            return Err(LoadError::Malformed(format!("{} trailing bytes", payload.len() - r.pos)).into());
        }

        let file = Self {
            config,
            vocabs: Vocabularies { words, chars, labels },
            tensors,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(bytes.len())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn encode_config(c: &ModelConfig) -> Vec<u32> {
    let mut v = vec![
        c.word_emb_dim as u32,
        c.char_emb_dim as u32,
        c.conv_kernel_sizes.len() as u32,
    ];
    v.extend(c.conv_kernel_sizes.iter().map(|&k| k as u32));
    v.extend(c.conv_filter_counts.iter().map(|&f| f as u32));
    v.extend([
        c.lstm_hidden as u32,
        c.max_seq_len as u32,
        c.max_word_len as u32,
        c.num_labels as u32,
        c.word_vocab_size as u32,
        c.char_vocab_size as u32,
        c.conv_activation.code(),
        u32::from(c.lowercase),
    ]);
    v
}

fn decode_config(f: &[u32]) -> Result<ModelConfig> {
    let malformed = || LoadError::Malformed(format!("config block of {} fields", f.len()));
    let n_conv = *f.get(2).ok_or_else(malformed)? as usize;
    if f.len() != 3 + 2 * n_conv + 8 {
        return Err(malformed().into());
    }
    let u = |i: usize| f[i] as usize;
    let rest = &f[3 + 2 * n_conv..];
    let activation = ConvActivation::from_code(rest[6])
        .ok_or_else(|| LoadError::Malformed(format!("unknown activation code {}", rest[6])))?;
    if rest[7] > 1 {
        return Err(LoadError::Malformed(format!("lowercase flag {}", rest[7])).into());
    }
    Ok(ModelConfig {
        word_emb_dim: u(0),
        char_emb_dim: u(1),
        conv_kernel_sizes: (0..n_conv).map(|i| u(3 + i)).collect(),
        conv_filter_counts: (0..n_conv).map(|i| u(3 + n_conv + i)).collect(),
        lstm_hidden: rest[0] as usize,
        max_seq_len: rest[1] as usize,
        max_word_len: rest[2] as usize,
        num_labels: rest[3] as usize,
        word_vocab_size: rest[4] as usize,
        char_vocab_size: rest[5] as usize,
        conv_activation: activation,
        lowercase: rest[7] == 1,
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LoadError> {
        if self.buf.len() - self.pos < n {
            return Err(LoadError::Malformed(format!(
                "record at byte {} needs {n} bytes, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, LoadError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, LoadError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| LoadError::Malformed(format!("invalid UTF-8 at byte {}", self.pos - len)))
    }

    fn tokens(&mut self) -> Result<Vec<String>, LoadError> {
        let n = self.u32()? as usize;
        // Each token costs at least its 4-byte length prefix.
        if n > (self.buf.len() - self.pos) / 4 {
            return Err(LoadError::Malformed(format!("vocabulary count {n} exceeds file size")));
        }
        (0..n).map(|_| self.string()).collect()
    }
}
