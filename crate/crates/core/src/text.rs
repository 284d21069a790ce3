//! Vocabularies and the text → id-sequence pipeline.

use std::collections::HashMap;

use crate::data::DatasetSplit;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token ↔ id mapping.
///
/// Word and character vocabularies reserve id 0 for padding and id 1 for
/// unknown tokens; label maps reserve nothing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
    reserved: bool,
}

impl Vocabulary {
    /// Empty vocabulary holding only `<pad>` and `<unk>`.
    pub fn with_reserved() -> Self {
        let mut v = Self::plain();
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        v.reserved = true;
        v
    }

    /// Empty vocabulary without reserved entries.
    pub fn plain() -> Self {
        Self {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
            reserved: false,
        }
    }

    /// Rebuilds a vocabulary from its tokens in id order.
    pub fn from_tokens(tokens: Vec<String>, reserved: bool) -> Result<Self> {
        if reserved
            && (tokens.first().map(String::as_str) != Some(PAD_TOKEN)
                || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN))
        {
            return Err(Error::Format(format!(
                "vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}"
            )));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            id_to_token: tokens,
            token_to_id,
            reserved,
        })
    }

    /// Returns the id of `token`, adding it if new.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.id_to_token.push(token.to_owned());
        self.token_to_id.insert(token.to_owned(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, falling back to [`UNK`].
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Tokens excluding `<pad>`/`<unk>`.
    pub fn regular_tokens(&self) -> impl Iterator<Item = &str> {
        let skip = if self.reserved { 2 } else { 0 };
        self.id_to_token.iter().skip(skip).map(String::as_str)
    }

    pub fn has_reserved(&self) -> bool {
        self.reserved
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub max_seq_len: usize,
    pub max_word_len: usize,
    pub lowercase: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_seq_len: 25,
            max_word_len: 20,
            lowercase: true,
        }
    }
}

fn normalize_into(token: &str, lowercase: bool, buf: &mut String) {
    buf.clear();
    if lowercase {
        for c in token.chars() {
            buf.extend(c.to_lowercase());
        }
    } else {
        buf.push_str(token);
    }
}

fn non_empty(split: &DatasetSplit) -> Result<()> {
    if split.is_empty() {
        Err(Error::Data("cannot build a vocabulary from an empty split".into()))
    } else {
        Ok(())
    }
}

/// Word vocabulary in first-occurrence order.
pub fn build_word_vocab(train: &DatasetSplit, cfg: &PipelineConfig) -> Result<Vocabulary> {
    non_empty(train)?;
    let mut vocab = Vocabulary::with_reserved();
    let mut buf = String::new();
    for u in train.iter() {
        for tok in u.text.split_whitespace() {
            normalize_into(tok, cfg.lowercase, &mut buf);
            vocab.insert(&buf);
        }
    }
    Ok(vocab)
}

/// Character vocabulary in first-occurrence order.
pub fn build_char_vocab(train: &DatasetSplit, cfg: &PipelineConfig) -> Result<Vocabulary> {
    non_empty(train)?;
    let mut vocab = Vocabulary::with_reserved();
    let mut buf = String::new();
    let mut utf8 = [0u8; 4];
    for u in train.iter() {
        for tok in u.text.split_whitespace() {
            normalize_into(tok, cfg.lowercase, &mut buf);
            for c in buf.chars() {
                vocab.insert(c.encode_utf8(&mut utf8));
            }
        }
    }
    Ok(vocab)
}

/// Intent label map in first-occurrence order.
pub fn build_label_map(train: &DatasetSplit) -> Result<Vocabulary> {
    non_empty(train)?;
    let mut labels = Vocabulary::plain();
    for u in train.iter() {
        labels.insert(&u.intent);
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabularies {
    pub words: Vocabulary,
    pub chars: Vocabulary,
    pub labels: Vocabulary,
}

impl Vocabularies {
    pub fn build(train: &DatasetSplit, cfg: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            words: build_word_vocab(train, cfg)?,
            chars: build_char_vocab(train, cfg)?,
            labels: build_label_map(train)?,
        })
    }
}

/// Fixed-shape id encoding of one utterance.
///
/// `char_ids` is `max_seq_len × max_word_len`, row-major; positions at or
/// beyond `true_length` are [`PAD`] in both arrays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedUtterance {
    pub word_ids: Vec<u32>,
    pub char_ids: Vec<u32>,
    pub true_length: usize,
    pub max_word_len: usize,
}

impl EncodedUtterance {
    pub fn empty(cfg: &PipelineConfig) -> Self {
        Self {
            word_ids: vec![PAD; cfg.max_seq_len],
            char_ids: vec![PAD; cfg.max_seq_len * cfg.max_word_len],
            true_length: 0,
            max_word_len: cfg.max_word_len,
        }
    }

    pub fn max_seq_len(&self) -> usize {
        self.word_ids.len()
    }

    /// Character ids of the word at `pos`.
    pub fn word_chars(&self, pos: usize) -> &[u32] {
        &self.char_ids[pos * self.max_word_len..(pos + 1) * self.max_word_len]
    }

    /// Copy of this encoding re-padded to a different sequence length.
    /// The real tokens must fit.
    pub fn repadded(&self, max_seq_len: usize) -> Self {
        assert!(max_seq_len >= self.true_length);
        let w = self.max_word_len;
        let mut out = Self {
            word_ids: vec![PAD; max_seq_len],
            char_ids: vec![PAD; max_seq_len * w],
            true_length: self.true_length,
            max_word_len: w,
        };
        out.word_ids[..self.true_length].copy_from_slice(&self.word_ids[..self.true_length]);
        out.char_ids[..self.true_length * w].copy_from_slice(&self.char_ids[..self.true_length * w]);
        out
    }
}

/// Vocabularies plus encoding configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPipeline {
    pub config: PipelineConfig,
    pub vocabs: Vocabularies,
}

impl TextPipeline {
    pub fn new(config: PipelineConfig, vocabs: Vocabularies) -> Self {
        Self { config, vocabs }
    }

    pub fn encode(&self, text: &str) -> Result<EncodedUtterance> {
        let mut out = EncodedUtterance::empty(&self.config);
        self.encode_into(text, &mut out, &mut String::new())?;
        Ok(out)
    }

    /// Encodes into caller-provided buffers; allocation free once `scratch`
    /// has grown to the longest token seen.
    pub fn encode_into(&self, text: &str, out: &mut EncodedUtterance, scratch: &mut String) -> Result<()> {
        let cfg = &self.config;
        if out.word_ids.len() != cfg.max_seq_len || out.max_word_len != cfg.max_word_len {
            *out = EncodedUtterance::empty(cfg);
        }
        out.word_ids.fill(PAD);
        out.char_ids.fill(PAD);
        let mut n = 0;
        let mut utf8 = [0u8; 4];
        for tok in text.split_whitespace().take(cfg.max_seq_len) {
            normalize_into(tok, cfg.lowercase, scratch);
            out.word_ids[n] = self.vocabs.words.id_or_unk(scratch);
            let row = &mut out.char_ids[n * cfg.max_word_len..(n + 1) * cfg.max_word_len];
            for (slot, c) in row.iter_mut().zip(scratch.chars()) {
                *slot = self.vocabs.chars.id_or_unk(c.encode_utf8(&mut utf8));
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Input("utterance has no tokens".into()));
        }
        out.true_length = n;
        Ok(())
    }

    /// Tokens of the real (unpadded) positions, `<unk>` for OOV words.
    pub fn decode_words<'a>(&'a self, enc: &EncodedUtterance) -> Vec<&'a str> {
        enc.word_ids[..enc.true_length]
            .iter()
            .map(|&id| self.vocabs.words.token(id).unwrap_or(UNK_TOKEN))
            .collect()
    }
}
