use super::params::{TensorSlot, Weights};
use super::{ConvActivation, ModelConfig};
use crate::kernels::{
    axpy, conv1d_backward, conv1d_valid, cross_entropy, dense_backward, dense_forward, maxpool_backward, maxpool_time,
    softmax, softmax_cross_entropy_backward, ConvShape, LstmStep, Real,
};
use crate::text::EncodedUtterance;
use crate::{Error, Result};

fn conv_shape(cfg: &ModelConfig, i: usize) -> ConvShape {
    ConvShape {
        len: cfg.max_word_len,
        depth: cfg.char_emb_dim,
        kernel: cfg.conv_kernel_sizes[i],
        filters: cfg.conv_filter_counts[i],
    }
}

fn max_conv_out(cfg: &ModelConfig) -> usize {
    (0..cfg.conv_kernel_sizes.len())
        .map(|i| {
            let s = conv_shape(cfg, i);
            s.out_len() * s.filters
        })
        .max()
        .unwrap_or(0)
}

fn idx(cfg: &ModelConfig, slot: TensorSlot) -> usize {
    slot.index(cfg.conv_kernel_sizes.len())
}

fn gather_rows<T: Real>(table: &[T], width: usize, ids: &[u32], out: &mut [T]) -> Result<()> {
    let rows = table.len() / width;
    for (dst, &id) in out.chunks_exact_mut(width).zip(ids) {
        let id = id as usize;
        if id >= rows {
            return Err(Error::Index { index: id, len: rows });
        }
        dst.copy_from_slice(&table[id * width..(id + 1) * width]);
    }
    Ok(())
}

fn check_utterance(cfg: &ModelConfig, utt: &EncodedUtterance) -> Result<()> {
    if utt.true_length == 0 {
        return Err(Error::Input("utterance has no tokens".into()));
    }
    if utt.true_length > cfg.max_seq_len || utt.true_length > utt.word_ids.len() {
        return Err(Error::Shape(format!(
            "utterance of {} tokens exceeds max_seq_len {}",
            utt.true_length, cfg.max_seq_len
        )));
    }
    if utt.max_word_len != cfg.max_word_len || utt.char_ids.len() != utt.word_ids.len() * utt.max_word_len {
        return Err(Error::Shape(format!(
            "utterance encoded with max_word_len {} but model expects {}",
            utt.max_word_len, cfg.max_word_len
        )));
    }
    Ok(())
}

/// Character features of one word into `out` (Σ filter counts wide).
/// `argmax` receives the pooled positions, `char_emb`/`conv_out` are scratch.
fn char_features_into<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    char_ids: &[u32],
    char_emb: &mut [T],
    conv_out: &mut [T],
    argmax: &mut [usize],
    out: &mut [T],
) -> Result<()> {
    if char_ids.len() != cfg.max_word_len {
        return Err(Error::Shape(format!(
            "word has {} character slots, expected {}",
            char_ids.len(),
            cfg.max_word_len
        )));
    }
    gather_rows(
        w.tensor(idx(cfg, TensorSlot::CharEmbeddings)),
        cfg.char_emb_dim,
        char_ids,
        char_emb,
    )?;
    let mut off = 0;
    for i in 0..cfg.conv_kernel_sizes.len() {
        let shape = conv_shape(cfg, i);
        let f = shape.filters;
        let buf = &mut conv_out[..shape.out_len() * f];
        conv1d_valid(
            shape,
            char_emb,
            w.tensor(idx(cfg, TensorSlot::ConvWeight(i))),
            w.tensor(idx(cfg, TensorSlot::ConvBias(i))),
            buf,
        )?;
        if cfg.conv_activation == ConvActivation::Relu {
            for v in buf.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        maxpool_time(buf, f, &mut out[off..off + f], &mut argmax[off..off + f])?;
        off += f;
    }
    Ok(())
}

/// Word embedding followed by character features.
#[allow(clippy::too_many_arguments)]
fn word_repr_into<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    word_id: u32,
    char_ids: &[u32],
    char_emb: &mut [T],
    conv_out: &mut [T],
    argmax: &mut [usize],
    out: &mut [T],
) -> Result<()> {
    let wd = cfg.word_emb_dim;
    gather_rows(
        w.tensor(idx(cfg, TensorSlot::WordEmbeddings)),
        wd,
        &[word_id],
        &mut out[..wd],
    )?;
    char_features_into(cfg, w, char_ids, char_emb, conv_out, argmax, &mut out[wd..])
}

/// Preallocated buffers for allocation-free inference.
#[derive(Clone, Debug)]
pub struct Scratch<T> {
    char_emb: Vec<T>,
    conv_out: Vec<T>,
    argmax: Vec<usize>,
    x: Vec<T>,
    gates: Vec<T>,
    h: Vec<T>,
    c: Vec<T>,
    h_next: Vec<T>,
    c_next: Vec<T>,
    logits: Vec<T>,
    probs: Vec<T>,
}

impl<T: Real> Scratch<T> {
    pub fn new(cfg: &ModelConfig) -> Self {
        let h = cfg.lstm_hidden;
        Self {
            char_emb: vec![T::zero(); cfg.max_word_len * cfg.char_emb_dim],
            conv_out: vec![T::zero(); max_conv_out(cfg)],
            argmax: vec![0; cfg.char_feature_width()],
            x: vec![T::zero(); cfg.word_repr_width()],
            gates: vec![T::zero(); 4 * h],
            h: vec![T::zero(); h],
            c: vec![T::zero(); h],
            h_next: vec![T::zero(); h],
            c_next: vec![T::zero(); h],
            logits: vec![T::zero(); cfg.num_labels],
            probs: vec![T::zero(); cfg.num_labels],
        }
    }

    /// Class probabilities of the last [`forward`] call.
    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }

    /// Sentence vector of the last encoder run.
    pub fn sentence(&self) -> &[T] {
        &self.h
    }

    /// Heap bytes held by the buffers.
    pub fn heap_bytes(&self) -> usize {
        let t = std::mem::size_of::<T>();
        (self.char_emb.capacity()
            + self.conv_out.capacity()
            + self.x.capacity()
            + self.gates.capacity()
            + 4 * self.h.capacity()
            + 2 * self.logits.capacity())
            * t
            + self.argmax.capacity() * std::mem::size_of::<usize>()
    }
}

fn run_encoder<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    utt: &EncodedUtterance,
    s: &mut Scratch<T>,
) -> Result<()> {
    check_utterance(cfg, utt)?;
    let lstm = cfg.lstm();
    let lstm_w = w.tensor(idx(cfg, TensorSlot::LstmWeight));
    let lstm_b = w.tensor(idx(cfg, TensorSlot::LstmBias));
    s.h.fill(T::zero());
    s.c.fill(T::zero());
    for pos in 0..utt.true_length {
        word_repr_into(
            cfg,
            w,
            utt.word_ids[pos],
            utt.word_chars(pos),
            &mut s.char_emb,
            &mut s.conv_out,
            &mut s.argmax,
            &mut s.x,
        )?;
        lstm.forward(
            lstm_w,
            lstm_b,
            &s.x,
            &s.h,
            &s.c,
            &mut s.gates,
            &mut s.c_next,
            &mut s.h_next,
        )?;
        std::mem::swap(&mut s.h, &mut s.h_next);
        std::mem::swap(&mut s.c, &mut s.c_next);
    }
    Ok(())
}

fn argmax_lowest<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// Classifies one utterance; returns the predicted label id and leaves the
/// probabilities in `scratch`. Does not allocate.
pub fn forward<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    utt: &EncodedUtterance,
    scratch: &mut Scratch<T>,
) -> Result<usize> {
    run_encoder(cfg, w, utt, scratch)?;
    dense_forward(
        &scratch.h,
        w.tensor(idx(cfg, TensorSlot::DenseWeight)),
        w.tensor(idx(cfg, TensorSlot::DenseBias)),
        &mut scratch.logits,
    )?;
    softmax(&scratch.logits, &mut scratch.probs)?;
    Ok(argmax_lowest(&scratch.probs))
}

/// Allocating convenience around [`forward`]: `(label_id, probabilities)`.
pub fn predict<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    utt: &EncodedUtterance,
) -> Result<(usize, Vec<T>)> {
    let mut s = Scratch::new(cfg);
    let label = forward(cfg, w, utt, &mut s)?;
    Ok((label, s.probs))
}

/// Sentence vector: LSTM hidden state after the last real token.
pub fn encode_sentence<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    utt: &EncodedUtterance,
) -> Result<Vec<T>> {
    let mut s = Scratch::new(cfg);
    run_encoder(cfg, w, utt, &mut s)?;
    Ok(s.h)
}

/// Character feature vector of a single word (`max_word_len` char ids).
pub fn char_features<T: Real, W: Weights<T> + ?Sized>(cfg: &ModelConfig, w: &W, char_ids: &[u32]) -> Result<Vec<T>> {
    let mut s = Scratch::new(cfg);
    let mut out = vec![T::zero(); cfg.char_feature_width()];
    char_features_into(
        cfg,
        w,
        char_ids,
        &mut s.char_emb,
        &mut s.conv_out,
        &mut s.argmax,
        &mut out,
    )?;
    Ok(out)
}

/// Word representation: `[word embedding | character features]`.
pub fn word_representation<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    word_id: u32,
    char_ids: &[u32],
) -> Result<Vec<T>> {
    let mut s = Scratch::new(cfg);
    let mut out = vec![T::zero(); cfg.word_repr_width()];
    word_repr_into(
        cfg,
        w,
        word_id,
        char_ids,
        &mut s.char_emb,
        &mut s.conv_out,
        &mut s.argmax,
        &mut out,
    )?;
    Ok(out)
}

/// Forward activations kept for [`backward`], plus backward scratch.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    len: usize,
    xs: Vec<T>,
    argmax: Vec<usize>,
    gates: Vec<T>,
    hs: Vec<T>,
    cs: Vec<T>,
    logits: Vec<T>,
    probs: Vec<T>,
    char_emb: Vec<T>,
    conv_out: Vec<T>,
    d_logits: Vec<T>,
    dx: Vec<T>,
    dh: Vec<T>,
    dc: Vec<T>,
    dh_prev: Vec<T>,
    dc_prev: Vec<T>,
    dz: Vec<T>,
    d_pooled: Vec<T>,
    d_char_emb: Vec<T>,
}

impl<T: Real> Trace<T> {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (s, d, h, k) = (cfg.max_seq_len, cfg.word_repr_width(), cfg.lstm_hidden, cfg.num_labels);
        let z = T::zero();
        Self {
            len: 0,
            xs: vec![z; s * d],
            argmax: vec![0; s * cfg.char_feature_width()],
            gates: vec![z; s * 4 * h],
            hs: vec![z; (s + 1) * h],
            cs: vec![z; (s + 1) * h],
            logits: vec![z; k],
            probs: vec![z; k],
            char_emb: vec![z; cfg.max_word_len * cfg.char_emb_dim],
            conv_out: vec![z; max_conv_out(cfg)],
            d_logits: vec![z; k],
            dx: vec![z; d],
            dh: vec![z; h],
            dc: vec![z; h],
            dh_prev: vec![z; h],
            dc_prev: vec![z; h],
            dz: vec![z; 4 * h],
            d_pooled: vec![z; cfg.conv_filter_counts.iter().copied().max().unwrap_or(0)],
            d_char_emb: vec![z; cfg.max_word_len * cfg.char_emb_dim],
        }
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }
}

/// Forward pass recording the activations needed by [`backward`].
/// Returns the predicted label.
pub fn forward_trace<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    utt: &EncodedUtterance,
    tr: &mut Trace<T>,
) -> Result<usize> {
    check_utterance(cfg, utt)?;
    let (d, h, tf) = (cfg.word_repr_width(), cfg.lstm_hidden, cfg.char_feature_width());
    let lstm = cfg.lstm();
    let lstm_w = w.tensor(idx(cfg, TensorSlot::LstmWeight));
    let lstm_b = w.tensor(idx(cfg, TensorSlot::LstmBias));
    tr.len = utt.true_length;
    tr.hs[..h].fill(T::zero());
    tr.cs[..h].fill(T::zero());
    for s in 0..utt.true_length {
        let x = &mut tr.xs[s * d..(s + 1) * d];
        word_repr_into(
            cfg,
            w,
            utt.word_ids[s],
            utt.word_chars(s),
            &mut tr.char_emb,
            &mut tr.conv_out,
            &mut tr.argmax[s * tf..(s + 1) * tf],
            x,
        )?;
        let (h_done, h_next) = tr.hs.split_at_mut((s + 1) * h);
        let (c_done, c_next) = tr.cs.split_at_mut((s + 1) * h);
        lstm.forward(
            lstm_w,
            lstm_b,
            &tr.xs[s * d..(s + 1) * d],
            &h_done[s * h..],
            &c_done[s * h..],
            &mut tr.gates[s * 4 * h..(s + 1) * 4 * h],
            &mut c_next[..h],
            &mut h_next[..h],
        )?;
    }
    let last = utt.true_length * h;
    dense_forward(
        &tr.hs[last..last + h],
        w.tensor(idx(cfg, TensorSlot::DenseWeight)),
        w.tensor(idx(cfg, TensorSlot::DenseBias)),
        &mut tr.logits,
    )?;
    softmax(&tr.logits, &mut tr.probs)?;
    Ok(argmax_lowest(&tr.probs))
}

/// Backpropagates `scale · cross_entropy` for the utterance recorded in
/// `tr` (by [`forward_trace`] with the same weights) and accumulates the
/// gradients into `grads` (canonical tensor order). Returns the unscaled
/// loss.
#[allow(clippy::too_many_arguments)]
pub fn backward<T: Real, W: Weights<T> + ?Sized>(
    cfg: &ModelConfig,
    w: &W,
    grads: &mut [&mut [T]],
    utt: &EncodedUtterance,
    label: usize,
    scale: T,
    tr: &mut Trace<T>,
) -> Result<T> {
    check_utterance(cfg, utt)?;
    if tr.len != utt.true_length {
        return Err(Error::Protocol(
            "backward called without a matching forward_trace".into(),
        ));
    }
    let n_conv = cfg.conv_kernel_sizes.len();
    if grads.len() != 6 + 2 * n_conv {
        return Err(Error::Shape(format!(
            "expected {} gradient buffers, got {}",
            6 + 2 * n_conv,
            grads.len()
        )));
    }
    let loss = cross_entropy(&tr.probs, label)?;
    let (d, h, tf) = (cfg.word_repr_width(), cfg.lstm_hidden, cfg.char_feature_width());
    let (wd, e) = (cfg.word_emb_dim, cfg.char_emb_dim);
    let lstm = cfg.lstm();
    let slot = |s: TensorSlot| idx(cfg, s);

    softmax_cross_entropy_backward(&tr.probs, label, scale, &mut tr.d_logits)?;
    {
        let last = utt.true_length * h;
        let [gw, gb] = grads
            .get_disjoint_mut([slot(TensorSlot::DenseWeight), slot(TensorSlot::DenseBias)])
            .expect("distinct slots");
        dense_backward(
            &tr.hs[last..last + h],
            w.tensor(slot(TensorSlot::DenseWeight)),
            &tr.d_logits,
            gw,
            gb,
            &mut tr.dh,
        )?;
    }
    tr.dc.fill(T::zero());

    let lstm_w = w.tensor(slot(TensorSlot::LstmWeight));
    for s in (0..utt.true_length).rev() {
        let step = LstmStep {
            x: &tr.xs[s * d..(s + 1) * d],
            h_prev: &tr.hs[s * h..(s + 1) * h],
            c_prev: &tr.cs[s * h..(s + 1) * h],
            gates: &tr.gates[s * 4 * h..(s + 1) * 4 * h],
            c: &tr.cs[(s + 1) * h..(s + 2) * h],
        };
        {
            let [gw, gb] = grads
                .get_disjoint_mut([slot(TensorSlot::LstmWeight), slot(TensorSlot::LstmBias)])
                .expect("distinct slots");
            lstm.backward(
                lstm_w,
                step,
                &tr.dh,
                &tr.dc,
                gw,
                gb,
                &mut tr.dx,
                &mut tr.dh_prev,
                &mut tr.dc_prev,
                &mut tr.dz,
            )?;
        }
        std::mem::swap(&mut tr.dh, &mut tr.dh_prev);
        std::mem::swap(&mut tr.dc, &mut tr.dc_prev);

        let word = utt.word_ids[s] as usize;
        let g_words = &mut grads[slot(TensorSlot::WordEmbeddings)];
        axpy(T::one(), &tr.dx[..wd], &mut g_words[word * wd..(word + 1) * wd]);

        // character branch: max-pool -> activation -> convolution -> embeddings
        let char_ids = utt.word_chars(s);
        gather_rows(
            w.tensor(slot(TensorSlot::CharEmbeddings)),
            e,
            char_ids,
            &mut tr.char_emb,
        )?;
        tr.d_char_emb.fill(T::zero());
        let pooled = &tr.xs[s * d + wd..(s + 1) * d];
        let argmax = &tr.argmax[s * tf..(s + 1) * tf];
        let mut off = 0;
        for i in 0..n_conv {
            let shape = conv_shape(cfg, i);
            let f = shape.filters;
            for j in 0..f {
                let passes = match cfg.conv_activation {
                    ConvActivation::Identity => true,
                    ConvActivation::Relu => pooled[off + j] > T::zero(),
                };
                tr.d_pooled[j] = if passes { tr.dx[wd + off + j] } else { T::zero() };
            }
            let d_conv = &mut tr.conv_out[..shape.out_len() * f];
            d_conv.fill(T::zero());
            maxpool_backward(&tr.d_pooled[..f], &argmax[off..off + f], d_conv)?;
            let [gw, gb] = grads
                .get_disjoint_mut([slot(TensorSlot::ConvWeight(i)), slot(TensorSlot::ConvBias(i))])
                .expect("distinct slots");
            conv1d_backward(
                shape,
                &tr.char_emb,
                w.tensor(slot(TensorSlot::ConvWeight(i))),
                d_conv,
                gw,
                gb,
                Some(&mut tr.d_char_emb),
            )?;
            off += f;
        }
        let g_chars = &mut grads[slot(TensorSlot::CharEmbeddings)];
        for (row, &c) in tr.d_char_emb.chunks_exact(e).zip(char_ids) {
            let c = c as usize;
            axpy(T::one(), row, &mut g_chars[c * e..(c + 1) * e]);
        }
    }
    Ok(loss)
}
