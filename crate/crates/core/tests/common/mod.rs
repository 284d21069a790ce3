//! Shared test oracles. Nothing here calls the backward pass.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinyintent::data::DatasetSplit;
use tinyintent::network::{self, init_parameters, ConvActivation, ModelConfig, ModelParameters, Trace};
use tinyintent::text::{EncodedUtterance, TextPipeline, Vocabularies};

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Cross-entropy of one utterance computed through the forward pass only.
pub fn forward_loss(cfg: &ModelConfig, values: &[Vec<f64>], utt: &EncodedUtterance, label: usize) -> f64 {
    let (_, probs) = network::predict(cfg, values, utt).unwrap();
    tinyintent::kernels::cross_entropy(&probs, label).unwrap()
}

/// Central differences of the loss with respect to every parameter.
pub fn numeric_gradient(cfg: &ModelConfig, values: &[Vec<f64>], utt: &EncodedUtterance, label: usize) -> Vec<Vec<f64>> {
    let mut probe = values.to_vec();
    let mut out = Vec::with_capacity(values.len());
    for t in 0..values.len() {
        let mut g = Vec::with_capacity(values[t].len());
        for i in 0..values[t].len() {
            let orig = values[t][i];
            probe[t][i] = orig + FD_STEP;
            let up = forward_loss(cfg, &probe, utt, label);
            probe[t][i] = orig - FD_STEP;
            let down = forward_loss(cfg, &probe, utt, label);
            probe[t][i] = orig;
            g.push((up - down) / (2.0 * FD_STEP));
        }
        out.push(g);
    }
    out
}

pub fn tiny_config(activation: ConvActivation) -> ModelConfig {
    ModelConfig {
        word_emb_dim: 4,
        char_emb_dim: 3,
        conv_kernel_sizes: vec![3, 4, 5],
        conv_filter_counts: vec![2, 2, 2],
        lstm_hidden: 5,
        max_seq_len: 6,
        max_word_len: 6,
        conv_activation: activation,
        ..Default::default()
    }
}

/// Tiny corpus with 8 words over 8 letters: word and char vocabularies of
/// size 10 including `<pad>`/`<unk>`, 3 labels.
pub fn tiny_pipeline(activation: ConvActivation) -> (TextPipeline, ModelConfig) {
    let split = DatasetSplit::from_pairs([("abc bad cafe", "x"), ("dead face", "y"), ("hag gag beef", "z")]);
    let base = tiny_config(activation);
    let vocabs = Vocabularies::build(&split, &base.pipeline()).unwrap();
    let cfg = base.sized_for(&vocabs);
    assert_eq!((cfg.word_vocab_size, cfg.char_vocab_size, cfg.num_labels), (10, 10, 3));
    (TextPipeline::new(base.pipeline(), vocabs), cfg)
}

/// One randomized gradient-check instance: parameters spread over ±0.5,
/// a random utterance (possibly with OOV words) and a random label.
pub fn random_instance(
    pipeline: &TextPipeline,
    cfg: &ModelConfig,
    seed: u64,
) -> (ModelParameters<f64>, EncodedUtterance, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_parameters::<f64>(cfg, seed, None).unwrap();
    for t in &mut params.tensors {
        for v in &mut t.values {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let words = ["abc", "bad", "cafe", "dead", "face", "hag", "gag", "beef", "zeta", "x"];
    let n = rng.random_range(1..=cfg.max_seq_len);
    let text: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
    let utt = pipeline.encode(&text.join(" ")).unwrap();
    let label = rng.random_range(0..cfg.num_labels);
    (params, utt, label)
}

/// Analytic gradient of the same loss via the backward pass.
pub fn analytic_gradient(
    cfg: &ModelConfig,
    params: &mut ModelParameters<f64>,
    utt: &EncodedUtterance,
    label: usize,
) -> (f64, Vec<Vec<f64>>) {
    params.zero_grad();
    let mut trace = Trace::new(cfg);
    let loss = {
        let (vals, mut grads): (Vec<&[f64]>, Vec<&mut [f64]>) = params
            .tensors
            .iter_mut()
            .map(|t| (&t.values[..], &mut t.grad[..]))
            .unzip();
        network::forward_trace(cfg, vals.as_slice(), utt, &mut trace).unwrap();
        network::backward(cfg, vals.as_slice(), &mut grads, utt, label, 1.0, &mut trace).unwrap()
    };
    (loss, params.tensors.iter().map(|t| t.grad.clone()).collect())
}

/// Max relative error between analytic and numeric gradients over every
/// parameter of one instance.
pub fn gradient_check(pipeline: &TextPipeline, cfg: &ModelConfig, seed: u64) -> f64 {
    let (mut params, utt, label) = random_instance(pipeline, cfg, seed);
    let values: Vec<Vec<f64>> = params.tensors.iter().map(|t| t.values.clone()).collect();
    let numeric = numeric_gradient(cfg, &values, &utt, label);
    let (_, analytic) = analytic_gradient(cfg, &mut params, &utt, label);
    analytic
        .iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}
