//! Mini-batch training with Adam, per-epoch validation model selection and
//! the repeated-seed experiment.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, DatasetSplit, PretrainedEmbeddings};
use crate::kernels::{adam_step, AdamState};
use crate::network::{self, init_parameters, ModelConfig, ModelParameters, Scratch, Trace, Weights};
use crate::text::{EncodedUtterance, TextPipeline, Vocabularies};
use crate::{Error, Result};

/// Environment variable capping the number of concurrent training runs.
pub const THREADS_ENV: &str = "TINYINTENT_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 10,
            lr: 0.001,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    /// Applies a `key=value` override (`batch_size`, `epochs`, `lr`, `shuffle`).
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {value:?}"));
        match key {
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("an integer"))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad("an integer"))?,
            "lr" => self.lr = value.parse().map_err(|_| bad("a number"))?,
            "shuffle" => self.shuffle = value.parse().map_err(|_| bad("true or false"))?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Index ranges of the sequential mini-batches over `n` examples; the last
/// batch may be partial.
pub fn batch_ranges(n: usize, batch_size: usize) -> impl Iterator<Item = Range<usize>> {
    assert!(batch_size > 0);
    (0..n.div_ceil(batch_size)).map(move |b| b * batch_size..((b + 1) * batch_size).min(n))
}

/// An encoded split. Labels unknown to the training label map are `None`
/// and always count as errors.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub utterances: Vec<EncodedUtterance>,
    pub labels: Vec<Option<usize>>,
}

impl LabeledSet {
    pub fn encode(pipeline: &TextPipeline, split: &DatasetSplit) -> Result<Self> {
        let mut utterances = Vec::with_capacity(split.len());
        let mut labels = Vec::with_capacity(split.len());
        for u in split.iter() {
            utterances.push(pipeline.encode(&u.text)?);
            labels.push(pipeline.vocabs.labels.get(&u.intent).map(|id| id as usize));
        }
        Ok(Self { utterances, labels })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// Vocabularies built from the training split, the model config sized to
/// them, and all three splits encoded.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub pipeline: TextPipeline,
    pub config: ModelConfig,
    pub train: LabeledSet,
    pub valid: LabeledSet,
    pub test: LabeledSet,
}

impl PreparedData {
    pub fn new(dataset: &Dataset, base: &ModelConfig) -> Result<Self> {
        for (name, split) in [
            ("train", &dataset.train),
            ("valid", &dataset.valid),
            ("test", &dataset.test),
        ] {
            if split.is_empty() {
                return Err(Error::Data(format!("{name} split is empty")));
            }
        }
        let pcfg = base.pipeline();
        let vocabs = Vocabularies::build(&dataset.train, &pcfg)?;
        let config = base.sized_for(&vocabs);
        config.validate()?;
        let pipeline = TextPipeline::new(pcfg, vocabs);
        Ok(Self {
            train: LabeledSet::encode(&pipeline, &dataset.train)?,
            valid: LabeledSet::encode(&pipeline, &dataset.valid)?,
            test: LabeledSet::encode(&pipeline, &dataset.test)?,
            pipeline,
            config,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    /// Mean per-utterance cross-entropy over the epoch.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub best_params: ModelParameters<f32>,
    pub best_val_accuracy: f64,
    /// Zero-based epoch the snapshot was taken after.
    pub best_epoch: usize,
    pub test_accuracy: f64,
    pub history: Vec<EpochStats>,
}

/// Fraction of `set` classified correctly, one utterance at a time.
pub fn evaluate<W: Weights<f32> + ?Sized>(cfg: &ModelConfig, weights: &W, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty split".into()));
    }
    let mut scratch = Scratch::new(cfg);
    let mut correct = 0usize;
    for (utt, label) in set.utterances.iter().zip(&set.labels) {
        let predicted = network::forward(cfg, weights, utt, &mut scratch)?;
        if *label == Some(predicted) {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Predicted label ids for every utterance of `set`.
pub fn predictions<W: Weights<f32> + ?Sized>(cfg: &ModelConfig, weights: &W, set: &LabeledSet) -> Result<Vec<usize>> {
    let mut scratch = Scratch::new(cfg);
    set.utterances
        .iter()
        .map(|utt| network::forward(cfg, weights, utt, &mut scratch))
        .collect()
}

/// Trains one model from scratch with `tcfg.seed` driving both the
/// initialization and the per-epoch shuffles.
pub fn train_run(
    data: &PreparedData,
    tcfg: &TrainConfig,
    pretrained: Option<&PretrainedEmbeddings>,
) -> Result<RunResult> {
    tcfg.validate()?;
    if data.train.is_empty() || data.valid.is_empty() || data.test.is_empty() {
        return Err(Error::Data("train, valid and test splits must be non-empty".into()));
    }
    let cfg = &data.config;
    let mut train_labels = Vec::with_capacity(data.train.len());
    for (i, label) in data.train.labels.iter().enumerate() {
        match label {
            Some(l) if *l < cfg.num_labels => train_labels.push(*l),
            _ => return Err(Error::Data(format!("training utterance {i} has no label id"))),
        }
    }

    let mut params = init_parameters::<f32>(cfg, tcfg.seed, pretrained.map(|e| (&data.pipeline.vocabs.words, e)))?;
    let mut adam = AdamState::new(tcfg.lr);
    let mut trace = Trace::new(cfg);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f32>>)> = None;

    for epoch in 0..tcfg.epochs {
        if tcfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(epoch as u64));
            rng.set_stream(1);
            order.sort_unstable();
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0f64;
        for (b, range) in batch_ranges(order.len(), tcfg.batch_size).enumerate() {
            let batch = &order[range];
            let scale = 1.0 / batch.len() as f32;
            let mut batch_loss = 0.0f64;
            {
                let (values, mut grads): (Vec<&[f32]>, Vec<&mut [f32]>) = params
                    .tensors
                    .iter_mut()
                    .map(|t| (&t.values[..], &mut t.grad[..]))
                    .unzip();
                for &i in batch {
                    let utt = &data.train.utterances[i];
                    network::forward_trace(cfg, values.as_slice(), utt, &mut trace)?;
                    let loss = network::backward(
                        cfg,
                        values.as_slice(),
                        &mut grads,
                        utt,
                        train_labels[i],
                        scale,
                        &mut trace,
                    )?;
                    batch_loss += f64::from(loss);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            loss_sum += batch_loss;
            adam.advance();
            for t in &mut params.tensors {
                adam_step(t, &adam)?;
            }
        }
        if params.tensors.iter().any(|t| t.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(tcfg.batch_size) - 1,
            });
        }

        let val_accuracy = evaluate(cfg, params.weights(), &data.valid)?;
        let stats = EpochStats {
            train_loss: loss_sum / order.len() as f64,
            val_accuracy,
        };
        log::info!(
            "seed {} epoch {}/{} train_loss {:.4} val_acc {:.2}%",
            tcfg.seed,
            epoch + 1,
            tcfg.epochs,
            stats.train_loss,
            100.0 * val_accuracy
        );
        history.push(stats);
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            let snapshot = params.tensors.iter().map(|t| t.values.clone()).collect();
            best = Some((val_accuracy, epoch, snapshot));
        }
    }

    let (best_val_accuracy, best_epoch, snapshot) = best.expect("epochs >= 1");
    let best_params = ModelParameters::from_values(cfg, snapshot)?;
    let test_accuracy = evaluate(cfg, best_params.weights(), &data.test)?;
    log::info!(
        "seed {} best epoch {} val_acc {:.2}% test_acc {:.2}%",
        tcfg.seed,
        best_epoch + 1,
        100.0 * best_val_accuracy,
        100.0 * test_accuracy
    );
    Ok(RunResult {
        seed: tcfg.seed,
        best_params,
        best_val_accuracy,
        best_epoch,
        test_accuracy,
        history,
    })
}

/// Test accuracies of repeated runs with mean and population variance, all
/// as fractions in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub run_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub variance: f64,
}

impl ExperimentSummary {
    pub fn from_accuracies(run_accuracies: Vec<f64>) -> Result<Self> {
        if run_accuracies.is_empty() {
            return Err(Error::Input("no run accuracies to summarize".into()));
        }
        let n = run_accuracies.len() as f64;
        let mean_accuracy = run_accuracies.iter().sum::<f64>() / n;
        let variance = run_accuracies.iter().map(|a| (a - mean_accuracy).powi(2)).sum::<f64>() / n;
        Ok(Self {
            run_accuracies,
            mean_accuracy,
            variance,
        })
    }

    pub fn mean_percent(&self) -> f64 {
        100.0 * self.mean_accuracy
    }

    /// Variance of the accuracies expressed in percent.
    pub fn variance_percent(&self) -> f64 {
        1e4 * self.variance
    }
}

/// Everything about a run except its parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub history: Vec<EpochStats>,
}

impl From<&RunResult> for RunRecord {
    fn from(r: &RunResult) -> Self {
        Self {
            seed: r.seed,
            best_epoch: r.best_epoch,
            best_val_accuracy: r.best_val_accuracy,
            test_accuracy: r.test_accuracy,
            history: r.history.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub summary: ExperimentSummary,
    /// One record per run, in seed order.
    pub runs: Vec<RunRecord>,
    /// The run with the highest validation accuracy (earliest seed on ties).
    pub selected: RunResult,
}

/// Worker count for independent runs: `TINYINTENT_THREADS` if set, else the
/// available parallelism, never more than `n_runs`.
pub fn run_threads(n_runs: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(n_runs).max(1)
}

/// Runs `n_runs` trainings with seeds `tcfg.seed..tcfg.seed + n_runs`.
/// Runs are independent and may execute in parallel; results are
/// identical to running them one after another.
pub fn run_experiment(
    data: &PreparedData,
    tcfg: &TrainConfig,
    pretrained: Option<&PretrainedEmbeddings>,
    n_runs: usize,
) -> Result<Experiment> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    tcfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run_threads(n_runs))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        (0..n_runs as u64)
            .into_par_iter()
            .map(|i| {
                let cfg = TrainConfig {
                    seed: tcfg.seed.wrapping_add(i),
                    ..tcfg.clone()
                };
                train_run(data, &cfg, pretrained)
            })
            .collect::<Result<_>>()
    })?;
    let summary = ExperimentSummary::from_accuracies(runs.iter().map(|r| r.test_accuracy).collect())?;
    let records = runs.iter().map(RunRecord::from).collect();
    let mut selected = None::<RunResult>;
    for run in runs {
        if selected
            .as_ref()
            .is_none_or(|s| run.best_val_accuracy > s.best_val_accuracy)
        {
            selected = Some(run);
        }
    }
    Ok(Experiment {
        summary,
        runs: records,
        selected: selected.expect("n_runs >= 1"),
    })
}
