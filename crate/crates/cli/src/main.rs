use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tinyintent::bench::{self, BenchOptions, TrackingAllocator};
use tinyintent::data::{load_dataset, load_embeddings_filtered, load_split};
use tinyintent::network::ModelConfig;
use tinyintent::store::{InferenceEngine, ModelFile};
use tinyintent::trainer::{evaluate, run_experiment, LabeledSet, PreparedData, TrainConfig};
use tinyintent::{Error, Result};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(
    name = "tinyintent",
    version,
    about = "Compact intent classifier: train, quantize, evaluate, infer, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on <data>/{train,valid,test} and write the best float model.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Pretrained word vectors (text format, one word and its floats per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines summary path [default: <out>.summary.jsonl]
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hyperparameter override, e.g. --config lstm_hidden=64 --config epochs=5
        #[arg(long = "config", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Report accuracy of a model on one split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Classify one utterance.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
    },
    /// Convert a float model to int8 weights.
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time single-utterance inference over a split.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 50)]
        warmup: usize,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Append the JSON report to this file as well as printing it.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunLine {
    run: usize,
    seed: u64,
    best_epoch: usize,
    best_val_accuracy: f64,
    test_accuracy: f64,
}

#[derive(Serialize)]
struct SummaryLine {
    runs: usize,
    mean_accuracy: f64,
    variance: f64,
    mean_percent: String,
    variance_percent: String,
    model: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            data,
            embeddings,
            out,
            summary,
            runs,
            seed,
            overrides,
        } => train(&data, embeddings.as_deref(), &out, summary, runs, seed, &overrides),
        Command::Eval { model, data, split } => {
            let file = ModelFile::load(&model)?;
            let set = LabeledSet::encode(&file.pipeline(), &load_split(data.join(&split))?)?;
            let acc = evaluate(&file.config, file.values().as_slice(), &set)?;
            println!("{split} accuracy: {:.2}% ({} utterances)", 100.0 * acc, set.len());
            Ok(())
        }
        Command::Infer { model, text } => {
            if text.trim().is_empty() {
                return Err(Error::Input("--text is empty".into()));
            }
            let engine = InferenceEngine::load(&model)?;
            let p = engine.infer(&text)?;
            println!("{}\t{:.4}", p.label_name, p.confidence());
            let mut ranked: Vec<(usize, f32)> = p.probabilities.iter().copied().enumerate().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (id, prob) in ranked {
                println!("  {:<32} {prob:.4}", engine.label_name(id).unwrap_or("?"));
            }
            Ok(())
        }
        Command::Quantize { input, out } => {
            let float = ModelFile::load(&input)?;
            let before = std::fs::metadata(&input)
                .map_err(|e| Error::Io {
                    path: input.clone(),
                    source: e,
                })?
                .len();
            let after = float.quantized()?.save(&out)? as u64;
            println!(
                "{} -> {}: {:.1} KiB -> {:.1} KiB ({:.1}%)",
                input.display(),
                out.display(),
                before as f64 / 1024.0,
                after as f64 / 1024.0,
                100.0 * after as f64 / before as f64
            );
            Ok(())
        }
        Command::Bench {
            model,
            data,
            split,
            warmup,
            repeat,
            json,
        } => {
            let bytes = std::fs::read(&model).map_err(|e| Error::Io {
                path: model.clone(),
                source: e,
            })?;
            let texts: Vec<String> = load_split(data.join(&split))?.iter().map(|u| u.text.clone()).collect();
            let report = bench::run(&bytes, &texts, BenchOptions { warmup, repeat })?;
            let kib = |b: Option<u64>| b.map_or("n/a".to_owned(), |b| format!("{:.0} KB", b as f64 / 1024.0));
            println!("{:<20} {:>12}", "Model size", kib(Some(report.model_file_bytes)));
            println!(
                "{:<20} {:>12}",
                "Inference time",
                format!("{:.3} ms", report.mean_latency_us / 1000.0)
            );
            println!(
                "{:<20} {:>12}",
                "p50 / p95",
                format!("{:.0} / {:.0} us", report.p50_latency_us, report.p95_latency_us)
            );
            println!("{:<20} {:>12}", "RAM (inference)", kib(report.peak_alloc_bytes));
            println!("{:<20} {:>12}", "RAM (process peak)", kib(report.peak_rss_bytes));
            let line = serde_json::to_string(&report).expect("report serializes");
            println!("{line}");
            if let Some(path) = json {
                let mut f = File::options()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                writeln!(f, "{line}").map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(())
        }
    }
}

fn split_override(kv: &str) -> Result<(&str, &str)> {
    kv.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {kv:?}")))
}

fn train(
    data: &Path,
    embeddings: Option<&Path>,
    out: &Path,
    summary: Option<PathBuf>,
    runs: usize,
    seed: u64,
    overrides: &[String],
) -> Result<()> {
    let mut mcfg = ModelConfig::default();
    let mut tcfg = TrainConfig {
        seed,
        ..Default::default()
    };
    for kv in overrides {
        let (k, v) = split_override(kv)?;
        if !tcfg.apply_override(k, v)? {
            mcfg.apply_override(k, v)?;
        }
    }
    let dataset = load_dataset(data)?;
    let prepared = PreparedData::new(&dataset, &mcfg)?;
    log::info!(
        "{} train / {} valid / {} test utterances; vocab {} words, {} chars, {} intents; {} parameters",
        prepared.train.len(),
        prepared.valid.len(),
        prepared.test.len(),
        prepared.config.word_vocab_size,
        prepared.config.char_vocab_size,
        prepared.config.num_labels,
        prepared.config.parameter_count()
    );
    let pretrained = match embeddings {
        Some(path) => {
            let words = &prepared.pipeline.vocabs.words;
            let (emb, stats) =
                load_embeddings_filtered(path, prepared.config.word_emb_dim, |w| words.get(w).is_some())?;
            log::info!(
                "embeddings: {stats:?}, vocabulary coverage {:.1}%",
                100.0 * emb.coverage(words)
            );
            Some(emb)
        }
        None => None,
    };

    let exp = run_experiment(&prepared, &tcfg, pretrained.as_ref(), runs)?;
    let model = ModelFile::from_parameters(&exp.selected.best_params, &prepared.pipeline.vocabs)?;
    let size = model.save(out)?;

    let summary_path = summary.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".summary.jsonl");
        PathBuf::from(p)
    });
    let file = File::create(&summary_path).map_err(|e| Error::Io {
        path: summary_path.clone(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::Io {
        path: summary_path.clone(),
        source: e,
    };
    println!("{:<6} {:>8} {:>10} {:>10}", "run", "seed", "val %", "test %");
    for run in &exp.runs {
        let line = RunLine {
            run: run.seed.wrapping_sub(seed) as usize,
            seed: run.seed,
            best_epoch: run.best_epoch,
            best_val_accuracy: run.best_val_accuracy,
            test_accuracy: run.test_accuracy,
        };
        println!(
            "{:<6} {:>8} {:>10.2} {:>10.2}",
            line.run,
            line.seed,
            100.0 * line.best_val_accuracy,
            100.0 * line.test_accuracy
        );
        writeln!(w, "{}", serde_json::to_string(&line).expect("serializes")).map_err(io)?;
    }
    let s = &exp.summary;
    let line = SummaryLine {
        runs: s.run_accuracies.len(),
        mean_accuracy: s.mean_accuracy,
        variance: s.variance,
        mean_percent: format!("{:.2}", s.mean_percent()),
        variance_percent: format!("{:.2}", s.variance_percent()),
        model: out.display().to_string(),
    };
    writeln!(w, "{}", serde_json::to_string(&line).expect("serializes")).map_err(io)?;
    w.flush().map_err(io)?;
    println!(
        "mean test accuracy {}% (variance {}) over {} runs; model {} ({:.1} KiB), summary {}",
        line.mean_percent,
        line.variance_percent,
        line.runs,
        out.display(),
        size as f64 / 1024.0,
        summary_path.display()
    );
    Ok(())
}
