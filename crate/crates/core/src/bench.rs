//! Latency and memory measurement for single-utterance inference.
//!
//! Allocation tracking needs [`TrackingAllocator`] installed as the
//! process-wide allocator by the final binary:
//!
//! ```
//! #[global_allocator]
//! static ALLOC: tinyintent::bench::TrackingAllocator = tinyintent::bench::TrackingAllocator;
//! # fn main() {
//! let v = vec![0u8; 4096];
//! assert!(tinyintent::bench::current_bytes() >= v.len());
//! # }
//! ```

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::network::{init_parameters, ModelConfig};
use crate::store::{InferenceEngine, ModelFile};
use crate::text::{Vocabularies, Vocabulary};
use crate::{Error, Result};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);

/// System allocator wrapper that counts live bytes and their high-water mark.
pub struct TrackingAllocator;

impl TrackingAllocator {
    fn grow(n: usize) {
        let now = CURRENT.fetch_add(n, Ordering::Relaxed) + n;
        PEAK.fetch_max(now, Ordering::Relaxed);
        ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
    }

    fn shrink(n: usize) {
        CURRENT.fetch_sub(n, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            Self::grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            Self::grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        Self::shrink(layout.size());
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            Self::shrink(layout.size());
            Self::grow(new_size);
        }
        p
    }
}

/// Live heap bytes (0 unless [`TrackingAllocator`] is installed).
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Number of allocations made so far.
pub fn allocation_count() -> usize {
    ALLOCATIONS.load(Ordering::Relaxed)
}

/// Restarts the high-water mark from the current live size.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

pub fn tracking_enabled() -> bool {
    allocation_count() > 0
}

/// Peak resident set size of this process, where the OS reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub n_inferences: usize,
    pub mean_latency_us: f64,
    pub p50_latency_us: f64,
    pub p95_latency_us: f64,
    pub max_latency_us: f64,
    /// Peak live heap of the inference path (engine plus scratch) above
    /// the level before the engine was built.
    pub peak_alloc_bytes: Option<u64>,
    /// Live heap held by the engine after warmup.
    pub engine_bytes: Option<u64>,
    pub peak_rss_bytes: Option<u64>,
    pub model_file_bytes: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct BenchOptions {
    pub warmup: usize,
    pub repeat: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { warmup: 50, repeat: 1 }
    }
}

/// Nearest-rank percentile of ascending `sorted`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Calls `f` on `warmup` texts (untimed, cycling through `texts`), then on
/// every text `repeat` times, timing each call individually. `f` receives
/// the raw text, so whatever it does end to end is inside the timed span.
pub fn time_each<F>(texts: &[String], opts: BenchOptions, latencies: &mut Vec<Duration>, mut f: F) -> Result<()>
where
    F: FnMut(&str) -> Result<usize>,
{
    if texts.is_empty() || opts.repeat == 0 {
        return Err(Error::Input("benchmark needs at least one text and one repeat".into()));
    }
    for text in texts.iter().cycle().take(opts.warmup) {
        std::hint::black_box(f(text)?);
    }
    latencies.clear();
    for _ in 0..opts.repeat {
        for text in texts {
            let start = Instant::now();
            let label = f(std::hint::black_box(text))?;
            let elapsed = start.elapsed();
            std::hint::black_box(label);
            latencies.push(elapsed);
        }
    }
    Ok(())
}

/// Loads a model from its file bytes and times inference over `texts`.
pub fn run(model_bytes: &[u8], texts: &[String], opts: BenchOptions) -> Result<BenchReport> {
    let mut latencies = Vec::with_capacity(texts.len() * opts.repeat);
    let tracking = tracking_enabled();
    let base = current_bytes();

    let engine = InferenceEngine::new(&ModelFile::from_bytes(model_bytes)?)?;
    reset_peak();
    let mut after_warmup = None;
    let mut calls = 0usize;
    time_each(texts, opts, &mut latencies, |text| {
        if calls == opts.warmup {
            after_warmup = Some(current_bytes());
        }
        calls += 1;
        engine.classify(text)
    })?;
    let peak = peak_bytes();
    let engine_bytes = after_warmup.unwrap_or_else(current_bytes).saturating_sub(base);
    drop(engine);

    let mut us: Vec<f64> = latencies.iter().map(|d| d.as_secs_f64() * 1e6).collect();
    us.sort_by(f64::total_cmp);
    Ok(BenchReport {
        n_inferences: us.len(),
        mean_latency_us: us.iter().sum::<f64>() / us.len() as f64,
        p50_latency_us: percentile(&us, 50.0),
        p95_latency_us: percentile(&us, 95.0),
        max_latency_us: *us.last().expect("non-empty"),
        peak_alloc_bytes: tracking.then(|| peak.saturating_sub(base) as u64),
        engine_bytes: tracking.then_some(engine_bytes as u64),
        peak_rss_bytes: peak_rss_bytes(),
        model_file_bytes: model_bytes.len() as u64,
    })
}

const SYNTHETIC_ALPHABET: &str =
    "abcdefghijklmnopqrstuvwxyz0123456789'-.&/:_,!?$%+#@()*;=~^ABCDEFGHIJKLMNOPQRSTUVWXYZàáâäçèéêëíîïñóôöúûüß";

/// Random vocabularies of the given sizes (including `<pad>`/`<unk>` for
/// words and characters). Word tokens are 3 to 10 characters long.
pub fn synthetic_vocabularies(n_words: usize, n_chars: usize, n_labels: usize, seed: u64) -> Vocabularies {
    let alphabet: Vec<char> = SYNTHETIC_ALPHABET.chars().collect();
    assert!(
        n_chars >= 3 && n_chars - 2 <= alphabet.len(),
        "unsupported char vocabulary size {n_chars}"
    );
    assert!(n_words >= 3 && n_labels >= 1);
    let letters = &alphabet[..n_chars - 2];
    let mut chars = Vocabulary::with_reserved();
    for c in letters {
        chars.insert(c.encode_utf8(&mut [0; 4]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Vocabulary::with_reserved();
    let mut seen = HashSet::new();
    while words.len() < n_words {
        let len = rng.random_range(3..=10);
        let w: String = (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect();
        if seen.insert(w.clone()) {
            words.insert(&w);
        }
    }
    let mut labels = Vocabulary::plain();
    for i in 0..n_labels {
        labels.insert(&format!("intent_{i}"));
    }
    Vocabularies { words, chars, labels }
}

/// Random utterances of 5 to 17 in-vocabulary words.
pub fn synthetic_utterances(vocabs: &Vocabularies, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<&str> = vocabs.words.regular_tokens().collect();
    (0..n)
        .map(|_| {
            let len = rng.random_range(5..=17);
            (0..len)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Randomly initialized float model sized for `vocabs`.
pub fn synthetic_model(base: &ModelConfig, vocabs: &Vocabularies, seed: u64) -> Result<ModelFile> {
    let config = base.sized_for(vocabs);
    let params = init_parameters::<f32>(&config, seed, None)?;
    ModelFile::from_parameters(&params, vocabs)
}
