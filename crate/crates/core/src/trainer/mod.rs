//! SGD training for skip-gram, CBOW and the unnormalized CBOW update.
//!
//! Training is Hogwild-style: a reader thread streams sentence blocks through
//! a bounded channel, and worker threads update the shared matrices without
//! locks. With `threads = 1` and a fixed seed a run is bit-reproducible.

mod step;

use std::marker::PhantomData;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::rngs::SmallRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use step::{
    cbow_loss, cbow_loss_from_vectors, cbow_step, context_mean, negative_sampling_loss, sg_loss,
    sg_step, Workspace, LOG_CLAMP,
};

use crate::corpus::{
    draw_half_width, for_each_line, window_bounds, Subsampler, TrainingInstance, Vocabulary,
    WordId, DEFAULT_NOISE_EXPONENT,
};
use crate::error::{Error, Result};
use crate::model::{ModelState, Params, Real, Sigmoid, SigmoidTable};

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Skip-gram.
    #[value(name = "sg")]
    Sg,
    /// CBOW with the context gradient divided by the window size.
    #[value(name = "cbow_correct")]
    CbowCorrect,
    /// CBOW applying the full context-mean gradient to every context word.
    #[value(name = "cbow_faulty")]
    CbowFaulty,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Sg, Mode::CbowCorrect, Mode::CbowFaulty];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sg => "sg",
            Mode::CbowCorrect => "cbow_correct",
            Mode::CbowFaulty => "cbow_faulty",
        }
    }

    pub fn is_cbow(self) -> bool {
        !matches!(self, Mode::Sg)
    }

    /// Initial learning rate used when none is given.
    pub fn default_lr(self) -> f64 {
        match self {
            Mode::CbowCorrect => 0.075,
            Mode::Sg | Mode::CbowFaulty => 0.025,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub dim: usize,
    /// Maximum window half-width.
    pub c_max: usize,
    /// Negatives per positive example.
    pub negatives: usize,
    pub epochs: usize,
    pub lr0: f64,
    /// The learning rate never decays below `lr0 * lr_floor_fraction`.
    pub lr_floor_fraction: f64,
    pub min_count: u64,
    /// `None` disables frequent-word subsampling.
    pub subsample_threshold: Option<f64>,
    pub noise_exponent: f64,
    pub threads: usize,
    pub seed: u64,
    /// Tokens per logged loss interval.
    pub loss_log_interval: u64,
    /// Use the interpolated sigmoid table instead of the exact sigmoid.
    pub sigmoid_table: bool,
    /// Sentences held in the reader/worker buffer.
    pub buffer_sentences: usize,
}

impl TrainConfig {
    pub fn new(mode: Mode) -> Self {
        TrainConfig {
            mode,
            dim: 300,
            c_max: 5,
            negatives: 5,
            epochs: 5,
            lr0: mode.default_lr(),
            lr_floor_fraction: 1e-4,
            min_count: 10,
            subsample_threshold: Some(1e-3),
            noise_exponent: DEFAULT_NOISE_EXPONENT,
            threads: 1,
            seed: 1,
            loss_log_interval: 1_000_000,
            sigmoid_table: false,
            buffer_sentences: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail("lr0 must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_floor_fraction) {
            return fail("lr floor fraction must be in [0, 1]");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if self.c_max == 0 {
            return fail("c_max must be at least 1");
        }
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        if self.min_count == 0 {
            return fail("min_count must be at least 1");
        }
        if self.loss_log_interval == 0 {
            return fail("loss_log_interval must be at least 1");
        }
        if self.buffer_sentences == 0 {
            return fail("buffer_sentences must be at least 1");
        }
        if let Some(t) = self.subsample_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return fail("subsample threshold must be positive");
            }
        }
        if !(self.noise_exponent >= 0.0 && self.noise_exponent.is_finite()) {
            return fail("noise exponent must be non-negative");
        }
        Ok(())
    }

    fn sigmoid(&self) -> Sigmoid {
        if self.sigmoid_table {
            Sigmoid::Table(SigmoidTable::default())
        } else {
            Sigmoid::Exact
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(Mode::CbowCorrect)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// Tokens read so far (before subsampling), across all epochs.
    pub tokens: u64,
    /// Mean per-token loss over the interval ending at `tokens`.
    pub loss: f64,
}

/// Mean negative-sampling loss per token, one point per logging interval.
///
/// For CBOW the per-token loss is the loss of the token's instance; for
/// skip-gram it is the mean over the token's (center, context) pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    pub points: Vec<LossPoint>,
}

impl LossLog {
    pub fn first(&self) -> Option<f64> {
        self.points.first().map(|p| p.loss)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.loss)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("tokens,loss\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.tokens, p.loss));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::Parse { line: i + 1, message: m };
            let (t, l) = line
                .split_once(',')
                .ok_or_else(|| bad("expected tokens,loss".into()))?;
            points.push(LossPoint {
                tokens: t.parse().map_err(|e| bad(format!("{e}")))?,
                loss: l.parse().map_err(|e| bad(format!("{e}")))?,
            });
        }
        Ok(LossLog { points })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub vocab_seconds: f64,
    pub train_seconds: f64,
    pub wall_seconds: f64,
    pub seconds_per_epoch: f64,
    pub tokens_processed: u64,
    pub tokens_per_second: f64,
    pub threads: usize,
}

pub struct TrainOutput<F> {
    pub vocab: Vocabulary,
    pub model: ModelState<F>,
    pub loss_log: LossLog,
    pub timing: TimingReport,
}

/// Build the vocabulary from `corpus_path` and train on it.
pub fn train<F: Real>(corpus_path: impl AsRef<Path>, config: &TrainConfig) -> Result<TrainOutput<F>> {
    config.validate()?;
    let corpus_path = corpus_path.as_ref();
    let start = Instant::now();
    let vocab = Vocabulary::from_corpus_file(corpus_path, config.min_count, config.noise_exponent)?;
    let vocab_seconds = start.elapsed().as_secs_f64();
    let (model, loss_log, mut timing) = train_with_vocab(corpus_path, &vocab, config)?;
    timing.vocab_seconds = vocab_seconds;
    timing.wall_seconds = start.elapsed().as_secs_f64();
    Ok(TrainOutput {
        vocab,
        model,
        loss_log,
        timing,
    })
}

/// Sentences per block handed to a worker.
const BLOCK_SENTENCES: usize = 1024;
/// Worker-local tokens accumulated before flushing into the shared loss log.
const LOSS_FLUSH_TOKENS: u64 = 1024;

/// Train a freshly initialised model over `corpus_path` with a fixed vocabulary.
pub fn train_with_vocab<F: Real>(
    corpus_path: &Path,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(ModelState<F>, LossLog, TimingReport)> {
    config.validate()?;
    let mut model = ModelState::<F>::init(vocab.len(), config.dim, config.seed);
    let start = Instant::now();

    let total_tokens = vocab.total_tokens() * config.epochs as u64;
    let progress = AtomicU64::new(0);
    let log = Mutex::new(LossAccumulator::new(config.loss_log_interval));
    let subsampler = Subsampler::new(vocab, config.subsample_threshold);
    let sigmoid = config.sigmoid();
    let capacity = config.buffer_sentences.div_ceil(BLOCK_SENTENCES).max(1);
    let (tx, rx) = crossbeam_channel::bounded::<Vec<Vec<WordId>>>(capacity);

    let shared = SharedParams::new(&mut model);
    let read_result = std::thread::scope(|scope| {
        let reader = scope.spawn(move || -> Result<()> {
            let mut block = Vec::with_capacity(BLOCK_SENTENCES);
            for _ in 0..config.epochs {
                let mut sent = Ok(());
                for_each_line(corpus_path, |line| {
                    if sent.is_err() {
                        return;
                    }
                    let mut ids = Vec::new();
                    vocab.encode(line, &mut ids);
                    if ids.is_empty() {
                        return;
                    }
                    block.push(ids);
                    if block.len() == BLOCK_SENTENCES {
                        let full = std::mem::replace(&mut block, Vec::with_capacity(BLOCK_SENTENCES));
                        sent = tx.send(full);
                    }
                })?;
                if sent.is_err() {
                    // workers are gone; nothing left to do
                    return Ok(());
                }
            }
            if !block.is_empty() {
                let _ = tx.send(block);
            }
            Ok(())
        });

        for worker in 0..config.threads {
            let rx = rx.clone();
            let mut params = shared;
            let ctx = WorkerContext {
                vocab,
                config,
                subsampler: &subsampler,
                sigmoid: &sigmoid,
                progress: &progress,
                total_tokens,
                log: &log,
            };
            scope.spawn(move || {
                let mut rng = SmallRng::seed_from_u64(worker_seed(config.seed, worker));
                let mut state = WorkerState::new(config.dim);
                for block in rx.iter() {
                    for sentence in block {
                        ctx.process_sentence(sentence, &mut params, &mut rng, &mut state);
                    }
                }
                state.flush(&ctx);
            });
        }
        drop(rx);
        reader.join().expect("reader thread panicked")
    });
    read_result?;

    let tokens_processed = progress.load(Ordering::Relaxed);
    let loss_log = log.into_inner().expect("loss log poisoned").finish();
    let train_seconds = start.elapsed().as_secs_f64();
    let timing = TimingReport {
        vocab_seconds: 0.0,
        train_seconds,
        wall_seconds: train_seconds,
        seconds_per_epoch: train_seconds / config.epochs as f64,
        tokens_processed,
        tokens_per_second: tokens_processed as f64 / train_seconds.max(1e-9),
        threads: config.threads,
    };
    Ok((model, loss_log, timing))
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct WorkerContext<'a> {
    vocab: &'a Vocabulary,
    config: &'a TrainConfig,
    subsampler: &'a Subsampler,
    sigmoid: &'a Sigmoid,
    progress: &'a AtomicU64,
    total_tokens: u64,
    log: &'a Mutex<LossAccumulator>,
}

struct WorkerState<F> {
    workspace: Workspace<F>,
    instance: TrainingInstance,
    negatives: Vec<WordId>,
    loss_sum: f64,
    loss_count: u64,
    tokens: u64,
}

impl<F: Real> WorkerState<F> {
    fn new(dim: usize) -> Self {
        WorkerState {
            workspace: Workspace::new(dim),
            instance: TrainingInstance {
                center: 0,
                context: Vec::new(),
                negatives: Vec::new(),
            },
            negatives: Vec::new(),
            loss_sum: 0.0,
            loss_count: 0,
            tokens: 0,
        }
    }

    fn flush(&mut self, ctx: &WorkerContext<'_>) {
        if self.tokens == 0 {
            return;
        }
        ctx.log
            .lock()
            .expect("loss log poisoned")
            .add(self.tokens, self.loss_sum, self.loss_count);
        self.tokens = 0;
        self.loss_sum = 0.0;
        self.loss_count = 0;
    }
}

impl WorkerContext<'_> {
    fn learning_rate<F: Real>(&self) -> F {
        let done = self.progress.load(Ordering::Relaxed) as f64;
        let frac = 1.0 - done / self.total_tokens.max(1) as f64;
        F::from_f64_lossy(self.config.lr0 * frac.max(self.config.lr_floor_fraction))
    }

    fn process_sentence<F: Real, P: Params<F>>(
        &self,
        mut sentence: Vec<WordId>,
        params: &mut P,
        rng: &mut SmallRng,
        state: &mut WorkerState<F>,
    ) {
        let read = sentence.len() as u64;
        let lr = self.learning_rate::<F>();
        self.subsampler.apply(&mut sentence, rng);

        let cfg = self.config;
        let len = sentence.len();
        if len >= 2 {
            for pos in 0..len {
                let b = draw_half_width(cfg.c_max, rng);
                let (lo, hi) = window_bounds(len, pos, b);
                let center = sentence[pos];
                let loss = match cfg.mode {
                    Mode::Sg => {
                        let mut sum = 0.0;
                        for (j, &ctx_word) in sentence[lo..hi].iter().enumerate() {
                            if lo + j == pos {
                                continue;
                            }
                            self.vocab
                                .draw_negatives(ctx_word, cfg.negatives, rng, &mut state.negatives);
                            sum += state
                                .workspace
                                .sg_step(center, ctx_word, &state.negatives, params, lr, self.sigmoid)
                                .to_f64_lossy();
                        }
                        sum / (hi - lo - 1) as f64
                    }
                    Mode::CbowCorrect | Mode::CbowFaulty => {
                        let inst = &mut state.instance;
                        inst.center = center;
                        inst.context.clear();
                        inst.context.extend_from_slice(&sentence[lo..pos]);
                        inst.context.extend_from_slice(&sentence[pos + 1..hi]);
                        self.vocab
                            .draw_negatives(center, cfg.negatives, rng, &mut inst.negatives);
                        let faulty = cfg.mode == Mode::CbowFaulty;
                        state
                            .workspace
                            .cbow_step(inst, params, lr, faulty, self.sigmoid)
                            .to_f64_lossy()
                    }
                };
                state.loss_sum += loss;
                state.loss_count += 1;
            }
        }

        self.progress.fetch_add(read, Ordering::Relaxed);
        state.tokens += read;
        if state.tokens >= LOSS_FLUSH_TOKENS.min(cfg.loss_log_interval) {
            state.flush(self);
        }
    }
}

struct LossAccumulator {
    interval: u64,
    tokens: u64,
    next_emit: u64,
    loss_sum: f64,
    count: u64,
    log: LossLog,
}

impl LossAccumulator {
    fn new(interval: u64) -> Self {
        LossAccumulator {
            interval,
            tokens: 0,
            next_emit: interval,
            loss_sum: 0.0,
            count: 0,
            log: LossLog::default(),
        }
    }

    fn add(&mut self, tokens: u64, loss_sum: f64, count: u64) {
        self.tokens += tokens;
        self.loss_sum += loss_sum;
        self.count += count;
        if self.tokens >= self.next_emit {
            self.emit();
            self.next_emit = self.tokens + self.interval;
        }
    }

    fn emit(&mut self) {
        if self.count > 0 {
            self.log.points.push(LossPoint {
                tokens: self.tokens,
                loss: self.loss_sum / self.count as f64,
            });
        }
        self.loss_sum = 0.0;
        self.count = 0;
    }

    fn finish(mut self) -> LossLog {
        let last = self.log.points.last().map_or(0, |p| p.tokens);
        if self.tokens > last {
            self.emit();
        }
        self.log
    }
}

/// Lock-free view of a model shared by all worker threads.
///
/// Workers read and write rows concurrently without synchronisation. Races
/// only ever mix values of a row that are each finite, which SGD tolerates;
/// this is the same contract word2vec.c and Gensim rely on.
struct SharedParams<'a, F> {
    source: *mut F,
    target: *mut F,
    rows: usize,
    dim: usize,
    _model: PhantomData<&'a mut ModelState<F>>,
}

impl<F> Clone for SharedParams<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F> Copy for SharedParams<'_, F> {}

// SAFETY: the pointers stay valid for 'a (the model is mutably borrowed for
// that long) and unsynchronised row access is the accepted Hogwild race.
unsafe impl<F: Send> Send for SharedParams<'_, F> {}
unsafe impl<F: Sync> Sync for SharedParams<'_, F> {}

impl<'a, F: Real> SharedParams<'a, F> {
    fn new(model: &'a mut ModelState<F>) -> Self {
        let dim = model.dim();
        let rows = model.vocab_size();
        let (source, target) = model.matrices_mut();
        SharedParams {
            source: source.as_mut_ptr(),
            target: target.as_mut_ptr(),
            rows,
            dim,
            _model: PhantomData,
        }
    }

    #[inline]
    fn row(&self, base: *mut F, id: usize) -> *mut F {
        assert!(id < self.rows, "word id {id} out of range");
        // SAFETY: id < rows, so the row lies inside the allocation
        unsafe { base.add(id * self.dim) }
    }
}

impl<F: Real> Params<F> for SharedParams<'_, F> {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn source(&self, id: usize) -> &[F] {
        unsafe { std::slice::from_raw_parts(self.row(self.source, id), self.dim) }
    }

    #[inline]
    fn target(&self, id: usize) -> &[F] {
        unsafe { std::slice::from_raw_parts(self.row(self.target, id), self.dim) }
    }

    #[inline]
    fn source_mut(&mut self, id: usize) -> &mut [F] {
        unsafe { std::slice::from_raw_parts_mut(self.row(self.source, id), self.dim) }
    }

    #[inline]
    fn target_mut(&mut self, id: usize) -> &mut [F] {
        unsafe { std::slice::from_raw_parts_mut(self.row(self.target, id), self.dim) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_learning_rates() {
        assert_eq!(TrainConfig::new(Mode::CbowCorrect).lr0, 0.075);
        assert_eq!(TrainConfig::new(Mode::CbowFaulty).lr0, 0.025);
        assert_eq!(TrainConfig::new(Mode::Sg).lr0, 0.025);
        let c = TrainConfig::default();
        assert_eq!((c.negatives, c.c_max, c.epochs, c.dim, c.min_count), (5, 5, 5, 300, 10));
        assert_eq!(c.subsample_threshold, Some(1e-3));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { lr0: 0.0, ..ok.clone() },
            TrainConfig { epochs: 0, ..ok.clone() },
            TrainConfig { negatives: 0, ..ok.clone() },
            TrainConfig { c_max: 0, ..ok.clone() },
            TrainConfig { threads: 0, ..ok.clone() },
            TrainConfig { subsample_threshold: Some(-1.0), ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn loss_accumulator_emits_increasing_points() {
        let mut acc = LossAccumulator::new(100);
        for _ in 0..25 {
            acc.add(30, 3.0, 3);
        }
        let log = acc.finish();
        assert!(log.points.windows(2).all(|w| w[0].tokens < w[1].tokens));
        assert_eq!(log.points.last().unwrap().tokens, 750);
        assert!(log.points.iter().all(|p| (p.loss - 1.0).abs() < 1e-12));
    }

    #[test]
    fn loss_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let log = LossLog {
            points: vec![
                LossPoint { tokens: 10, loss: 4.25 },
                LossPoint { tokens: 20, loss: 3.5 },
            ],
        };
        log.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "tokens,loss\n10,4.25\n20,3.5\n");
        assert_eq!(LossLog::read_csv(&path).unwrap(), log);
    }
}
