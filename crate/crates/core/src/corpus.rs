//! Vocabulary construction and training-instance generation.
//!
//! Input text is pre-tokenized: one sentence per line, tokens separated by
//! whitespace. Windows never cross line boundaries.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};

pub type WordId = u32;

/// Default exponent applied to unigram counts for the noise distribution.
pub const DEFAULT_NOISE_EXPONENT: f64 = 0.75;

/// How many times a negative equal to the positive word is re-drawn before
/// it is accepted anyway.
pub const MAX_NEGATIVE_RETRIES: usize = 10;

/// Words sorted by descending count, with the negative-sampling distribution
/// `P_n(w) ∝ count(w)^α`.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    word_to_id: HashMap<String, WordId>,
    noise: WeightedAliasIndex<f64>,
    noise_weights: Vec<f64>,
    noise_exponent: f64,
    total_tokens: u64,
}

impl Vocabulary {
    /// Build from `(word, count)` pairs. Order is normalised to descending
    /// count, ties broken by the word itself, so ids are reproducible.
    pub fn from_counts(mut entries: Vec<(String, u64)>, noise_exponent: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary { min_count: 0 });
        }
        if !(noise_exponent.is_finite() && noise_exponent >= 0.0) {
            return Err(Error::Config(format!(
                "noise exponent must be finite and non-negative, got {noise_exponent}"
            )));
        }
        entries.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));

        let mut word_to_id = HashMap::with_capacity(entries.len());
        let mut words = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (idx, (word, count)) in entries.into_iter().enumerate() {
            if count == 0 {
                return Err(Error::Config(format!("word {word:?} has zero count")));
            }
            if word_to_id.insert(word.clone(), idx as WordId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {word:?}")));
            }
            words.push(word);
            counts.push(count);
        }

        let noise_weights: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64).powf(noise_exponent))
            .collect();
        let noise = WeightedAliasIndex::new(noise_weights.clone())
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let total_tokens = counts.iter().sum();

        Ok(Vocabulary {
            words,
            counts,
            word_to_id,
            noise,
            noise_weights,
            noise_exponent,
            total_tokens,
        })
    }

    /// Count every token of every sentence in a corpus file.
    pub fn from_corpus_file(
        path: impl AsRef<Path>,
        min_count: u64,
        noise_exponent: f64,
    ) -> Result<Self> {
        let path = path.as_ref();
        let mut counts: HashMap<String, u64> = HashMap::new();
        for_each_line(path, |line| {
            for token in line.split_whitespace() {
                match counts.get_mut(token) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(token.to_owned(), 1);
                    }
                }
            }
        })?;
        Self::from_count_map(counts, min_count, noise_exponent)
    }

    fn from_count_map(
        counts: HashMap<String, u64>,
        min_count: u64,
        noise_exponent: f64,
    ) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let kept: Vec<_> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        Self::from_counts(kept, noise_exponent)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: WordId) -> u64 {
        self.counts[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.word_to_id.get(word).copied()
    }

    /// Sum of the counts of all retained words.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn noise_exponent(&self) -> f64 {
        self.noise_exponent
    }

    /// Exact noise probability `count^α / Σ count^α`.
    pub fn noise_probability(&self, id: WordId) -> f64 {
        let total: f64 = self.noise_weights.iter().sum();
        self.noise_weights[id as usize] / total
    }

    pub fn sample_negative<R: Rng + ?Sized>(&self, rng: &mut R) -> WordId {
        self.noise.sample(rng) as WordId
    }

    /// Fill `out` with `k` negatives, re-drawing (a bounded number of times)
    /// any draw equal to `positive`.
    pub fn draw_negatives<R: Rng + ?Sized>(
        &self,
        positive: WordId,
        k: usize,
        rng: &mut R,
        out: &mut Vec<WordId>,
    ) {
        out.clear();
        for _ in 0..k {
            let mut neg = self.sample_negative(rng);
            let mut retries = 0;
            while neg == positive && retries < MAX_NEGATIVE_RETRIES && self.len() > 1 {
                neg = self.sample_negative(rng);
                retries += 1;
            }
            out.push(neg);
        }
    }

    /// Keep-probability `min(1, sqrt(t/f) + t/f)` where `f` is the word's
    /// relative frequency and `t` the threshold.
    pub fn keep_probability(&self, id: WordId, threshold: f64) -> f64 {
        let f = self.count(id) as f64 / self.total_tokens as f64;
        let ratio = threshold / f;
        (ratio.sqrt() + ratio).min(1.0)
    }

    /// Map a whitespace-tokenized sentence to ids, dropping unknown words.
    pub fn encode(&self, line: &str, out: &mut Vec<WordId>) {
        out.clear();
        out.extend(line.split_whitespace().filter_map(|w| self.id(w)));
    }

    /// Write `word<TAB>count` lines in id order (descending count).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(w, "{word}\t{count}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, noise_exponent: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            let (word, count) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: "expected word<TAB>count".into(),
            })?;
            let count = count.trim().parse::<u64>().map_err(|e| Error::Parse {
                line: lineno + 1,
                message: format!("bad count: {e}"),
            })?;
            entries.push((word.to_owned(), count));
        }
        Self::from_counts(entries, noise_exponent)
    }
}

/// Build a vocabulary from in-memory sentences, keeping words that occur at
/// least `min_count` times.
pub fn build_vocab<I, S, T>(sentences: I, min_count: u64, noise_exponent: f64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for sentence in sentences {
        for token in sentence {
            *counts.entry(token.as_ref().to_owned()).or_insert(0) += 1;
        }
    }
    Vocabulary::from_count_map(counts, min_count, noise_exponent)
}

/// Call `f` on every line of a UTF-8 text file (invalid bytes are replaced).
pub fn for_each_line(path: &Path, mut f: impl FnMut(&str)) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(());
        }
        f(&String::from_utf8_lossy(&buf));
    }
}

pub fn sample_negative<R: Rng + ?Sized>(vocab: &Vocabulary, rng: &mut R) -> WordId {
    vocab.sample_negative(rng)
}

/// Per-word keep-probabilities for frequent-word subsampling.
#[derive(Clone, Debug)]
pub struct Subsampler {
    keep: Option<Vec<f64>>,
}

impl Subsampler {
    /// `threshold = None` disables subsampling.
    pub fn new(vocab: &Vocabulary, threshold: Option<f64>) -> Self {
        let keep = threshold.map(|t| {
            (0..vocab.len() as WordId)
                .map(|id| vocab.keep_probability(id, t))
                .collect()
        });
        Subsampler { keep }
    }

    pub fn is_enabled(&self) -> bool {
        self.keep.is_some()
    }

    #[inline]
    pub fn keep<R: Rng + ?Sized>(&self, word: WordId, rng: &mut R) -> bool {
        match &self.keep {
            None => true,
            Some(keep) => {
                let p = keep[word as usize];
                p >= 1.0 || rng.random::<f64>() < p
            }
        }
    }

    /// Drop tokens from `sentence` in place.
    pub fn apply<R: Rng + ?Sized>(&self, sentence: &mut Vec<WordId>, rng: &mut R) {
        if self.keep.is_some() {
            sentence.retain(|&w| self.keep(w, rng));
        }
    }
}

pub fn subsample_keep<R: Rng + ?Sized>(
    word: WordId,
    vocab: &Vocabulary,
    threshold: Option<f64>,
    rng: &mut R,
) -> bool {
    match threshold {
        None => true,
        Some(t) => {
            let p = vocab.keep_probability(word, t);
            p >= 1.0 || rng.random::<f64>() < p
        }
    }
}

/// Draw a window half-width uniformly from `1..=c_max`.
#[inline]
pub fn draw_half_width<R: Rng + ?Sized>(c_max: usize, rng: &mut R) -> usize {
    rng.random_range(1..=c_max)
}

/// Index range of the context around `position` with half-width `b`,
/// clipped to the sentence. The center itself is inside the range.
#[inline]
pub fn window_bounds(len: usize, position: usize, b: usize) -> (usize, usize) {
    (position.saturating_sub(b), (position + b + 1).min(len))
}

/// Context words around `position` with half-width `b`.
pub fn context_window(sentence: &[WordId], position: usize, b: usize) -> Vec<WordId> {
    let (lo, hi) = window_bounds(sentence.len(), position, b);
    sentence[lo..position]
        .iter()
        .chain(&sentence[position + 1..hi])
        .copied()
        .collect()
}

/// One center word, its context and `k` negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub center: WordId,
    pub context: Vec<WordId>,
    pub negatives: Vec<WordId>,
}

/// Iterator over the CBOW instances of one (already filtered) sentence.
pub struct Instances<'a, R: Rng + ?Sized> {
    sentence: &'a [WordId],
    position: usize,
    c_max: usize,
    k: usize,
    vocab: &'a Vocabulary,
    rng: &'a mut R,
}

pub fn iter_instances<'a, R: Rng + ?Sized>(
    sentence: &'a [WordId],
    c_max: usize,
    k: usize,
    vocab: &'a Vocabulary,
    rng: &'a mut R,
) -> Instances<'a, R> {
    assert!(c_max >= 1, "c_max must be positive");
    Instances {
        sentence,
        // single-token sentences have no context at all
        position: if sentence.len() < 2 { sentence.len() } else { 0 },
        c_max,
        k,
        vocab,
        rng,
    }
}

impl<R: Rng + ?Sized> Iterator for Instances<'_, R> {
    type Item = TrainingInstance;

    fn next(&mut self) -> Option<TrainingInstance> {
        while self.position < self.sentence.len() {
            let pos = self.position;
            self.position += 1;
            let b = draw_half_width(self.c_max, self.rng);
            let context = context_window(self.sentence, pos, b);
            if context.is_empty() {
                continue;
            }
            let center = self.sentence[pos];
            let mut negatives = Vec::with_capacity(self.k);
            self.vocab
                .draw_negatives(center, self.k, self.rng, &mut negatives);
            return Some(TrainingInstance {
                center,
                context,
                negatives,
            });
        }
        None
    }
}
