//! Intrinsic evaluation: word similarity (Spearman's ρ against human
//! scores) and analogies (3CosAdd, top-1 accuracy).

use std::collections::HashMap;
use std::path::Path;

use rand::rngs::SmallRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Embeddings;

/// Average (1-based) ranks, ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman's rank correlation: Pearson correlation of the average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite input".into()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("all values are equal".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub word1: String,
    pub word2: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDataset {
    pub pairs: Vec<SimilarityPair>,
}

impl SimilarityDataset {
    /// One `word1 word2 score` triple per line, separated by tabs, spaces or
    /// commas. Blank lines, `#` comments and a non-numeric first line
    /// (header) are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|f| !f.is_empty())
                .collect();
            let score = fields.get(2).and_then(|s| s.parse::<f64>().ok());
            match (fields.len(), score) {
                (3, Some(score)) if score.is_finite() => pairs.push(SimilarityPair {
                    word1: fields[0].to_owned(),
                    word2: fields[1].to_owned(),
                    score,
                }),
                _ if pairs.is_empty() && i == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected \"word1 word2 score\", got {line:?}"),
                    })
                }
            }
        }
        Ok(SimilarityDataset { pairs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalogyDataset {
    /// `a b c d`, read as a:b :: c:d.
    pub items: Vec<[String; 4]>,
}

impl AnalogyDataset {
    /// Four whitespace-separated words per line; `:` section headers and
    /// blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(':') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [a, b, c, d] = fields.as_slice() else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected four words, got {line:?}"),
                });
            };
            items.push([a, b, c, d].map(|s| s.to_string()));
        }
        Ok(AnalogyDataset { items })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Word lookup over an embedding table, optionally case-folded. With
/// folding, the first (most frequent) spelling of a word wins.
pub struct Lookup<'a> {
    emb: &'a Embeddings,
    index: HashMap<String, usize>,
    lowercase: bool,
}

impl<'a> Lookup<'a> {
    pub fn new(emb: &'a Embeddings, lowercase: bool) -> Self {
        let mut index = HashMap::with_capacity(emb.len());
        for (i, w) in emb.words().iter().enumerate() {
            let key = if lowercase { w.to_lowercase() } else { w.clone() };
            index.entry(key).or_insert(i);
        }
        Lookup {
            emb,
            index,
            lowercase,
        }
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        if self.lowercase {
            self.index.get(&word.to_lowercase()).copied()
        } else {
            self.index.get(word).copied()
        }
    }

    pub fn embeddings(&self) -> &Embeddings {
        self.emb
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa * bb).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub rho: f64,
    /// Fraction of pairs with both words in the vocabulary.
    pub coverage: f64,
    pub scored: usize,
    pub total: usize,
}

/// Spearman correlation between embedding cosines and human scores over
/// the in-vocabulary pairs.
pub fn similarity_eval(
    emb: &Embeddings,
    dataset: &SimilarityDataset,
    lowercase: bool,
) -> Result<SimilarityResult> {
    let lookup = Lookup::new(emb, lowercase);
    let mut model_scores = Vec::new();
    let mut human = Vec::new();
    for pair in &dataset.pairs {
        if let (Some(a), Some(b)) = (lookup.get(&pair.word1), lookup.get(&pair.word2)) {
            model_scores.push(cosine(emb.row(a), emb.row(b)));
            human.push(pair.score);
        }
    }
    if model_scores.len() < 2 {
        return Err(Error::InsufficientCoverage {
            found: model_scores.len(),
            needed: 2,
        });
    }
    Ok(SimilarityResult {
        rho: spearman(&model_scores, &human)?,
        coverage: model_scores.len() as f64 / dataset.pairs.len() as f64,
        scored: model_scores.len(),
        total: dataset.pairs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalogyResult {
    pub accuracy: f64,
    /// Fraction of quadruples that were scored.
    pub coverage: f64,
    pub correct: usize,
    pub scored: usize,
    /// Quadruples whose answer repeats a query word; unanswerable under the
    /// exclusion rule and skipped.
    pub degenerate: usize,
    pub total: usize,
}

/// Index of the best 3CosAdd answer to a:b :: c:?, i.e. the argmax of
/// `cos(v, v_b − v_a + v_c)` over all words except a, b and c.
pub fn answer_3cosadd(emb: &Embeddings, norms: &[f64], a: usize, b: usize, c: usize) -> Option<usize> {
    let dim = emb.dim();
    let query: Vec<f64> = (0..dim)
        .map(|j| emb.row(b)[j] as f64 - emb.row(a)[j] as f64 + emb.row(c)[j] as f64)
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (idx, &norm) in norms.iter().enumerate() {
        if idx == a || idx == b || idx == c || norm == 0.0 {
            continue;
        }
        let row = emb.row(idx);
        let score = row
            .iter()
            .zip(&query)
            .map(|(&x, &q)| x as f64 * q)
            .sum::<f64>()
            / norm;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((idx, score));
        }
    }
    // |query| is shared by every candidate, so it does not change the argmax
    best.map(|(idx, _)| idx)
}

pub fn analogy_eval(emb: &Embeddings, dataset: &AnalogyDataset, lowercase: bool) -> Result<AnalogyResult> {
    let lookup = Lookup::new(emb, lowercase);
    let norms: Vec<f64> = (0..emb.len())
        .map(|i| emb.row(i).iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut degenerate = 0;
    let mut queries = Vec::new();
    for item in &dataset.items {
        let ids: Option<Vec<usize>> = item.iter().map(|w| lookup.get(w)).collect();
        let Some(ids) = ids else { continue };
        if ids[3] == ids[0] || ids[3] == ids[1] || ids[3] == ids[2] {
            degenerate += 1;
            continue;
        }
        queries.push([ids[0], ids[1], ids[2], ids[3]]);
    }
    if queries.is_empty() {
        return Err(Error::InsufficientCoverage { found: 0, needed: 1 });
    }
    let correct = queries
        .par_iter()
        .filter(|q| answer_3cosadd(emb, &norms, q[0], q[1], q[2]) == Some(q[3]))
        .count();
    Ok(AnalogyResult {
        accuracy: correct as f64 / queries.len() as f64,
        coverage: queries.len() as f64 / dataset.items.len() as f64,
        correct,
        scored: queries.len(),
        degenerate,
        total: dataset.items.len(),
    })
}

/// Seeded 50/50 partition; with an odd count the dev half gets the extra item.
pub fn dev_test_split<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut SmallRng::seed_from_u64(seed));
    let dev_len = items.len().div_ceil(2);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    (pick(&order[..dev_len]), pick(&order[dev_len..]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Similarity,
    Analogy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub name: String,
    pub kind: TaskKind,
    /// Spearman ρ for similarity, accuracy for analogies; `None` when the
    /// fold could not be scored.
    pub dev: Option<f64>,
    pub test: Option<f64>,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split_seed: u64,
    pub tasks: Vec<TaskReport>,
    /// Mean over tasks with a score in that fold.
    pub average_dev: Option<f64>,
    pub average_test: Option<f64>,
}

/// Evaluate every task on its dev and test folds.
pub fn evaluate(
    emb: &Embeddings,
    similarity: &[(String, SimilarityDataset)],
    analogy: &[(String, AnalogyDataset)],
    split_seed: u64,
    lowercase: bool,
) -> EvalReport {
    let mut tasks = Vec::new();
    for (name, ds) in similarity {
        let (dev, test) = dev_test_split(&ds.pairs, split_seed);
        let run = |pairs: Vec<SimilarityPair>| similarity_eval(emb, &SimilarityDataset { pairs }, lowercase).ok();
        let coverage = similarity_eval(emb, ds, lowercase).map_or(0.0, |r| r.coverage);
        tasks.push(TaskReport {
            name: name.clone(),
            kind: TaskKind::Similarity,
            dev: run(dev).map(|r| r.rho),
            test: run(test).map(|r| r.rho),
            coverage,
        });
    }
    for (name, ds) in analogy {
        let (dev, test) = dev_test_split(&ds.items, split_seed);
        let run = |items: Vec<[String; 4]>| analogy_eval(emb, &AnalogyDataset { items }, lowercase).ok();
        let dev = run(dev);
        let test = run(test);
        let scored = dev.as_ref().map_or(0, |r| r.scored) + test.as_ref().map_or(0, |r| r.scored);
        tasks.push(TaskReport {
            name: name.clone(),
            kind: TaskKind::Analogy,
            dev: dev.map(|r| r.accuracy),
            test: test.map(|r| r.accuracy),
            coverage: if ds.items.is_empty() {
                0.0
            } else {
                scored as f64 / ds.items.len() as f64
            },
        });
    }
    let average = |f: fn(&TaskReport) -> Option<f64>| {
        let vals: Vec<f64> = tasks.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    EvalReport {
        split_seed,
        average_dev: average(|t| t.dev),
        average_test: average(|t| t.test),
        tasks,
    }
}
