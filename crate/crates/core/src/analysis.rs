//! How the unnormalized CBOW update relates to the true gradient.
//!
//! The historical update multiplies every context-slot gradient by `C` and
//! leaves target-side gradients alone, i.e. `δ̃θ = D·δθ` with `D` a positive
//! diagonal matrix. It is therefore always a descent direction, but its angle
//! to the gradient grows with `C` and with the number of negatives.

use std::path::Path;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TrainingInstance, Vocabulary};
use crate::error::{Error, Result};
use crate::gradcheck::{analytic_cbow_grad, random_cbow_problem, GradientBundle};
use crate::model::ModelState;
use crate::trainer::{train_with_vocab, Mode, TrainConfig};

/// Cosine between the unnormalized and true CBOW gradients when every
/// per-embedding gradient has the same norm:
/// `(C² + k + 1) / sqrt((C³ + k + 1)(C + k + 1))`.
///
/// For fixed `C ≥ 2` this falls with `k` until `k = C² - 1` and rises
/// towards 1 afterwards.
pub fn gradient_cosine_closed_form(c: u64, k: u64) -> f64 {
    assert!(c >= 1, "C must be positive");
    let (c, k) = (c as f64, k as f64);
    (c * c + k + 1.0) / ((c * c * c + k + 1.0) * (c + k + 1.0)).sqrt()
}

/// Cosine of the angle between two stacked gradient bundles.
pub fn bundle_cosine(a: &GradientBundle, b: &GradientBundle) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("bundles differ in layout".into()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    Ok(a.dot(b) / (na * nb))
}

/// Cosine between the faulty and correct analytic gradients of `instance`.
pub fn gradient_cosine_empirical(instance: &TrainingInstance, model: &ModelState<f64>) -> Result<f64> {
    let correct = analytic_cbow_grad(instance, model, false);
    let faulty = analytic_cbow_grad(instance, model, true);
    bundle_cosine(&faulty, &correct)
}

/// True when `-δ̃θ` is a descent direction: `δ̃θ·δθ > 0`, or `δθ = 0`.
pub fn descent_check(instance: &TrainingInstance, model: &ModelState<f64>) -> bool {
    let correct = analytic_cbow_grad(instance, model, false);
    let faulty = analytic_cbow_grad(instance, model, true);
    if correct.norm() == 0.0 {
        return true;
    }
    faulty.dot(&correct) > 0.0
}

/// Largest relative deviation between the faulty bundle and `D·δθ` (context
/// slots scaled by `C`, everything else unchanged).
pub fn structural_deviation(instance: &TrainingInstance, model: &ModelState<f64>) -> f64 {
    let correct = analytic_cbow_grad(instance, model, false);
    let faulty = analytic_cbow_grad(instance, model, true);
    let expected = correct.scale_context(instance.context.len() as f64);
    faulty
        .stacked()
        .iter()
        .zip(expected.stacked())
        .map(|(&x, y)| crate::gradcheck::relative_error(x, y))
        .fold(0.0, f64::max)
}

/// Bundle whose `C + k + 1` slot gradients are mutually orthogonal basis
/// directions, each with squared norm `alpha`. Needs `dim ≥ C + k + 1`.
pub fn equal_norm_bundle(c: usize, k: usize, dim: usize, alpha: f64) -> GradientBundle {
    assert!(dim > c + k, "dim must be at least C + k + 1");
    let norm = alpha.sqrt();
    let axis = |i: usize| {
        let mut v = vec![0.0; dim];
        v[i] = norm;
        v
    };
    GradientBundle {
        context_grads: (0..c).map(axis).collect(),
        negative_grads: (c..c + k).map(axis).collect(),
        target_grad: axis(c + k),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentSummary {
    pub trials: usize,
    /// Trials whose true gradient was nonzero.
    pub nonzero: usize,
    /// Nonzero trials where the faulty update was a descent direction.
    pub descent: usize,
    pub min_cosine: f64,
    pub max_structural_deviation: f64,
}

impl DescentSummary {
    pub fn all_passed(&self) -> bool {
        self.descent == self.nonzero
    }
}

/// Monte Carlo check of the descent property over random instances with
/// `C` and `k` drawn uniformly from the given inclusive ranges.
pub fn descent_monte_carlo(
    trials: usize,
    c_range: (usize, usize),
    k_range: (usize, usize),
    seed: u64,
) -> DescentSummary {
    const CHUNK: usize = 1000;
    let chunks: Vec<usize> = (0..trials.div_ceil(CHUNK)).collect();
    let partial: Vec<DescentSummary> = chunks
        .par_iter()
        .map(|&chunk| {
            let mut rng = SmallRng::seed_from_u64(seed ^ (chunk as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            let n = CHUNK.min(trials - chunk * CHUNK);
            let mut s = DescentSummary {
                trials: n,
                nonzero: 0,
                descent: 0,
                min_cosine: 1.0,
                max_structural_deviation: 0.0,
            };
            for _ in 0..n {
                let c = rng.random_range(c_range.0..=c_range.1);
                let k = rng.random_range(k_range.0..=k_range.1);
                let dim = rng.random_range(2..=16);
                let scale = [0.01, 0.1, 1.0][rng.random_range(0..3)];
                let (model, inst) = random_cbow_problem(&mut rng, dim, c, k, scale);
                let correct = analytic_cbow_grad(&inst, &model, false);
                let faulty = analytic_cbow_grad(&inst, &model, true);
                s.max_structural_deviation = s
                    .max_structural_deviation
                    .max(structural_deviation(&inst, &model));
                if correct.norm() == 0.0 {
                    continue;
                }
                s.nonzero += 1;
                if faulty.dot(&correct) > 0.0 {
                    s.descent += 1;
                }
                if let Ok(cos) = bundle_cosine(&faulty, &correct) {
                    s.min_cosine = s.min_cosine.min(cos);
                }
            }
            s
        })
        .collect();
    partial.into_iter().fold(
        DescentSummary {
            trials: 0,
            nonzero: 0,
            descent: 0,
            min_cosine: 1.0,
            max_structural_deviation: 0.0,
        },
        |a, b| DescentSummary {
            trials: a.trials + b.trials,
            nonzero: a.nonzero + b.nonzero,
            descent: a.descent + b.descent,
            min_cosine: a.min_cosine.min(b.min_cosine),
            max_structural_deviation: a.max_structural_deviation.max(b.max_structural_deviation),
        },
    )
}

/// Closed-form cosines over a grid of context sizes (rows) and negative
/// counts (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub c_values: Vec<u64>,
    pub k_values: Vec<u64>,
    pub cosines: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMinimum {
    pub c: u64,
    pub k: u64,
    pub cosine: f64,
}

impl AngleGrid {
    pub fn minimum(&self) -> GridMinimum {
        let mut best = GridMinimum {
            c: self.c_values[0],
            k: self.k_values[0],
            cosine: f64::INFINITY,
        };
        for (row, &c) in self.cosines.iter().zip(&self.c_values) {
            for (&cos, &k) in row.iter().zip(&self.k_values) {
                if cos < best.cosine {
                    best = GridMinimum { c, k, cosine: cos };
                }
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("C,k,cosine\n");
        for (row, c) in self.cosines.iter().zip(&self.c_values) {
            for (cos, k) in row.iter().zip(&self.k_values) {
                out.push_str(&format!("{c},{k},{cos}\n"));
            }
        }
        out
    }
}

/// Closed-form cosine for every `C` in `c_range` and `k` in `k_range`
/// (inclusive ranges).
pub fn angle_grid(c_range: (u64, u64), k_range: (u64, u64)) -> Result<AngleGrid> {
    if c_range.0 == 0 || c_range.0 > c_range.1 || k_range.0 > k_range.1 {
        return Err(Error::Config(format!(
            "invalid grid ranges C {c_range:?}, k {k_range:?}"
        )));
    }
    let c_values: Vec<u64> = (c_range.0..=c_range.1).collect();
    let k_values: Vec<u64> = (k_range.0..=k_range.1).collect();
    let cosines = c_values
        .iter()
        .map(|&c| k_values.iter().map(|&k| gradient_cosine_closed_form(c, k)).collect())
        .collect();
    Ok(AngleGrid {
        c_values,
        k_values,
        cosines,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub mode: Mode,
    pub c_max: usize,
    pub source_norm: f64,
    pub target_norm: f64,
    /// Mean loss of the last logged interval.
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub rows: Vec<NormRow>,
}

impl NormReport {
    pub fn get(&self, mode: Mode, c_max: usize) -> Option<&NormRow> {
        self.rows.iter().find(|r| r.mode == mode && r.c_max == c_max)
    }

    /// Mean source norms of `mode` in `c_max` order.
    pub fn source_norms(&self, mode: Mode) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| (r.c_max, r.source_norm))
            .collect();
        v.sort_by_key(|&(c, _)| c);
        v
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,c_max,source_norm,target_norm\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.mode, r.c_max, r.source_norm, r.target_norm
            ));
        }
        out
    }
}

/// Train one model per `(mode, c_max)` pair on `corpus_path` and record the
/// mean source and target row norms. `base` supplies every other setting;
/// each mode uses its own default learning rate unless `keep_lr` is set.
pub fn norm_experiment(
    corpus_path: impl AsRef<Path>,
    c_max_list: &[usize],
    mode_list: &[Mode],
    base: &TrainConfig,
    keep_lr: bool,
) -> Result<NormReport> {
    let corpus_path = corpus_path.as_ref();
    base.validate()?;
    let vocab = Vocabulary::from_corpus_file(corpus_path, base.min_count, base.noise_exponent)?;
    let mut report = NormReport::default();
    for &mode in mode_list {
        for &c_max in c_max_list {
            let config = TrainConfig {
                mode,
                c_max,
                lr0: if keep_lr { base.lr0 } else { mode.default_lr() },
                ..base.clone()
            };
            let (model, log, _) = train_with_vocab::<f32>(corpus_path, &vocab, &config)?;
            report.rows.push(NormRow {
                mode,
                c_max,
                source_norm: model.mean_source_norm(),
                target_norm: model.mean_target_norm(),
                final_loss: log.last(),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        for k in 0..50 {
            assert_eq!(gradient_cosine_closed_form(1, k), 1.0);
        }
        assert!((gradient_cosine_closed_form(9, 20) - 0.68).abs() < 1e-12);
        let v = gradient_cosine_closed_form(5, 5);
        assert!((v - 0.8166).abs() < 1e-3 && (v - 0.82).abs() < 5e-3, "{v}");
    }

    #[test]
    fn closed_form_turns_at_c_squared_minus_one() {
        // d/dk of the log-cosine vanishes at k = C² - 1: decreasing before,
        // increasing (back towards 1) after
        for c in 2..=12u64 {
            let turn = c * c - 1;
            for k in 0..turn {
                assert!(gradient_cosine_closed_form(c, k + 1) < gradient_cosine_closed_form(c, k));
            }
            for k in turn..turn + 200 {
                assert!(gradient_cosine_closed_form(c, k + 1) > gradient_cosine_closed_form(c, k));
            }
        }
    }

    #[test]
    fn grid_minimum_within_twenty() {
        let grid = angle_grid((1, 20), (1, 20)).unwrap();
        let m = grid.minimum();
        assert_eq!((m.c, m.k), (9, 20));
        assert!((m.cosine - 0.68).abs() < 1e-12);
        assert!(grid.cosines.iter().flatten().all(|&c| c > 0.0 && c <= 1.0));
    }

    #[test]
    fn grid_of_single_context_is_all_ones() {
        let grid = angle_grid((1, 1), (0, 30)).unwrap();
        assert!(grid.cosines[0].iter().all(|&c| c == 1.0));
    }

    #[test]
    fn wide_grid_reaches_figure_minimum() {
        // C up to 100 and k up to 1000 bottoms out at 0.3028 (C = 56, k = 1000)
        let m = angle_grid((1, 100), (0, 1000)).unwrap().minimum();
        assert_eq!((m.c, m.k), (56, 1000));
        assert!((m.cosine - 0.303).abs() < 5e-4, "{m:?}");
    }

    #[test]
    fn bad_grid_ranges() {
        assert!(angle_grid((0, 3), (1, 2)).is_err());
        assert!(angle_grid((3, 2), (1, 2)).is_err());
    }

    #[test]
    fn grid_csv_layout() {
        let csv = angle_grid((1, 2), (1, 1)).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "C,k,cosine");
        assert_eq!(lines[1], "1,1,1");
        assert!(lines[2].starts_with("2,1,0.9"));
    }

    #[test]
    fn equal_norm_construction_matches_closed_form() {
        for &(c, k) in &[(1usize, 3usize), (2, 1), (5, 5), (9, 20)] {
            let correct = equal_norm_bundle(c, k, c + k + 4, 0.37);
            let faulty = correct.scale_context(c as f64);
            let cos = bundle_cosine(&faulty, &correct).unwrap();
            let want = gradient_cosine_closed_form(c as u64, k as u64);
            assert!((cos - want).abs() < 1e-12, "({c},{k}): {cos} vs {want}");
        }
    }

    #[test]
    fn empirical_cosine_properties() {
        let mut rng = SmallRng::seed_from_u64(7);
        let (m, inst) = random_cbow_problem(&mut rng, 6, 1, 4, 0.1);
        assert!((gradient_cosine_empirical(&inst, &m).unwrap() - 1.0).abs() < 1e-15);
        for _ in 0..50 {
            let (m, inst) = random_cbow_problem(&mut rng, 5, 7, 3, 0.5);
            let cos = gradient_cosine_empirical(&inst, &m).unwrap();
            assert!(cos > 0.0 && cos <= 1.0 + 1e-15);
            assert!(descent_check(&inst, &m));
            assert!(structural_deviation(&inst, &m) < 1e-14);
        }
    }

    #[test]
    fn zero_model_is_degenerate_but_passes_descent() {
        let m = ModelState::<f64>::zeros(4, 3);
        let inst = TrainingInstance {
            center: 0,
            context: vec![1, 2],
            negatives: vec![3],
        };
        assert!(descent_check(&inst, &m));
        assert!(matches!(
            gradient_cosine_empirical(&inst, &m),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn monte_carlo_smoke() {
        let s = descent_monte_carlo(2500, (1, 20), (1, 20), 3);
        assert_eq!(s.trials, 2500);
        assert!(s.all_passed());
        assert!(s.nonzero > 2400);
        assert!(s.max_structural_deviation < 1e-12);
        assert!(s.min_cosine > 0.0);
    }

    #[test]
    fn norm_csv() {
        let report = NormReport {
            rows: vec![NormRow {
                mode: Mode::CbowFaulty,
                c_max: 5,
                source_norm: 1.5,
                target_norm: 2.0,
                final_loss: None,
            }],
        };
        assert_eq!(report.to_csv(), "mode,c_max,source_norm,target_norm\ncbow_faulty,5,1.5,2\n");
        assert_eq!(report.source_norms(Mode::CbowFaulty), vec![(5, 1.5)]);
    }
}
