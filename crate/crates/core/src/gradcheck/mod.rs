//! Finite-difference verification of the CBOW and skip-gram gradients.
//!
//! Gradients are kept per occurrence ("slot") rather than per word id: a word
//! that appears twice in a window owns two slots. The numeric gradient
//! perturbs each slot independently, so the comparison is exact even when
//! ids repeat.
//!
//! The loss inside the finite differences is evaluated in double-double
//! precision. In plain f64 the difference `L(θ+ε) − L(θ−ε)` keeps only about
//! five significant digits at ε = 1e-5, which is not enough to resolve small
//! gradient coordinates to a relative error of 1e-6.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{TrainingInstance, WordId};
use crate::error::{Error, Result};
use crate::model::{dot, sigmoid, ModelState, Params};
use crate::trainer::context_mean;

mod dd;
use dd::Dd;

pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Floor on the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-12;

/// Per-slot gradients of one instance. The stacked layout is
/// `[context_1 … context_C, negative_1 … negative_k, target]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub context_grads: Vec<Vec<f64>>,
    pub negative_grads: Vec<Vec<f64>>,
    pub target_grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "block", content = "slot", rename_all = "snake_case")]
pub enum Block {
    Context(usize),
    Negative(usize),
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coordinate {
    pub block: Block,
    pub index: usize,
}

impl GradientBundle {
    pub fn dim(&self) -> usize {
        self.target_grad.len()
    }

    fn blocks(&self) -> impl Iterator<Item = (Block, &[f64])> {
        let ctx = self
            .context_grads
            .iter()
            .enumerate()
            .map(|(i, g)| (Block::Context(i), g.as_slice()));
        let neg = self
            .negative_grads
            .iter()
            .enumerate()
            .map(|(i, g)| (Block::Negative(i), g.as_slice()));
        ctx.chain(neg)
            .chain(std::iter::once((Block::Target, self.target_grad.as_slice())))
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.blocks().flat_map(|(_, g)| g.iter().copied()).collect()
    }

    pub fn same_shape(&self, other: &GradientBundle) -> bool {
        let widths = |b: &GradientBundle| b.blocks().map(|(k, g)| (k, g.len())).collect::<Vec<_>>();
        widths(self) == widths(other)
    }

    pub fn dot(&self, other: &GradientBundle) -> f64 {
        dot(&self.stacked(), &other.stacked())
    }

    pub fn norm(&self) -> f64 {
        self.stacked().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.stacked().iter().all(|x| x.is_finite())
    }

    /// Multiply the context block by `factor`, leaving the rest unchanged
    /// (the diagonal map relating the two CBOW updates).
    pub fn scale_context(&self, factor: f64) -> GradientBundle {
        let mut out = self.clone();
        for g in &mut out.context_grads {
            g.iter_mut().for_each(|x| *x *= factor);
        }
        out
    }
}

fn gather(instance: &TrainingInstance, model: &ModelState<f64>) -> Slots {
    Slots {
        context: instance
            .context
            .iter()
            .map(|&w| model.source(w as usize).to_vec())
            .collect(),
        negatives: instance
            .negatives
            .iter()
            .map(|&w| model.target(w as usize).to_vec())
            .collect(),
        target: model.target(instance.center as usize).to_vec(),
    }
}

struct Slots {
    context: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    target: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Perturbation {
    block: Block,
    index: usize,
    value: Dd,
}

impl Slots {
    fn row(&self, block: Block) -> &[f64] {
        match block {
            Block::Context(i) => &self.context[i],
            Block::Negative(i) => &self.negatives[i],
            Block::Target => &self.target,
        }
    }

    /// Slot row in extended precision, with the perturbation applied.
    fn row_dd(&self, block: Block, perturb: Option<Perturbation>) -> Vec<Dd> {
        let mut row: Vec<Dd> = self.row(block).iter().map(|&x| Dd::new(x)).collect();
        if let Some(p) = perturb.filter(|p| p.block == block) {
            row[p.index] = p.value;
        }
        row
    }

    fn output_loss(&self, input: &[Dd], perturb: Option<Perturbation>) -> Dd {
        let dot = |row: Vec<Dd>| row.iter().zip(input).fold(Dd::ZERO, |acc, (&a, &b)| acc + a * b);
        let mut loss = -dd::log_sigmoid(dot(self.row_dd(Block::Target, perturb)));
        for i in 0..self.negatives.len() {
            loss = loss - dd::log_sigmoid(-dot(self.row_dd(Block::Negative(i), perturb)));
        }
        loss
    }

    fn cbow_loss(&self, perturb: Option<Perturbation>) -> Dd {
        let dim = self.target.len();
        let mut mean = vec![Dd::ZERO; dim];
        for i in 0..self.context.len() {
            for (m, x) in mean.iter_mut().zip(self.row_dd(Block::Context(i), perturb)) {
                *m = *m + x;
            }
        }
        let c = Dd::new(self.context.len() as f64);
        mean.iter_mut().for_each(|m| *m = *m / c);
        self.output_loss(&mean, perturb)
    }

    /// Skip-gram treats the single context slot as the center source vector.
    fn sg_loss(&self, perturb: Option<Perturbation>) -> Dd {
        let input = self.row_dd(Block::Context(0), perturb);
        self.output_loss(&input, perturb)
    }

    fn central_difference(&self, epsilon: f64, loss: impl Fn(&Slots, Option<Perturbation>) -> Dd) -> GradientBundle {
        let dim = self.target.len();
        let mut out = GradientBundle {
            context_grads: vec![vec![0.0; dim]; self.context.len()],
            negative_grads: vec![vec![0.0; dim]; self.negatives.len()],
            target_grad: vec![0.0; dim],
        };
        let blocks: Vec<Block> = (0..self.context.len())
            .map(Block::Context)
            .chain((0..self.negatives.len()).map(Block::Negative))
            .chain(std::iter::once(Block::Target))
            .collect();
        for block in blocks {
            for index in 0..dim {
                let orig = self.row(block)[index];
                let at = |value| Some(Perturbation { block, index, value });
                let plus = loss(self, at(Dd::sum(orig, epsilon)));
                let minus = loss(self, at(Dd::sum(orig, -epsilon)));
                let g = ((plus - minus) / Dd::new(2.0 * epsilon)).to_f64();
                match block {
                    Block::Context(i) => out.context_grads[i][index] = g,
                    Block::Negative(i) => out.negative_grads[i][index] = g,
                    Block::Target => out.target_grad[index] = g,
                }
            }
        }
        out
    }
}

/// Closed-form CBOW gradients. With `faulty`, the context slots carry the
/// full ∂L/∂v_c instead of ∂L/∂v_c / C.
pub fn analytic_cbow_grad(
    instance: &TrainingInstance,
    model: &ModelState<f64>,
    faulty: bool,
) -> GradientBundle {
    let slots = gather(instance, model);
    let ctx: Vec<&[f64]> = slots.context.iter().map(Vec::as_slice).collect();
    let vc = context_mean(&ctx, model.dim());
    let mut bundle = output_gradients(&vc, &slots.target, &slots.negatives, slots.context.len());
    if !faulty {
        let inv = 1.0 / slots.context.len() as f64;
        for g in &mut bundle.context_grads {
            g.iter_mut().for_each(|x| *x *= inv);
        }
    }
    bundle
}

/// Gradients of the output layer for input `input`; every context slot gets
/// the unscaled ∂L/∂input.
fn output_gradients(
    input: &[f64],
    target: &[f64],
    negatives: &[Vec<f64>],
    context_slots: usize,
) -> GradientBundle {
    let g_pos = sigmoid(dot(target, input)) - 1.0;
    let mut grad_input: Vec<f64> = target.iter().map(|t| g_pos * t).collect();
    let mut negative_grads = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let g = sigmoid(dot(neg, input));
        for (gi, n) in grad_input.iter_mut().zip(neg) {
            *gi += g * n;
        }
        negative_grads.push(input.iter().map(|x| g * x).collect());
    }
    GradientBundle {
        context_grads: vec![grad_input; context_slots],
        negative_grads,
        target_grad: input.iter().map(|x| g_pos * x).collect(),
    }
}

/// Central-difference gradient of the CBOW loss over every slot
/// (exact sigmoid, no probability clamping).
pub fn numeric_grad(instance: &TrainingInstance, model: &ModelState<f64>, epsilon: f64) -> GradientBundle {
    assert!(epsilon > 0.0, "epsilon must be positive");
    gather(instance, model).central_difference(epsilon, Slots::cbow_loss)
}

/// Closed-form skip-gram gradients; the center's source gradient is stored
/// as the single context slot.
pub fn analytic_sg_grad(
    center: WordId,
    context_word: WordId,
    negatives: &[WordId],
    model: &ModelState<f64>,
) -> GradientBundle {
    let slots = sg_slots(center, context_word, negatives, model);
    output_gradients(&slots.context[0], &slots.target, &slots.negatives, 1)
}

pub fn numeric_sg_grad(
    center: WordId,
    context_word: WordId,
    negatives: &[WordId],
    model: &ModelState<f64>,
    epsilon: f64,
) -> GradientBundle {
    assert!(epsilon > 0.0, "epsilon must be positive");
    sg_slots(center, context_word, negatives, model).central_difference(epsilon, Slots::sg_loss)
}

fn sg_slots(center: WordId, context_word: WordId, negatives: &[WordId], model: &ModelState<f64>) -> Slots {
    Slots {
        context: vec![model.source(center as usize).to_vec()],
        negatives: negatives
            .iter()
            .map(|&w| model.target(w as usize).to_vec())
            .collect(),
        target: model.target(context_word as usize).to_vec(),
    }
}

/// Central-difference derivative of a scalar function.
pub fn numeric_derivative(f: impl Fn(f64) -> f64, x: f64, epsilon: f64) -> f64 {
    (f(x + epsilon) - f(x - epsilon)) / (2.0 * epsilon)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<Coordinate>,
    /// Largest relative error within each block kind.
    pub max_context_error: f64,
    pub max_output_error: f64,
}

/// Compare two bundles coordinate by coordinate.
pub fn check(analytic: &GradientBundle, numeric: &GradientBundle, rel_tol: f64) -> Result<CheckReport> {
    if !analytic.same_shape(numeric) {
        return Err(Error::ShapeMismatch(format!(
            "{}+{}+1 slots of dim {} vs {}+{}+1 slots of dim {}",
            analytic.context_grads.len(),
            analytic.negative_grads.len(),
            analytic.dim(),
            numeric.context_grads.len(),
            numeric.negative_grads.len(),
            numeric.dim()
        )));
    }
    let mut report = CheckReport {
        passed: true,
        max_rel_error: 0.0,
        worst: None,
        max_context_error: 0.0,
        max_output_error: 0.0,
    };
    for ((block, a), (_, n)) in analytic.blocks().zip(numeric.blocks()) {
        for (index, (&x, &y)) in a.iter().zip(n).enumerate() {
            let err = relative_error(x, y);
            let err = if err.is_nan() { f64::INFINITY } else { err };
            match block {
                Block::Context(_) => report.max_context_error = report.max_context_error.max(err),
                _ => report.max_output_error = report.max_output_error.max(err),
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some(Coordinate { block, index });
            }
        }
    }
    report.passed = report.max_rel_error <= rel_tol;
    Ok(report)
}

/// Range `(min, max)` of `faulty / reference` over context coordinates whose
/// reference magnitude exceeds `min_magnitude`.
pub fn context_ratio_range(
    faulty: &GradientBundle,
    reference: &GradientBundle,
    min_magnitude: f64,
) -> Option<(f64, f64)> {
    let mut range: Option<(f64, f64)> = None;
    for (f, r) in faulty.context_grads.iter().zip(&reference.context_grads) {
        for (&x, &y) in f.iter().zip(r) {
            if y.abs() > min_magnitude {
                let q = x / y;
                range = Some(match range {
                    None => (q, q),
                    Some((lo, hi)) => (lo.min(q), hi.max(q)),
                });
            }
        }
    }
    range
}

/// Random CBOW problem with every slot on a distinct word id and all
/// embedding entries drawn from `N(0, scale²)`.
pub fn random_cbow_problem<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    context: usize,
    negatives: usize,
    scale: f64,
) -> (ModelState<f64>, TrainingInstance) {
    assert!(context >= 1 && dim >= 1);
    let vocab = context + negatives + 1;
    let mut gen = || -> Vec<f64> {
        (0..vocab * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                scale * z
            })
            .collect()
    };
    let source = gen();
    let target = gen();
    let model = ModelState::from_matrices(vocab, dim, source, target);
    let instance = TrainingInstance {
        context: (0..context as WordId).collect(),
        negatives: (context as WordId..(context + negatives) as WordId).collect(),
        center: (context + negatives) as WordId,
    };
    (model, instance)
}

/// Scale of the randomized gradient-check embeddings; keeps logits well
/// inside the unsaturated part of the sigmoid.
pub const RANDOM_EMBEDDING_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// CBOW with the 1/C context factor.
    #[value(name = "correct", alias = "cbow_correct")]
    Correct,
    /// CBOW without the 1/C factor; expected to fail for C ≥ 2.
    #[value(name = "faulty", alias = "cbow_faulty")]
    Faulty,
    /// Skip-gram.
    #[value(name = "sg")]
    Sg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dim: usize,
    pub context: usize,
    pub negatives: usize,
    pub report: CheckReport,
    /// `(min, max)` of analytic/numeric over context coordinates.
    pub context_ratio: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub mode: CheckMode,
    pub rel_tol: f64,
    pub epsilon: f64,
    pub trials: Vec<TrialResult>,
    pub all_passed: bool,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckRun {
    pub mode: CheckMode,
    pub trials: usize,
    pub dims: Vec<usize>,
    pub contexts: Vec<usize>,
    pub negatives: Vec<usize>,
    pub rel_tol: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl GradcheckRun {
    /// Run `trials` random instances, cycling through every combination of
    /// the configured dims, context sizes and negative counts.
    pub fn run(&self) -> GradcheckSummary {
        use rand::SeedableRng;
        let mut rng = rand::rngs::SmallRng::seed_from_u64(self.seed);
        let combos: Vec<(usize, usize, usize)> = self
            .dims
            .iter()
            .flat_map(|&d| {
                self.contexts
                    .iter()
                    .flat_map(move |&c| self.negatives.iter().map(move |&k| (d, c, k)))
            })
            .collect();
        assert!(!combos.is_empty(), "empty gradcheck grid");
        let mut trials = Vec::with_capacity(self.trials);
        for t in 0..self.trials {
            let (dim, c, k) = combos[t % combos.len()];
            let c = if self.mode == CheckMode::Sg { 1 } else { c };
            let (model, inst) = random_cbow_problem(&mut rng, dim, c, k, RANDOM_EMBEDDING_SCALE);
            let (analytic, numeric) = match self.mode {
                CheckMode::Correct | CheckMode::Faulty => (
                    analytic_cbow_grad(&inst, &model, self.mode == CheckMode::Faulty),
                    numeric_grad(&inst, &model, self.epsilon),
                ),
                CheckMode::Sg => {
                    // reuse the problem layout: slot 0 is the center word
                    let center = inst.context[0];
                    (
                        analytic_sg_grad(center, inst.center, &inst.negatives, &model),
                        numeric_sg_grad(center, inst.center, &inst.negatives, &model, self.epsilon),
                    )
                }
            };
            let report = check(&analytic, &numeric, self.rel_tol).expect("bundles share a layout");
            let context_ratio = context_ratio_range(&analytic, &numeric, 1e-9);
            trials.push(TrialResult {
                dim,
                context: c,
                negatives: k,
                report,
                context_ratio,
            });
        }
        let all_passed = trials.iter().all(|t| t.report.passed);
        let max_rel_error = trials
            .iter()
            .map(|t| t.report.max_rel_error)
            .fold(0.0, f64::max);
        GradcheckSummary {
            mode: self.mode,
            rel_tol: self.rel_tol,
            epsilon: self.epsilon,
            trials,
            all_passed,
            max_rel_error,
        }
    }
}
