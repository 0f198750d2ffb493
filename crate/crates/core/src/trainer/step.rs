//! Negative-sampling losses and single-instance SGD steps.
//!
//! Every step reads all parameters it needs before writing any of them, so
//! the update is exactly `θ ← θ − lr·g(θ)` for the instance's loss (repeated
//! ids accumulate additively).

use crate::corpus::{TrainingInstance, WordId};
use crate::model::{axpy, dot, Params, Real, Sigmoid};

/// Probabilities are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` inside `ln` when
/// reporting losses.
pub const LOG_CLAMP: f64 = 1e-7;

#[inline]
fn neg_log<F: Real>(p: F) -> F {
    let lo = F::from_f64_lossy(LOG_CLAMP);
    let hi = F::one() - lo;
    -p.max(lo).min(hi).ln()
}

/// `-log σ(u·v_pos) - Σ log σ(-u·v_neg)` for an input vector `u`.
pub fn negative_sampling_loss<F: Real>(input: &[F], positive: &[F], negatives: &[&[F]]) -> F {
    let mut loss = neg_log(crate::model::sigmoid(dot(positive, input)));
    for neg in negatives {
        loss += neg_log(crate::model::sigmoid(-dot(neg, input)));
    }
    loss
}

/// Average of the given rows.
pub fn context_mean<F: Real>(rows: &[&[F]], dim: usize) -> Vec<F> {
    let mut mean = vec![F::zero(); dim];
    for row in rows {
        axpy(F::one(), row, &mut mean);
    }
    let inv = F::one() / F::from_usize(rows.len()).unwrap();
    mean.iter_mut().for_each(|x| *x *= inv);
    mean
}

/// CBOW loss from explicit vectors: context source rows, the center's target
/// row and the negatives' target rows.
pub fn cbow_loss_from_vectors<F: Real>(context: &[&[F]], target: &[F], negatives: &[&[F]]) -> F {
    let mean = context_mean(context, target.len());
    negative_sampling_loss(&mean, target, negatives)
}

/// CBOW loss of one instance (exact sigmoid, no mutation).
pub fn cbow_loss<F: Real, P: Params<F>>(instance: &TrainingInstance, model: &P) -> F {
    let context: Vec<&[F]> = instance
        .context
        .iter()
        .map(|&w| model.source(w as usize))
        .collect();
    let negatives: Vec<&[F]> = instance
        .negatives
        .iter()
        .map(|&w| model.target(w as usize))
        .collect();
    cbow_loss_from_vectors(&context, model.target(instance.center as usize), &negatives)
}

/// Skip-gram loss of one (center, context word) pair with its negatives.
pub fn sg_loss<F: Real, P: Params<F>>(
    center: WordId,
    context_word: WordId,
    negatives: &[WordId],
    model: &P,
) -> F {
    let negs: Vec<&[F]> = negatives.iter().map(|&w| model.target(w as usize)).collect();
    negative_sampling_loss(
        model.source(center as usize),
        model.target(context_word as usize),
        &negs,
    )
}

/// Reusable buffers for the SGD steps.
#[derive(Clone, Debug, Default)]
pub struct Workspace<F> {
    input: Vec<F>,
    grad_input: Vec<F>,
    coeffs: Vec<F>,
}

impl<F: Real> Workspace<F> {
    pub fn new(dim: usize) -> Self {
        Workspace {
            input: vec![F::zero(); dim],
            grad_input: vec![F::zero(); dim],
            coeffs: Vec::new(),
        }
    }

    fn reset(&mut self, dim: usize) {
        self.input.clear();
        self.input.resize(dim, F::zero());
        self.grad_input.clear();
        self.grad_input.resize(dim, F::zero());
    }

    /// Scores the positive and negatives against `self.input`, fills
    /// `grad_input` with ∂L/∂input, applies the target-side updates and
    /// returns the loss.
    fn output_layer<P: Params<F>>(
        &mut self,
        model: &mut P,
        positive: WordId,
        negatives: &[WordId],
        lr: F,
        sigmoid: &Sigmoid,
    ) -> F {
        self.coeffs.clear();
        let mut loss;
        {
            let row = model.target(positive as usize);
            let p = sigmoid.eval(dot(row, &self.input));
            loss = neg_log(p);
            let g = p - F::one();
            axpy(g, row, &mut self.grad_input);
            self.coeffs.push(g);
        }
        for &neg in negatives {
            let row = model.target(neg as usize);
            let p = sigmoid.eval(dot(row, &self.input));
            loss += neg_log(F::one() - p);
            axpy(p, row, &mut self.grad_input);
            self.coeffs.push(p);
        }
        // all target gradients are known, now write them
        let ids = std::iter::once(positive).chain(negatives.iter().copied());
        for (id, &g) in ids.zip(&self.coeffs) {
            axpy(-lr * g, &self.input, model.target_mut(id as usize));
        }
        loss
    }

    /// One CBOW step; see [`cbow_step`].
    pub fn cbow_step<P: Params<F>>(
        &mut self,
        instance: &TrainingInstance,
        model: &mut P,
        lr: F,
        faulty: bool,
        sigmoid: &Sigmoid,
    ) -> F {
        let dim = model.dim();
        self.reset(dim);
        let c = instance.context.len();
        debug_assert!(c > 0, "empty context");
        for &w in &instance.context {
            axpy(F::one(), model.source(w as usize), &mut self.input);
        }
        let inv_c = F::one() / F::from_usize(c).unwrap();
        self.input.iter_mut().for_each(|x| *x *= inv_c);

        let loss = self.output_layer(model, instance.center, &instance.negatives, lr, sigmoid);

        let scale = if faulty { -lr } else { -lr * inv_c };
        for &w in &instance.context {
            axpy(scale, &self.grad_input, model.source_mut(w as usize));
        }
        loss
    }

    /// One skip-gram step; see [`sg_step`].
    pub fn sg_step<P: Params<F>>(
        &mut self,
        center: WordId,
        context_word: WordId,
        negatives: &[WordId],
        model: &mut P,
        lr: F,
        sigmoid: &Sigmoid,
    ) -> F {
        let dim = model.dim();
        self.reset(dim);
        self.input.copy_from_slice(model.source(center as usize));
        let loss = self.output_layer(model, context_word, negatives, lr, sigmoid);
        axpy(-lr, &self.grad_input, model.source_mut(center as usize));
        loss
    }
}

/// One SGD step on the CBOW loss of `instance`; returns the pre-update loss.
///
/// Target rows move by `-lr·∂L/∂v'`. Each context row moves by
/// `-lr·(1/C)·∂L/∂v_c`, or by `-lr·∂L/∂v_c` when `faulty` is set (the
/// historical word2vec.c / Gensim update).
pub fn cbow_step<F: Real, P: Params<F>>(
    instance: &TrainingInstance,
    model: &mut P,
    lr: F,
    faulty: bool,
    sigmoid: &Sigmoid,
) -> F {
    Workspace::new(model.dim()).cbow_step(instance, model, lr, faulty, sigmoid)
}

/// One SGD step on the skip-gram loss of a (center, context word) pair,
/// where the center's source vector predicts the context word's target
/// vector. Returns the pre-update loss.
pub fn sg_step<F: Real, P: Params<F>>(
    center: WordId,
    context_word: WordId,
    negatives: &[WordId],
    model: &mut P,
    lr: F,
    sigmoid: &Sigmoid,
) -> F {
    Workspace::new(model.dim()).sg_step(center, context_word, negatives, model, lr, sigmoid)
}
