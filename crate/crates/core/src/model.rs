//! Embedding matrices, initialization and the logistic sigmoid.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// Scalar type usable for training arithmetic (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Exact logistic function `1 / (1 + e^-x)`, evaluated without overflow.
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Precomputed sigmoid over `[-x_max, x_max]` with linear interpolation
/// between grid points; saturates to the boundary values outside.
#[derive(Clone, Debug)]
pub struct SigmoidTable {
    values: Vec<f64>,
    x_max: f64,
    resolution: usize,
}

impl SigmoidTable {
    pub const DEFAULT_X_MAX: f64 = 6.0;
    pub const DEFAULT_RESOLUTION: usize = 100;

    /// `resolution` is the number of grid intervals per unit of `x`.
    pub fn new(x_max: f64, resolution: usize) -> Self {
        assert!(x_max > 0.0 && resolution > 0);
        let half = (x_max * resolution as f64).round() as usize;
        let step = 1.0 / resolution as f64;
        let values = (0..=2 * half)
            .map(|i| {
                let x = (i as f64 - half as f64) * step;
                sigmoid(x)
            })
            .collect();
        SigmoidTable {
            values,
            x_max: half as f64 * step,
            resolution,
        }
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn eval<F: Real>(&self, x: F) -> F {
        let x = x.to_f64_lossy();
        let last = self.values.len() - 1;
        if x <= -self.x_max {
            return F::from_f64_lossy(self.values[0]);
        }
        if x >= self.x_max {
            return F::from_f64_lossy(self.values[last]);
        }
        let pos = (x + self.x_max) * self.resolution as f64;
        let i = (pos.floor() as usize).min(last - 1);
        let frac = pos - i as f64;
        let v = if frac == 0.0 {
            self.values[i]
        } else {
            self.values[i] + frac * (self.values[i + 1] - self.values[i])
        };
        F::from_f64_lossy(v)
    }
}

impl Default for SigmoidTable {
    fn default() -> Self {
        SigmoidTable::new(Self::DEFAULT_X_MAX, Self::DEFAULT_RESOLUTION)
    }
}

/// Which sigmoid the training steps use.
#[derive(Clone, Debug, Default)]
pub enum Sigmoid {
    #[default]
    Exact,
    Table(SigmoidTable),
}

impl Sigmoid {
    #[inline]
    pub fn eval<F: Real>(&self, x: F) -> F {
        match self {
            Sigmoid::Exact => sigmoid(x),
            Sigmoid::Table(t) => t.eval(x),
        }
    }
}

/// Row access to the source and target matrices.
///
/// Implemented by [`ModelState`] for exclusive access and by the trainer's
/// lock-free shared view.
pub trait Params<F> {
    fn dim(&self) -> usize;
    fn source(&self, id: usize) -> &[F];
    fn target(&self, id: usize) -> &[F];
    fn source_mut(&mut self, id: usize) -> &mut [F];
    fn target_mut(&mut self, id: usize) -> &mut [F];
}

/// Source (input) and target (output) embeddings, both `vocab_size × dim`,
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<F> {
    vocab_size: usize,
    dim: usize,
    source: Vec<F>,
    target: Vec<F>,
}

impl<F: Real> ModelState<F> {
    /// Source entries uniform on `[-0.5/dim, 0.5/dim)`, target all zero.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        assert!(vocab_size >= 1 && dim >= 1, "empty model shape");
        let mut rng = SmallRng::seed_from_u64(seed);
        let scale = 1.0 / dim as f64;
        let source = (0..vocab_size * dim)
            .map(|_| F::from_f64_lossy((rng.random::<f64>() - 0.5) * scale))
            .collect();
        ModelState {
            vocab_size,
            dim,
            source,
            target: vec![F::zero(); vocab_size * dim],
        }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        ModelState {
            vocab_size,
            dim,
            source: vec![F::zero(); vocab_size * dim],
            target: vec![F::zero(); vocab_size * dim],
        }
    }

    /// Build from row-major matrices. Panics if the shapes disagree.
    pub fn from_matrices(vocab_size: usize, dim: usize, source: Vec<F>, target: Vec<F>) -> Self {
        assert_eq!(source.len(), vocab_size * dim, "source shape");
        assert_eq!(target.len(), vocab_size * dim, "target shape");
        ModelState {
            vocab_size,
            dim,
            source,
            target,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn source_matrix(&self) -> &[F] {
        &self.source
    }

    pub fn target_matrix(&self) -> &[F] {
        &self.target
    }

    pub(crate) fn matrices_mut(&mut self) -> (&mut [F], &mut [F]) {
        (&mut self.source, &mut self.target)
    }

    pub fn is_finite(&self) -> bool {
        self.source.iter().chain(&self.target).all(|x| x.is_finite())
    }

    pub fn mean_source_norm(&self) -> f64 {
        mean_row_norm(&self.source, self.dim)
    }

    pub fn mean_target_norm(&self) -> f64 {
        mean_row_norm(&self.target, self.dim)
    }

    pub fn cast<G: Real>(&self) -> ModelState<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::from_f64_lossy(x.to_f64_lossy())).collect();
        ModelState {
            vocab_size: self.vocab_size,
            dim: self.dim,
            source: conv(&self.source),
            target: conv(&self.target),
        }
    }
}

impl<F: Real> Params<F> for ModelState<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn source(&self, id: usize) -> &[F] {
        &self.source[id * self.dim..(id + 1) * self.dim]
    }

    #[inline]
    fn target(&self, id: usize) -> &[F] {
        &self.target[id * self.dim..(id + 1) * self.dim]
    }

    #[inline]
    fn source_mut(&mut self, id: usize) -> &mut [F] {
        &mut self.source[id * self.dim..(id + 1) * self.dim]
    }

    #[inline]
    fn target_mut(&mut self, id: usize) -> &mut [F] {
        &mut self.target[id * self.dim..(id + 1) * self.dim]
    }
}

fn mean_row_norm<F: Real>(matrix: &[F], dim: usize) -> f64 {
    let rows = matrix.len() / dim;
    if rows == 0 {
        return 0.0;
    }
    let total: f64 = matrix
        .chunks_exact(dim)
        .map(|row| row.iter().map(|x| x.to_f64_lossy().powi(2)).sum::<f64>().sqrt())
        .sum();
    total / rows as f64
}

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_known_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(6.0f64) - 0.997_527_376_843_365_6).abs() < 1e-15);
        for &x in &[-30.0f64, -2.5, -0.1, 0.3, 4.0, 700.0, -800.0] {
            let s = sigmoid(x) + sigmoid(-x);
            assert!((s - 1.0).abs() < 1e-15, "x={x}");
        }
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn table_matches_exact_sigmoid() {
        let table = SigmoidTable::default();
        assert_eq!(table.eval(0.0f64), 0.5);
        let mut prev = f64::NEG_INFINITY;
        let mut x = -7.0;
        while x <= 7.0 {
            let v = table.eval(x);
            assert!(v >= prev, "not monotone at {x}");
            prev = v;
            if x.abs() < table.x_max() {
                assert!((v - sigmoid(x)).abs() <= 1e-3, "x={x}");
            }
            x += 0.0007;
        }
    }

    #[test]
    fn table_saturates_beyond_x_max() {
        let table = SigmoidTable::default();
        assert_eq!(table.eval(100.0f64), table.eval(6.0f64));
        assert!((table.eval(100.0f64) - sigmoid(6.0)).abs() < 1e-12);
        assert_eq!(table.eval(-100.0f32), table.eval(-6.0f32));
    }

    #[test]
    fn init_ranges_and_determinism() {
        let m = ModelState::<f32>::init(50, 300, 7);
        let bound = 1.0 / 600.0;
        assert!(m.source_matrix().iter().all(|&x| x.abs() <= bound));
        assert!(m.target_matrix().iter().all(|&x| x == 0.0));
        assert_eq!(m, ModelState::<f32>::init(50, 300, 7));
        assert_ne!(m, ModelState::<f32>::init(50, 300, 8));
    }

    #[test]
    fn rows_are_disjoint_slices() {
        let mut m = ModelState::<f64>::zeros(3, 2);
        m.source_mut(1).copy_from_slice(&[1.0, 2.0]);
        m.target_mut(2)[1] = 5.0;
        assert_eq!(m.source_matrix(), &[0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(m.target(2), &[0.0, 5.0]);
        assert!((m.mean_source_norm() - 5f64.sqrt() / 3.0).abs() < 1e-15);
    }
}
