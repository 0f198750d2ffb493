//! Negative-sampling word2vec training with skip-gram, CBOW, and the
//! historical (unnormalized) CBOW source update, together with gradient
//! diagnostics and intrinsic evaluation.
//!
//! The crate is organised around the training pipeline:
//!
//! * [`corpus`] builds the vocabulary and turns sentences into training
//!   instances (dynamic windows, subsampling, negative sampling).
//! * [`model`] holds the source/target embedding matrices and the sigmoid.
//! * [`trainer`] runs (optionally multithreaded) SGD for the three objectives.
//! * [`gradcheck`] compares analytic gradients against finite differences.
//! * [`analysis`] measures how far the unnormalized update strays from the
//!   true gradient, and how embedding norms react to it.
//! * [`eval`] scores embeddings on word similarity and analogy datasets.
//! * [`io`] reads and writes word2vec text/binary embedding files.
//! * [`cli`] is the command-line front end.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{ModelState, Real, Sigmoid, SigmoidTable};
