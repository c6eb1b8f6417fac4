//! Subspace representations of phone-posterior sequences.
//!
//! An utterance decoded by a phone recognizer becomes a sequence of phonetic
//! vectors ([`phonetics`]). Context stacking or a dynamic linear model turns
//! that sequence into an orthonormal basis ([`construction`]), i.e. a point
//! on a Grassmann manifold ([`manifold`]). Utterances are then compared by
//! their principal angles, either through a projection-kernel SVM
//! ([`svm`]) or a subspace neural network whose first layer scores inputs
//! against learnable orthonormal weight maps ([`snn`]). [`eval`] provides
//! detection metrics and [`synthlab`] synthetic phonotactic languages to
//! exercise the whole chain.

pub mod construction;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod manifold;
pub mod matrix_io;
pub mod phonetics;
pub mod pipeline;
pub mod seed;
pub mod snn;
pub mod svm;
pub mod synthlab;

pub use error::{Error, Result};
pub use manifold::Subspace;
pub use phonetics::PhoneticSequence;
