//! Subspace neural network.
//!
//! Each utterance arrives as L subspaces, one per recognizer. The first layer
//! scores input `S_l` against m learnable weight maps `W_lj` (D_l×d'_l) with
//! `k_lj = ‖W_ljᵀS_l‖_F²`, a projection-kernel score that is unchanged when
//! `S_l` is replaced by `S_l·Q`. The L·m scores feed a linear (optionally
//! MLP) head with softmax output. Weight maps start orthonormal and are kept
//! near the Stiefel manifold only by the penalty `λ·‖WᵀW − I‖_F²`.

mod archive;
mod gradcheck;
mod model;
mod train;

pub use gradcheck::{gradient_check, random_check_case, GradCheckReport, FD_STEP};
pub use model::{
    detection_scores, Dense, Forward, SnnExample, SnnGrads, SnnModel,
};
pub use train::{lr_at_epoch, train, train_from, AdamConfig, EpochLog, SnnTrainConfig, TrainOutcome};
