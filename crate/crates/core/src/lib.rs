//! Prioritizes unlabeled test inputs of a trained neural network so that the
//! inputs most likely to expose a wrong prediction are labeled first.
//!
//! Three scores are provided:
//!
//! - softmax entropy of the deterministic prediction,
//! - Monte-Carlo dropout uncertainty (entropy of the mean prediction for
//!   classifiers, predictive variance for regressors),
//! - distance-based surprise adequacy over activation traces.
//!
//! [`eval`] turns scores into an order and measures how early the order
//! surfaces the erroneous inputs.

pub mod engine;
pub mod error;
pub mod eval;
pub mod format;
pub mod rng;
pub mod scorers;
pub mod tensor;

pub use engine::{
    capture_traces, forward, predict_batch, softmax, ActivationTraceSet, ForwardMode,
};
pub use error::{Error, Result};
pub use eval::{
    apfd_score, cumulative_error_curve, derive_correctness, evaluate, rank_by_score, select_top,
    CorrectnessVector, EvalReport, Selection,
};
pub use format::{
    load_model, load_tensor_file, save_model, save_tensor_file, Labels, LayerKind, LayerSpec,
    Model, ModelManifest, Padding, Task,
};
pub use scorers::{
    build_dsa_index, entropy, score_batch, score_dropout_cls, score_dropout_reg, score_dsa,
    score_dsa_batch, score_softmax, DsaIndex, McConfig, Method, ScoreRecord,
};
pub use tensor::{argmax, l2_distance, matmul, Tensor};
