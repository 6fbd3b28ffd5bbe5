//! Differentiable building blocks: tape, GRU, attention, Adam.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod module;
pub mod ops;
pub mod param;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{attend, encode, gru_step, AttentionParams, GruParams, LinearParams};
pub use module::Module;
pub use ops::{bce, softmax, BCE_CLAMP};
pub use param::ParamTensor;
pub use tape::{Gradients, Tape, Var};
