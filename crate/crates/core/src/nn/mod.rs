//! Minimal differentiable building blocks for the separator.

pub mod adam;
pub mod tape;

pub use adam::{adam_step, global_norm, AdamConfig, AdamState};
pub use tape::{Tape, Var};
