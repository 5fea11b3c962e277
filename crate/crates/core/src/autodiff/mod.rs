//! Reverse-mode differentiation over matrix-valued operations.

mod adam;
mod expm;
mod gradcheck;
mod tape;

pub use adam::{clip_global_norm, Adam, AdamConfig, Param};
pub use expm::{expm, skew_exp, squaring_steps};
pub use gradcheck::{check_gradient, CheckInput, GradCheckReport};
pub use tape::{Gradients, Shape, Tape, Var};
