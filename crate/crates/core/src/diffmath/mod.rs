//! Reverse-mode automatic differentiation and first-order optimisation.

mod adam;
mod scalar;
mod tape;
mod tensor;

pub use adam::{decayed_lr, AdamConfig, AdamState, LrSchedule, StepOutcome};
pub(crate) use scalar::gemm;
pub use scalar::Real;
pub(crate) use tape::softplus;
pub use tape::{Shape, Tape, Var};
pub use tensor::ParamTensor;
