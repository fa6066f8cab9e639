//! Dense linear algebra with reverse-mode gradients, sized for bi-LSTMs,
//! attention pooling and an affine output head.

mod gradcheck;
mod param;
mod tape;
pub mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, ParamCheck, REL_ERROR_FLOOR};
pub use param::{ParamId, ParamKind, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
