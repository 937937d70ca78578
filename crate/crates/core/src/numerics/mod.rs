//! Dense-tensor engine: reverse-mode differentiation on a single-use tape,
//! the Adam optimizer, and a deterministic seeded random generator.

pub mod adam;
pub mod fd;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, OptimizerConfig};
pub use rng::Rng;
pub use tape::{Tape, Var};
pub use tensor::{Mask, ParamId, ParamSet, Tensor};
