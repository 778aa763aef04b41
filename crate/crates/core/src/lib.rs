pub mod analysis;
pub mod error;
pub mod graph;
pub mod layers;
pub mod losses;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
