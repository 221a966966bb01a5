//! Evolution of typed linear register-machine control programs for
//! non-stationary control tasks.

pub mod analysis;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod interpreter;
pub mod ops;
pub mod program;
pub mod search;
pub mod seed;
pub mod text;
pub mod variation;

pub use error::{Error, Result};
pub use interpreter::{start_episode, MemoryState, Runtime};
pub use ops::{Bank, Op};
pub use program::{Address, FunctionId, GenConfig, Instruction, MemoryLayout, Program};

/// Canonical text of the reference linear recurrent cartpole controller.
pub const CARTPOLE_GOLDEN: &str = include_str!("../data/cartpole_golden.prog");

pub fn golden_program() -> Program {
    text::deserialize(CARTPOLE_GOLDEN).expect("bundled program parses")
}
