//! Problem-file driver for the `pie` command-line tool.
//!
//! A JSON [`ProblemFile`] names the domain, grid, kernel, right-hand side
//! and `ϰ`; [`run_command`] dispatches it onto the solver and returns a
//! [`Report`] plus optional CSV profiles.

pub mod commands;
pub mod error;
pub mod problem;
pub mod report;
pub mod tensor;

pub use commands::{run_command, Command, Outcome, EXIT_ERROR, EXIT_OBSTRUCTED, EXIT_OK};
pub use error::{CliError, CliResult};
pub use problem::{parse_problem, Overrides, ProblemFile};
pub use report::Report;
