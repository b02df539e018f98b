//! Toolchain for a small concurrent reversible intermediate language:
//! parsing, static checks, a bidirectional interpreter, annotation DAGs
//! that control backward execution, and a checker for the axioms of
//! reversible transition systems.

pub mod adag;
pub mod analysis;
pub mod corpus;
pub mod ltsi;
pub mod machine;
pub mod session;
pub mod syntax;
pub mod verify;

pub use analysis::{check_well_formed, MemoryResource, ResourceSet, WellFormednessReport};
pub use machine::{Direction, Machine, ProcessId, ProgramConfiguration, Transition};
pub use session::DebugSession;
pub use syntax::{parse_program, BlockId, ParseError, Program};
