//! Shared pieces of the `cril` binary: program loading and the HTTP debug service.

pub mod server;

use std::path::Path;

use cril_core::ltsi::Lts;
use cril_core::machine::MachineError;
use cril_core::{corpus, parse_program, Program};

/// Reads a `.cril` file. A name that is not a file but names a bundled
/// program (`shared`, `airline-racy`, `airline-semaphore`) loads that.
pub fn load_program(arg: &str) -> Result<Program, String> {
    let text = match std::fs::read_to_string(arg) {
        Ok(t) => t,
        Err(e) => match corpus::source(arg) {
            Some(src) if !Path::new(arg).exists() => src.to_string(),
            _ => return Err(format!("{arg}: {e}")),
        },
    };
    parse_program(&text).map_err(|e| format!("{arg}: {e}"))
}

/// Loads and checks well-formedness.
pub fn load_lts(arg: &str) -> Result<Lts, String> {
    let p = load_program(arg)?;
    Lts::new(p).map_err(|e| match e {
        MachineError::NotWellFormed(report) => format!("{arg}: program is not well formed\n{}", report.render()),
    })
}
