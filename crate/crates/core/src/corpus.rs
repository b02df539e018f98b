//! Bundled example programs.

use crate::syntax::{parse_program, Program};

/// Three processes sharing `x` (blocks b1..b7).
pub const SHARED: &str = include_str!("../corpus/shared.cril");
/// Airline ticketing with a data race on `seats` (blocks b1..b13).
pub const AIRLINE_RACY: &str = include_str!("../corpus/airline_racy.cril");
/// Airline ticketing with a semaphore-guarded critical region (blocks b1..b15).
pub const AIRLINE_SEMAPHORE: &str = include_str!("../corpus/airline_semaphore.cril");

pub fn shared() -> Program {
    parse_program(SHARED).expect("bundled program parses")
}

pub fn airline_racy() -> Program {
    parse_program(AIRLINE_RACY).expect("bundled program parses")
}

pub fn airline_semaphore() -> Program {
    parse_program(AIRLINE_SEMAPHORE).expect("bundled program parses")
}

pub fn all() -> [Program; 3] {
    [shared(), airline_racy(), airline_semaphore()]
}

/// Looks up a bundled program by name (`shared`, `airline-racy`, `airline-semaphore`).
pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "shared" => Some(SHARED),
        "airline-racy" | "airline_racy" => Some(AIRLINE_RACY),
        "airline-semaphore" | "airline_semaphore" => Some(AIRLINE_SEMAPHORE),
        _ => None,
    }
}
