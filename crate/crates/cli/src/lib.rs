//! Library surface of the certification pipeline, shared by the binary and
//! the integration tests.

pub mod commands;
pub mod config;

use anyhow::Error;

/// Process exit code for a failed run: 2 for configuration and input
/// problems, 3 when a resource cap was hit, 4 for I/O failures.
pub fn exit_code(err: &Error) -> i32 {
    if let Some(core) = err.downcast_ref::<graphcert::Error>() {
        return match core {
            graphcert::Error::ResourceLimit(_) => 3,
            graphcert::Error::Io(_) => 4,
            graphcert::Error::Json(_) => 4,
            _ => 2,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    2
}
