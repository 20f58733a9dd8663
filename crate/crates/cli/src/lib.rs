//! Command-line front end and experiment harness for the semigood bounds.

pub mod experiment;
pub mod pattern;

use semigood::Error;
use serde_json::{json, Map, Value};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_SIZE_GUARD: i32 = 4;

/// Timing keys moved out of reports so the rest compares byte for byte.
const TIMING_KEYS: [&str; 2] = ["times", "seconds"];

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical { .. } | Error::Revalidation(_) => EXIT_NUMERICAL,
        Error::SizeGuard(_) => EXIT_SIZE_GUARD,
        _ => EXIT_USAGE,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::IndexOutOfRange { .. } => "index_out_of_range",
        Error::OverlappingSets(_) => "overlapping_sets",
        Error::SparsityOutOfRange { .. } => "sparsity_out_of_range",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::ZeroColumn(_) => "zero_column",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::InvalidEnsemble(_) => "invalid_ensemble",
        Error::MalformedProgram(_) => "malformed_program",
        Error::Numerical { .. } => "numerical",
        Error::SizeGuard(_) => "size_guard",
        Error::Revalidation(_) => "revalidation",
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => "parse",
        Error::Io(_) => "io",
    }
}

pub fn error_json(kind: &str, message: &str, code: i32) -> String {
    json!({ "error": kind, "message": message, "exit_code": code }).to_string()
}

/// Pulls top-level timing fields out of a report object. With `keep`, they
/// are collected under `"timings"`; otherwise they are dropped.
pub fn isolate_timings(mut report: Value, keep: bool) -> Value {
    if let Value::Object(map) = &mut report {
        let mut timings = Map::new();
        for key in TIMING_KEYS {
            if let Some(v) = map.remove(key) {
                timings.insert(key.to_string(), v);
            }
        }
        if keep && !timings.is_empty() {
            map.insert("timings".into(), Value::Object(timings));
        }
    }
    report
}
