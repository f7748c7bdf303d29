//! The benchmark programs shipped with the analyzer.

use crate::syntax::{compile, CompileError, Program};

/// The small motivating example: two recursive functions passed through
/// a shared identity.
pub const TOY: &str = include_str!("../corpus/toy.scm");

/// Benchmarks as (name, source), in table order.
pub const BENCHMARKS: [(&str, &str); 7] = [
    ("mj09", include_str!("../corpus/mj09.scm")),
    ("eta", include_str!("../corpus/eta.scm")),
    ("kcfa2", include_str!("../corpus/kcfa2.scm")),
    ("kcfa3", include_str!("../corpus/kcfa3.scm")),
    ("blur", include_str!("../corpus/blur.scm")),
    ("loop2", include_str!("../corpus/loop2.scm")),
    ("sat", include_str!("../corpus/sat.scm")),
];

pub fn source(name: &str) -> Option<&'static str> {
    if name == "toy" {
        return Some(TOY);
    }
    BENCHMARKS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Option<Result<Program, CompileError>> {
    source(name).map(compile)
}

/// Every benchmark, compiled. Panics if a shipped source fails to compile.
pub fn benchmarks() -> Vec<(&'static str, Program)> {
    BENCHMARKS
        .iter()
        .map(|(n, s)| (*n, compile(s).unwrap_or_else(|e| panic!("benchmark {n}: {e}"))))
        .collect()
}
