//! Concrete execution with leakage observations, and a brute-force constant-time oracle.

mod interp;
mod oracle;
mod trace;
mod value;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use interp::{
    run, snapshot, DefSite, FrameView, LabelLog, Machine, NoObserver, Observer, Outcome, RunOptions, RunResult,
    StuckCause, DEFAULT_FUEL,
};
pub use oracle::{input_cells, oracle_check_ct, Cell, OracleLimits, OracleVerdict, Witness};
pub use trace::{traces_prefix_equal, Event, EventKind, Trace, TraceComparison};
pub use value::{eval_binop, eval_unop, Width, WidthError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("program has no entry procedure")]
    NoEntry,
    #[error("program is not normalized")]
    NotNormalized,
    #[error("unresolved identifier `{0}`")]
    Unresolved(String),
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("input `{0}` does not match the parameter's shape")]
    InputShape(String),
    #[error("no entry parameter named `{0}`")]
    UnknownInput(String),
    #[error("array `{array}` of length {len} cannot be indexed at width {width}")]
    ArrayTooLong { array: String, len: u32, width: Width },
    #[error("malformed input binding `{0}`; expected name=value or name=[v1,v2,...]")]
    BadBinding(String),
    #[error("exhaustive enumeration of {bits} input bits exceeds the cap of {cap}")]
    CapExceeded { bits: u64, cap: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputValue {
    Scalar(u64),
    Array(Vec<u64>),
}

impl fmt::Display for InputValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputValue::Scalar(v) => write!(f, "{v}"),
            InputValue::Array(vs) => {
                let parts: Vec<String> = vs.iter().map(u64::to_string).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

/// Binding of entry parameters to values.
pub type Inputs = BTreeMap<String, InputValue>;

fn parse_number(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

/// Parses `name=value` or `name=[v1,v2,...]`.
pub fn parse_binding(text: &str) -> Result<(String, InputValue), SemanticsError> {
    let bad = || SemanticsError::BadBinding(text.to_string());
    let (name, value) = text.split_once('=').ok_or_else(bad)?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$') {
        return Err(bad());
    }
    let value = value.trim();
    let parsed = if let Some(inner) = value.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or_else(bad)?;
        if inner.trim().is_empty() {
            return Err(bad());
        }
        InputValue::Array(inner.split(',').map(parse_number).collect::<Option<_>>().ok_or_else(bad)?)
    } else {
        InputValue::Scalar(parse_number(value).ok_or_else(bad)?)
    };
    Ok((name.to_string(), parsed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load_program;

    fn inputs(pairs: &[(&str, InputValue)]) -> Inputs {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn binding_syntax() {
        assert_eq!(parse_binding("p=2").unwrap(), ("p".into(), InputValue::Scalar(2)));
        assert_eq!(parse_binding("k=[1, 2,0x3]").unwrap(), ("k".into(), InputValue::Array(vec![1, 2, 3])));
        assert!(parse_binding("k=[1,").is_err());
        assert!(parse_binding("=3").is_err());
        assert!(parse_binding("k=x").is_err());
    }

    #[test]
    fn branch_event() {
        let p = load_program("def main(pub p){ var t; t := p < 3; if t then skip; else skip; fi return; }").unwrap();
        let r = run(&p, &inputs(&[("p", InputValue::Scalar(2))]), Width::W8, DEFAULT_FUEL).unwrap();
        assert!(r.is_complete());
        assert_eq!(r.trace.lines(), ["2:branch=1"]);
    }

    #[test]
    fn loop_emits_one_event_per_condition_evaluation() {
        let p = load_program("def main(pub n){ var i; while i < n do i := i + 1; od return i; }").unwrap();
        let r = run(&p, &inputs(&[("n", InputValue::Scalar(3))]), Width::W8, DEFAULT_FUEL).unwrap();
        let loops: Vec<u64> = r.trace.0.iter().filter(|e| e.kind == EventKind::Loop).map(|e| e.value).collect();
        assert_eq!(loops, [1, 1, 1, 0]);
        assert_eq!(r.outcome, Outcome::Completed { returns: vec![3] });
    }

    #[test]
    fn out_of_range_load_sticks_at_bounds_assert() {
        let p = load_program("def main(pub a[4], pub i){ var x; x := a[i]; return x; }").unwrap();
        let r = run(
            &p,
            &inputs(&[("a", InputValue::Array(vec![1, 2, 3, 4])), ("i", InputValue::Scalar(4))]),
            Width::W8,
            DEFAULT_FUEL,
        )
        .unwrap();
        assert_eq!(r.outcome, Outcome::Stuck { label: crate::ast::Label(1), cause: StuckCause::AssertFailed });
        assert!(r.trace.is_empty());
    }

    #[test]
    fn arrays_are_passed_by_reference() {
        let p = load_program(
            "def f(a[2]){ a[1] := 7; return; } def main(pub x){ array c[2]; var r; f(c); r := c[1]; return r; }",
        )
        .unwrap();
        let r = run(&p, &inputs(&[("x", InputValue::Scalar(0))]), Width::W8, DEFAULT_FUEL).unwrap();
        assert_eq!(r.outcome, Outcome::Completed { returns: vec![7] });
    }

    #[test]
    fn fuel_and_division() {
        let p = load_program("def main(pub n){ var x; x := 1; while x do skip; od return; }").unwrap();
        let r = run(&p, &inputs(&[("n", InputValue::Scalar(0))]), Width::W8, 100).unwrap();
        assert_eq!(r.outcome, Outcome::FuelExhausted);
        let p = load_program("def main(pub n){ var x; x := 4 / n; return x; }").unwrap();
        let r = run(&p, &inputs(&[("n", InputValue::Scalar(0))]), Width::W8, 100).unwrap();
        assert!(matches!(r.outcome, Outcome::Stuck { cause: StuckCause::DivisionByZero, .. }));
    }

    #[test]
    fn input_validation() {
        let p = load_program("def main(pub a[2]){ return; }").unwrap();
        let m = Machine::new(&p, Width::W8).unwrap();
        let opts = RunOptions::with_fuel(10);
        assert!(matches!(m.run(&Inputs::new(), &opts), Err(SemanticsError::MissingInput(_))));
        assert!(matches!(m.run(&inputs(&[("a", InputValue::Scalar(1))]), &opts), Err(SemanticsError::InputShape(_))));
        let long = load_program("def main(pub a[16]){ return; }").unwrap();
        assert!(matches!(Machine::new(&long, Width::W4), Err(SemanticsError::ArrayTooLong { .. })));
    }
}
