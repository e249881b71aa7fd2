use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Branch,
    Loop,
    Load,
    Store,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Branch => "branch",
            EventKind::Loop => "loop",
            EventKind::Load => "load",
            EventKind::Store => "store",
        }
    }
}

/// One observation: branch or loop truth, or a load/store index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub label: Label,
    pub kind: EventKind,
    pub value: u64,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}={}", self.label, self.kind.name(), self.value)
    }
}

impl std::str::FromStr for Event {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed event `{s}`");
        let (label, rest) = s.split_once(':').ok_or_else(bad)?;
        let (kind, value) = rest.split_once('=').ok_or_else(bad)?;
        let kind = match kind {
            "branch" => EventKind::Branch,
            "loop" => EventKind::Loop,
            "load" => EventKind::Load,
            "store" => EventKind::Store,
            _ => return Err(bad()),
        };
        Ok(Event {
            label: Label(label.trim().parse().map_err(|_| bad())?),
            kind,
            value: value.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Trace(pub Vec<Event>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn lines(&self) -> Vec<String> {
        self.0.iter().map(Event::to_string).collect()
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceComparison {
    Equal,
    MismatchAt(usize),
}

/// Compares two traces; a strict prefix mismatches at the shorter length.
pub fn traces_prefix_equal(a: &Trace, b: &Trace) -> TraceComparison {
    match a.0.iter().zip(&b.0).position(|(x, y)| x != y) {
        Some(i) => TraceComparison::MismatchAt(i),
        None if a.len() == b.len() => TraceComparison::Equal,
        None => TraceComparison::MismatchAt(a.len().min(b.len())),
    }
}
