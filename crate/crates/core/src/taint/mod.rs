//! Lightweight taint analysis: flow-, field- and context-sensitive, index-insensitive.

mod dense;
mod sparse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::*;
use crate::frontend::{Source, SourceStatus};

pub use dense::{lfp, transfer, DenseAnalyzer};
pub use sparse::{analyze, analyze_with};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum TaintFact {
    Scalar(String),
    WholeArray(String),
}

impl TaintFact {
    pub fn of(name: &str, kind: VarKind) -> TaintFact {
        match kind {
            VarKind::Scalar => TaintFact::Scalar(name.to_string()),
            VarKind::Array(_) => TaintFact::WholeArray(name.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TaintFact::Scalar(n) | TaintFact::WholeArray(n) => n,
        }
    }
}

impl fmt::Display for TaintFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaintFact::Scalar(n) => f.write_str(n),
            TaintFact::WholeArray(n) => write!(f, "{n}[]"),
        }
    }
}

pub type TaintSet = BTreeSet<TaintFact>;

/// True if the scalar or array `name` is tainted in `t`.
pub fn holds(t: &TaintSet, name: &str) -> bool {
    t.contains(&TaintFact::Scalar(name.to_string())) || t.contains(&TaintFact::WholeArray(name.to_string()))
}

/// Any variable of `e` tainted.
pub fn expr_tainted(t: &TaintSet, e: &Expr) -> bool {
    e.vars().into_iter().any(|v| holds(t, v))
}

/// Facts seeded at the entry procedure: its secret inputs.
pub fn entry_facts(p: &Program) -> TaintSet {
    p.secret_inputs().map(|param| TaintFact::of(&param.name, param.kind)).collect()
}

/// Fact set per label; labels missing from the map are unreachable and carry no facts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaintMap {
    pub at: BTreeMap<Label, TaintSet>,
}

impl TaintMap {
    pub fn facts(&self, label: Label) -> Option<&TaintSet> {
        self.at.get(&label)
    }

    pub fn is_reachable(&self, label: Label) -> bool {
        self.at.contains_key(&label)
    }

    pub fn is_tainted(&self, label: Label, var: &str) -> bool {
        self.at.get(&label).is_some_and(|t| holds(t, var))
    }

    /// Drops `var` from the facts at `label`.
    pub fn remove(&mut self, label: Label, var: &str) {
        if let Some(t) = self.at.get_mut(&label) {
            t.remove(&TaintFact::Scalar(var.to_string()));
            t.remove(&TaintFact::WholeArray(var.to_string()));
        }
    }

    /// A map where every variable in scope is tainted at every label.
    pub fn all_tainted(p: &Program) -> TaintMap {
        let mut at = BTreeMap::new();
        p.walk(&mut |proc, s| {
            let facts = proc.scope().into_iter().map(|(n, k)| TaintFact::of(n, k)).collect();
            at.insert(s.label, facts);
        });
        TaintMap { at }
    }

    /// `ℓ: {facts}` per label, ascending.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (l, t) in &self.at {
            let facts: Vec<String> = t.iter().map(ToString::to_string).collect();
            out.push_str(&format!("{l}: {{{}}}\n", facts.join(", ")));
        }
        out
    }
}

/// Marks every source whose variable is untainted at its label as resolved by the first stage.
pub fn resolve_step1(sources: &[Source], tmap: &TaintMap) -> Vec<Source> {
    sources
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.status =
                if tmap.is_tainted(s.label, &s.var) { SourceStatus::Unresolved } else { SourceStatus::ResolvedStep1 };
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{collect_sources, load_program};

    #[test]
    fn step1_resolution() {
        let p = load_program(
            "def main(pub p, sec k){ var a, b; a := p < 3; if a then skip; fi b := k & 1; if b then skip; fi return; }",
        )
        .unwrap();
        let sources = resolve_step1(&collect_sources(&p), &analyze(&p));
        let statuses: Vec<_> = sources.iter().map(|s| (s.var.as_str(), s.status)).collect();
        assert_eq!(statuses, [("a", SourceStatus::ResolvedStep1), ("b", SourceStatus::Unresolved)]);
    }

    #[test]
    fn no_secrets_means_no_facts() {
        let p = load_program("def main(pub p){ var t; t := p + 1; if t then skip; fi return; }").unwrap();
        assert!(analyze(&p).at.values().all(BTreeSet::is_empty));
    }

    #[test]
    fn dump_format() {
        let p = load_program("def main(sec k[2]){ var x; x := k[0]; return; }").unwrap();
        assert_eq!(analyze(&p).dump(), "1: {k[]}\n");
    }
}
