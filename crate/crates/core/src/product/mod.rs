//! Taint-directed product programs: the Boolean taint companion (semi-cross-product)
//! and the shadow copy (cross-product), each with guard asserts at tainted sources.

mod build;
mod invariants;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;
use crate::frontend::{SourceKey, SourceKind};

pub use build::{build_cross_product, build_semi_product, xi, xi_shadow};
pub use invariants::gen_invariants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    SemiCross,
    Cross,
}

impl ProductKind {
    pub fn prefix(self) -> &'static str {
        match self {
            ProductKind::SemiCross => SEMI_PREFIX,
            ProductKind::Cross => SHADOW_PREFIX,
        }
    }

    /// Companion variable of `x`.
    pub fn companion(self, x: &str) -> String {
        format!("{}{x}", self.prefix())
    }
}

pub const SEMI_PREFIX: &str = "b$";
pub const SHADOW_PREFIX: &str = "sh$";

pub fn is_companion(name: &str) -> bool {
    name.starts_with(SEMI_PREFIX) || name.starts_with(SHADOW_PREFIX)
}

/// Where a guard sits relative to its source statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardPosition {
    Before,
    LoopBegin,
    LoopExit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub source: SourceKey,
    pub kind: SourceKind,
    pub position: GuardPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Candidate,
    Confirmed,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(with = "expr_text")]
    pub predicate: Expr,
    pub status: CandidateStatus,
}

mod expr_text {
    use serde::{Serialize, Serializer};

    use crate::ast::Expr;

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        crate::frontend::expr_text(e).serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(_: D) -> Result<Expr, D::Error> {
        Err(serde::de::Error::custom("predicates are not read back"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProductError {
    #[error("identifier `{0}` uses a prefix reserved for product companions")]
    ReservedName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductProgram {
    pub program: Program,
    pub kind: ProductKind,
    /// Guard assert label → the source it protects.
    pub guards: BTreeMap<Label, Guard>,
    /// Loop label → candidate invariants. Live candidates are also attached to the loop itself.
    pub candidates: BTreeMap<Label, Vec<Candidate>>,
    /// Product label → original label, for statements copied from the original program.
    pub origin: BTreeMap<Label, Label>,
}

impl ProductProgram {
    /// Guard labels per source.
    pub fn guards_by_source(&self) -> BTreeMap<SourceKey, Vec<Label>> {
        let mut out: BTreeMap<SourceKey, Vec<Label>> = BTreeMap::new();
        for (l, g) in &self.guards {
            out.entry(g.source.clone()).or_default().push(*l);
        }
        out
    }

    pub fn guard_labels(&self) -> BTreeSet<Label> {
        self.guards.keys().copied().collect()
    }

    /// Replaces the candidate statuses and re-attaches the live ones to their loops.
    pub fn set_candidates(&mut self, candidates: BTreeMap<Label, Vec<Candidate>>) {
        self.candidates = candidates;
        let cands = &self.candidates;
        for proc in &mut self.program.procedures {
            walk_block_mut(&mut proc.body, &mut |s| {
                if let (StmtKind::While { invariants, .. }, Some(cs)) = (&mut s.kind, cands.get(&s.label)) {
                    *invariants = cs
                        .iter()
                        .filter(|c| c.status != CandidateStatus::Dropped)
                        .map(|c| c.predicate.clone())
                        .collect();
                }
            });
        }
    }

    /// Removes guards, companion statements, companion variables and generated invariants.
    pub fn erase(&self) -> Program {
        let mut p = self.program.clone();
        let original_arity: BTreeMap<String, (usize, usize)> = p
            .procedures
            .iter()
            .map(|q| {
                let params = q.params.iter().filter(|x| !is_companion(&x.name)).count();
                let rets = q.returns.iter().filter(|x| !is_companion(x)).count();
                (q.name.clone(), (params, rets))
            })
            .collect();
        for proc in &mut p.procedures {
            proc.params.retain(|x| !is_companion(&x.name));
            proc.locals.retain(|x| !is_companion(&x.name));
            proc.returns.retain(|x| !is_companion(x));
            erase_block(&mut proc.body, &self.origin, &original_arity);
        }
        p.relabel();
        p
    }

    /// Guard index as JSON: assert label → source.
    pub fn guards_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            kind: ProductKind,
            guards: BTreeMap<String, &'a Guard>,
            candidates: BTreeMap<String, &'a Vec<Candidate>>,
        }
        let side = Sidecar {
            kind: self.kind,
            guards: self.guards.iter().map(|(l, g)| (l.to_string(), g)).collect(),
            candidates: self.candidates.iter().map(|(l, c)| (l.to_string(), c)).collect(),
        };
        serde_json::to_string_pretty(&side).expect("plain data serializes")
    }
}

fn erase_block(block: &mut Vec<Stmt>, origin: &BTreeMap<Label, Label>, arity: &BTreeMap<String, (usize, usize)>) {
    block.retain(|s| origin.contains_key(&s.label));
    for s in block.iter_mut() {
        match &mut s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                erase_block(then_branch, origin, arity);
                erase_block(else_branch, origin, arity);
            }
            StmtKind::While { invariants, body, .. } => {
                invariants.retain(|e| e.vars().iter().all(|v| !is_companion(v)));
                erase_block(body, origin, arity);
            }
            StmtKind::Call { lhs, callee, args } => {
                if let Some(&(params, rets)) = arity.get(callee.as_str()) {
                    args.truncate(params);
                    lhs.truncate(lhs.len().min(rets));
                }
            }
            _ => {}
        }
    }
}
