//! Parsing, normalization, printing and source enumeration.

mod lexer;
mod normalize;
mod parser;
mod printer;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;

pub use normalize::{bounds_assert, normalize};
pub use parser::parse;
pub use printer::{expr_text, pretty_print, stmt_text};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax { line: usize, col: usize, expected: String },
    #[error("procedure `{0}` defined twice")]
    DuplicateProcedure(String),
    #[error("no entry procedure `main`")]
    MissingEntry,
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("recursive call chain {}", .0.join(" -> "))]
    Recursion(Vec<String>),
    #[error("call to `{callee}` at {label}: expected {expected} {what}, found {found}")]
    ArityMismatch { label: Label, callee: String, what: &'static str, expected: usize, found: usize },
    #[error("unknown identifier `{name}` in `{procedure}`")]
    UnknownIdentifier { name: String, procedure: String },
    #[error("array `{array}` passed more than once in the call to `{callee}`")]
    ArrayAlias { callee: String, array: String },
    #[error("`{name}` declared more than once in `{procedure}`")]
    DuplicateIdentifier { name: String, procedure: String },
    #[error("kind mismatch in `{procedure}`: {detail}")]
    KindMismatch { procedure: String, detail: String },
    #[error("constant index {index} out of range for `{array}` of length {len}")]
    IndexOutOfRange { array: String, index: u64, len: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    BranchCond,
    LoopCond,
    LoadIndex,
    StoreIndex,
}

/// Lifecycle of a source along the pipeline. Variants are ordered by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStatus {
    Unresolved,
    ResolvedStep1,
    ResolvedStep2,
    ResolvedStep3,
    ConfirmedLeak,
    Unknown,
}

impl SourceStatus {
    pub fn is_resolved(self) -> bool {
        matches!(self, SourceStatus::ResolvedStep1 | SourceStatus::ResolvedStep2 | SourceStatus::ResolvedStep3)
    }
}

/// Potential side-channel source: the operand `var` observed at `label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub label: Label,
    pub var: String,
    pub kind: SourceKind,
    pub status: SourceStatus,
}

impl Source {
    pub fn key(&self) -> SourceKey {
        SourceKey { label: self.label, var: self.var.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceKey {
    pub label: Label,
    pub var: String,
}

impl fmt::Display for SourceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.label, self.var)
    }
}

/// Source of a single statement, if it is observable with a variable operand.
pub fn source_of(s: &Stmt) -> Option<(String, SourceKind)> {
    match &s.kind {
        StmtKind::If { cond: Expr::Var(x), .. } => Some((x.clone(), SourceKind::BranchCond)),
        StmtKind::While { cond: Expr::Var(x), .. } => Some((x.clone(), SourceKind::LoopCond)),
        StmtKind::Load { index: Expr::Var(x), .. } => Some((x.clone(), SourceKind::LoadIndex)),
        StmtKind::Store { index: Expr::Var(x), .. } => Some((x.clone(), SourceKind::StoreIndex)),
        _ => None,
    }
}

/// Procedures reachable from the entry through calls, entry first.
pub fn reachable_procedures(p: &Program) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![p.entry.clone()];
    while let Some(name) = stack.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        if let Some(proc) = p.procedure(&name) {
            walk_block(&proc.body, &mut |s| {
                if let StmtKind::Call { callee, .. } = &s.kind {
                    stack.push(callee.clone());
                }
            });
        }
    }
    seen
}

pub fn collect_sources(p: &Program) -> Vec<Source> {
    let reachable = reachable_procedures(p);
    let mut out = Vec::new();
    for proc in p.procedures.iter().filter(|q| reachable.contains(&q.name)) {
        walk_block(&proc.body, &mut |s| {
            if let Some((var, kind)) = source_of(s) {
                out.push(Source { label: s.label, var, kind, status: SourceStatus::Unresolved });
            }
        });
    }
    out.sort_by_key(|s| s.label);
    out
}

/// Parses and normalizes in one step.
pub fn load_program(text: &str) -> Result<Program, FrontendError> {
    normalize(&parse(text)?)
}
