//! Call graph, interprocedural CFG and def-use chains.

mod callgraph;
mod defuse;
mod icfg;

pub use callgraph::{build_callgraph, CallEdge, CallGraph};
pub use defuse::{def_use, stmt_reads, DefUse, Reaching, VarChains};
pub use icfg::{build_icfg, Edge, EdgeKind, Icfg, IcfgNode};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreanalysisError {
    #[error("call graph has a cycle through {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
}
