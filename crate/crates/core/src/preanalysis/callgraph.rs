use std::collections::{BTreeMap, BTreeSet};

use super::PreanalysisError;
use crate::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CallEdge {
    pub caller: String,
    pub label: Label,
    pub callee: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub entry: String,
    pub nodes: Vec<String>,
    pub edges: Vec<CallEdge>,
    topo: Vec<String>,
}

impl CallGraph {
    /// Callers before callees.
    pub fn topological_order(&self) -> &[String] {
        &self.topo
    }

    pub fn callees(&self, caller: &str) -> impl Iterator<Item = &CallEdge> {
        let caller = caller.to_string();
        self.edges.iter().filter(move |e| e.caller == caller)
    }

    pub fn reachable(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry.clone()];
        while let Some(n) = stack.pop() {
            if seen.insert(n.clone()) {
                stack.extend(self.callees(&n).map(|e| e.callee.clone()));
            }
        }
        seen
    }
}

pub fn build_callgraph(p: &Program) -> Result<CallGraph, PreanalysisError> {
    let nodes: Vec<String> = p.procedures.iter().map(|q| q.name.clone()).collect();
    let mut edges = Vec::new();
    p.walk(&mut |proc, s| {
        if let StmtKind::Call { callee, .. } = &s.kind {
            edges.push(CallEdge { caller: proc.name.clone(), label: s.label, callee: callee.clone() });
        }
    });
    let succ: BTreeMap<&str, BTreeSet<&str>> = nodes
        .iter()
        .map(|n| (n.as_str(), edges.iter().filter(|e| e.caller == *n).map(|e| e.callee.as_str()).collect()))
        .collect();

    // Reverse DFS postorder; the entry is visited first so it leads the order.
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    let mut post = Vec::new();
    let mut roots: Vec<&str> = vec![p.entry.as_str()];
    roots.extend(nodes.iter().map(String::as_str));
    for root in roots {
        if state.contains_key(root) {
            continue;
        }
        // Iterative DFS: (node, next child index)
        let mut stack: Vec<(&str, Vec<&str>)> = Vec::new();
        state.insert(root, 1);
        stack.push((root, succ.get(root).map(|s| s.iter().rev().copied().collect()).unwrap_or_default()));
        while let Some((node, children)) = stack.last_mut() {
            match children.pop() {
                Some(c) => match state.get(c) {
                    Some(1) => {
                        let mut cycle: Vec<String> = stack.iter().map(|(n, _)| n.to_string()).collect();
                        let start = cycle.iter().position(|n| n == c).unwrap_or(0);
                        cycle.drain(..start);
                        cycle.push(c.to_string());
                        return Err(PreanalysisError::CycleDetected(cycle));
                    }
                    Some(_) => {}
                    None => {
                        state.insert(c, 1);
                        let grand = succ.get(c).map(|s| s.iter().rev().copied().collect()).unwrap_or_default();
                        stack.push((c, grand));
                    }
                },
                None => {
                    let node = *node;
                    state.insert(node, 2);
                    post.push(node.to_string());
                    stack.pop();
                }
            }
        }
    }
    post.reverse();
    Ok(CallGraph { entry: p.entry.clone(), nodes, edges, topo: post })
}
