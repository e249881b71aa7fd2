use std::collections::BTreeMap;
use std::fmt::Write;

use crate::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Next,
    True,
    False,
    LoopBody,
    LoopExit,
    Back,
    Call,
    Return,
    CallToReturn,
}

impl EdgeKind {
    pub fn is_intra(self) -> bool {
        !matches!(self, EdgeKind::Call | EdgeKind::Return)
    }

    fn name(self) -> &'static str {
        match self {
            EdgeKind::Next => "next",
            EdgeKind::True => "true",
            EdgeKind::False => "false",
            EdgeKind::LoopBody => "body",
            EdgeKind::LoopExit => "exit",
            EdgeKind::Back => "back",
            EdgeKind::Call => "call",
            EdgeKind::Return => "return",
            EdgeKind::CallToReturn => "call-to-return",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub from: Label,
    pub to: Label,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcfgNode {
    pub procedure: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Icfg {
    pub nodes: BTreeMap<Label, IcfgNode>,
    pub edges: Vec<Edge>,
    /// First statement of each procedure.
    pub entries: BTreeMap<String, Label>,
    /// Nodes whose control leaves the procedure, with the kind of the leaving edge.
    pub exits: BTreeMap<String, Vec<(Label, EdgeKind)>>,
}

impl Icfg {
    pub fn successors(&self, l: Label) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == l)
    }

    pub fn intra_predecessors(&self, l: Label) -> impl Iterator<Item = Label> + '_ {
        self.edges.iter().filter(move |e| e.to == l && e.kind.is_intra()).map(|e| e.from)
    }

    /// One edge per line, `from -> to [kind]`; procedure exits print as `from -> exit(f)`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut edges = self.edges.clone();
        edges.sort();
        for e in &edges {
            let _ = writeln!(out, "{} -> {} [{}]", e.from, e.to, e.kind.name());
        }
        for (proc, exits) in &self.exits {
            for (l, kind) in exits {
                let _ = writeln!(out, "{l} -> exit({proc}) [{}]", kind.name());
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Follow {
    target: Option<Label>,
    kind: EdgeKind,
}

struct Builder<'a> {
    g: Icfg,
    proc: &'a str,
    /// (call label, callee, return site)
    calls: Vec<(Label, String, Option<Label>)>,
}

impl Builder<'_> {
    fn edge(&mut self, from: Label, follow: Follow, kind: EdgeKind) {
        match follow.target {
            Some(to) => self.g.edges.push(Edge { from, to, kind }),
            None => self.g.exits.entry(self.proc.to_string()).or_default().push((from, kind)),
        }
    }

    /// Wires a block; returns its first label.
    fn block(&mut self, block: &[Stmt], follow: Follow) -> Option<Label> {
        for (i, s) in block.iter().enumerate() {
            let next = match block.get(i + 1) {
                Some(n) => Follow { target: Some(n.label), kind: EdgeKind::Next },
                None => follow,
            };
            self.stmt(s, next);
        }
        block.first().map(|s| s.label)
    }

    fn stmt(&mut self, s: &Stmt, next: Follow) {
        self.g.nodes.insert(s.label, IcfgNode { procedure: self.proc.to_string() });
        match &s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                for (branch, kind) in [(then_branch, EdgeKind::True), (else_branch, EdgeKind::False)] {
                    match self.block(branch, next) {
                        Some(first) => self.g.edges.push(Edge { from: s.label, to: first, kind }),
                        None => self.edge(s.label, next, kind),
                    }
                }
            }
            StmtKind::While { body, .. } => {
                let head = Follow { target: Some(s.label), kind: EdgeKind::Back };
                match self.block(body, head) {
                    Some(first) => self.g.edges.push(Edge { from: s.label, to: first, kind: EdgeKind::LoopBody }),
                    None => self.g.edges.push(Edge { from: s.label, to: s.label, kind: EdgeKind::Back }),
                }
                self.edge(s.label, next, EdgeKind::LoopExit);
            }
            StmtKind::Call { callee, .. } => {
                self.edge(s.label, next, EdgeKind::CallToReturn);
                self.calls.push((s.label, callee.clone(), next.target));
            }
            _ => self.edge(s.label, next, next.kind),
        }
    }
}

pub fn build_icfg(p: &Program) -> Icfg {
    let mut g = Icfg::default();
    let mut calls = Vec::new();
    for proc in &p.procedures {
        let mut b = Builder { g, proc: &proc.name, calls: Vec::new() };
        if let Some(first) = b.block(&proc.body, Follow { target: None, kind: EdgeKind::Next }) {
            b.g.entries.insert(proc.name.clone(), first);
        }
        calls.extend(b.calls);
        g = b.g;
    }
    for (label, callee, ret) in calls {
        if let Some(&entry) = g.entries.get(&callee) {
            g.edges.push(Edge { from: label, to: entry, kind: EdgeKind::Call });
        }
        if let Some(ret) = ret {
            let exits: Vec<Label> =
                g.exits.get(&callee).map(|v| v.iter().map(|(l, _)| *l).collect()).unwrap_or_default();
            for x in exits {
                g.edges.push(Edge { from: x, to: ret, kind: EdgeKind::Return });
            }
        }
    }
    g
}
