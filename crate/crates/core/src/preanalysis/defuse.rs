use std::collections::{BTreeMap, BTreeSet};

use super::Icfg;
use crate::ast::*;
use crate::semantics::DefSite;

/// Reaching definitions per variable at one program point.
pub type Reaching = BTreeMap<String, BTreeSet<DefSite>>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarChains {
    pub defs: BTreeSet<Label>,
    pub uses: BTreeSet<Label>,
    /// (definition, use) pairs; `DefSite::Entry` stands for the parameter binding or initial value.
    pub chains: BTreeSet<(DefSite, Label)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefUse {
    pub scalars: BTreeMap<String, VarChains>,
    pub arrays: BTreeMap<String, VarChains>,
    /// Definitions reaching each statement; at a loop this is the loop-head fixpoint.
    pub reaching_in: BTreeMap<Label, Reaching>,
    /// Definitions reaching the end of each procedure body.
    pub reaching_exit: BTreeMap<String, Reaching>,
    /// Procedure housing each label.
    pub owner: BTreeMap<Label, String>,
}

impl DefUse {
    pub fn chains(&self, var: &str) -> Option<&VarChains> {
        self.scalars.get(var).or_else(|| self.arrays.get(var))
    }

    /// Labels using a value defined at `site` for `var`.
    pub fn uses_of(&self, var: &str, site: DefSite) -> impl Iterator<Item = Label> + '_ {
        self.chains(var)
            .into_iter()
            .flat_map(move |c| c.chains.range((site, Label(0))..=(site, Label(u32::MAX))).map(|(_, u)| *u))
    }
}

/// Variables read by a statement itself, not by its nested blocks.
pub fn stmt_reads(s: &Stmt) -> Vec<&str> {
    fn expr_reads<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
        out.extend(e.vars());
    }
    let mut out = Vec::new();
    match &s.kind {
        StmtKind::Skip => {}
        StmtKind::Assign { rhs, .. } => expr_reads(rhs, &mut out),
        StmtKind::Load { array, index, .. } => {
            out.push(array.as_str());
            expr_reads(index, &mut out);
        }
        StmtKind::Store { index, value, .. } => {
            expr_reads(index, &mut out);
            expr_reads(value, &mut out);
        }
        StmtKind::Assert(e) | StmtKind::Assume(e) => expr_reads(e, &mut out),
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => expr_reads(cond, &mut out),
        StmtKind::Call { args, .. } => args.iter().for_each(|a| expr_reads(a, &mut out)),
    }
    out.sort_unstable();
    out.dedup();
    out
}

struct Builder<'a> {
    du: DefUse,
    scope: BTreeMap<&'a str, VarKind>,
    proc: &'a str,
}

fn join(into: &mut Reaching, other: &Reaching) {
    for (v, sites) in other {
        into.entry(v.clone()).or_default().extend(sites.iter().copied());
    }
}

impl<'a> Builder<'a> {
    fn chains(&mut self, var: &str) -> &mut VarChains {
        let map = match self.scope.get(var) {
            Some(VarKind::Array(_)) => &mut self.du.arrays,
            _ => &mut self.du.scalars,
        };
        map.entry(var.to_string()).or_default()
    }

    fn block(&mut self, block: &'a [Stmt], state: &mut Reaching) {
        for s in block {
            self.stmt(s, state);
        }
    }

    fn record_in(&mut self, s: &Stmt, state: &Reaching) {
        self.du.owner.insert(s.label, self.proc.to_string());
        let slot = self.du.reaching_in.entry(s.label).or_default();
        join(slot, state);
        for v in stmt_reads(s) {
            let sites: Vec<DefSite> = state.get(v).into_iter().flatten().copied().collect();
            let c = self.chains(v);
            c.uses.insert(s.label);
            c.chains.extend(sites.into_iter().map(|d| (d, s.label)));
        }
    }

    fn define(&mut self, var: &str, label: Label, state: &mut Reaching, kill: bool) {
        self.chains(var).defs.insert(label);
        let sites = state.entry(var.to_string()).or_default();
        if kill {
            sites.clear();
        }
        sites.insert(DefSite::Stmt(label));
    }

    fn stmt(&mut self, s: &'a Stmt, state: &mut Reaching) {
        match &s.kind {
            StmtKind::While { body, .. } => {
                // Loop head: iterate until the definitions flowing around the back edge are stable.
                loop {
                    let mut out = state.clone();
                    self.record_in(s, state);
                    self.block(body, &mut out);
                    let mut next = state.clone();
                    join(&mut next, &out);
                    if next == *state {
                        break;
                    }
                    *state = next;
                }
                return;
            }
            StmtKind::If { then_branch, else_branch, .. } => {
                self.record_in(s, state);
                let mut other = state.clone();
                self.block(then_branch, state);
                self.block(else_branch, &mut other);
                join(state, &other);
                return;
            }
            _ => self.record_in(s, state),
        }
        match &s.kind {
            StmtKind::Assign { lhs, .. } | StmtKind::Load { lhs, .. } => self.define(lhs, s.label, state, true),
            StmtKind::Store { array, .. } => self.define(array, s.label, state, false),
            StmtKind::Call { lhs, args, .. } => {
                for a in args {
                    if let Expr::Var(v) = a {
                        if self.scope.get(v.as_str()).is_some_and(|k| k.is_array()) {
                            self.define(v, s.label, state, false);
                        }
                    }
                }
                for x in lhs {
                    self.define(x, s.label, state, true);
                }
            }
            _ => {}
        }
    }
}

/// Intraprocedural reaching definitions and def-use chains over every procedure.
/// Arrays are tracked as a whole and never killed; call sites define their array
/// arguments and their result variables.
pub fn def_use(p: &Program, g: &Icfg) -> DefUse {
    let mut du = DefUse::default();
    for proc in &p.procedures {
        let mut b = Builder { du, scope: proc.scope(), proc: &proc.name };
        let mut state: Reaching = b.scope.keys().map(|v| (v.to_string(), BTreeSet::from([DefSite::Entry]))).collect();
        b.block(&proc.body, &mut state);
        b.du.reaching_exit.insert(proc.name.clone(), state);
        du = b.du;
    }
    debug_assert!(du.owner.keys().all(|l| g.nodes.contains_key(l)));
    du
}
