//! Sparse analysis: taint is a property of definitions and flows along def-use chains.
//! A variable is tainted at a label iff one of its reaching definitions is tainted.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use super::{entry_facts, TaintFact, TaintMap, TaintSet};
use crate::ast::*;
use crate::preanalysis::{build_icfg, def_use, DefUse};
use crate::semantics::DefSite;

type Def = (String, DefSite);

struct Sparse<'a> {
    p: &'a Program,
    du: &'a DefUse,
    summaries: HashMap<(String, TaintSet), TaintSet>,
    at: BTreeMap<Label, TaintSet>,
}

struct Context<'a> {
    scope: BTreeMap<&'a str, VarKind>,
    tainted: HashSet<Def>,
    queue: VecDeque<Label>,
    queued: HashSet<Label>,
}

impl Context<'_> {
    fn tainted_at(&self, du: &DefUse, label: Label, var: &str) -> bool {
        du.reaching_in[&label]
            .get(var)
            .is_some_and(|sites| sites.iter().any(|&d| self.tainted.contains(&(var.to_string(), d))))
    }

    fn any_tainted(&self, du: &DefUse, label: Label, e: &Expr) -> bool {
        e.vars().into_iter().any(|v| self.tainted_at(du, label, v))
    }

    fn enqueue(&mut self, label: Label) {
        if self.queued.insert(label) {
            self.queue.push_back(label);
        }
    }

    fn taint(&mut self, du: &DefUse, var: &str, site: DefSite) {
        if self.tainted.insert((var.to_string(), site)) {
            for u in du.uses_of(var, site) {
                self.enqueue(u);
            }
        }
    }

    fn facts(&self, reaching: &BTreeMap<String, BTreeSet<DefSite>>) -> TaintSet {
        reaching
            .iter()
            .filter(|(v, sites)| sites.iter().any(|&d| self.tainted.contains(&((*v).clone(), d))))
            .filter_map(|(v, _)| self.scope.get(v.as_str()).map(|&k| TaintFact::of(v, k)))
            .collect()
    }
}

impl<'a> Sparse<'a> {
    /// Analyzes `proc` under the entry facts `ctx`; returns its exit facts.
    fn context(&mut self, proc: &'a Procedure, ctx: &TaintSet) -> TaintSet {
        let key = (proc.name.clone(), ctx.clone());
        if let Some(exit) = self.summaries.get(&key) {
            return exit.clone();
        }
        let mut labels = Vec::new();
        walk_block(&proc.body, &mut |s| labels.push(s));
        let stmts: HashMap<Label, &'a Stmt> = labels.iter().map(|s| (s.label, *s)).collect();
        let mut c =
            Context { scope: proc.scope(), tainted: HashSet::new(), queue: VecDeque::new(), queued: HashSet::new() };
        for s in &labels {
            c.enqueue(s.label);
        }
        for f in ctx {
            c.taint(self.du, f.name(), DefSite::Entry);
        }
        while let Some(l) = c.queue.pop_front() {
            c.queued.remove(&l);
            self.eval(&mut c, stmts[&l]);
        }
        for s in &labels {
            let facts = c.facts(&self.du.reaching_in[&s.label]);
            self.at.entry(s.label).or_default().extend(facts);
        }
        let exit = c.facts(&self.du.reaching_exit[&proc.name]);
        self.summaries.insert(key, exit.clone());
        exit
    }

    fn eval(&mut self, c: &mut Context<'a>, s: &'a Stmt) {
        let du = self.du;
        let l = s.label;
        match &s.kind {
            StmtKind::Assign { lhs, rhs } => {
                if c.any_tainted(du, l, rhs) {
                    c.taint(du, lhs, DefSite::Stmt(l));
                }
            }
            StmtKind::Load { lhs, array, .. } => {
                if c.tainted_at(du, l, array) {
                    c.taint(du, lhs, DefSite::Stmt(l));
                }
            }
            StmtKind::Store { array, value, .. } => {
                if c.any_tainted(du, l, value) {
                    c.taint(du, array, DefSite::Stmt(l));
                }
            }
            StmtKind::Call { lhs, callee, args } => {
                let q = self.p.procedure(callee).expect("normalized call target");
                let ctx: TaintSet = q
                    .params
                    .iter()
                    .zip(args)
                    .filter(|(_, a)| c.any_tainted(du, l, a))
                    .map(|(param, _)| TaintFact::of(&param.name, param.kind))
                    .collect();
                let exit = self.context(q, &ctx);
                for (param, a) in q.params.iter().zip(args) {
                    if let (VarKind::Array(_), Expr::Var(actual)) = (param.kind, a) {
                        if exit.contains(&TaintFact::WholeArray(param.name.clone())) {
                            c.taint(du, actual, DefSite::Stmt(l));
                        }
                    }
                }
                for (x, r) in lhs.iter().zip(&q.returns) {
                    if super::holds(&exit, r) {
                        c.taint(du, x, DefSite::Stmt(l));
                    }
                }
            }
            _ => {}
        }
    }
}

/// Runs the sparse analysis from the entry procedure's secret inputs.
pub fn analyze(p: &Program) -> TaintMap {
    let du = def_use(p, &build_icfg(p));
    analyze_with(p, &du)
}

pub fn analyze_with(p: &Program, du: &DefUse) -> TaintMap {
    let mut s = Sparse { p, du, summaries: HashMap::new(), at: BTreeMap::new() };
    s.context(p.entry_procedure(), &entry_facts(p));
    TaintMap { at: s.at }
}
