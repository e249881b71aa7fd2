//! Reference analysis: the inference rules applied statement by statement.

use std::collections::{BTreeMap, HashMap};

use super::{entry_facts, expr_tainted, holds, TaintFact, TaintMap, TaintSet};
use crate::ast::*;

pub struct DenseAnalyzer<'p> {
    p: &'p Program,
    summaries: HashMap<(String, TaintSet), TaintSet>,
    at: BTreeMap<Label, TaintSet>,
    /// Largest number of body passes any loop fixpoint needed.
    pub max_loop_iterations: usize,
}

impl<'p> DenseAnalyzer<'p> {
    pub fn new(p: &'p Program) -> Self {
        DenseAnalyzer { p, summaries: HashMap::new(), at: BTreeMap::new(), max_loop_iterations: 0 }
    }

    pub fn run(mut self) -> TaintMap {
        let entry = self.p.entry_procedure();
        self.block(entry, &entry.body, entry_facts(self.p));
        TaintMap { at: self.at }
    }

    pub fn block(&mut self, proc: &'p Procedure, block: &'p [Stmt], mut t: TaintSet) -> TaintSet {
        for s in block {
            t = self.stmt(proc, s, t);
        }
        t
    }

    fn record(&mut self, label: Label, t: &TaintSet) {
        self.at.entry(label).or_default().extend(t.iter().cloned());
    }

    pub fn stmt(&mut self, proc: &'p Procedure, s: &'p Stmt, mut t: TaintSet) -> TaintSet {
        if !matches!(s.kind, StmtKind::While { .. }) {
            self.record(s.label, &t);
        }
        match &s.kind {
            StmtKind::Skip | StmtKind::Assert(_) | StmtKind::Assume(_) => t,
            StmtKind::Load { lhs, array, .. } => {
                let fact = TaintFact::Scalar(lhs.clone());
                if holds(&t, array) {
                    t.insert(fact);
                } else {
                    t.remove(&fact);
                }
                t
            }
            StmtKind::Store { array, value, .. } => {
                if expr_tainted(&t, value) {
                    t.insert(TaintFact::WholeArray(array.clone()));
                }
                t
            }
            StmtKind::Assign { lhs, rhs } => {
                let fact = TaintFact::Scalar(lhs.clone());
                if expr_tainted(&t, rhs) {
                    t.insert(fact);
                } else {
                    t.remove(&fact);
                }
                t
            }
            StmtKind::If { then_branch, else_branch, .. } => {
                let mut a = self.block(proc, then_branch, t.clone());
                let b = self.block(proc, else_branch, t);
                a.extend(b);
                a
            }
            StmtKind::While { body, .. } => {
                let head = self.lfp(proc, body, t);
                self.record(s.label, &head);
                head
            }
            StmtKind::Call { lhs, callee, args } => self.call(proc, lhs, callee, args, t),
        }
    }

    /// Ascending iteration `X := X ∪ body(X)` from `t`; returns the loop-head facts.
    pub fn lfp(&mut self, proc: &'p Procedure, body: &'p [Stmt], t: TaintSet) -> TaintSet {
        let mut x = t;
        let mut rounds = 0;
        loop {
            rounds += 1;
            let mut next = self.block(proc, body, x.clone());
            next.extend(x.iter().cloned());
            if next == x {
                break;
            }
            x = next;
        }
        self.max_loop_iterations = self.max_loop_iterations.max(rounds);
        x
    }

    fn call(&mut self, _caller: &Procedure, lhs: &[String], callee: &str, args: &[Expr], mut t: TaintSet) -> TaintSet {
        let q = self.p.procedure(callee).expect("normalized call target");
        let ctx: TaintSet = q
            .params
            .iter()
            .zip(args)
            .filter(|(_, a)| expr_tainted(&t, a))
            .map(|(param, _)| TaintFact::of(&param.name, param.kind))
            .collect();
        let key = (callee.to_string(), ctx);
        let exit = match self.summaries.get(&key) {
            Some(exit) => exit.clone(),
            None => {
                let exit = self.block(q, &q.body, key.1.clone());
                self.summaries.insert(key, exit.clone());
                exit
            }
        };
        for (param, a) in q.params.iter().zip(args) {
            if let (VarKind::Array(_), Expr::Var(actual)) = (param.kind, a) {
                if exit.contains(&TaintFact::WholeArray(param.name.clone())) {
                    t.insert(TaintFact::WholeArray(actual.clone()));
                }
            }
        }
        for (x, r) in lhs.iter().zip(&q.returns) {
            let fact = TaintFact::Scalar(x.clone());
            if holds(&exit, r) {
                t.insert(fact);
            } else {
                t.remove(&fact);
            }
        }
        t
    }
}

/// Applies the rule for one statement of procedure `proc` to the fact set `t`.
pub fn transfer(p: &Program, proc: &str, s: &Stmt, t: TaintSet) -> TaintSet {
    let proc = p.procedure(proc).expect("procedure exists");
    DenseAnalyzer::new(p).stmt(proc, s, t)
}

/// Least fixed point of a loop body of procedure `proc` above `t`, with the number of body passes.
pub fn lfp(p: &Program, proc: &str, body: &[Stmt], t: TaintSet) -> (TaintSet, usize) {
    let proc = p.procedure(proc).expect("procedure exists");
    let mut a = DenseAnalyzer::new(p);
    let x = a.lfp(proc, body, t);
    (x, a.max_loop_iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load_program;

    fn set(facts: &[&str]) -> TaintSet {
        facts
            .iter()
            .map(|f| match f.strip_suffix("[]") {
                Some(a) => TaintFact::WholeArray(a.to_string()),
                None => TaintFact::Scalar(f.to_string()),
            })
            .collect()
    }

    const PROG: &str = "def main(sec k, pub p, sec s[2], pub a[2]){ var x, y, z; x := 0; y := 0; z := 0; \
                        x := a[z]; x := s[z]; a[z] := y; a[z] := k; x := y + p; x := k + p; skip; assert x; \
                        assume x; return; }";

    fn stmt_at(p: &Program, l: u32) -> &Stmt {
        p.find(Label(l)).unwrap().1
    }

    #[test]
    fn rule_table() {
        let p = load_program(PROG).unwrap();
        let find = |text: &str| {
            let mut hit = None;
            p.walk(&mut |_, s| {
                if crate::frontend::stmt_text(s) == text && hit.is_none() {
                    hit = Some(s.label.0);
                }
            });
            hit.unwrap_or_else(|| panic!("no statement `{text}`"))
        };
        let cases: &[(&str, &[&str], &[&str])] = &[
            // load: strong update by the array's taint
            ("x := a[z];", &["x"], &[]),
            ("x := s[z];", &["s[]"], &["s[]", "x"]),
            // store: only ever adds the array
            ("a[z] := y;", &["a[]"], &["a[]"]),
            ("a[z] := k;", &["k"], &["a[]", "k"]),
            // assignment: strong update
            ("x := y + p;", &["x"], &[]),
            ("x := k + p;", &["k"], &["k", "x"]),
            // identity
            ("skip;", &["x"], &["x"]),
            ("assert x;", &["x"], &["x"]),
            ("assume x;", &["k"], &["k"]),
        ];
        for (text, input, output) in cases {
            let s = stmt_at(&p, find(text));
            assert_eq!(transfer(&p, "main", s, set(input)), set(output), "rule for `{text}`");
        }
    }

    #[test]
    fn branches_join() {
        let p = load_program("def main(sec k, pub c){ var x, y; if c then x := k; else y := k; fi return; }").unwrap();
        let s = stmt_at(&p, 1);
        assert_eq!(transfer(&p, "main", s, set(&["k"])), set(&["k", "x", "y"]));
    }

    #[test]
    fn call_binds_and_returns() {
        let p = load_program(
            "def f(u, v, c[2]){ var r; c[0] := u; r := v; return r; } \
             def main(sec k, pub q, pub a[2]){ var x; x := f(k, q, a); return; }",
        )
        .unwrap();
        let call = stmt_at(&p, 3);
        assert_eq!(transfer(&p, "main", call, set(&["k", "x"])), set(&["a[]", "k"]));
    }

    #[test]
    fn lfp_examples() {
        let p = load_program("def main(sec k, pub n){ var x, y, t; t := n; while t do x := x; t := 0; od return; }")
            .unwrap();
        let StmtKind::While { body, .. } = &stmt_at(&p, 2).kind else { panic!() };
        let (x, rounds) = lfp(&p, "main", body, set(&["k"]));
        assert_eq!((x, rounds), (set(&["k"]), 1));

        let p = load_program(
            "def main(sec k, pub n){ var x, y, t; t := n; while t do x := k; y := x; t := 0; od return; }",
        )
        .unwrap();
        let StmtKind::While { body, .. } = &stmt_at(&p, 2).kind else { panic!() };
        let (x, rounds) = lfp(&p, "main", body, set(&["k"]));
        assert_eq!((x, rounds), (set(&["k", "x", "y"]), 2));

        // reversed order: y only picks up x's taint on the second pass
        let p = load_program(
            "def main(sec k, pub n){ var x, y, t; t := n; while t do y := x; x := k; t := 0; od return; }",
        )
        .unwrap();
        let StmtKind::While { body, .. } = &stmt_at(&p, 2).kind else { panic!() };
        let (x, rounds) = lfp(&p, "main", body, set(&["k"]));
        assert_eq!((x, rounds), (set(&["k", "x", "y"]), 3));
    }
}
