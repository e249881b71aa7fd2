use std::collections::{BTreeMap, BTreeSet};

use super::invariants::gen_invariants;
use super::*;
use crate::frontend::source_of;
use crate::taint::{expr_tainted, holds, TaintMap, TaintSet};

/// Taint of a flat expression over the Boolean companions: `0` for literals,
/// `b$x` for variables, bitwise-or over operands.
pub fn xi(e: &Expr) -> Expr {
    let parts: Vec<Expr> = e.vars().into_iter().map(|v| Expr::var(ProductKind::SemiCross.companion(v))).collect();
    let mut parts = parts.into_iter();
    match parts.next() {
        None => Expr::Lit(0),
        Some(first) => parts.fold(first, |acc, p| Expr::binary(BinOp::BitOr, acc, p)),
    }
}

/// The same computation over shadow variables.
pub fn xi_shadow(e: &Expr) -> Expr {
    e.rename(&|v| ProductKind::Cross.companion(v))
}

const SHADOW_TEMP: &str = "sh$$t";

struct Builder<'a> {
    kind: ProductKind,
    tmap: &'a TaintMap,
    empty: TaintSet,
    next: u32,
    guards: BTreeMap<Label, Guard>,
    candidates: BTreeMap<Label, Vec<Expr>>,
}

impl<'a> Builder<'a> {
    fn comp(&self, x: &str) -> String {
        self.kind.companion(x)
    }

    fn t(&self, l: Label) -> &TaintSet {
        self.tmap.facts(l).unwrap_or(&self.empty)
    }

    fn emit(&mut self, kind: StmtKind, out: &mut Vec<Stmt>) {
        self.next += 1;
        out.push(Stmt::new(Label(self.next), kind));
    }

    fn guard(&mut self, s: &Stmt, position: GuardPosition, out: &mut Vec<Stmt>) {
        let Some((var, kind)) = source_of(s) else { return };
        if !holds(self.t(s.label), &var) {
            return;
        }
        let check = match self.kind {
            ProductKind::SemiCross => Expr::unary(UnOp::Not, Expr::var(self.comp(&var))),
            ProductKind::Cross => Expr::binary(BinOp::Eq, Expr::var(&var), Expr::var(self.comp(&var))),
        };
        self.emit(StmtKind::Assert(check), out);
        let source = SourceKey { label: s.label, var };
        self.guards.insert(Label(self.next), Guard { source, kind, position });
    }

    /// Companion expression for a call argument.
    fn comp_arg(&self, a: &Expr) -> Expr {
        match (self.kind, a) {
            (ProductKind::SemiCross, _) => xi(a),
            (ProductKind::Cross, _) => xi_shadow(a),
        }
    }

    fn block(&mut self, block: &[Stmt]) -> Vec<Stmt> {
        let mut out = Vec::new();
        for s in block {
            self.stmt(s, &mut out);
        }
        out
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Stmt>) {
        let t = self.t(s.label).clone();
        match &s.kind {
            StmtKind::If { cond, then_branch, else_branch } => {
                self.guard(s, GuardPosition::Before, out);
                let then_branch = self.block(then_branch);
                let else_branch = self.block(else_branch);
                out.push(Stmt::new(s.label, StmtKind::If { cond: cond.clone(), then_branch, else_branch }));
            }
            StmtKind::While { cond, invariants, body } => {
                let mut inner = Vec::new();
                self.guard(s, GuardPosition::LoopBegin, &mut inner);
                inner.extend(self.block(body));
                let mut cands: Vec<Expr> = invariants.clone();
                for c in gen_invariants(s, self.kind) {
                    if !cands.contains(&c) {
                        cands.push(c);
                    }
                }
                self.candidates.insert(s.label, cands.clone());
                out.push(Stmt::new(s.label, StmtKind::While { cond: cond.clone(), invariants: cands, body: inner }));
                self.guard(s, GuardPosition::LoopExit, out);
            }
            StmtKind::Skip => out.push(s.clone()),
            StmtKind::Assert(e) | StmtKind::Assume(e) => {
                out.push(s.clone());
                if self.kind == ProductKind::Cross && expr_tainted(&t, e) {
                    // the shadow run must be a complete run as well
                    self.emit(StmtKind::Assume(xi_shadow(e)), out);
                }
            }
            StmtKind::Assign { lhs, rhs } => {
                out.push(s.clone());
                let rhs = match (self.kind, expr_tainted(&t, rhs)) {
                    (ProductKind::SemiCross, false) => Expr::Lit(0),
                    (ProductKind::SemiCross, true) => xi(rhs),
                    (ProductKind::Cross, false) => Expr::var(lhs),
                    (ProductKind::Cross, true) => xi_shadow(rhs),
                };
                self.emit(StmtKind::Assign { lhs: self.comp(lhs), rhs }, out);
            }
            StmtKind::Load { lhs, array, index } => {
                self.guard(s, GuardPosition::Before, out);
                out.push(s.clone());
                let kind = match self.kind {
                    ProductKind::SemiCross if !holds(&t, array) => {
                        StmtKind::Assign { lhs: self.comp(lhs), rhs: Expr::Lit(0) }
                    }
                    ProductKind::SemiCross => {
                        StmtKind::Load { lhs: self.comp(lhs), array: self.comp(array), index: index.clone() }
                    }
                    ProductKind::Cross if !holds(&t, array) && !expr_tainted(&t, index) => {
                        StmtKind::Assign { lhs: self.comp(lhs), rhs: Expr::var(lhs) }
                    }
                    ProductKind::Cross => {
                        StmtKind::Load { lhs: self.comp(lhs), array: self.comp(array), index: xi_shadow(index) }
                    }
                };
                self.emit(kind, out);
            }
            StmtKind::Store { array, index, value } => {
                self.guard(s, GuardPosition::Before, out);
                out.push(s.clone());
                let tainted_value = expr_tainted(&t, value);
                let kind = match self.kind {
                    ProductKind::SemiCross => StmtKind::Store {
                        array: self.comp(array),
                        index: index.clone(),
                        value: if tainted_value { xi(value) } else { Expr::Lit(0) },
                    },
                    ProductKind::Cross if !tainted_value && !expr_tainted(&t, index) => {
                        StmtKind::Store { array: self.comp(array), index: index.clone(), value: value.clone() }
                    }
                    ProductKind::Cross => {
                        StmtKind::Store { array: self.comp(array), index: xi_shadow(index), value: xi_shadow(value) }
                    }
                };
                self.emit(kind, out);
            }
            StmtKind::Call { lhs, callee, args } => {
                let mut lhs2 = lhs.clone();
                lhs2.extend(lhs.iter().map(|x| self.comp(x)));
                let mut args2 = args.clone();
                args2.extend(args.iter().map(|a| self.comp_arg(a)));
                out.push(Stmt::new(s.label, StmtKind::Call { lhs: lhs2, callee: callee.clone(), args: args2 }));
            }
        }
    }

    /// Companion setup at the head of the entry procedure.
    fn entry_head(&mut self, proc: &Procedure, out: &mut Vec<Stmt>) {
        for param in &proc.params {
            let secret = param.security == Some(Security::Secret);
            let c = self.comp(&param.name);
            match (self.kind, param.kind) {
                (ProductKind::SemiCross, VarKind::Scalar) => {
                    self.emit(StmtKind::Assign { lhs: c, rhs: Expr::Lit(u64::from(secret)) }, out)
                }
                (ProductKind::SemiCross, VarKind::Array(n)) => {
                    for i in 0..u64::from(n) {
                        let kind = StmtKind::Store {
                            array: c.clone(),
                            index: Expr::Lit(i),
                            value: Expr::Lit(u64::from(secret)),
                        };
                        self.emit(kind, out);
                    }
                }
                (ProductKind::Cross, _) if secret => {}
                (ProductKind::Cross, VarKind::Scalar) => {
                    self.emit(StmtKind::Assign { lhs: c, rhs: Expr::var(&param.name) }, out)
                }
                (ProductKind::Cross, VarKind::Array(n)) => {
                    for i in 0..u64::from(n) {
                        let load = StmtKind::Load {
                            lhs: SHADOW_TEMP.to_string(),
                            array: param.name.clone(),
                            index: Expr::Lit(i),
                        };
                        self.emit(load, out);
                        let store =
                            StmtKind::Store { array: c.clone(), index: Expr::Lit(i), value: Expr::var(SHADOW_TEMP) };
                        self.emit(store, out);
                    }
                }
            }
        }
    }

    fn procedure(&mut self, proc: &Procedure, entry: bool) -> Procedure {
        let comp_decl = |b: &Self, name: &str, kind: VarKind| Decl { name: b.comp(name), kind };
        let mut q = proc.clone();
        let mut locals = proc.locals.clone();
        if entry {
            match self.kind {
                ProductKind::SemiCross => {
                    locals.extend(proc.params.iter().map(|x| comp_decl(self, &x.name, x.kind)));
                }
                ProductKind::Cross => {
                    for x in &proc.params {
                        if x.security == Some(Security::Secret) {
                            q.params.push(Param {
                                name: self.comp(&x.name),
                                kind: x.kind,
                                security: Some(Security::Secret),
                            });
                        } else {
                            locals.push(comp_decl(self, &x.name, x.kind));
                        }
                    }
                    if proc.params.iter().any(|x| x.security != Some(Security::Secret) && x.kind.is_array()) {
                        locals.push(Decl { name: SHADOW_TEMP.to_string(), kind: VarKind::Scalar });
                    }
                }
            }
        } else {
            q.params.extend(proc.params.iter().map(|x| Param {
                name: self.comp(&x.name),
                kind: x.kind,
                security: None,
            }));
        }
        locals.extend(proc.locals.iter().map(|x| comp_decl(self, &x.name, x.kind)));
        q.locals = locals;
        q.returns.extend(proc.returns.iter().map(|r| self.comp(r)));
        let mut body = Vec::new();
        if entry {
            self.entry_head(proc, &mut body);
        }
        body.extend(self.block(&proc.body));
        q.body = body;
        q
    }
}

fn check_names(p: &Program) -> Result<(), ProductError> {
    let mut names = BTreeSet::new();
    for proc in &p.procedures {
        names.extend(proc.scope().keys().map(|n| n.to_string()));
    }
    match names.into_iter().find(|n| is_companion(n)) {
        Some(n) => Err(ProductError::ReservedName(n)),
        None => Ok(()),
    }
}

fn build(p: &Program, tmap: &TaintMap, kind: ProductKind) -> Result<ProductProgram, ProductError> {
    check_names(p)?;
    let max = p.max_label();
    let mut b = Builder {
        kind,
        tmap,
        empty: TaintSet::new(),
        next: max.0,
        guards: BTreeMap::new(),
        candidates: BTreeMap::new(),
    };
    let procedures = p.procedures.iter().map(|q| b.procedure(q, q.name == p.entry)).collect();
    let mut program = Program { procedures, entry: p.entry.clone() };
    let map = program.relabel();
    let origin = map.iter().filter(|(old, _)| **old <= max).map(|(old, new)| (*new, *old)).collect();
    let guards = b.guards.into_iter().map(|(l, g)| (map[&l], g)).collect();
    let candidates = b
        .candidates
        .into_iter()
        .map(|(l, preds)| {
            let cs = preds.into_iter().map(|predicate| Candidate { predicate, status: CandidateStatus::Candidate });
            (map[&l], cs.collect())
        })
        .collect();
    Ok(ProductProgram { program, kind, guards, candidates, origin })
}

/// Program composed with its Boolean taint abstraction; guards `assert !b$x` at tainted sources.
pub fn build_semi_product(p: &Program, tmap: &TaintMap) -> Result<ProductProgram, ProductError> {
    build(p, tmap, ProductKind::SemiCross)
}

/// Program composed with a shadow copy sharing public inputs; guards `assert x == sh$x`.
pub fn build_cross_product(p: &Program, tmap: &TaintMap) -> Result<ProductProgram, ProductError> {
    build(p, tmap, ProductKind::Cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{collect_sources, load_program, pretty_print, stmt_text};
    use crate::taint::analyze;

    fn texts(block: &[Stmt]) -> Vec<String> {
        block.iter().map(stmt_text).collect()
    }

    #[test]
    fn xi_cases() {
        assert_eq!(xi(&Expr::Lit(5)), Expr::Lit(0));
        assert_eq!(xi(&Expr::var("x")), Expr::var("b$x"));
        assert_eq!(
            xi(&Expr::binary(BinOp::Add, Expr::var("x"), Expr::var("y"))),
            Expr::binary(BinOp::BitOr, Expr::var("b$x"), Expr::var("b$y"))
        );
        assert_eq!(xi_shadow(&Expr::Lit(5)), Expr::Lit(5));
        assert_eq!(xi_shadow(&Expr::var("k")), Expr::var("sh$k"));
        assert_eq!(
            xi_shadow(&Expr::binary(BinOp::BitXor, Expr::var("k"), Expr::var("p"))),
            Expr::binary(BinOp::BitXor, Expr::var("sh$k"), Expr::var("sh$p"))
        );
    }

    #[test]
    fn semi_load_cases() {
        let p = load_program("def main(pub y[4], pub z){ var x; x := y[z]; return; }").unwrap();
        let pp = build_semi_product(&p, &analyze(&p)).unwrap();
        let body = &pp.program.entry_procedure().body;
        assert_eq!(&texts(body)[5..], ["assert z < 4;", "x := y[z];", "b$x := 0;"]);
        assert!(pp.guards.is_empty());

        let p = load_program("def main(sec y[4], sec z){ var x; x := y[z]; return; }").unwrap();
        let pp = build_semi_product(&p, &analyze(&p)).unwrap();
        let body = &pp.program.entry_procedure().body;
        assert_eq!(&texts(body)[5..], ["assert z < 4;", "assert !b$z;", "x := y[z];", "b$x := b$y[z];"]);
        assert_eq!(pp.guards.len(), 1);
    }

    #[test]
    fn cross_assign_and_branch() {
        let p = load_program("def main(pub p, sec k){ var x, t; x := p + 1; t := k & 1; if t then skip; fi return; }")
            .unwrap();
        let pp = build_cross_product(&p, &analyze(&p)).unwrap();
        let main = pp.program.entry_procedure();
        assert_eq!(main.params.last().unwrap().name, "sh$k");
        assert_eq!(
            texts(&main.body)[..6],
            ["sh$p := p;", "x := p + 1;", "sh$x := x;", "t := k & 1;", "sh$t := sh$k & 1;", "assert t == sh$t;"]
        );
        let (l, g) = pp.guards.iter().next().unwrap();
        assert_eq!(stmt_text(pp.program.find(*l).unwrap().1), "assert t == sh$t;");
        assert_eq!(g.source.var, "t");
    }

    #[test]
    fn loops_get_two_guards() {
        let p = load_program("def main(sec k){ var i, t; t := i < k; while t do i := i + 1; t := i < k; od return; }")
            .unwrap();
        let tmap = analyze(&p);
        let pp = build_semi_product(&p, &tmap).unwrap();
        let positions: Vec<_> = pp.guards.values().map(|g| g.position).collect();
        assert_eq!(positions, [GuardPosition::LoopBegin, GuardPosition::LoopExit]);
        let tainted = collect_sources(&p).iter().filter(|s| tmap.is_tainted(s.label, &s.var)).count();
        assert_eq!(tainted, 1);
    }

    #[test]
    fn erase_restores_the_original() {
        let src = "def f(a[2], x){ var y; y := a[x]; a[x] := y; return y; } \
                   def main(pub p, sec k, sec s[2]){ var r, t; r := f(s, p); t := r ^ k; \
                   while t do t := t - 1; od return r; }";
        let p = load_program(src).unwrap();
        let tmap = analyze(&p);
        for pp in [build_semi_product(&p, &tmap).unwrap(), build_cross_product(&p, &tmap).unwrap()] {
            assert_eq!(pp.erase(), p);
            let text = pretty_print(&pp.program);
            let reparsed = crate::frontend::parse(&text).unwrap();
            assert_eq!(pretty_print(&reparsed), text);
        }
    }

    #[test]
    fn reserved_names_are_rejected() {
        let p = load_program("def main(pub b$x){ return; }").unwrap();
        assert_eq!(build_semi_product(&p, &analyze(&p)), Err(ProductError::ReservedName("b$x".into())));
    }
}
