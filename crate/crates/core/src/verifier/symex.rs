//! Verification-condition generation by forward symbolic execution of a product program.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::term::{BvOp, CmpOp, TermId, TermStore};
use super::VerifierError;
use crate::ast::*;
use crate::product::{CandidateStatus, ProductProgram};
use crate::semantics::Width;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Loops are cut with their confirmed candidate invariants.
    Invariant,
    /// Loops are unrolled this many times, followed by an unwinding check.
    Bmc { unroll: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VcKind {
    GuardValidity,
    InvariantInit,
    InvariantInductive,
    UnwindingCheck,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vc {
    pub id: usize,
    pub kind: VcKind,
    /// Guard assert label for guard VCs, loop label otherwise.
    pub label: Label,
    /// Index into the loop's candidate list, for invariant VCs.
    pub candidate: Option<usize>,
    /// Valid iff the obligation holds.
    pub formula: TermId,
}

#[derive(Debug, Clone)]
pub struct VcSet {
    pub store: TermStore,
    pub vcs: Vec<Vc>,
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub mode: Mode,
    pub guards: bool,
    pub invariants: bool,
    /// Cap on the number of term nodes; exceeding it aborts with `InlineBlowup`.
    pub max_terms: usize,
}

impl GenOptions {
    pub fn new(mode: Mode) -> Self {
        GenOptions { mode, guards: true, invariants: true, max_terms: 4_000_000 }
    }
}

#[derive(Debug, Clone, Default)]
struct Env {
    scalars: HashMap<String, TermId>,
    arrays: HashMap<String, Vec<TermId>>,
}

struct Symex<'a> {
    p: &'a Program,
    guards: BTreeSet<Label>,
    /// Guards of a self-composition are assumed once checked; taint guards are not.
    assume_guards: bool,
    live: BTreeMap<Label, Vec<(usize, &'a Expr)>>,
    opts: &'a GenOptions,
    s: TermStore,
    pc: TermId,
    vcs: Vec<Vc>,
    havocs: usize,
}

/// Symbol name of an entry parameter cell.
pub fn cell_symbol(param: &str, element: Option<usize>) -> String {
    match element {
        None => param.to_string(),
        Some(i) => format!("{param}[{i}]"),
    }
}

impl<'a> Symex<'a> {
    fn vc(&mut self, kind: VcKind, label: Label, candidate: Option<usize>, obligation: TermId) {
        let formula = self.s.implies(self.pc, obligation);
        let id = self.vcs.len();
        self.vcs.push(Vc { id, kind, label, candidate, formula });
    }

    fn assume(&mut self, c: TermId) {
        self.pc = self.s.and(self.pc, c);
    }

    fn dead(&self) -> bool {
        self.s.as_bool(self.pc) == Some(false)
    }

    fn check_size(&self) -> Result<(), VerifierError> {
        if self.s.len() > self.opts.max_terms {
            return Err(VerifierError::InlineBlowup { terms: self.s.len(), cap: self.opts.max_terms });
        }
        Ok(())
    }

    fn scalar(&self, env: &Env, name: &str) -> Result<TermId, VerifierError> {
        env.scalars.get(name).copied().ok_or_else(|| VerifierError::Unbound(name.to_string()))
    }

    fn expr(&mut self, env: &Env, e: &Expr) -> Result<TermId, VerifierError> {
        let s = &mut self.s;
        Ok(match e {
            Expr::Lit(n) => s.bv(*n),
            Expr::Var(v) => self.scalar(env, v)?,
            Expr::Index(..) => return Err(VerifierError::NotNormalized),
            Expr::Unary(op, a) => {
                let a = self.expr(env, a)?;
                let s = &mut self.s;
                match op {
                    UnOp::BitNot => s.bvnot(a),
                    UnOp::Neg => s.neg(a),
                    UnOp::Not => {
                        let t = s.truth(a);
                        let n = s.not(t);
                        s.from_bool(n)
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let a = self.expr(env, a)?;
                let b = self.expr(env, b)?;
                if matches!(op, BinOp::Div | BinOp::Rem) {
                    let zero = self.s.bv(0);
                    let is_zero = self.s.cmp(CmpOp::Eq, b, zero);
                    let nonzero = self.s.not(is_zero);
                    self.assume(nonzero);
                }
                let s = &mut self.s;
                let bv = |s: &mut TermStore, op| s.bin(op, a, b);
                match op {
                    BinOp::Add => bv(s, BvOp::Add),
                    BinOp::Sub => bv(s, BvOp::Sub),
                    BinOp::Mul => bv(s, BvOp::Mul),
                    BinOp::Div => bv(s, BvOp::Div),
                    BinOp::Rem => bv(s, BvOp::Rem),
                    BinOp::BitAnd => bv(s, BvOp::And),
                    BinOp::BitOr => bv(s, BvOp::Or),
                    BinOp::BitXor => bv(s, BvOp::Xor),
                    BinOp::Shl => bv(s, BvOp::Shl),
                    BinOp::Shr => bv(s, BvOp::Shr),
                    BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        let c = match op {
                            BinOp::Eq | BinOp::Ne => s.cmp(CmpOp::Eq, a, b),
                            BinOp::Lt => s.cmp(CmpOp::Ult, a, b),
                            BinOp::Le => s.cmp(CmpOp::Ule, a, b),
                            BinOp::Gt => s.cmp(CmpOp::Ult, b, a),
                            _ => s.cmp(CmpOp::Ule, b, a),
                        };
                        let c = if *op == BinOp::Ne { s.not(c) } else { c };
                        s.from_bool(c)
                    }
                    BinOp::And | BinOp::Or => {
                        let (ta, tb) = (s.truth(a), s.truth(b));
                        let c = if *op == BinOp::And { s.and(ta, tb) } else { s.or(ta, tb) };
                        s.from_bool(c)
                    }
                }
            }
        })
    }

    /// Evaluates a predicate without recording the side conditions of its operators.
    fn predicate(&mut self, env: &Env, e: &Expr) -> Result<TermId, VerifierError> {
        let saved = self.pc;
        let v = self.expr(env, e)?;
        self.pc = saved;
        Ok(self.s.truth(v))
    }

    /// Bounds side condition for an access; returns the index term.
    fn access(&mut self, env: &Env, array: &str, index: &Expr) -> Result<(TermId, usize), VerifierError> {
        let len = env.arrays.get(array).ok_or_else(|| VerifierError::Unbound(array.to_string()))?.len();
        let idx = self.expr(env, index)?;
        let bound = self.s.bv(len as u64);
        let ok = self.s.cmp(CmpOp::Ult, idx, bound);
        self.assume(ok);
        Ok((idx, len))
    }

    fn block(&mut self, env: &mut Env, block: &'a [Stmt]) -> Result<(), VerifierError> {
        for st in block {
            if self.dead() {
                return Ok(());
            }
            self.stmt(env, st)?;
        }
        Ok(())
    }

    fn merge(&mut self, c: TermId, then_env: Env, else_env: Env) -> Env {
        let mut out = Env::default();
        for (name, t) in then_env.scalars {
            let e = else_env.scalars[&name];
            out.scalars.insert(name, self.s.ite(c, t, e));
        }
        for (name, ts) in then_env.arrays {
            let es = &else_env.arrays[&name];
            let merged = ts.iter().zip(es).map(|(&t, &e)| self.s.ite(c, t, e)).collect();
            out.arrays.insert(name, merged);
        }
        out
    }

    /// Runs `then_f` under `c` and `else_f` under its negation, then joins.
    fn fork(
        &mut self,
        env: &mut Env,
        c: TermId,
        then_f: impl FnOnce(&mut Self, &mut Env) -> Result<(), VerifierError>,
        else_f: impl FnOnce(&mut Self, &mut Env) -> Result<(), VerifierError>,
    ) -> Result<(), VerifierError> {
        match self.s.as_bool(c) {
            Some(true) => return then_f(self, env),
            Some(false) => return else_f(self, env),
            None => {}
        }
        let pc = self.pc;
        let nc = self.s.not(c);
        let pc_t = self.s.and(pc, c);
        let pc_e = self.s.and(pc, nc);
        let mut env_t = env.clone();
        self.pc = pc_t;
        then_f(self, &mut env_t)?;
        let after_t = self.pc;
        self.pc = pc_e;
        else_f(self, env)?;
        let after_e = self.pc;
        let else_env = std::mem::take(env);
        *env = self.merge(c, env_t, else_env);
        self.pc = if after_t == pc_t && after_e == pc_e { pc } else { self.s.or(after_t, after_e) };
        self.check_size()
    }

    fn stmt(&mut self, env: &mut Env, st: &'a Stmt) -> Result<(), VerifierError> {
        match &st.kind {
            StmtKind::Skip => {}
            StmtKind::Assign { lhs, rhs } => {
                let v = self.expr(env, rhs)?;
                env.scalars.insert(lhs.clone(), v);
            }
            StmtKind::Load { lhs, array, index } => {
                let (idx, len) = self.access(env, array, index)?;
                let cells = env.arrays[array.as_str()].clone();
                let mut v = cells[len - 1];
                for i in (0..len - 1).rev() {
                    let k = self.s.bv(i as u64);
                    let hit = self.s.cmp(CmpOp::Eq, idx, k);
                    v = self.s.ite(hit, cells[i], v);
                }
                env.scalars.insert(lhs.clone(), v);
            }
            StmtKind::Store { array, index, value } => {
                let v = self.expr(env, value)?;
                let (idx, len) = self.access(env, array, index)?;
                for i in 0..len {
                    let k = self.s.bv(i as u64);
                    let hit = self.s.cmp(CmpOp::Eq, idx, k);
                    let cells = env.arrays.get_mut(array.as_str()).expect("checked by access");
                    let old = cells[i];
                    cells[i] = self.s.ite(hit, v, old);
                }
            }
            StmtKind::Assert(e) if self.guards.contains(&st.label) => {
                let c = self.predicate(env, e)?;
                if self.opts.guards {
                    self.vc(VcKind::GuardValidity, st.label, None, c);
                }
                if self.assume_guards {
                    self.assume(c);
                }
            }
            StmtKind::Assert(e) | StmtKind::Assume(e) => {
                let v = self.expr(env, e)?;
                let c = self.s.truth(v);
                self.assume(c);
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                let v = self.expr(env, cond)?;
                let c = self.s.truth(v);
                self.fork(env, c, |me, e| me.block(e, then_branch), |me, e| me.block(e, else_branch))?;
            }
            StmtKind::While { cond, body, invariants } => match self.opts.mode {
                Mode::Invariant => self.loop_invariant(env, st.label, cond, body, invariants)?,
                Mode::Bmc { unroll } => self.loop_unroll(env, st.label, cond, body, unroll)?,
            },
            StmtKind::Call { lhs, callee, args } => self.call(env, lhs, callee, args)?,
        }
        self.check_size()
    }

    fn loop_unroll(
        &mut self,
        env: &mut Env,
        label: Label,
        cond: &'a Expr,
        body: &'a [Stmt],
        k: u32,
    ) -> Result<(), VerifierError> {
        let v = self.expr(env, cond)?;
        let c = self.s.truth(v);
        if k == 0 {
            let nc = self.s.not(c);
            if self.opts.guards {
                self.vc(VcKind::UnwindingCheck, label, None, nc);
            }
            self.assume(nc);
            return Ok(());
        }
        self.fork(
            env,
            c,
            |me, e| {
                me.block(e, body)?;
                if me.dead() {
                    return Ok(());
                }
                me.loop_unroll(e, label, cond, body, k - 1)
            },
            |_, _| Ok(()),
        )
    }

    fn loop_invariant(
        &mut self,
        env: &mut Env,
        label: Label,
        cond: &'a Expr,
        body: &'a [Stmt],
        ast_invariants: &'a [Expr],
    ) -> Result<(), VerifierError> {
        let invs: Vec<(usize, &'a Expr)> = match self.live.get(&label) {
            Some(list) => list.clone(),
            None => ast_invariants.iter().enumerate().collect(),
        };
        for &(i, inv) in &invs {
            let c = self.predicate(env, inv)?;
            if self.opts.invariants {
                self.vc(VcKind::InvariantInit, label, Some(i), c);
            }
        }
        let (scalars, arrays) = modified(self.p, body);
        for x in scalars {
            if let Some(slot) = env.scalars.get_mut(&x) {
                self.havocs += 1;
                *slot = self.s.sym(&format!("havoc!{}!{x}", self.havocs));
            }
        }
        for a in arrays {
            if let Some(cells) = env.arrays.get(&a).map(Vec::len) {
                self.havocs += 1;
                let fresh = (0..cells).map(|i| self.s.sym(&format!("havoc!{}!{a}[{i}]", self.havocs))).collect();
                env.arrays.insert(a, fresh);
            }
        }
        for &(_, inv) in &invs {
            let c = self.predicate(env, inv)?;
            self.assume(c);
        }
        let head = self.pc;
        let v = self.expr(env, cond)?;
        let c = self.s.truth(v);
        let mut body_env = env.clone();
        self.assume(c);
        self.block(&mut body_env, body)?;
        if self.opts.invariants && !self.dead() {
            for &(i, inv) in &invs {
                let c = self.predicate(&body_env, inv)?;
                self.vc(VcKind::InvariantInductive, label, Some(i), c);
            }
        }
        self.pc = head;
        let nc = self.s.not(c);
        self.assume(nc);
        Ok(())
    }

    fn call(&mut self, env: &mut Env, lhs: &[String], callee: &str, args: &[Expr]) -> Result<(), VerifierError> {
        let q = self.p.procedure(callee).ok_or_else(|| VerifierError::Unbound(callee.to_string()))?;
        let mut inner = Env::default();
        for (param, a) in q.params.iter().zip(args) {
            match (param.kind, a) {
                (VarKind::Array(_), Expr::Var(actual)) => {
                    let cells = env.arrays.get(actual).ok_or_else(|| VerifierError::Unbound(actual.clone()))?;
                    inner.arrays.insert(param.name.clone(), cells.clone());
                }
                _ => {
                    let v = self.expr(env, a)?;
                    inner.scalars.insert(param.name.clone(), v);
                }
            }
        }
        init_locals(&mut self.s, q, &mut inner);
        self.block(&mut inner, &q.body)?;
        for (param, a) in q.params.iter().zip(args) {
            if let (VarKind::Array(_), Expr::Var(actual)) = (param.kind, a) {
                env.arrays.insert(actual.clone(), inner.arrays[&param.name].clone());
            }
        }
        for (x, r) in lhs.iter().zip(&q.returns) {
            let v = self.scalar(&inner, r)?;
            env.scalars.insert(x.clone(), v);
        }
        Ok(())
    }
}

fn init_locals(s: &mut TermStore, q: &Procedure, env: &mut Env) {
    let zero = s.bv(0);
    for d in &q.locals {
        match d.kind {
            VarKind::Scalar => {
                env.scalars.insert(d.name.clone(), zero);
            }
            VarKind::Array(n) => {
                env.arrays.insert(d.name.clone(), vec![zero; n as usize]);
            }
        }
    }
}

/// Variables a loop body may write: assigned scalars, stored arrays and arrays passed to calls.
fn modified(p: &Program, body: &[Stmt]) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut scalars = BTreeSet::new();
    let mut arrays = BTreeSet::new();
    walk_block(body, &mut |s| {
        scalars.extend(s.scalar_defs().into_iter().map(str::to_string));
        match &s.kind {
            StmtKind::Store { array, .. } => {
                arrays.insert(array.clone());
            }
            StmtKind::Call { callee, args, .. } => {
                if let Some(q) = p.procedure(callee) {
                    for (param, a) in q.params.iter().zip(args) {
                        if let (VarKind::Array(_), Expr::Var(v)) = (param.kind, a) {
                            arrays.insert(v.clone());
                        }
                    }
                }
            }
            _ => {}
        }
    });
    (scalars, arrays)
}

/// Generates the verification conditions of a product program.
pub fn gen_vcs(pp: &ProductProgram, width: Width, opts: &GenOptions) -> Result<VcSet, VerifierError> {
    let p = &pp.program;
    let live = pp
        .candidates
        .iter()
        .map(|(l, cs)| {
            let list = cs
                .iter()
                .enumerate()
                .filter(|(_, c)| c.status != CandidateStatus::Dropped)
                .map(|(i, c)| (i, &c.predicate))
                .collect();
            (*l, list)
        })
        .collect();
    let mut s = TermStore::new(width);
    let pc = s.bool(true);
    let mut x = Symex {
        p,
        guards: pp.guard_labels(),
        assume_guards: pp.kind == crate::product::ProductKind::Cross,
        live,
        opts,
        s,
        pc,
        vcs: Vec::new(),
        havocs: 0,
    };
    let main = p.entry_procedure();
    let mut env = Env::default();
    for param in &main.params {
        match param.kind {
            VarKind::Scalar => {
                let t = x.s.sym(&cell_symbol(&param.name, None));
                env.scalars.insert(param.name.clone(), t);
            }
            VarKind::Array(n) => {
                let cells = (0..n as usize).map(|i| x.s.sym(&cell_symbol(&param.name, Some(i)))).collect();
                env.arrays.insert(param.name.clone(), cells);
            }
        }
    }
    init_locals(&mut x.s, main, &mut env);
    x.block(&mut env, &main.body)?;
    Ok(VcSet { store: x.s, vcs: x.vcs })
}
