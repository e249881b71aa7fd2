use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::FrontendError;
use crate::ast::*;

/// `assert idx < len`, inserted before every load and store with a variable index.
pub fn bounds_assert(index: &str, len: u32) -> StmtKind {
    StmtKind::Assert(Expr::binary(BinOp::Lt, Expr::var(index), Expr::Lit(u64::from(len))))
}

pub fn normalize(p: &Program) -> Result<Program, FrontendError> {
    if p.procedure(&p.entry).is_none() {
        return Err(FrontendError::MissingEntry);
    }
    let mut names = HashSet::new();
    for proc in &p.procedures {
        if !names.insert(proc.name.as_str()) {
            return Err(FrontendError::DuplicateProcedure(proc.name.clone()));
        }
        let is_entry = proc.name == p.entry;
        if let Some(param) = proc.params.iter().find(|q| q.security.is_some() != is_entry) {
            return Err(FrontendError::Annotation(format!(
                "parameter `{}` of `{}` is {}",
                param.name,
                proc.name,
                if is_entry { "unannotated" } else { "annotated" }
            )));
        }
        check_procedure(p, proc)?;
    }
    check_recursion(p)?;

    let mut program = rename_apart(p);
    let mut used: HashSet<String> = HashSet::new();
    for proc in &program.procedures {
        used.extend(proc.scope().keys().map(|s| s.to_string()));
    }
    let mut fresh = Fresh { used, next: 1 };
    for proc in &mut program.procedures {
        let kinds: BTreeMap<String, VarKind> = proc.scope().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let mut flat = Flattener { kinds, fresh: &mut fresh, temps: Vec::new() };
        let mut body = flat.block(&proc.body)?;
        if body.is_empty() {
            body.push(Stmt::unlabeled(StmtKind::Skip));
        }
        let temps = std::mem::take(&mut flat.temps);
        proc.body = body;
        proc.locals.extend(temps.into_iter().map(|name| Decl { name, kind: VarKind::Scalar }));
    }
    program.relabel();
    Ok(program)
}

fn kind_error(proc: &Procedure, detail: String) -> FrontendError {
    FrontendError::KindMismatch { procedure: proc.name.clone(), detail }
}

fn check_procedure(p: &Program, proc: &Procedure) -> Result<(), FrontendError> {
    let mut scope: BTreeMap<&str, VarKind> = BTreeMap::new();
    for (name, kind) in
        proc.params.iter().map(|q| (&q.name, q.kind)).chain(proc.locals.iter().map(|d| (&d.name, d.kind)))
    {
        if scope.insert(name, kind).is_some() {
            return Err(FrontendError::DuplicateIdentifier { name: name.clone(), procedure: proc.name.clone() });
        }
    }
    let lookup = |name: &str| {
        scope
            .get(name)
            .copied()
            .ok_or_else(|| FrontendError::UnknownIdentifier { name: name.to_string(), procedure: proc.name.clone() })
    };
    let scalar = |name: &str| match lookup(name)? {
        VarKind::Scalar => Ok(()),
        VarKind::Array(_) => Err(kind_error(proc, format!("array `{name}` used as a scalar"))),
    };
    let array = |name: &str| match lookup(name)? {
        VarKind::Array(n) => Ok(n),
        VarKind::Scalar => Err(kind_error(proc, format!("scalar `{name}` used as an array"))),
    };
    fn check_expr(
        e: &Expr,
        scalar: &dyn Fn(&str) -> Result<(), FrontendError>,
        array: &dyn Fn(&str) -> Result<u32, FrontendError>,
    ) -> Result<(), FrontendError> {
        match e {
            Expr::Lit(_) => Ok(()),
            Expr::Var(v) => scalar(v),
            Expr::Index(a, i) => {
                array(a)?;
                check_expr(i, scalar, array)
            }
            Expr::Unary(_, a) => check_expr(a, scalar, array),
            Expr::Binary(_, a, b) => {
                check_expr(a, scalar, array)?;
                check_expr(b, scalar, array)
            }
        }
    }
    let expr = |e: &Expr| check_expr(e, &scalar, &array);
    for r in &proc.returns {
        scalar(r)?;
    }
    let mut result = Ok(());
    walk_block(&proc.body, &mut |s| {
        if result.is_err() {
            return;
        }
        result = (|| match &s.kind {
            StmtKind::Skip => Ok(()),
            StmtKind::Assign { lhs, rhs } => {
                scalar(lhs)?;
                expr(rhs)
            }
            StmtKind::Load { lhs, array: a, index } => {
                scalar(lhs)?;
                array(a)?;
                expr(index)
            }
            StmtKind::Store { array: a, index, value } => {
                array(a)?;
                expr(index)?;
                expr(value)
            }
            StmtKind::Assert(e) | StmtKind::Assume(e) => expr(e),
            StmtKind::If { cond, .. } => expr(cond),
            StmtKind::While { cond, invariants, .. } => {
                expr(cond)?;
                invariants.iter().try_for_each(expr)
            }
            StmtKind::Call { lhs, callee, args } => {
                let Some(target) = p.procedure(callee) else {
                    return Err(FrontendError::UnknownIdentifier {
                        name: callee.clone(),
                        procedure: proc.name.clone(),
                    });
                };
                if callee == &p.entry {
                    return Err(FrontendError::Recursion(vec![proc.name.clone(), callee.clone()]));
                }
                if args.len() != target.params.len() {
                    return Err(FrontendError::ArityMismatch {
                        label: s.label,
                        callee: callee.clone(),
                        what: "arguments",
                        expected: target.params.len(),
                        found: args.len(),
                    });
                }
                if !lhs.is_empty() && lhs.len() != target.returns.len() {
                    return Err(FrontendError::ArityMismatch {
                        label: s.label,
                        callee: callee.clone(),
                        what: "results",
                        expected: target.returns.len(),
                        found: lhs.len(),
                    });
                }
                let mut seen_lhs = BTreeSet::new();
                for x in lhs {
                    scalar(x)?;
                    if !seen_lhs.insert(x) {
                        return Err(kind_error(proc, format!("`{x}` assigned twice by one call")));
                    }
                }
                let mut passed = BTreeSet::new();
                for (param, arg) in target.params.iter().zip(args) {
                    match param.kind {
                        VarKind::Scalar => expr(arg)?,
                        VarKind::Array(len) => {
                            let Expr::Var(a) = arg else {
                                return Err(kind_error(
                                    proc,
                                    format!("array parameter `{}` needs an array", param.name),
                                ));
                            };
                            if array(a)? != len {
                                return Err(kind_error(
                                    proc,
                                    format!("`{a}` does not have the length {len} of `{}`", param.name),
                                ));
                            }
                            if !passed.insert(a) {
                                return Err(FrontendError::ArrayAlias { callee: callee.clone(), array: a.clone() });
                            }
                        }
                    }
                }
                Ok(())
            }
        })();
    });
    result
}

fn check_recursion(p: &Program) -> Result<(), FrontendError> {
    let callees = |name: &str| {
        let mut out = BTreeSet::new();
        if let Some(proc) = p.procedure(name) {
            walk_block(&proc.body, &mut |s| {
                if let StmtKind::Call { callee, .. } = &s.kind {
                    out.insert(callee.clone());
                }
            });
        }
        out
    };
    // 0 = unvisited, 1 = on stack, 2 = done
    fn dfs(
        name: &str,
        callees: &dyn Fn(&str) -> BTreeSet<String>,
        state: &mut BTreeMap<String, u8>,
        stack: &mut Vec<String>,
    ) -> Result<(), FrontendError> {
        state.insert(name.to_string(), 1);
        stack.push(name.to_string());
        for c in callees(name) {
            match state.get(&c).copied().unwrap_or(0) {
                1 => {
                    let start = stack.iter().position(|s| *s == c).unwrap_or(0);
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(c);
                    return Err(FrontendError::Recursion(cycle));
                }
                0 => dfs(&c, callees, state, stack)?,
                _ => {}
            }
        }
        stack.pop();
        state.insert(name.to_string(), 2);
        Ok(())
    }
    let mut state = BTreeMap::new();
    for proc in &p.procedures {
        if state.get(&proc.name).copied().unwrap_or(0) == 0 {
            dfs(&proc.name, &callees, &mut state, &mut Vec::new())?;
        }
    }
    Ok(())
}

/// Renames variables of non-entry procedures that clash with a name declared elsewhere.
fn rename_apart(p: &Program) -> Program {
    let mut owners: BTreeMap<String, usize> = BTreeMap::new();
    for proc in &p.procedures {
        for name in proc.scope().keys() {
            *owners.entry(name.to_string()).or_default() += 1;
        }
    }
    let mut taken: BTreeSet<String> = owners.keys().cloned().collect();
    let mut out = p.clone();
    for proc in out.procedures.iter_mut().filter(|q| q.name != p.entry) {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for name in proc.scope().keys() {
            if owners[*name] > 1 {
                let mut candidate = format!("{}${name}", proc.name);
                if candidate.starts_with("b$") || candidate.starts_with("sh$") {
                    // keep clear of the product companion prefixes
                    candidate.insert(0, '_');
                }
                while taken.contains(&candidate) {
                    candidate.push('$');
                }
                taken.insert(candidate.clone());
                map.insert(name.to_string(), candidate);
            }
        }
        if map.is_empty() {
            continue;
        }
        let f = |n: &str| map.get(n).cloned().unwrap_or_else(|| n.to_string());
        for q in &mut proc.params {
            q.name = f(&q.name);
        }
        for d in &mut proc.locals {
            d.name = f(&d.name);
        }
        for r in &mut proc.returns {
            *r = f(r);
        }
        walk_block_mut(&mut proc.body, &mut |s| rename_stmt(s, &f));
    }
    out
}

fn rename_stmt(s: &mut Stmt, f: &impl Fn(&str) -> String) {
    match &mut s.kind {
        StmtKind::Skip => {}
        StmtKind::Assign { lhs, rhs } => {
            *lhs = f(lhs);
            *rhs = rhs.rename(f);
        }
        StmtKind::Load { lhs, array, index } => {
            *lhs = f(lhs);
            *array = f(array);
            *index = index.rename(f);
        }
        StmtKind::Store { array, index, value } => {
            *array = f(array);
            *index = index.rename(f);
            *value = value.rename(f);
        }
        StmtKind::Assert(e) | StmtKind::Assume(e) => *e = e.rename(f),
        StmtKind::If { cond, .. } => *cond = cond.rename(f),
        StmtKind::While { cond, invariants, .. } => {
            *cond = cond.rename(f);
            for inv in invariants {
                *inv = inv.rename(f);
            }
        }
        StmtKind::Call { lhs, args, .. } => {
            for x in lhs {
                *x = f(x);
            }
            for a in args {
                *a = a.rename(f);
            }
        }
    }
}

struct Fresh {
    used: HashSet<String>,
    next: usize,
}

impl Fresh {
    fn temp(&mut self) -> String {
        loop {
            let name = format!("t${}", self.next);
            self.next += 1;
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

struct Flattener<'a> {
    kinds: BTreeMap<String, VarKind>,
    fresh: &'a mut Fresh,
    temps: Vec<String>,
}

impl Flattener<'_> {
    fn temp(&mut self) -> String {
        let t = self.fresh.temp();
        self.temps.push(t.clone());
        t
    }

    fn array_len(&self, a: &str) -> u32 {
        match self.kinds.get(a) {
            Some(VarKind::Array(n)) => *n,
            _ => 0,
        }
    }

    fn block(&mut self, block: &[Stmt]) -> Result<Block, FrontendError> {
        let mut out = Vec::new();
        for s in block {
            self.stmt(s, &mut out)?;
        }
        Ok(out)
    }

    fn emit(out: &mut Block, kind: StmtKind) {
        out.push(Stmt::unlabeled(kind));
    }

    /// Emits the bounds check for an access and returns the index operand.
    fn access(&mut self, array: &str, index: &Expr, out: &mut Block) -> Result<Expr, FrontendError> {
        let idx = self.atom(index, out)?;
        let len = self.array_len(array);
        match &idx {
            Expr::Lit(n) if *n >= u64::from(len) => {
                return Err(FrontendError::IndexOutOfRange { array: array.to_string(), index: *n, len });
            }
            Expr::Var(v) => {
                let check = bounds_assert(v, len);
                if out.last().map(|s| &s.kind) != Some(&check) {
                    Self::emit(out, check);
                }
            }
            _ => {}
        }
        Ok(idx)
    }

    fn load(&mut self, lhs: &str, array: &str, index: &Expr, out: &mut Block) -> Result<(), FrontendError> {
        let index = self.access(array, index, out)?;
        Self::emit(out, StmtKind::Load { lhs: lhs.to_string(), array: array.to_string(), index });
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Block) -> Result<(), FrontendError> {
        match &s.kind {
            StmtKind::Skip => Self::emit(out, StmtKind::Skip),
            StmtKind::Assign { lhs, rhs: Expr::Index(array, index) } => self.load(lhs, array, index, out)?,
            StmtKind::Load { lhs, array, index } => self.load(lhs, array, index, out)?,
            StmtKind::Assign { lhs, rhs } => {
                let rhs = self.flat(rhs, out)?;
                Self::emit(out, StmtKind::Assign { lhs: lhs.clone(), rhs });
            }
            StmtKind::Store { array, index, value } => {
                let value = self.atom(value, out)?;
                let index = self.access(array, index, out)?;
                Self::emit(out, StmtKind::Store { array: array.clone(), index, value });
            }
            StmtKind::Assert(e) => {
                let e = self.flat(e, out)?;
                Self::emit(out, StmtKind::Assert(e));
            }
            StmtKind::Assume(e) => {
                let e = self.flat(e, out)?;
                Self::emit(out, StmtKind::Assume(e));
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                let cond = self.cond_var(cond, out)?;
                let then_branch = self.block(then_branch)?;
                let else_branch = self.block(else_branch)?;
                Self::emit(out, StmtKind::If { cond, then_branch, else_branch });
            }
            StmtKind::While { cond, invariants, body } => {
                let mut pre = Vec::new();
                let cond = self.cond_var(cond, &mut pre)?;
                let mut body = self.block(body)?;
                body.extend(pre.iter().cloned());
                out.extend(pre);
                Self::emit(out, StmtKind::While { cond, invariants: invariants.clone(), body });
            }
            StmtKind::Call { lhs, callee, args } => {
                let mut flat_args = Vec::with_capacity(args.len());
                for a in args {
                    let is_array = matches!(a, Expr::Var(v) if self.kinds.get(v).is_some_and(|k| k.is_array()));
                    flat_args.push(if is_array { a.clone() } else { self.cond_var(a, out)? });
                }
                Self::emit(out, StmtKind::Call { lhs: lhs.clone(), callee: callee.clone(), args: flat_args });
            }
        }
        Ok(())
    }

    /// Reduces `e` to a variable, introducing a temporary unless it already is one.
    fn cond_var(&mut self, e: &Expr, out: &mut Block) -> Result<Expr, FrontendError> {
        let atom = self.atom(e, out)?;
        if let Expr::Lit(_) = atom {
            let t = self.temp();
            Self::emit(out, StmtKind::Assign { lhs: t.clone(), rhs: atom });
            return Ok(Expr::Var(t));
        }
        Ok(atom)
    }

    fn atom(&mut self, e: &Expr, out: &mut Block) -> Result<Expr, FrontendError> {
        if e.is_atom() {
            return Ok(e.clone());
        }
        if let Expr::Index(array, index) = e {
            let index = self.access(array, index, out)?;
            let t = self.temp();
            Self::emit(out, StmtKind::Load { lhs: t.clone(), array: array.clone(), index });
            return Ok(Expr::Var(t));
        }
        let flat = self.flat(e, out)?;
        let t = self.temp();
        Self::emit(out, StmtKind::Assign { lhs: t.clone(), rhs: flat });
        Ok(Expr::Var(t))
    }

    fn flat(&mut self, e: &Expr, out: &mut Block) -> Result<Expr, FrontendError> {
        Ok(match e {
            Expr::Lit(_) | Expr::Var(_) | Expr::Index(..) => self.atom(e, out)?,
            Expr::Unary(op, a) => Expr::unary(*op, self.atom(a, out)?),
            Expr::Binary(op, a, b) => {
                let a = self.atom(a, out)?;
                let b = self.atom(b, out)?;
                Expr::binary(*op, a, b)
            }
        })
    }
}
