//! Hash-consed bit-vector and Boolean terms with constant folding.

use std::collections::HashMap;

use crate::semantics::Width;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BvOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    /// Shift amounts are taken modulo the width.
    Shl,
    Shr,
}

impl BvOp {
    fn commutative(self) -> bool {
        matches!(self, BvOp::Add | BvOp::Mul | BvOp::And | BvOp::Or | BvOp::Xor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ult,
    Ule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Bv,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Bv(u64),
    Bool(bool),
    /// Free bit-vector symbol, by index into the symbol table.
    Sym(u32),
    Bin(BvOp, TermId, TermId),
    BvNot(TermId),
    Neg(TermId),
    Ite(TermId, TermId, TermId),
    Cmp(CmpOp, TermId, TermId),
    Not(TermId),
    And(TermId, TermId),
    Or(TermId, TermId),
}

impl Term {
    pub fn children(&self) -> Vec<TermId> {
        match *self {
            Term::Bv(_) | Term::Bool(_) | Term::Sym(_) => Vec::new(),
            Term::BvNot(a) | Term::Neg(a) | Term::Not(a) => vec![a],
            Term::Bin(_, a, b) | Term::Cmp(_, a, b) | Term::And(a, b) | Term::Or(a, b) => vec![a, b],
            Term::Ite(c, a, b) => vec![c, a, b],
        }
    }
}

/// Bit-vector operation with SMT-LIB conventions for division by zero.
pub fn apply_bv(op: BvOp, a: u64, b: u64, w: Width) -> u64 {
    let m = w.mask();
    let shift = (b % u64::from(w.bits())) as u32;
    let r = match op {
        BvOp::Add => a.wrapping_add(b),
        BvOp::Sub => a.wrapping_sub(b),
        BvOp::Mul => a.wrapping_mul(b),
        BvOp::Div => a.checked_div(b).unwrap_or(m),
        BvOp::Rem => a.checked_rem(b).unwrap_or(a),
        BvOp::And => a & b,
        BvOp::Or => a | b,
        BvOp::Xor => a ^ b,
        BvOp::Shl => a.checked_shl(shift).unwrap_or(0),
        BvOp::Shr => a.checked_shr(shift).unwrap_or(0),
    };
    r & m
}

pub fn apply_cmp(op: CmpOp, a: u64, b: u64) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ult => a < b,
        CmpOp::Ule => a <= b,
    }
}

#[derive(Debug, Clone)]
pub struct TermStore {
    width: Width,
    nodes: Vec<Term>,
    index: HashMap<Term, TermId>,
    symbols: Vec<String>,
    symbol_ids: HashMap<String, TermId>,
}

impl TermStore {
    pub fn new(width: Width) -> Self {
        TermStore { width, nodes: Vec::new(), index: HashMap::new(), symbols: Vec::new(), symbol_ids: HashMap::new() }
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, t: TermId) -> &Term {
        &self.nodes[t.0 as usize]
    }

    pub fn symbol_name(&self, index: u32) -> &str {
        &self.symbols[index as usize]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn sort(&self, t: TermId) -> Sort {
        match *self.get(t) {
            Term::Bv(_) | Term::Sym(_) | Term::Bin(..) | Term::BvNot(_) | Term::Neg(_) => Sort::Bv,
            Term::Bool(_) | Term::Cmp(..) | Term::Not(_) | Term::And(..) | Term::Or(..) => Sort::Bool,
            Term::Ite(_, a, _) => self.sort(a),
        }
    }

    fn intern(&mut self, t: Term) -> TermId {
        if let Some(&id) = self.index.get(&t) {
            return id;
        }
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(t.clone());
        self.index.insert(t, id);
        id
    }

    pub fn bv(&mut self, v: u64) -> TermId {
        let v = v & self.width.mask();
        self.intern(Term::Bv(v))
    }

    pub fn bool(&mut self, b: bool) -> TermId {
        self.intern(Term::Bool(b))
    }

    /// The free symbol with this name, created on first use.
    pub fn sym(&mut self, name: &str) -> TermId {
        if let Some(&id) = self.symbol_ids.get(name) {
            return id;
        }
        let ix = self.symbols.len() as u32;
        self.symbols.push(name.to_string());
        let id = self.intern(Term::Sym(ix));
        self.symbol_ids.insert(name.to_string(), id);
        id
    }

    pub fn as_bv(&self, t: TermId) -> Option<u64> {
        match *self.get(t) {
            Term::Bv(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self, t: TermId) -> Option<bool> {
        match *self.get(t) {
            Term::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn bin(&mut self, op: BvOp, a: TermId, b: TermId) -> TermId {
        let w = self.width;
        let ones = w.mask();
        let (ca, cb) = (self.as_bv(a), self.as_bv(b));
        if let (Some(x), Some(y)) = (ca, cb) {
            return self.bv(apply_bv(op, x, y, w));
        }
        let (a, b, ca, cb) =
            if op.commutative() && (ca.is_some() || (cb.is_none() && a > b)) { (b, a, cb, ca) } else { (a, b, ca, cb) };
        match (op, ca, cb) {
            (BvOp::Add | BvOp::Sub | BvOp::Or | BvOp::Xor | BvOp::Shl | BvOp::Shr, _, Some(0)) => return a,
            (BvOp::Mul | BvOp::Div, _, Some(1)) => return a,
            (BvOp::Mul | BvOp::And, _, Some(0)) => return self.bv(0),
            (BvOp::Shl | BvOp::Shr, Some(0), _) => return self.bv(0),
            (BvOp::And, _, Some(m)) if m == ones => return a,
            (BvOp::Or, _, Some(m)) if m == ones => return self.bv(ones),
            _ => {}
        }
        if a == b {
            match op {
                BvOp::Sub | BvOp::Xor => return self.bv(0),
                BvOp::And | BvOp::Or => return a,
                _ => {}
            }
        }
        self.intern(Term::Bin(op, a, b))
    }

    pub fn bvnot(&mut self, a: TermId) -> TermId {
        match *self.get(a) {
            Term::Bv(v) => self.bv(!v),
            Term::BvNot(x) => x,
            _ => self.intern(Term::BvNot(a)),
        }
    }

    pub fn neg(&mut self, a: TermId) -> TermId {
        match *self.get(a) {
            Term::Bv(v) => self.bv(v.wrapping_neg()),
            Term::Neg(x) => x,
            _ => self.intern(Term::Neg(a)),
        }
    }

    pub fn cmp(&mut self, op: CmpOp, a: TermId, b: TermId) -> TermId {
        if let (Some(x), Some(y)) = (self.as_bv(a), self.as_bv(b)) {
            return self.bool(apply_cmp(op, x, y));
        }
        if a == b {
            return self.bool(op != CmpOp::Ult);
        }
        match (op, self.as_bv(a), self.as_bv(b)) {
            (CmpOp::Ult, _, Some(0)) => return self.bool(false),
            (CmpOp::Ule, Some(0), _) => return self.bool(true),
            _ => {}
        }
        let (a, b) = if op == CmpOp::Eq && a > b { (b, a) } else { (a, b) };
        self.intern(Term::Cmp(op, a, b))
    }

    pub fn not(&mut self, a: TermId) -> TermId {
        match *self.get(a) {
            Term::Bool(b) => self.bool(!b),
            Term::Not(x) => x,
            _ => self.intern(Term::Not(a)),
        }
    }

    fn complementary(&self, a: TermId, b: TermId) -> bool {
        *self.get(a) == Term::Not(b) || *self.get(b) == Term::Not(a)
    }

    pub fn and(&mut self, a: TermId, b: TermId) -> TermId {
        match (self.as_bool(a), self.as_bool(b)) {
            (Some(false), _) | (_, Some(false)) => return self.bool(false),
            (Some(true), _) => return b,
            (_, Some(true)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if self.complementary(a, b) {
            return self.bool(false);
        }
        let (a, b) = if a > b { (b, a) } else { (a, b) };
        self.intern(Term::And(a, b))
    }

    pub fn or(&mut self, a: TermId, b: TermId) -> TermId {
        match (self.as_bool(a), self.as_bool(b)) {
            (Some(true), _) | (_, Some(true)) => return self.bool(true),
            (Some(false), _) => return b,
            (_, Some(false)) => return a,
            _ => {}
        }
        if a == b {
            return a;
        }
        if self.complementary(a, b) {
            return self.bool(true);
        }
        let (a, b) = if a > b { (b, a) } else { (a, b) };
        self.intern(Term::Or(a, b))
    }

    pub fn implies(&mut self, a: TermId, b: TermId) -> TermId {
        let na = self.not(a);
        self.or(na, b)
    }

    pub fn ite(&mut self, c: TermId, a: TermId, b: TermId) -> TermId {
        if let Some(c) = self.as_bool(c) {
            return if c { a } else { b };
        }
        if a == b {
            return a;
        }
        if let Term::Not(inner) = *self.get(c) {
            return self.ite(inner, b, a);
        }
        if self.sort(a) == Sort::Bool {
            match (self.as_bool(a), self.as_bool(b)) {
                (Some(true), Some(false)) => return c,
                (Some(false), Some(true)) => return self.not(c),
                (Some(true), _) => return self.or(c, b),
                (Some(false), _) => {
                    let nc = self.not(c);
                    return self.and(nc, b);
                }
                (_, Some(false)) => return self.and(c, a),
                (_, Some(true)) => {
                    let nc = self.not(c);
                    return self.or(nc, a);
                }
                _ => {}
            }
        }
        self.intern(Term::Ite(c, a, b))
    }

    /// Truth of a value: nonzero.
    pub fn truth(&mut self, v: TermId) -> TermId {
        match *self.get(v) {
            Term::Bv(x) => self.bool(x != 0),
            Term::Ite(c, a, b) => match (self.as_bv(a), self.as_bv(b)) {
                (Some(x), Some(y)) if x != 0 && y == 0 => c,
                (Some(x), Some(y)) if x == 0 && y != 0 => self.not(c),
                _ => {
                    let zero = self.bv(0);
                    let eq = self.cmp(CmpOp::Eq, v, zero);
                    self.not(eq)
                }
            },
            _ => {
                let zero = self.bv(0);
                let eq = self.cmp(CmpOp::Eq, v, zero);
                self.not(eq)
            }
        }
    }

    /// 1 if `c` holds, else 0.
    pub fn from_bool(&mut self, c: TermId) -> TermId {
        let one = self.bv(1);
        let zero = self.bv(0);
        self.ite(c, one, zero)
    }

    /// Nodes reachable from `roots`, ascending; children precede parents.
    pub fn cone(&self, roots: &[TermId]) -> Vec<TermId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<TermId> = roots.to_vec();
        while let Some(t) = stack.pop() {
            if std::mem::replace(&mut seen[t.0 as usize], true) {
                continue;
            }
            stack.extend(self.get(t).children());
        }
        (0..self.nodes.len() as u32).filter(|&i| seen[i as usize]).map(TermId).collect()
    }

    /// Evaluates `t` with symbol values from `env` (missing symbols are 0). Booleans evaluate to 0/1.
    pub fn eval(&self, t: TermId, env: &dyn Fn(u32) -> u64) -> u64 {
        let order = self.cone(&[t]);
        let mut vals: HashMap<TermId, u64> = HashMap::with_capacity(order.len());
        for id in order {
            let v = self.eval_node(self.get(id), |c| vals[&c], env);
            vals.insert(id, v);
        }
        vals[&t]
    }

    pub(crate) fn eval_node(&self, node: &Term, val: impl Fn(TermId) -> u64, env: &dyn Fn(u32) -> u64) -> u64 {
        let w = self.width;
        match *node {
            Term::Bv(v) => v,
            Term::Bool(b) => u64::from(b),
            Term::Sym(s) => env(s) & w.mask(),
            Term::Bin(op, a, b) => apply_bv(op, val(a), val(b), w),
            Term::BvNot(a) => !val(a) & w.mask(),
            Term::Neg(a) => val(a).wrapping_neg() & w.mask(),
            Term::Ite(c, a, b) => {
                if val(c) != 0 {
                    val(a)
                } else {
                    val(b)
                }
            }
            Term::Cmp(op, a, b) => u64::from(apply_cmp(op, val(a), val(b))),
            Term::Not(a) => u64::from(val(a) == 0),
            Term::And(a, b) => u64::from(val(a) != 0 && val(b) != 0),
            Term::Or(a, b) => u64::from(val(a) != 0 || val(b) != 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_and_sharing() {
        let mut s = TermStore::new(Width::W8);
        let k = s.sym("k");
        let p = s.sym("p");
        let a = s.bin(BvOp::Xor, k, p);
        let b = s.bin(BvOp::Xor, p, k);
        assert_eq!(a, b);
        let z = s.bin(BvOp::Xor, k, k);
        assert_eq!(s.as_bv(z), Some(0));
        let one = s.bv(1);
        let c = s.bin(BvOp::Add, one, one);
        assert_eq!(s.as_bv(c), Some(2));
        let t = s.cmp(CmpOp::Ult, k, p);
        let v = s.from_bool(t);
        assert_eq!(s.truth(v), t);
    }

    #[test]
    fn division_by_zero_follows_smtlib() {
        assert_eq!(apply_bv(BvOp::Div, 7, 0, Width::W8), 0xff);
        assert_eq!(apply_bv(BvOp::Rem, 7, 0, Width::W8), 7);
        assert_eq!(apply_bv(BvOp::Shl, 1, 9, Width::W8), 2);
    }

    #[test]
    fn evaluation() {
        let mut s = TermStore::new(Width::W4);
        let k = s.sym("k");
        let three = s.bv(3);
        let sum = s.bin(BvOp::Add, k, three);
        let eq = s.cmp(CmpOp::Eq, sum, three);
        assert_eq!(s.eval(eq, &|_| 0), 1);
        assert_eq!(s.eval(sum, &|_| 15), 2);
    }
}
