//! Exhaustive search for a falsifying assignment, with three-valued pruning.

use std::time::Instant;

use super::term::{apply_bv, apply_cmp, Term, TermId, TermStore};
use super::{Model, UnknownReason, Verdict};

struct Search<'a> {
    s: &'a TermStore,
    root: TermId,
    /// Cone in ascending order; position → term.
    nodes: Vec<TermId>,
    /// Term id → position in `nodes`.
    pos: Vec<u32>,
    /// Number of leading symbols that must be fixed before the node's value is known.
    level: Vec<u32>,
    /// Positions grouped by level, ascending.
    by_level: Vec<Vec<u32>>,
    symbols: Vec<u32>,
    values: Vec<u64>,
    assignment: Vec<u64>,
    partial: Vec<Option<u64>>,
    visits: u64,
    cap: u64,
    deadline: Option<Instant>,
}

const NONE: u32 = u32::MAX;

impl<'a> Search<'a> {
    fn new(s: &'a TermStore, root: TermId, cap: u64, deadline: Option<Instant>) -> Self {
        let nodes = s.cone(&[root]);
        let mut pos = vec![NONE; s.len()];
        for (i, t) in nodes.iter().enumerate() {
            pos[t.0 as usize] = i as u32;
        }
        let mut symbols = Vec::new();
        let mut level = vec![0u32; nodes.len()];
        for (i, &t) in nodes.iter().enumerate() {
            let term = s.get(t);
            level[i] = match *term {
                Term::Sym(sym) => {
                    symbols.push(sym);
                    symbols.len() as u32
                }
                _ => term.children().iter().map(|c| level[pos[c.0 as usize] as usize]).max().unwrap_or(0),
            };
        }
        let mut by_level = vec![Vec::new(); symbols.len() + 1];
        for (i, &l) in level.iter().enumerate() {
            by_level[l as usize].push(i as u32);
        }
        let n = nodes.len();
        Search {
            s,
            root,
            nodes,
            pos,
            level,
            by_level,
            assignment: vec![0; symbols.len()],
            symbols,
            values: vec![0; n],
            partial: vec![None; n],
            visits: 0,
            cap,
            deadline,
        }
    }

    fn compute_level(&mut self, l: usize) {
        for &i in &self.by_level[l] {
            let i = i as usize;
            let node = self.s.get(self.nodes[i]);
            let v = match *node {
                Term::Sym(_) => self.assignment[l - 1] & self.s.width().mask(),
                _ => {
                    let (values, pos) = (&self.values, &self.pos);
                    self.s.eval_node(node, |c| values[pos[c.0 as usize] as usize], &|_| 0)
                }
            };
            self.values[i] = v;
        }
    }

    /// Value of the root with the first `depth` symbols fixed, if already determined.
    fn partial_root(&mut self, depth: u32) -> Option<u64> {
        let w = self.s.width();
        for i in 0..self.nodes.len() {
            if self.level[i] <= depth {
                self.partial[i] = Some(self.values[i]);
                continue;
            }
            let get = |t: TermId, partial: &[Option<u64>]| partial[self.pos[t.0 as usize] as usize];
            let p = &self.partial;
            let v = match *self.s.get(self.nodes[i]) {
                Term::Bv(_) | Term::Bool(_) | Term::Sym(_) => None,
                Term::Bin(op, a, b) => match (get(a, p), get(b, p)) {
                    (Some(x), Some(y)) => Some(apply_bv(op, x, y, w)),
                    (Some(0), None) | (None, Some(0))
                        if matches!(op, super::term::BvOp::Mul | super::term::BvOp::And) =>
                    {
                        Some(0)
                    }
                    _ => None,
                },
                Term::BvNot(a) => get(a, p).map(|x| !x & w.mask()),
                Term::Neg(a) => get(a, p).map(|x| x.wrapping_neg() & w.mask()),
                Term::Ite(c, a, b) => match get(c, p) {
                    Some(0) => get(b, p),
                    Some(_) => get(a, p),
                    None => match (get(a, p), get(b, p)) {
                        (Some(x), Some(y)) if x == y => Some(x),
                        _ => None,
                    },
                },
                Term::Cmp(op, a, b) => match (get(a, p), get(b, p)) {
                    (Some(x), Some(y)) => Some(u64::from(apply_cmp(op, x, y))),
                    _ => None,
                },
                Term::Not(a) => get(a, p).map(|x| u64::from(x == 0)),
                Term::And(a, b) => match (get(a, p), get(b, p)) {
                    (Some(0), _) | (_, Some(0)) => Some(0),
                    (Some(_), Some(_)) => Some(1),
                    _ => None,
                },
                Term::Or(a, b) => match (get(a, p), get(b, p)) {
                    (Some(x), _) | (_, Some(x)) if x != 0 => Some(1),
                    (Some(_), Some(_)) => Some(0),
                    _ => None,
                },
            };
            self.partial[i] = v;
        }
        self.partial[self.pos[self.root.0 as usize] as usize]
    }

    /// Depth-first search for an assignment making the root false.
    fn dfs(&mut self, depth: u32) -> Result<bool, UnknownReason> {
        self.visits += 1;
        if self.visits > self.cap {
            return Err(UnknownReason::SearchCapHit);
        }
        if self.visits.is_multiple_of(4096) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(UnknownReason::Timeout);
        }
        match self.partial_root(depth) {
            Some(0) => return Ok(true),
            Some(_) => return Ok(false),
            None => {}
        }
        let k = depth as usize;
        for v in 0..=self.s.width().mask() {
            self.assignment[k] = v;
            self.compute_level(k + 1);
            if self.dfs(depth + 1)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Decides validity of `root` by enumerating the symbols of its cone.
pub fn check_enumerate(s: &TermStore, root: TermId, cap: u64, deadline: Option<Instant>) -> Verdict {
    let mut search = Search::new(s, root, cap, deadline);
    search.compute_level(0);
    match search.dfs(0) {
        Ok(false) => Verdict::Valid,
        Ok(true) => {
            let model = search
                .symbols
                .iter()
                .zip(&search.assignment)
                .map(|(&sym, &v)| (s.symbol_name(sym).to_string(), v))
                .collect();
            Verdict::Invalid(Model(model))
        }
        Err(reason) => Verdict::Unknown(reason),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::Width;
    use crate::verifier::term::{BvOp, CmpOp};

    #[test]
    fn finds_the_single_counterexample() {
        let mut s = TermStore::new(Width::W4);
        let k = s.sym("k");
        let p = s.sym("p");
        let x = s.bin(BvOp::Xor, k, p);
        let nine = s.bv(9);
        let eq = s.cmp(CmpOp::Eq, x, nine);
        let claim = s.not(eq);
        let Verdict::Invalid(m) = check_enumerate(&s, claim, 1 << 20, None) else { panic!() };
        assert_eq!(m.get("k") ^ m.get("p"), 9);
    }

    #[test]
    fn xor_cancellation_is_valid() {
        let mut s = TermStore::new(Width::W4);
        let k = s.sym("k");
        let p = s.sym("p");
        let a = s.bin(BvOp::Xor, k, p);
        let b = s.bin(BvOp::Xor, a, k);
        let eq = s.cmp(CmpOp::Eq, b, p);
        assert_eq!(check_enumerate(&s, eq, 1 << 20, None), Verdict::Valid);
    }

    #[test]
    fn pruning_skips_irrelevant_symbols() {
        let mut s = TermStore::new(Width::W8);
        let syms: Vec<_> = (0..6).map(|i| s.sym(&format!("x{i}"))).collect();
        let zero = s.bv(0);
        // (x0 == 0 || x1 * ... * x5 == 3) || x0 != 0 is decided once x0 is fixed
        let mut prod = syms[1];
        for &x in &syms[2..] {
            prod = s.bin(BvOp::Mul, prod, x);
        }
        let three = s.bv(3);
        let first = s.cmp(CmpOp::Eq, syms[0], zero);
        let big = s.cmp(CmpOp::Eq, prod, three);
        let inner = s.or(first, big);
        let nz = s.not(first);
        let claim = s.or(inner, nz);
        assert_eq!(check_enumerate(&s, claim, 1000, None), Verdict::Valid);
    }

    #[test]
    fn cap_gives_unknown() {
        let mut s = TermStore::new(Width::W8);
        let a = s.sym("a");
        let b = s.sym("b");
        let prod = s.bin(BvOp::Mul, a, b);
        let one = s.bv(1);
        let claim = s.cmp(CmpOp::Ule, one, prod);
        let odd = s.bin(BvOp::Or, a, one);
        let c2 = s.cmp(CmpOp::Ule, one, odd);
        let both = s.or(claim, c2);
        assert_eq!(check_enumerate(&s, both, 3, None), Verdict::Unknown(UnknownReason::SearchCapHit));
    }
}
