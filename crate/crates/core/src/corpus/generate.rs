use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::Program;
use crate::frontend::load_program;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Features {
    pub arrays: bool,
    pub loops: bool,
    pub calls: bool,
}

impl Features {
    pub const ALL: Features = Features { arrays: true, loops: true, calls: true };
    pub const NONE: Features = Features { arrays: false, loops: false, calls: false };

    /// Feature subset picked by the low three bits of `mask`.
    pub fn from_mask(mask: u32) -> Features {
        Features { arrays: mask & 1 != 0, loops: mask & 2 != 0, calls: mask & 4 != 0 }
    }
}

const LOCALS: [&str; 4] = ["x", "y", "z", "w"];
const OPS: [&str; 11] = ["+", "-", "*", "&", "|", "^", "<<", ">>", "==", "<", "!="];

struct Gen {
    rng: ChaCha8Rng,
    f: Features,
    out: String,
    budget: usize,
    counters: usize,
    depth: usize,
    loads: usize,
}

impl Gen {
    fn atom(&mut self) -> String {
        let pool = ["k", "p", "x", "y", "z", "w"];
        if self.rng.gen_bool(0.2) {
            self.rng.gen_range(0..4u32).to_string()
        } else {
            pool.choose(&mut self.rng).expect("nonempty").to_string()
        }
    }

    fn expr(&mut self) -> String {
        let a = self.atom();
        if self.rng.gen_bool(0.3) {
            return a;
        }
        let b = self.atom();
        let op = OPS.choose(&mut self.rng).expect("nonempty");
        format!("{a} {op} {b}")
    }

    fn line(&mut self, text: &str) {
        let _ = writeln!(self.out, "{}{text}", "  ".repeat(self.depth + 1));
    }

    fn load(&mut self) {
        let dst = LOCALS.choose(&mut self.rng).expect("nonempty");
        let arr = if self.rng.gen_bool(0.5) { "sa" } else { "pa" };
        let idx = self.atom();
        self.line(&format!("{dst} := {arr}[({idx}) & 1];"));
        self.loads += 1;
    }

    fn stmt(&mut self) {
        self.budget = self.budget.saturating_sub(1);
        let choice = self.rng.gen_range(0..10);
        match choice {
            0..=3 => {
                let dst = LOCALS.choose(&mut self.rng).expect("nonempty");
                let e = self.expr();
                self.line(&format!("{dst} := {e};"));
            }
            4 | 5 if self.depth < 2 => {
                let c = self.expr();
                self.line(&format!("c{} := {c};", self.depth));
                self.line(&format!("if c{} then", self.depth));
                self.block(2);
                if self.rng.gen_bool(0.5) {
                    self.line("else");
                    self.block(2);
                }
                self.line("fi");
            }
            6 if self.f.loops && self.depth < 2 && self.counters < 2 => {
                let n = self.counters;
                self.counters += 1;
                let bound = if self.rng.gen_bool(0.3) {
                    format!("({}) & 3", self.atom())
                } else {
                    self.rng.gen_range(1..=3).to_string()
                };
                self.line(&format!("i{n} := 0;"));
                self.line(&format!("n{n} := {bound};"));
                self.line(&format!("t{n} := i{n} < n{n};"));
                self.line(&format!("while t{n} do"));
                self.block(2);
                self.line(&format!("  i{n} := i{n} + 1;"));
                self.line(&format!("  t{n} := i{n} < n{n};"));
                self.line("od");
            }
            7 if self.f.arrays => self.load(),
            8 if self.f.arrays => {
                let idx = self.atom();
                let v = self.expr();
                self.line(&format!("la[({idx}) & 1] := {v};"));
            }
            9 if self.f.calls => {
                let dst = LOCALS.choose(&mut self.rng).expect("nonempty");
                let a = self.atom();
                self.line(&format!("{dst} := h({a});"));
            }
            _ => {
                let c = self.atom();
                self.line(&format!("if {c} then skip; fi"));
            }
        }
    }

    fn block(&mut self, max: usize) {
        self.depth += 1;
        let n = self.rng.gen_range(1..=max);
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.stmt();
        }
        if self.out.ends_with("then\n") || self.out.ends_with("else\n") || self.out.ends_with("do\n") {
            self.line("skip;");
        }
        self.depth -= 1;
    }
}

/// Source text of a random well-formed program with bounded loops and at least one secret input.
pub fn generate_source(seed: u64, budget: usize, f: Features) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        f,
        out: String::new(),
        budget: budget.max(1),
        counters: 0,
        depth: 0,
        loads: 0,
    };
    while g.budget > 0 {
        g.stmt();
    }
    if f.arrays && g.loads == 0 {
        g.load();
    }
    let text = std::mem::take(&mut g.out);
    let mut out = String::new();
    if f.calls {
        out.push_str("def h(v) {\n  var r;\n  r := v ^ 1;\n  if r then r := r + 1; fi\n  return r;\n}\n\n");
    }
    let params = if f.arrays { "sec k, pub p, sec sa[2], pub pa[2]" } else { "sec k, pub p" };
    let _ = writeln!(out, "def main({params}) {{");
    out.push_str("  var x, y, z, w, c0, c1, i0, n0, t0, i1, n1, t1;\n");
    if f.arrays {
        out.push_str("  array la[2];\n");
    }
    out.push_str(&text);
    out.push_str("  return x;\n}\n");
    out
}

pub fn generate_program(seed: u64, budget: usize, f: Features) -> Program {
    let text = generate_source(seed, budget, f);
    load_program(&text).unwrap_or_else(|e| panic!("generator produced an invalid program ({e}):\n{text}"))
}
