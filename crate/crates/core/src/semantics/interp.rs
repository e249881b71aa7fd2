//! Small-step semantics with leakage observations, over a slot-resolved form of the program.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::trace::{Event, EventKind, Trace};
use super::value::{eval_binop, eval_unop, Width};
use super::{InputValue, Inputs, SemanticsError};
use crate::ast::*;

pub const DEFAULT_FUEL: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StuckCause {
    AssertFailed,
    /// An `assume` whose condition is false: no transition exists.
    Blocked,
    DivisionByZero,
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed { returns: Vec<u64> },
    Stuck { label: Label, cause: StuckCause },
    FuelExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub outcome: Outcome,
    pub trace: Trace,
}

impl RunResult {
    pub fn is_complete(&self) -> bool {
        matches!(self.outcome, Outcome::Completed { .. })
    }
}

/// Where the value read by a statement was last written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DefSite {
    /// Procedure entry: parameter binding or local initialization.
    Entry,
    Stmt(Label),
}

/// Read-only view of the active frame, handed to observers.
pub struct FrameView<'a> {
    proc: &'a CProc,
    scalars: &'a [u64],
    arrays: &'a [usize],
    storage: &'a [Vec<u64>],
}

impl FrameView<'_> {
    pub fn procedure(&self) -> &str {
        &self.proc.name
    }

    pub fn scalar(&self, name: &str) -> Option<u64> {
        match self.proc.slots.get(name)? {
            Slot::Scalar(i) => Some(self.scalars[*i]),
            Slot::Array(_) => None,
        }
    }

    pub fn array(&self, name: &str) -> Option<&[u64]> {
        match self.proc.slots.get(name)? {
            Slot::Array(i) => Some(&self.storage[self.arrays[*i]]),
            Slot::Scalar(_) => None,
        }
    }

    pub fn scalar_names(&self) -> impl Iterator<Item = &str> {
        self.proc.scalar_names.iter().map(String::as_str)
    }

    pub fn array_names(&self) -> impl Iterator<Item = &str> {
        self.proc.array_names.iter().map(String::as_str)
    }
}

pub trait Observer {
    /// Called before each statement executes, and before each loop-condition evaluation.
    fn step(&mut self, _label: Label, _frame: &FrameView<'_>) {}

    /// Called for every variable read when `wants_reads` is true.
    fn read(&mut self, _label: Label, _var: &str, _site: DefSite) {}

    fn wants_reads(&self) -> bool {
        false
    }
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Records the sequence of executed labels.
#[derive(Default)]
pub struct LabelLog(pub Vec<Label>);

impl Observer for LabelLog {
    fn step(&mut self, label: Label, _frame: &FrameView<'_>) {
        self.0.push(label);
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub fuel: u64,
    /// Asserts at these labels are executed as `skip`.
    pub disabled_asserts: BTreeSet<Label>,
}

impl RunOptions {
    pub fn with_fuel(fuel: u64) -> RunOptions {
        RunOptions { fuel, ..RunOptions::default() }
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Scalar(usize),
    Array(usize),
}

#[derive(Debug, Clone)]
enum CExpr {
    Lit(u64),
    Var(usize),
    Un(UnOp, Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

#[derive(Debug, Clone)]
enum CStmt {
    Skip,
    Assign(usize, CExpr),
    Load { dst: usize, array: usize, index: CExpr },
    Store { array: usize, index: CExpr, value: CExpr },
    Assert(CExpr),
    Assume(CExpr),
    If(CExpr, Vec<CNode>, Vec<CNode>),
    While(CExpr, Vec<CNode>),
    Call { lhs: Vec<usize>, callee: usize, args: Vec<Slot> },
}

#[derive(Debug, Clone)]
struct CNode {
    label: Label,
    stmt: CStmt,
}

#[derive(Debug, Clone)]
struct CProc {
    name: String,
    slots: HashMap<String, Slot>,
    scalar_names: Vec<String>,
    array_names: Vec<String>,
    /// Lengths of local (non-parameter) arrays, in slot order after the array parameters.
    local_arrays: Vec<usize>,
    returns: Vec<usize>,
    body: Vec<CNode>,
}

/// A program resolved to slot indices, ready to run many times.
#[derive(Debug, Clone)]
pub struct Machine {
    width: Width,
    procs: Vec<CProc>,
    entry: usize,
    entry_params: Vec<(String, VarKind)>,
}

impl Machine {
    pub fn new(p: &Program, width: Width) -> Result<Machine, SemanticsError> {
        let index: HashMap<&str, usize> = p.procedures.iter().enumerate().map(|(i, q)| (q.name.as_str(), i)).collect();
        let mut procs = Vec::with_capacity(p.procedures.len());
        for proc in &p.procedures {
            procs.push(compile_proc(proc, &index, width)?);
        }
        let entry = *index.get(p.entry.as_str()).ok_or(SemanticsError::NoEntry)?;
        let entry_params = p.procedures[entry].params.iter().map(|q| (q.name.clone(), q.kind)).collect();
        Ok(Machine { width, procs, entry, entry_params })
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn run(&self, inputs: &Inputs, opts: &RunOptions) -> Result<RunResult, SemanticsError> {
        self.run_observed(inputs, opts, &mut NoObserver)
    }

    pub fn run_observed<O: Observer>(
        &self,
        inputs: &Inputs,
        opts: &RunOptions,
        obs: &mut O,
    ) -> Result<RunResult, SemanticsError> {
        let mut values = Vec::with_capacity(self.entry_params.len());
        for (name, kind) in &self.entry_params {
            let v = inputs.get(name).ok_or_else(|| SemanticsError::MissingInput(name.clone()))?;
            match (kind, v) {
                (VarKind::Scalar, InputValue::Scalar(x)) => values.push(Arg::Scalar(self.width.truncate(*x))),
                (VarKind::Array(n), InputValue::Array(xs)) if xs.len() == *n as usize => {
                    values.push(Arg::Array(xs.iter().map(|x| self.width.truncate(*x)).collect()))
                }
                _ => return Err(SemanticsError::InputShape(name.clone())),
            }
        }
        if let Some(extra) = inputs.keys().find(|k| !self.entry_params.iter().any(|(n, _)| n == *k)) {
            return Err(SemanticsError::UnknownInput(extra.clone()));
        }
        let mut exec = Exec {
            m: self,
            fuel: opts.fuel.max(1),
            opts,
            trace: Vec::new(),
            storage: Vec::new(),
            writers: Vec::new(),
            depth: 0,
            obs,
        };
        let mut arrays = Vec::new();
        let mut scalars = Vec::new();
        for v in values {
            match v {
                Arg::Scalar(x) => scalars.push(x),
                Arg::Array(xs) => {
                    arrays.push(exec.alloc(xs));
                }
            }
        }
        let outcome = exec.call(self.entry, &scalars, &arrays);
        let outcome = match outcome {
            Ok(returns) => Outcome::Completed { returns },
            Err(Halt::Stuck(label, cause)) => Outcome::Stuck { label, cause },
            Err(Halt::Fuel) => Outcome::FuelExhausted,
        };
        Ok(RunResult { outcome, trace: Trace(exec.trace) })
    }
}

enum Arg {
    Scalar(u64),
    Array(Vec<u64>),
}

fn compile_proc(proc: &Procedure, index: &HashMap<&str, usize>, width: Width) -> Result<CProc, SemanticsError> {
    let mut slots = HashMap::new();
    let mut scalar_names = Vec::new();
    let mut array_names = Vec::new();
    let mut local_arrays = Vec::new();
    let mut declare = |name: &str, kind: VarKind, is_param: bool| -> Result<Slot, SemanticsError> {
        let slot = match kind {
            VarKind::Scalar => {
                scalar_names.push(name.to_string());
                Slot::Scalar(scalar_names.len() - 1)
            }
            VarKind::Array(n) => {
                if u64::from(n) >= width.cardinality() {
                    return Err(SemanticsError::ArrayTooLong { array: name.to_string(), len: n, width });
                }
                array_names.push(name.to_string());
                if !is_param {
                    local_arrays.push(n as usize);
                }
                Slot::Array(array_names.len() - 1)
            }
        };
        slots.insert(name.to_string(), slot);
        Ok(slot)
    };
    // Scalar parameters take the first slots so a frame can be seeded from the argument list.
    for p in proc.params.iter().filter(|p| !p.kind.is_array()) {
        declare(&p.name, p.kind, true)?;
    }
    for p in proc.params.iter().filter(|p| p.kind.is_array()) {
        declare(&p.name, p.kind, true)?;
    }
    for d in &proc.locals {
        declare(&d.name, d.kind, false)?;
    }
    let cx = Compiler { slots: &slots, index, width };
    let body = cx.block(&proc.body)?;
    let returns = proc.returns.iter().map(|r| cx.scalar(r)).collect::<Result<_, _>>()?;
    Ok(CProc { name: proc.name.clone(), slots, scalar_names, array_names, local_arrays, returns, body })
}

struct Compiler<'a> {
    slots: &'a HashMap<String, Slot>,
    index: &'a HashMap<&'a str, usize>,
    width: Width,
}

impl Compiler<'_> {
    fn unknown(&self, name: &str) -> SemanticsError {
        SemanticsError::Unresolved(name.to_string())
    }

    fn scalar(&self, name: &str) -> Result<usize, SemanticsError> {
        match self.slots.get(name) {
            Some(Slot::Scalar(i)) => Ok(*i),
            _ => Err(self.unknown(name)),
        }
    }

    fn array(&self, name: &str) -> Result<usize, SemanticsError> {
        match self.slots.get(name) {
            Some(Slot::Array(i)) => Ok(*i),
            _ => Err(self.unknown(name)),
        }
    }

    fn expr(&self, e: &Expr) -> Result<CExpr, SemanticsError> {
        Ok(match e {
            Expr::Lit(n) => CExpr::Lit(self.width.truncate(*n)),
            Expr::Var(v) => CExpr::Var(self.scalar(v)?),
            Expr::Index(..) => return Err(SemanticsError::NotNormalized),
            Expr::Unary(op, a) => CExpr::Un(*op, Box::new(self.expr(a)?)),
            Expr::Binary(op, a, b) => CExpr::Bin(*op, Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
        })
    }

    fn block(&self, b: &[Stmt]) -> Result<Vec<CNode>, SemanticsError> {
        b.iter().map(|s| Ok(CNode { label: s.label, stmt: self.stmt(s)? })).collect()
    }

    fn stmt(&self, s: &Stmt) -> Result<CStmt, SemanticsError> {
        Ok(match &s.kind {
            StmtKind::Skip => CStmt::Skip,
            StmtKind::Assign { lhs, rhs } => CStmt::Assign(self.scalar(lhs)?, self.expr(rhs)?),
            StmtKind::Load { lhs, array, index } => {
                CStmt::Load { dst: self.scalar(lhs)?, array: self.array(array)?, index: self.expr(index)? }
            }
            StmtKind::Store { array, index, value } => {
                CStmt::Store { array: self.array(array)?, index: self.expr(index)?, value: self.expr(value)? }
            }
            StmtKind::Assert(e) => CStmt::Assert(self.expr(e)?),
            StmtKind::Assume(e) => CStmt::Assume(self.expr(e)?),
            StmtKind::If { cond, then_branch, else_branch } => {
                CStmt::If(self.expr(cond)?, self.block(then_branch)?, self.block(else_branch)?)
            }
            StmtKind::While { cond, body, .. } => CStmt::While(self.expr(cond)?, self.block(body)?),
            StmtKind::Call { lhs, callee, args } => {
                let callee = *self.index.get(callee.as_str()).ok_or_else(|| self.unknown(callee))?;
                let args = args
                    .iter()
                    .map(|a| match a {
                        Expr::Var(v) => self.slots.get(v).copied().ok_or_else(|| self.unknown(v)),
                        _ => Err(SemanticsError::NotNormalized),
                    })
                    .collect::<Result<_, _>>()?;
                CStmt::Call { lhs: lhs.iter().map(|x| self.scalar(x)).collect::<Result<_, _>>()?, callee, args }
            }
        })
    }
}

enum Halt {
    Stuck(Label, StuckCause),
    Fuel,
}

struct Frame {
    proc: usize,
    scalars: Vec<u64>,
    arrays: Vec<usize>,
    scalar_writers: Vec<DefSite>,
}

struct Exec<'a, O: Observer> {
    m: &'a Machine,
    fuel: u64,
    opts: &'a RunOptions,
    trace: Vec<Event>,
    storage: Vec<Vec<u64>>,
    /// Per array element: (frame depth, writer) of the last store.
    writers: Vec<Vec<(usize, DefSite)>>,
    depth: usize,
    obs: &'a mut O,
}

impl<O: Observer> Exec<'_, O> {
    fn alloc(&mut self, xs: Vec<u64>) -> usize {
        if self.obs.wants_reads() {
            self.writers.push(vec![(0, DefSite::Entry); xs.len()]);
        }
        self.storage.push(xs);
        self.storage.len() - 1
    }

    fn tick(&mut self) -> Result<(), Halt> {
        if self.fuel == 0 {
            return Err(Halt::Fuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn observe(&mut self, label: Label, frame: &Frame) {
        let proc = &self.m.procs[frame.proc];
        let view = FrameView { proc, scalars: &frame.scalars, arrays: &frame.arrays, storage: &self.storage };
        self.obs.step(label, &view);
    }

    fn call(&mut self, proc_ix: usize, scalar_args: &[u64], array_args: &[usize]) -> Result<Vec<u64>, Halt> {
        let proc = &self.m.procs[proc_ix];
        let mut scalars = vec![0; proc.scalar_names.len()];
        scalars[..scalar_args.len()].copy_from_slice(scalar_args);
        let mut arrays = Vec::with_capacity(proc.array_names.len());
        arrays.extend_from_slice(array_args);
        let mark = self.storage.len();
        for &len in &proc.local_arrays {
            let id = self.alloc(vec![0; len]);
            arrays.push(id);
        }
        let scalar_writers = if self.obs.wants_reads() { vec![DefSite::Entry; scalars.len()] } else { Vec::new() };
        let mut frame = Frame { proc: proc_ix, scalars, arrays, scalar_writers };
        self.depth += 1;
        let result = self.block(&proc.body, &mut frame);
        self.depth -= 1;
        self.storage.truncate(mark);
        if self.obs.wants_reads() {
            self.writers.truncate(mark);
        }
        result?;
        Ok(proc.returns.iter().map(|&r| frame.scalars[r]).collect())
    }

    fn read_scalar(&mut self, label: Label, frame: &Frame, slot: usize) -> u64 {
        if self.obs.wants_reads() {
            let name = &self.m.procs[frame.proc].scalar_names[slot];
            self.obs.read(label, name, frame.scalar_writers[slot]);
        }
        frame.scalars[slot]
    }

    fn write_scalar(&mut self, label: Label, frame: &mut Frame, slot: usize, v: u64) {
        frame.scalars[slot] = v;
        if self.obs.wants_reads() {
            frame.scalar_writers[slot] = DefSite::Stmt(label);
        }
    }

    fn eval(&mut self, label: Label, e: &CExpr, frame: &Frame) -> Result<u64, Halt> {
        let w = self.m.width;
        Ok(match e {
            CExpr::Lit(n) => *n,
            CExpr::Var(i) => self.read_scalar(label, frame, *i),
            CExpr::Un(op, a) => {
                let a = self.eval(label, a, frame)?;
                eval_unop(*op, a, w)
            }
            CExpr::Bin(op, a, b) => {
                let a = self.eval(label, a, frame)?;
                let b = self.eval(label, b, frame)?;
                eval_binop(*op, a, b, w).ok_or(Halt::Stuck(label, StuckCause::DivisionByZero))?
            }
        })
    }

    fn block(&mut self, nodes: &[CNode], frame: &mut Frame) -> Result<(), Halt> {
        for n in nodes {
            self.stmt(n, frame)?;
        }
        Ok(())
    }

    fn element(&self, frame: &Frame, array: usize, idx: u64, label: Label) -> Result<(usize, usize), Halt> {
        let id = frame.arrays[array];
        let i = usize::try_from(idx).ok().filter(|&i| i < self.storage[id].len());
        i.map(|i| (id, i)).ok_or(Halt::Stuck(label, StuckCause::OutOfBounds))
    }

    fn stmt(&mut self, n: &CNode, frame: &mut Frame) -> Result<(), Halt> {
        let label = n.label;
        self.tick()?;
        self.observe(label, frame);
        match &n.stmt {
            CStmt::Skip => {}
            CStmt::Assign(dst, e) => {
                let v = self.eval(label, e, frame)?;
                self.write_scalar(label, frame, *dst, v);
            }
            CStmt::Load { dst, array, index } => {
                let idx = self.eval(label, index, frame)?;
                let (id, i) = self.element(frame, *array, idx, label)?;
                if self.obs.wants_reads() {
                    let (depth, site) = self.writers[id][i];
                    let site = if depth == self.depth { site } else { DefSite::Entry };
                    let name = &self.m.procs[frame.proc].array_names[*array];
                    self.obs.read(label, name, site);
                }
                self.trace.push(Event { label, kind: EventKind::Load, value: idx });
                let v = self.storage[id][i];
                self.write_scalar(label, frame, *dst, v);
            }
            CStmt::Store { array, index, value } => {
                let v = self.eval(label, value, frame)?;
                let idx = self.eval(label, index, frame)?;
                let (id, i) = self.element(frame, *array, idx, label)?;
                self.trace.push(Event { label, kind: EventKind::Store, value: idx });
                self.storage[id][i] = v;
                if self.obs.wants_reads() {
                    self.writers[id][i] = (self.depth, DefSite::Stmt(label));
                }
            }
            CStmt::Assert(e) => {
                if !self.opts.disabled_asserts.contains(&label) && self.eval(label, e, frame)? == 0 {
                    return Err(Halt::Stuck(label, StuckCause::AssertFailed));
                }
            }
            CStmt::Assume(e) => {
                if self.eval(label, e, frame)? == 0 {
                    return Err(Halt::Stuck(label, StuckCause::Blocked));
                }
            }
            CStmt::If(c, t, e) => {
                let truth = self.eval(label, c, frame)? != 0;
                self.trace.push(Event { label, kind: EventKind::Branch, value: u64::from(truth) });
                self.block(if truth { t } else { e }, frame)?;
            }
            CStmt::While(c, body) => loop {
                let truth = self.eval(label, c, frame)? != 0;
                self.trace.push(Event { label, kind: EventKind::Loop, value: u64::from(truth) });
                if !truth {
                    break;
                }
                self.block(body, frame)?;
                self.tick()?;
                self.observe(label, frame);
            },
            CStmt::Call { lhs, callee, args } => {
                let mut scalars = Vec::new();
                let mut arrays = Vec::new();
                for a in args {
                    match *a {
                        Slot::Scalar(i) => scalars.push(self.read_scalar(label, frame, i)),
                        Slot::Array(i) => {
                            if self.obs.wants_reads() {
                                let name = &self.m.procs[frame.proc].array_names[i];
                                let id = frame.arrays[i];
                                let sites: BTreeSet<DefSite> = self.writers[id]
                                    .iter()
                                    .map(|&(d, s)| if d == self.depth { s } else { DefSite::Entry })
                                    .collect();
                                for s in sites {
                                    self.obs.read(label, name, s);
                                }
                            }
                            arrays.push(frame.arrays[i]);
                        }
                    }
                }
                let returns = self.call(*callee, &scalars, &arrays)?;
                if self.obs.wants_reads() {
                    // Writes made by the callee are attributed to the call site.
                    for id in &arrays {
                        for w in &mut self.writers[*id] {
                            if w.0 > self.depth {
                                *w = (self.depth, DefSite::Stmt(label));
                            }
                        }
                    }
                }
                for (dst, v) in lhs.iter().zip(returns) {
                    self.write_scalar(label, frame, *dst, v);
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper: compile and run once.
pub fn run(p: &Program, inputs: &Inputs, width: Width, fuel: u64) -> Result<RunResult, SemanticsError> {
    Machine::new(p, width)?.run(inputs, &RunOptions::with_fuel(fuel))
}

/// Values of the entry procedure's scalars and arrays, as a sorted map, for state comparisons.
pub fn snapshot(view: &FrameView<'_>, names: &BTreeSet<String>) -> BTreeMap<String, Vec<u64>> {
    let mut out = BTreeMap::new();
    for n in view.scalar_names().filter(|n| names.contains(*n)) {
        out.insert(n.to_string(), vec![view.scalar(n).unwrap_or(0)]);
    }
    for n in view.array_names().filter(|n| names.contains(*n)) {
        out.insert(n.to_string(), view.array(n).map(<[u64]>::to_vec).unwrap_or_default());
    }
    out
}
