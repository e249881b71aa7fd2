//! Verification conditions for product programs and the backends that decide them.

mod enumerate;
mod smt;
mod symex;
mod term;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use enumerate::check_enumerate;
pub use smt::{check_smtlib, emit_smtlib, parse_model};
pub use symex::{cell_symbol, gen_vcs, GenOptions, Mode, Vc, VcKind, VcSet};
pub use term::{apply_bv, apply_cmp, BvOp, CmpOp, Sort, Term, TermId, TermStore};

use crate::ast::{Label, Program, Security, VarKind};
use crate::frontend::SourceKey;
use crate::product::{CandidateStatus, ProductKind, ProductProgram};
use crate::semantics::{
    traces_prefix_equal, InputValue, Inputs, Machine, RunOptions, SemanticsError, TraceComparison, Width, Witness,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifierError {
    #[error("inlining produced {terms} terms, over the cap of {cap}")]
    InlineBlowup { terms: usize, cap: usize },
    #[error("unbound identifier `{0}` during symbolic execution")]
    Unbound(String),
    #[error("program is not normalized")]
    NotNormalized,
    #[error("could not run solver {0}")]
    SolverSpawn(String),
    #[error("unexpected solver answer `{0}`")]
    SolverOutput(String),
    #[error("malformed solver model: {0}")]
    ModelParse(String),
    #[error("writing SMT-LIB files: {0}")]
    Emit(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// Satisfying assignment of a falsified VC: symbol name → value. Absent symbols are 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Model(pub BTreeMap<String, u64>);

impl Model {
    pub fn get(&self, name: &str) -> u64 {
        self.0.get(name).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownReason {
    SolverUnknown,
    /// Valid within the unrolling bound, but some loop may run longer.
    UnwindBoundHit,
    Timeout,
    SearchCapHit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(Model),
    Unknown(UnknownReason),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    /// Any counterexample wins, then any doubt; otherwise valid.
    fn combine(self, other: Verdict) -> Verdict {
        match (self, other) {
            (v @ Verdict::Invalid(_), _) | (_, v @ Verdict::Invalid(_)) => v,
            (v @ Verdict::Unknown(_), _) | (_, v @ Verdict::Unknown(_)) => v,
            _ => Verdict::Valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    /// Built-in exhaustive search, bounded by a number of visited search nodes.
    Enumerate { cap: u64 },
    /// External SMT-LIB solver invoked as `path file.smt2`.
    SmtLib { path: PathBuf, timeout: Duration },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Enumerate { cap: 1 << 22 }
    }
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub width: Width,
    pub mode: Mode,
    pub backend: Backend,
    pub deadline: Option<Instant>,
    pub max_terms: usize,
    /// Every checked VC is also written here as `vc_<label>[_n].smt2`.
    pub emit_dir: Option<PathBuf>,
}

impl VerifierConfig {
    pub fn new(width: Width, mode: Mode) -> Self {
        VerifierConfig {
            width,
            mode,
            backend: Backend::default(),
            deadline: None,
            max_terms: GenOptions::new(mode).max_terms,
            emit_dir: None,
        }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        VerifierConfig { mode, ..self.clone() }
    }

    fn gen_options(&self, guards: bool, invariants: bool) -> GenOptions {
        GenOptions { mode: self.mode, guards, invariants, max_terms: self.max_terms }
    }
}

fn emit_all(set: &VcSet, dir: &std::path::Path) -> Result<(), VerifierError> {
    let err = |e: std::io::Error| VerifierError::Emit(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut seen: BTreeMap<Label, usize> = BTreeMap::new();
    for vc in &set.vcs {
        let n = seen.entry(vc.label).or_default();
        let name = if *n == 0 { format!("vc_{}.smt2", vc.label.0) } else { format!("vc_{}_{n}.smt2", vc.label.0) };
        *n += 1;
        std::fs::write(dir.join(name), emit_smtlib(&set.store, vc.formula)).map_err(err)?;
    }
    Ok(())
}

/// Decides every VC of the set, in parallel.
pub fn check_vcs(set: &VcSet, cfg: &VerifierConfig) -> Result<Vec<Verdict>, VerifierError> {
    if let Some(dir) = &cfg.emit_dir {
        emit_all(set, dir)?;
    }
    set.vcs
        .par_iter()
        .map(|vc| {
            if cfg.deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(Verdict::Unknown(UnknownReason::Timeout));
            }
            if let Some(b) = set.store.as_bool(vc.formula) {
                return Ok(if b { Verdict::Valid } else { Verdict::Invalid(Model::default()) });
            }
            match &cfg.backend {
                Backend::Enumerate { cap } => Ok(check_enumerate(&set.store, vc.formula, *cap, cfg.deadline)),
                Backend::SmtLib { path, timeout } => {
                    let left = cfg.deadline.map(|d| d.saturating_duration_since(Instant::now()));
                    let budget = left.map_or(*timeout, |l| l.min(*timeout));
                    check_smtlib(path, &emit_smtlib(&set.store, vc.formula), budget)
                }
            }
        })
        .collect()
}

/// Drops candidate invariants that are not inductive until the remaining set is; marks the rest confirmed.
/// Returns the number of rounds.
pub fn prune_invariants(pp: &mut ProductProgram, cfg: &VerifierConfig) -> Result<usize, VerifierError> {
    let cfg = cfg.with_mode(Mode::Invariant);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let set = gen_vcs(pp, cfg.width, &cfg.gen_options(false, true))?;
        let verdicts = check_vcs(&set, &cfg)?;
        let mut cands = pp.candidates.clone();
        let mut dropped = false;
        for (vc, v) in set.vcs.iter().zip(&verdicts) {
            if v.is_valid() {
                continue;
            }
            if let Some(c) = vc.candidate.and_then(|i| cands.get_mut(&vc.label)?.get_mut(i)) {
                if c.status != CandidateStatus::Dropped {
                    c.status = CandidateStatus::Dropped;
                    dropped = true;
                }
            }
        }
        if !dropped {
            for c in cands.values_mut().flatten() {
                if c.status != CandidateStatus::Dropped {
                    c.status = CandidateStatus::Confirmed;
                }
            }
            pp.set_candidates(cands);
            return Ok(rounds);
        }
        pp.set_candidates(cands);
    }
}

#[derive(Debug, Clone)]
pub struct GuardResults {
    /// Verdict per guard assert, aggregated over its inlined instances.
    pub guards: BTreeMap<Label, Verdict>,
    /// Verdict per source, aggregated over its guards.
    pub sources: BTreeMap<SourceKey, Verdict>,
    pub vc_count: usize,
}

/// Checks every guard of the product in the configured mode. Loops use their live invariants.
pub fn verify_guards(pp: &ProductProgram, cfg: &VerifierConfig) -> Result<GuardResults, VerifierError> {
    let set = gen_vcs(pp, cfg.width, &cfg.gen_options(true, false))?;
    let verdicts = check_vcs(&set, cfg)?;
    let unwound =
        set.vcs.iter().zip(&verdicts).filter(|(vc, _)| vc.kind == VcKind::UnwindingCheck).all(|(_, v)| v.is_valid());
    // a guard without a VC is unreachable, unless the unrolling stopped short of it
    let unreached = if unwound { Verdict::Valid } else { Verdict::Unknown(UnknownReason::UnwindBoundHit) };
    let mut guards: BTreeMap<Label, Verdict> = pp.guards.keys().map(|l| (*l, unreached.clone())).collect();
    let mut seen = std::collections::BTreeSet::new();
    for (vc, v) in set.vcs.iter().zip(verdicts) {
        if vc.kind != VcKind::GuardValidity {
            continue;
        }
        let v = match v {
            Verdict::Valid if !unwound => Verdict::Unknown(UnknownReason::UnwindBoundHit),
            v => v,
        };
        let slot = guards.entry(vc.label).or_insert(Verdict::Valid);
        if seen.insert(vc.label) {
            *slot = v;
        } else {
            *slot = std::mem::replace(slot, Verdict::Valid).combine(v);
        }
    }
    let mut sources: BTreeMap<SourceKey, Verdict> = BTreeMap::new();
    for (label, g) in &pp.guards {
        let v = guards[label].clone();
        let slot = sources.entry(g.source.clone()).or_insert(Verdict::Valid);
        *slot = std::mem::replace(slot, Verdict::Valid).combine(v);
    }
    Ok(GuardResults { guards, sources, vc_count: set.vcs.len() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replay {
    /// Two complete runs agreeing on public inputs whose leakage traces differ.
    ConfirmedLeak(Box<Witness>),
    Spurious,
}

/// Reads two runs of `p` out of a self-composition counterexample and executes them.
pub fn witness_replay(p: &Program, width: Width, model: &Model, fuel: u64) -> Result<Replay, VerifierError> {
    let value = |name: &str, element: Option<usize>| model.get(&cell_symbol(name, element)) & width.mask();
    let mut run1 = Inputs::new();
    let mut run2 = Inputs::new();
    for param in &p.entry_procedure().params {
        let shadow = ProductKind::Cross.companion(&param.name);
        let secret = param.security == Some(Security::Secret);
        let second = |e| if secret { value(&shadow, e) } else { value(&param.name, e) };
        let (a, b) = match param.kind {
            VarKind::Scalar => (InputValue::Scalar(value(&param.name, None)), InputValue::Scalar(second(None))),
            VarKind::Array(n) => (
                InputValue::Array((0..n as usize).map(|i| value(&param.name, Some(i))).collect()),
                InputValue::Array((0..n as usize).map(|i| second(Some(i))).collect()),
            ),
        };
        run1.insert(param.name.clone(), a);
        run2.insert(param.name.clone(), b);
    }
    let machine = Machine::new(p, width)?;
    let opts = RunOptions::with_fuel(fuel);
    let r1 = machine.run(&run1, &opts)?;
    let r2 = machine.run(&run2, &opts)?;
    if !(r1.is_complete() && r2.is_complete()) {
        return Ok(Replay::Spurious);
    }
    Ok(match traces_prefix_equal(&r1.trace, &r2.trace) {
        TraceComparison::Equal => Replay::Spurious,
        TraceComparison::MismatchAt(i) => Replay::ConfirmedLeak(Box::new(Witness {
            inputs1: run1,
            inputs2: run2,
            trace1: r1.trace,
            trace2: r2.trace,
            divergence: i,
        })),
    })
}

#[cfg(test)]
mod tests;
