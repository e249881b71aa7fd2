//! The three-stage driver: taint analysis, taint-tracking product, self-composition.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::ast::Program;
use crate::frontend::{collect_sources, Source, SourceKey, SourceKind, SourceStatus};
use crate::product::{build_cross_product, build_semi_product, ProductError, ProductProgram};
use crate::semantics::{Inputs, Width, Witness, DEFAULT_FUEL};
use crate::taint::{analyze, resolve_step1, TaintMap};
use crate::verifier::{
    prune_invariants, verify_guards, witness_replay, Backend, Mode, Replay, Verdict, VerifierConfig, VerifierError,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Steps {
    Step1Only,
    UpToStep2,
    Full,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub width: Width,
    pub unroll: u32,
    pub steps: Steps,
    /// Skip the taint-tracking product and go straight to self-composition.
    pub no_step2: bool,
    pub backend: Backend,
    pub deadline: Duration,
    pub max_terms: usize,
    pub emit_dir: Option<PathBuf>,
    pub fuel: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            width: Width::W8,
            unroll: 16,
            steps: Steps::Full,
            no_step2: false,
            backend: Backend::default(),
            deadline: Duration::from_secs(600),
            max_terms: 4_000_000,
            emit_dir: None,
            fuel: DEFAULT_FUEL,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVerdict {
    Proved,
    LeaksFound,
    Inconclusive,
}

impl FinalVerdict {
    pub fn exit_code(self) -> i32 {
        match self {
            FinalVerdict::Proved => 0,
            FinalVerdict::LeaksFound => 1,
            FinalVerdict::Inconclusive => 2,
        }
    }
}

impl fmt::Display for FinalVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalVerdict::Proved => "proved",
            FinalVerdict::LeaksFound => "leaks_found",
            FinalVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// Sources entering stage 1, and unresolved after stages 2 and 3 when those ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub step1: usize,
    pub step2: Option<usize>,
    pub step3: Option<usize>,
    pub unresolved_after_step1: usize,
}

impl Counts {
    /// `x:y:z`, with `-` for a stage that did not run.
    pub fn profile(&self) -> String {
        let f = |c: Option<usize>| c.map_or("-".to_string(), |n| n.to_string());
        format!("{}:{}:{}", self.step1, f(self.step2), f(self.step3))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WitnessReport {
    pub inputs1: Inputs,
    pub inputs2: Inputs,
    pub trace1: Vec<String>,
    pub trace2: Vec<String>,
    pub divergence: usize,
}

impl From<&Witness> for WitnessReport {
    fn from(w: &Witness) -> Self {
        WitnessReport {
            inputs1: w.inputs1.clone(),
            inputs2: w.inputs2.clone(),
            trace1: w.trace1.lines(),
            trace2: w.trace2.lines(),
            divergence: w.divergence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceReport {
    pub label: u32,
    pub var: String,
    pub kind: SourceKind,
    pub status: SourceStatus,
    /// Stage that settled the status; for undecided sources, the last stage that examined them.
    pub stage: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReport>,
}

impl SourceReport {
    pub fn key(&self) -> SourceKey {
        SourceKey { label: crate::ast::Label(self.label), var: self.var.clone() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub step1_ms: f64,
    pub step2_ms: Option<f64>,
    pub step3_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigEcho {
    pub width: u32,
    pub unroll: u32,
    pub steps: Steps,
    pub no_step2: bool,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub program: String,
    pub config: ConfigEcho,
    pub counts: Counts,
    pub sources: Vec<SourceReport>,
    pub verdict: FinalVerdict,
    pub deadline_exceeded: bool,
    pub timings: Timings,
}

impl Report {
    pub fn confirmed_leaks(&self) -> impl Iterator<Item = &SourceReport> {
        self.sources.iter().filter(|s| s.status == SourceStatus::ConfirmedLeak)
    }
}

/// Stable-keyed JSON; timings are left out when `with_timings` is false.
pub fn report_json(r: &Report, with_timings: bool) -> String {
    let mut v = serde_json::to_value(r).expect("report serializes");
    if !with_timings {
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
    }
    serde_json::to_string_pretty(&v).expect("value serializes")
}

/// Drops the fact for every source whose guards all verified.
pub fn refine(tmap: &mut TaintMap, resolved: impl IntoIterator<Item = SourceKey>) {
    for k in resolved {
        tmap.remove(k.label, &k.var);
    }
}

struct Tracker {
    sources: Vec<Source>,
    stage: BTreeMap<SourceKey, u8>,
    witnesses: BTreeMap<SourceKey, WitnessReport>,
    timed_out: bool,
}

impl Tracker {
    fn pending(&self) -> Vec<SourceKey> {
        self.sources
            .iter()
            .filter(|s| !s.status.is_resolved() && s.status != SourceStatus::ConfirmedLeak)
            .map(Source::key)
            .collect()
    }

    fn set(&mut self, key: &SourceKey, status: SourceStatus, stage: u8) {
        if let Some(s) = self.sources.iter_mut().find(|s| s.key() == *key) {
            s.status = status;
        }
        self.stage.insert(key.clone(), stage);
    }

    fn note(&mut self, v: &Verdict) {
        if matches!(v, Verdict::Unknown(crate::verifier::UnknownReason::Timeout)) {
            self.timed_out = true;
        }
    }
}

fn stage_cfg(cfg: &PipelineConfig, deadline: Instant, mode: Mode) -> VerifierConfig {
    VerifierConfig {
        width: cfg.width,
        mode,
        backend: cfg.backend.clone(),
        deadline: Some(deadline),
        max_terms: cfg.max_terms,
        emit_dir: cfg.emit_dir.clone(),
    }
}

/// Verifies guards first with invariants, then by unrolling for whatever stays open.
/// Returns the final verdict per pending source.
fn prove_then_search(
    pp: &mut ProductProgram,
    pending: &[SourceKey],
    cfg: &PipelineConfig,
    deadline: Instant,
) -> Result<BTreeMap<SourceKey, (Verdict, Verdict)>, PipelineError> {
    let inv_cfg = stage_cfg(cfg, deadline, Mode::Invariant);
    prune_invariants(pp, &inv_cfg)?;
    let inv = verify_guards(pp, &inv_cfg)?;
    let open = pending.iter().any(|k| inv.sources.get(k).is_some_and(|v| !v.is_valid()));
    let bmc =
        if open { Some(verify_guards(pp, &stage_cfg(cfg, deadline, Mode::Bmc { unroll: cfg.unroll }))?) } else { None };
    Ok(pending
        .iter()
        .map(|k| {
            let first = inv.sources.get(k).cloned().unwrap_or(Verdict::Valid);
            let second = match (&first, &bmc) {
                (Verdict::Valid, _) | (_, None) => first.clone(),
                (_, Some(b)) => b.sources.get(k).cloned().unwrap_or(Verdict::Valid),
            };
            (k.clone(), (first, second))
        })
        .collect())
}

pub fn run_pipeline(p: &Program, name: &str, cfg: &PipelineConfig) -> Result<Report, PipelineError> {
    let start = Instant::now();
    let total = cfg.deadline;
    let stage2_end = start + total.mul_f64(0.40);
    let stage3_end = start + total;
    let mut timings = Timings::default();

    let mut tmap = analyze(p);
    let sources = resolve_step1(&collect_sources(p), &tmap);
    let mut t = Tracker {
        stage: sources.iter().map(|s| (s.key(), 1)).collect(),
        sources,
        witnesses: BTreeMap::new(),
        timed_out: false,
    };
    let mut counts =
        Counts { step1: t.sources.len(), step2: None, step3: None, unresolved_after_step1: t.pending().len() };
    timings.step1_ms = start.elapsed().as_secs_f64() * 1e3;

    if !t.pending().is_empty() && cfg.steps >= Steps::UpToStep2 && !cfg.no_step2 {
        let t2 = Instant::now();
        let pending = t.pending();
        let mut semi = build_semi_product(p, &tmap)?;
        let verdicts = prove_then_search(&mut semi, &pending, cfg, stage2_end)?;
        let mut resolved = Vec::new();
        for (k, (a, b)) in &verdicts {
            t.note(a);
            t.note(b);
            if a.is_valid() || b.is_valid() {
                t.set(k, SourceStatus::ResolvedStep2, 2);
                resolved.push(k.clone());
            } else {
                t.stage.insert(k.clone(), 2);
            }
        }
        refine(&mut tmap, resolved);
        counts.step2 = Some(t.pending().len());
        timings.step2_ms = Some(t2.elapsed().as_secs_f64() * 1e3);
    }

    if !t.pending().is_empty() && cfg.steps == Steps::Full {
        let t3 = Instant::now();
        let pending = t.pending();
        let mut cross = build_cross_product(p, &tmap)?;
        let verdicts = prove_then_search(&mut cross, &pending, cfg, stage3_end)?;
        let mut resolved = Vec::new();
        for (k, (a, b)) in &verdicts {
            t.note(a);
            t.note(b);
            if a.is_valid() || b.is_valid() {
                t.set(k, SourceStatus::ResolvedStep3, 3);
                resolved.push(k.clone());
                continue;
            }
            let mut status = SourceStatus::Unknown;
            for v in [a, b] {
                if let Verdict::Invalid(model) = v {
                    if let Replay::ConfirmedLeak(w) = witness_replay(p, cfg.width, model, cfg.fuel)? {
                        t.witnesses.insert(k.clone(), WitnessReport::from(w.as_ref()));
                        status = SourceStatus::ConfirmedLeak;
                        break;
                    }
                }
            }
            t.set(k, status, 3);
        }
        refine(&mut tmap, resolved);
        counts.step3 =
            Some(t.pending().len() + t.sources.iter().filter(|s| s.status == SourceStatus::ConfirmedLeak).count());
        timings.step3_ms = Some(t3.elapsed().as_secs_f64() * 1e3);
    }

    let verdict = if t.sources.iter().all(|s| s.status.is_resolved()) {
        FinalVerdict::Proved
    } else if t.sources.iter().any(|s| s.status == SourceStatus::ConfirmedLeak) {
        FinalVerdict::LeaksFound
    } else {
        FinalVerdict::Inconclusive
    };
    let backend = match &cfg.backend {
        Backend::Enumerate { .. } => "enum".to_string(),
        Backend::SmtLib { path, .. } => format!("cmd:{}", path.display()),
    };
    let mut witnesses = t.witnesses;
    let sources = t
        .sources
        .iter()
        .map(|s| SourceReport {
            label: s.label.0,
            var: s.var.clone(),
            kind: s.kind,
            status: s.status,
            stage: t.stage[&s.key()],
            witness: witnesses.remove(&s.key()),
        })
        .collect();
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        program: name.to_string(),
        config: ConfigEcho {
            width: cfg.width.bits(),
            unroll: cfg.unroll,
            steps: cfg.steps,
            no_step2: cfg.no_step2,
            backend,
        },
        counts,
        sources,
        verdict,
        deadline_exceeded: t.timed_out,
        timings,
    })
}
