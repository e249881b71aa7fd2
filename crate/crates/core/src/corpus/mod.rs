//! Benchmark programs with expected outcomes, and a random program generator.

mod generate;
mod manifest;

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use generate::{generate_program, generate_source, Features};
pub use manifest::{parse_manifest, ExpectedCase, ManifestError, Profile};

use crate::ast::Program;
use crate::frontend::{load_program, FrontendError};
use crate::pipeline::{run_pipeline, FinalVerdict, PipelineConfig, PipelineError, Report};
use crate::semantics::{
    oracle_check_ct, traces_prefix_equal, Machine, OracleLimits, OracleVerdict, RunOptions, SemanticsError,
    TraceComparison,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{name}: {source}")]
    Frontend { name: String, source: FrontendError },
    #[error("{name}: {source}")]
    Pipeline { name: String, source: PipelineError },
    #[error("{name}: {source}")]
    Oracle { name: String, source: SemanticsError },
}

/// Checks the report against the oracle: proofs must be secure, leaks must be real and replay.
pub fn oracle_mismatches(p: &Program, report: &Report, oracle: &OracleVerdict, fuel: u64) -> Vec<String> {
    let mut out = Vec::new();
    match (report.verdict, oracle) {
        (FinalVerdict::Proved, OracleVerdict::Witness(w)) => {
            out.push(format!("proved, but the oracle separates {:?} and {:?}", w.inputs1, w.inputs2))
        }
        (FinalVerdict::LeaksFound, OracleVerdict::Secure { exhaustive: true, .. }) => {
            out.push("leaks reported, but the oracle found none".into())
        }
        _ => {}
    }
    let width = crate::semantics::Width::custom(report.config.width).expect("report width is valid");
    let machine = match Machine::new(p, width) {
        Ok(m) => m,
        Err(e) => return vec![e.to_string()],
    };
    for leak in report.confirmed_leaks() {
        let Some(w) = &leak.witness else {
            out.push(format!("leak at {} has no witness", leak.label));
            continue;
        };
        let opts = RunOptions::with_fuel(fuel);
        let runs = machine.run(&w.inputs1, &opts).and_then(|a| Ok((a, machine.run(&w.inputs2, &opts)?)));
        match runs {
            Ok((a, b)) if a.is_complete() && b.is_complete() => {
                if traces_prefix_equal(&a.trace, &b.trace) == TraceComparison::Equal || a.trace.lines() != w.trace1 {
                    out.push(format!("witness for {} does not replay", leak.label));
                }
            }
            Ok(_) => out.push(format!("witness for {} has a stuck run", leak.label)),
            Err(e) => out.push(e.to_string()),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub name: String,
    pub report: Report,
    pub oracle_secure: bool,
    pub mismatches: Vec<String>,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn run_case(dir: &Path, case: &ExpectedCase, base: &PipelineConfig) -> Result<CaseOutcome, CorpusError> {
    let path = dir.join(format!("{}.wh", case.name));
    let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    let p = load_program(&text).map_err(|source| CorpusError::Frontend { name: case.name.clone(), source })?;
    let cfg = PipelineConfig { width: case.width, ..base.clone() };
    let report = run_pipeline(&p, &case.name, &cfg)
        .map_err(|source| CorpusError::Pipeline { name: case.name.clone(), source })?;
    let oracle = oracle_check_ct(&p, case.width, &OracleLimits::default())
        .map_err(|source| CorpusError::Oracle { name: case.name.clone(), source })?;
    let mut mismatches = Vec::new();
    if report.verdict != case.verdict {
        mismatches.push(format!("verdict {} (expected {})", report.verdict, case.verdict));
    }
    if report.counts.profile() != case.profile.to_string() {
        mismatches.push(format!("profile {} (expected {})", report.counts.profile(), case.profile));
    }
    let leaks: BTreeSet<&str> = report.confirmed_leaks().map(|s| s.var.as_str()).collect();
    let expected: BTreeSet<&str> = case.leaks.iter().map(String::as_str).collect();
    if leaks != expected {
        mismatches.push(format!("leaks {leaks:?} (expected {expected:?})"));
    }
    let oracle_secure = oracle.is_secure();
    match (case.verdict, oracle_secure) {
        (FinalVerdict::Proved, false) => mismatches.push("manifest says proved, oracle disagrees".into()),
        (FinalVerdict::LeaksFound, true) => mismatches.push("manifest says leaky, oracle disagrees".into()),
        _ => {}
    }
    mismatches.extend(oracle_mismatches(&p, &report, &oracle, cfg.fuel));
    Ok(CaseOutcome { name: case.name.clone(), report, oracle_secure, mismatches })
}

#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub outcomes: Vec<CaseOutcome>,
}

impl CorpusSummary {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CaseOutcome::passed)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<32} {:<13} {:<9} {:<7} result", "case", "verdict", "profile", "oracle");
        for o in &self.outcomes {
            let oracle = if o.oracle_secure { "secure" } else { "leaky" };
            let result = if o.passed() { "ok".to_string() } else { format!("FAIL: {}", o.mismatches.join("; ")) };
            let _ = writeln!(
                out,
                "{:<32} {:<13} {:<9} {:<7} {result}",
                o.name,
                o.report.verdict.to_string(),
                o.report.counts.profile(),
                oracle
            );
        }
        let failed = self.outcomes.iter().filter(|o| !o.passed()).count();
        let _ = writeln!(out, "{} cases, {} failed", self.outcomes.len(), failed);
        out
    }
}

/// Runs every case of the manifest; `.wh` files are looked up next to it.
pub fn run_corpus(manifest: &Path, base: &PipelineConfig) -> Result<CorpusSummary, CorpusError> {
    let text =
        std::fs::read_to_string(manifest).map_err(|source| CorpusError::Io { path: manifest.to_path_buf(), source })?;
    let cases = parse_manifest(&text)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut outcomes = cases.par_iter().map(|c| run_case(dir, c, base)).collect::<Result<Vec<_>, _>>()?;
    outcomes.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(CorpusSummary { outcomes })
}
