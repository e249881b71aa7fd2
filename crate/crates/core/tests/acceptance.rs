//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use ctprover_core::ast::Program;
use ctprover_core::corpus::{oracle_mismatches, run_corpus};
use ctprover_core::frontend::SourceKind;
use ctprover_core::pipeline::{run_pipeline, Counts, FinalVerdict, PipelineConfig, Report};
use ctprover_core::product::{build_cross_product, build_semi_product};
use ctprover_core::semantics::{oracle_check_ct, OracleLimits, Width};
use ctprover_core::taint::{analyze, DenseAnalyzer};
use ctprover_core::verifier::{check_vcs, gen_vcs, Backend, GenOptions, Mode, Verdict, VerifierConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const FUZZ_PROGRAMS: u64 = 1000;
const PROJECTION_SAMPLES: usize = 200;

type Outcome = Result<String, String>;

fn cfg() -> PipelineConfig {
    PipelineConfig { width: Width::W4, ..PipelineConfig::default() }
}

fn run(name: &str, c: &PipelineConfig) -> Result<Report, String> {
    run_pipeline(&corpus_program(name), name, c).map_err(|e| e.to_string())
}

fn monotone(c: &Counts) -> bool {
    let y = c.step2.unwrap_or(c.unresolved_after_step1);
    let z = c.step3.unwrap_or(0);
    c.step1 >= y && y >= z
}

struct FuzzRun {
    seed: u64,
    counts: Counts,
    mismatches: Vec<String>,
}

fn fuzz_runs() -> Vec<FuzzRun> {
    // Array programs exceed the exhaustive budget at width 4 and fall back to sampling.
    let limits = OracleLimits { max_runs: 200_000, ..OracleLimits::default() };
    (0..FUZZ_PROGRAMS)
        .into_par_iter()
        .map(|seed| {
            let p = fuzz_program(seed);
            let report = match run_pipeline(&p, "fuzz", &cfg()) {
                Ok(r) => r,
                Err(e) => return FuzzRun { seed, counts: Counts::default(), mismatches: vec![e.to_string()] },
            };
            let mismatches = match oracle_check_ct(&p, Width::W4, &limits) {
                Ok(o) => oracle_mismatches(&p, &report, &o, FUEL),
                Err(e) => vec![e.to_string()],
            };
            FuzzRun { seed, counts: report.counts, mismatches }
        })
        .collect()
}

fn oracle_agreement(corpus: &[(String, Report)], corpus_failures: &[String], fuzz: &[FuzzRun]) -> Outcome {
    let fuzz_failures: Vec<String> = fuzz
        .iter()
        .filter(|r| !r.mismatches.is_empty())
        .map(|r| format!("fuzz seed {}: {}", r.seed, r.mismatches.join("; ")))
        .collect();
    let all: Vec<&String> = corpus_failures.iter().chain(&fuzz_failures).collect();
    if all.is_empty() {
        Ok(format!("{} corpus cases and {} generated programs agree with the oracle", corpus.len(), fuzz.len()))
    } else {
        Err(format!("{} disagreements, first: {}", all.len(), all[0]))
    }
}

fn timed_case(name: &str, verdict: FinalVerdict, profile: &str, limit: Duration) -> Outcome {
    let start = Instant::now();
    let r = run(name, &cfg())?;
    let elapsed = start.elapsed();
    if r.verdict != verdict || r.counts.profile() != profile {
        return Err(format!("{} {} (expected {verdict} {profile})", r.verdict, r.counts.profile()));
    }
    if elapsed > limit {
        return Err(format!("took {elapsed:?}, limit {limit:?}"));
    }
    Ok(format!("{verdict} {profile} in {elapsed:.2?}"))
}

fn false_positive_handoff() -> Outcome {
    let r = run("xor_cancel", &cfg())?;
    let c = &r.counts;
    let unresolved_at_2 = c.step2 == Some(1);
    if r.verdict == FinalVerdict::Proved && unresolved_at_2 && c.profile() == "1:1:0" {
        Ok("stage 2 keeps the source, stage 3 proves it: 1:1:0".into())
    } else {
        Err(format!("{} {}", r.verdict, c.profile()))
    }
}

fn leak_reproduction() -> Outcome {
    let name = "leaky_prime_leading_zeros";
    let p = corpus_program(name);
    let r = run_pipeline(&p, name, &cfg()).map_err(|e| e.to_string())?;
    if r.verdict != FinalVerdict::LeaksFound {
        return Err(format!("verdict {}", r.verdict));
    }
    let Some(leak) = r.confirmed_leaks().find(|s| s.kind == SourceKind::LoopCond) else {
        return Err("no loop-condition source confirmed".into());
    };
    let Some(w) = &leak.witness else { return Err("confirmed leak without witness".into()) };
    let oracle = oracle_check_ct(&p, Width::W4, &OracleLimits::default()).map_err(|e| e.to_string())?;
    let m = oracle_mismatches(&p, &r, &oracle, FUEL);
    if !m.is_empty() {
        return Err(m.join("; "));
    }
    Ok(format!("loop at {} on `{}` leaks, witness diverges at event {}", leak.label, leak.var, w.divergence))
}

fn count_monotonicity(corpus: &[(String, Report)], fuzz: &[FuzzRun]) -> Outcome {
    let bad: Vec<String> = corpus
        .iter()
        .map(|(n, r)| (n.clone(), &r.counts))
        .chain(fuzz.iter().map(|f| (format!("fuzz seed {}", f.seed), &f.counts)))
        .filter(|(_, c)| !monotone(c))
        .map(|(n, c)| format!("{n}: {}", c.profile()))
        .collect();
    match bad.first() {
        None => Ok(format!("x >= y >= z on {} runs", corpus.len() + fuzz.len())),
        Some(first) => Err(format!("{} violations, first {first}", bad.len())),
    }
}

fn sparse_dense(programs: &[(String, Program)]) -> Outcome {
    let mut labels = 0;
    for (name, p) in programs {
        let sparse = analyze(p);
        let dense = DenseAnalyzer::new(p).run();
        if sparse != dense {
            let diff = dense.at.iter().find(|(l, t)| sparse.at.get(l) != Some(t)).map(|(l, _)| *l);
            return Err(format!("{name}: first difference at {diff:?}"));
        }
        labels += dense.at.len();
    }
    Ok(format!("identical facts at {labels} labels over {} programs", programs.len()))
}

fn projection(programs: &[(String, Program)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pool: Vec<(String, Program)> =
        programs.iter().cloned().chain((0..64).map(|s| (format!("fuzz seed {s}"), fuzz_program(s)))).collect();
    let mut compared = 0;
    for i in 0..PROJECTION_SAMPLES {
        let (name, p) = &pool[i % pool.len()];
        let tmap = analyze(p);
        let inputs = random_inputs(p, Width::W4, &mut rng);
        for pp in [build_semi_product(p, &tmap), build_cross_product(p, &tmap)] {
            let pp = pp.map_err(|e| format!("{name}: {e}"))?;
            if let Some(m) = projection_mismatch(p, &pp, &inputs, Width::W4, &mut rng) {
                return Err(format!("{name}: {m}"));
            }
            compared += 1;
        }
    }
    Ok(format!("{PROJECTION_SAMPLES} samples, {compared} product runs project onto the original"))
}

fn find_solver() -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    ["z3", "cvc5", "bitwuzla", "boolector", "yices-smt2"]
        .iter()
        .flat_map(|s| std::env::split_paths(&path).map(move |d| d.join(s)))
        .find(|p| p.is_file())
}

fn backend_agreement(programs: &[(String, Program)]) -> Option<Outcome> {
    let solver = find_solver()?;
    let smt = Backend::SmtLib { path: solver.clone(), timeout: Duration::from_secs(30) };
    let (mut compared, mut skipped) = (0, 0);
    for (name, p) in programs {
        let tmap = analyze(p);
        for pp in [build_semi_product(p, &tmap), build_cross_product(p, &tmap)] {
            let Ok(pp) = pp else { continue };
            for mode in [Mode::Invariant, Mode::Bmc { unroll: 16 }] {
                let set = match gen_vcs(&pp, Width::W4, &GenOptions::new(mode)) {
                    Ok(s) => s,
                    Err(e) => return Some(Err(format!("{name}: {e}"))),
                };
                let enumerated = VerifierConfig::new(Width::W4, mode);
                let solved = VerifierConfig { backend: smt.clone(), ..enumerated.clone() };
                let (a, b) = match (check_vcs(&set, &enumerated), check_vcs(&set, &solved)) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => return Some(Err(format!("{name}: {e}"))),
                };
                for (vc, (x, y)) in set.vcs.iter().zip(a.iter().zip(&b)) {
                    match (x, y) {
                        (Verdict::Unknown(_), _) | (_, Verdict::Unknown(_)) => skipped += 1,
                        _ if x.is_valid() == y.is_valid() => compared += 1,
                        _ => return Some(Err(format!("{name}: VC {} {:?}: {x:?} vs {y:?}", vc.label, vc.kind))),
                    }
                }
            }
        }
    }
    Some(Ok(format!("{compared} VCs agree with {}, {skipped} inconclusive", solver.display())))
}

fn ablation() -> Outcome {
    let full = run_corpus(&manifest_path(), &cfg()).map_err(|e| e.to_string())?;
    let ablated =
        run_corpus(&manifest_path(), &PipelineConfig { no_step2: true, ..cfg() }).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (a, b) in full.outcomes.iter().zip(&ablated.outcomes) {
        if b.report.counts.step2.is_some() {
            return Err(format!("{}: stage 2 ran", b.name));
        }
        if a.report.verdict == FinalVerdict::Inconclusive || b.report.verdict == FinalVerdict::Inconclusive {
            continue;
        }
        let leaks = |r: &Report| r.confirmed_leaks().map(|s| s.key()).collect::<Vec<_>>();
        if leaks(&a.report) != leaks(&b.report) {
            return Err(format!("{}: confirmed leaks differ", a.name));
        }
        compared += 1;
    }
    Ok(format!("same confirmed leaks on {compared} conclusive cases"))
}

fn main() {
    let started = Instant::now();
    let programs = corpus_programs();
    let (corpus, corpus_failures) = match run_corpus(&manifest_path(), &cfg()) {
        Ok(s) => {
            let failures = s
                .outcomes
                .iter()
                .filter(|o| !o.passed())
                .map(|o| format!("{}: {}", o.name, o.mismatches.join("; ")))
                .collect();
            (s.outcomes.into_iter().map(|o| (o.name, o.report)).collect::<Vec<_>>(), failures)
        }
        Err(e) => (Vec::new(), vec![e.to_string()]),
    };
    let fuzz = fuzz_runs();

    let results: Vec<(&str, Option<Outcome>)> = vec![
        ("oracle agreement", Some(oracle_agreement(&corpus, &corpus_failures, &fuzz))),
        (
            "example 1 at stage 1",
            Some(timed_case("example1_fixfrac", FinalVerdict::Proved, "5:-:-", Duration::from_secs(1))),
        ),
        (
            "example 2 at stage 2",
            Some(timed_case("example2_chacha_ctx", FinalVerdict::Proved, "1:0:-", Duration::from_secs(5))),
        ),
        ("false-positive handoff", Some(false_positive_handoff())),
        ("leading-zero leak", Some(leak_reproduction())),
        ("count monotonicity", Some(count_monotonicity(&corpus, &fuzz))),
        ("sparse equals dense", Some(sparse_dense(&programs))),
        ("product projection", Some(projection(&programs))),
        ("backend agreement", backend_agreement(&programs)),
        ("ablation without stage 2", Some(ablation())),
    ];

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Some(Ok(detail)) => println!("[{:>2}] PASS {name}: {detail}", i + 1),
            Some(Err(detail)) => {
                failed += 1;
                println!("[{:>2}] FAIL {name}: {detail}", i + 1);
            }
            None => println!("[{:>2}] SKIP {name}: no SMT-LIB solver on PATH", i + 1),
        }
    }
    println!("{} criteria, {failed} failed, {:.1?}", results.len(), started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
