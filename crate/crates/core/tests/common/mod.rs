#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use ctprover_core::ast::{Label, Program, VarKind};
use ctprover_core::corpus::{generate_program, Features};
use ctprover_core::frontend::{collect_sources, load_program};
use ctprover_core::preanalysis::{build_icfg, def_use};
use ctprover_core::product::{is_companion, ProductKind, ProductProgram};
use ctprover_core::semantics::{DefSite, Event, FrameView, InputValue, Inputs, Machine, Observer, RunOptions, Width};
use ctprover_core::taint::{analyze, resolve_step1};
use rand::Rng;

pub const FUEL: u64 = 200_000;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn manifest_path() -> PathBuf {
    corpus_dir().join("expected.txt")
}

/// Every `.wh` file of the corpus, sorted by name.
pub fn corpus_programs() -> Vec<(String, Program)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(corpus_dir()).expect("corpus directory") {
        let path = entry.expect("dir entry").path();
        if path.extension().and_then(|e| e.to_str()) != Some("wh") {
            continue;
        }
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path).expect("readable case");
        let p = load_program(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        out.push((name, p));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn corpus_program(name: &str) -> Program {
    let text = std::fs::read_to_string(corpus_dir().join(format!("{name}.wh"))).expect("readable case");
    load_program(&text).expect("valid case")
}

/// Random program number `seed`, cycling through every feature combination.
pub fn fuzz_program(seed: u64) -> Program {
    generate_program(seed, 3 + (seed % 6) as usize, Features::from_mask(seed as u32))
}

pub fn random_value(kind: VarKind, width: Width, rng: &mut impl Rng) -> InputValue {
    match kind {
        VarKind::Scalar => InputValue::Scalar(rng.gen::<u64>() & width.mask()),
        VarKind::Array(n) => InputValue::Array((0..n).map(|_| rng.gen::<u64>() & width.mask()).collect()),
    }
}

pub fn random_inputs(p: &Program, width: Width, rng: &mut impl Rng) -> Inputs {
    p.entry_procedure().params.iter().map(|x| (x.name.clone(), random_value(x.kind, width, rng))).collect()
}

/// Same public inputs as `base`, fresh secrets.
pub fn vary_secrets(p: &Program, base: &Inputs, width: Width, rng: &mut impl Rng) -> Inputs {
    let mut out = base.clone();
    for x in p.secret_inputs() {
        out.insert(x.name.clone(), random_value(x.kind, width, rng));
    }
    out
}

type State = BTreeMap<String, Vec<u64>>;

/// Label and non-companion state before every step.
#[derive(Default)]
struct StateLog(Vec<(Label, String, State)>);

impl Observer for StateLog {
    fn step(&mut self, label: Label, frame: &FrameView<'_>) {
        let mut state = State::new();
        for n in frame.scalar_names().filter(|n| !is_companion(n)) {
            state.insert(n.to_string(), vec![frame.scalar(n).unwrap_or(0)]);
        }
        for n in frame.array_names().filter(|n| !is_companion(n)) {
            state.insert(n.to_string(), frame.array(n).map(<[u64]>::to_vec).unwrap_or_default());
        }
        self.0.push((label, frame.procedure().to_string(), state));
    }
}

/// Runs the product with guards disabled and compares its projection with a run of the original.
/// Shadow secrets are random, so a cross product may block early; the projection must then be a prefix.
pub fn projection_mismatch(
    p: &Program,
    pp: &ProductProgram,
    inputs: &Inputs,
    width: Width,
    rng: &mut impl Rng,
) -> Option<String> {
    let erased = pp.erase();
    if &erased != p {
        return Some("erasure does not restore the original".into());
    }
    let mut product_inputs = inputs.clone();
    for x in &pp.program.entry_procedure().params {
        if !product_inputs.contains_key(&x.name) {
            product_inputs.insert(x.name.clone(), random_value(x.kind, width, rng));
        }
    }
    let original = Machine::new(p, width).expect("original compiles");
    let product = Machine::new(&pp.program, width).expect("product compiles");
    let mut log1 = StateLog::default();
    let r1 = original.run_observed(inputs, &RunOptions::with_fuel(FUEL), &mut log1).ok()?;
    let opts = RunOptions { fuel: FUEL * 8, disabled_asserts: pp.guard_labels() };
    let mut log2 = StateLog::default();
    let r2 = product.run_observed(&product_inputs, &opts, &mut log2).expect("product inputs are well-formed");
    if !r1.is_complete() {
        return None;
    }

    let steps2: Vec<(Label, String, State)> =
        log2.0.into_iter().filter_map(|(l, proc, s)| pp.origin.get(&l).map(|o| (*o, proc, s))).collect();
    let events2: Vec<Event> =
        r2.trace.0.iter().filter_map(|e| pp.origin.get(&e.label).map(|o| Event { label: *o, ..*e })).collect();
    let complete = r2.is_complete();
    let kind = match pp.kind {
        ProductKind::SemiCross => "semi",
        ProductKind::Cross => "cross",
    };
    let prefix_ok = |n1: usize, n2: usize| if complete { n1 == n2 } else { n2 <= n1 };
    if !prefix_ok(log1.0.len(), steps2.len()) {
        return Some(format!("{kind}: {} original steps, {} projected", log1.0.len(), steps2.len()));
    }
    if let Some(i) = steps2.iter().zip(&log1.0).position(|(a, b)| a != b) {
        return Some(format!("{kind}: step {i} differs: {:?} vs {:?}", steps2[i], log1.0[i]));
    }
    if !prefix_ok(r1.trace.0.len(), events2.len()) || events2[..] != r1.trace.0[..events2.len()] {
        return Some(format!("{kind}: traces differ"));
    }
    if complete && r1.outcome != r2.outcome {
        // Product returns carry companions after the original values.
        if let (
            ctprover_core::semantics::Outcome::Completed { returns: a },
            ctprover_core::semantics::Outcome::Completed { returns: b },
        ) = (&r1.outcome, &r2.outcome)
        {
            if b.get(..a.len()) != Some(&a[..]) {
                return Some(format!("{kind}: returns {a:?} vs {b:?}"));
            }
        }
    }
    None
}

/// Every dynamic (definition, use) pair must appear among the static chains.
#[derive(Default)]
struct ReadLog(BTreeSet<(String, DefSite, Label)>);

impl Observer for ReadLog {
    fn read(&mut self, label: Label, var: &str, site: DefSite) {
        self.0.insert((var.to_string(), site, label));
    }

    fn wants_reads(&self) -> bool {
        true
    }
}

pub fn defuse_mismatch(p: &Program, inputs: &Inputs, width: Width) -> Option<String> {
    let du = def_use(p, &build_icfg(p));
    let mut log = ReadLog::default();
    Machine::new(p, width).ok()?.run_observed(inputs, &RunOptions::with_fuel(FUEL), &mut log).ok()?;
    log.0.into_iter().find_map(|(var, site, label)| {
        let known = du.chains(&var).is_some_and(|c| c.chains.contains(&(site, label)));
        (!known).then(|| format!("read of {var} at {label} from {site:?} has no static chain"))
    })
}

/// Values of step-1-resolved source variables, observed at their labels.
struct SourceLog<'a> {
    resolved: &'a BTreeMap<Label, String>,
    steps: Vec<(Label, Option<u64>)>,
}

impl Observer for SourceLog<'_> {
    fn step(&mut self, label: Label, frame: &FrameView<'_>) {
        let value = self.resolved.get(&label).and_then(|v| frame.scalar(v));
        self.steps.push((label, value));
    }
}

/// Two runs with equal publics agree on every resolved source value until their paths split.
pub fn resolved_source_mismatch(p: &Program, a: &Inputs, b: &Inputs, width: Width) -> Option<String> {
    let sources = resolve_step1(&collect_sources(p), &analyze(p));
    let resolved: BTreeMap<Label, String> =
        sources.iter().filter(|s| s.status.is_resolved()).map(|s| (s.label, s.var.clone())).collect();
    let m = Machine::new(p, width).ok()?;
    let log = |inputs: &Inputs| {
        let mut log = SourceLog { resolved: &resolved, steps: Vec::new() };
        m.run_observed(inputs, &RunOptions::with_fuel(FUEL), &mut log).ok().map(|_| log.steps)
    };
    let (s1, s2) = (log(a)?, log(b)?);
    for (x, y) in s1.iter().zip(&s2) {
        if x.0 != y.0 {
            break;
        }
        if x.1 != y.1 {
            return Some(format!("source at {} sees {:?} and {:?}", x.0, x.1, y.1));
        }
    }
    None
}
