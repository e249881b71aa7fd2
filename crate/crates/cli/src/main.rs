use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use ctprover_core::ast::Program;
use ctprover_core::corpus::run_corpus;
use ctprover_core::frontend::{collect_sources, load_program, pretty_print};
use ctprover_core::pipeline::{report_json, run_pipeline, PipelineConfig, Steps};
use ctprover_core::preanalysis::{build_icfg, def_use};
use ctprover_core::product::{build_cross_product, build_semi_product};
use ctprover_core::semantics::{
    oracle_check_ct, parse_binding, Inputs, Machine, OracleLimits, OracleVerdict, Outcome, RunOptions, Width,
    DEFAULT_FUEL,
};
use ctprover_core::taint::{analyze, resolve_step1};
use ctprover_core::verifier::Backend;

const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "ctprover", version, about = "Constant-time verification for While programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Semi,
    Cross,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a program and print its leakage trace
    Run {
        file: PathBuf,
        /// Input binding `name=value` or `name=[v1,v2,...]`; unbound inputs are 0
        #[arg(long = "in", value_name = "BINDING")]
        inputs: Vec<String>,
        #[arg(long, default_value_t = 8)]
        width: u32,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Search for two runs with equal public inputs and different traces
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        width: u32,
        /// Run budget when the input space is too large to enumerate
        #[arg(long, default_value_t = 1_000_000)]
        max_pairs: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the normalized program, its control-flow graph or its def-use chains
    Dump {
        file: PathBuf,
        #[arg(long)]
        icfg: bool,
        #[arg(long)]
        defuse: bool,
    },
    /// Run the taint analysis
    Taint {
        file: PathBuf,
        /// Print the taint facts at every label
        #[arg(long)]
        dump: bool,
    },
    /// Build a product program
    Product {
        file: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Output file; the guard index goes next to it as `<stem>.guards.json`
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the full verification pipeline
    Verify {
        file: PathBuf,
        #[command(flatten)]
        opts: VerifyOpts,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write every verification condition as SMT-LIB into this directory
        #[arg(long)]
        emit_smt: Option<PathBuf>,
    },
    /// Run every case of a corpus manifest and compare with the expectations
    Corpus {
        #[arg(long, default_value = "corpus/expected.txt")]
        manifest: PathBuf,
        #[command(flatten)]
        opts: VerifyOpts,
    },
}

#[derive(clap::Args)]
struct VerifyOpts {
    #[arg(long, default_value_t = 8)]
    width: u32,
    #[arg(long, default_value_t = 16)]
    unroll: u32,
    /// Last stage to run: 1, 2, 3 or all
    #[arg(long, default_value = "all")]
    step: String,
    /// `enum` for the built-in search, `cmd:<path>` for an SMT-LIB solver
    #[arg(long, default_value = "enum")]
    solver: String,
    /// Seconds per verification condition
    #[arg(long, default_value_t = 30)]
    timeout_vc: u64,
    /// Seconds for the whole run
    #[arg(long, default_value_t = 600)]
    deadline: u64,
    /// Skip the taint-tracking product
    #[arg(long)]
    no_step2: bool,
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn width(bits: u32) -> Result<Width, Failure> {
    Ok(Width::custom(bits)?)
}

/// `name=value` pairs in the syntax `--in` accepts.
fn bindings(inputs: &Inputs) -> String {
    inputs.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" ")
}

fn load(path: &Path) -> Result<Program, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    load_program(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn pipeline_config(o: &VerifyOpts) -> Result<PipelineConfig, Failure> {
    let steps = match o.step.as_str() {
        "1" => Steps::Step1Only,
        "2" => Steps::UpToStep2,
        "3" | "all" => Steps::Full,
        other => return Err(Failure(format!("--step expects 1, 2, 3 or all, got `{other}`"))),
    };
    let timeout = Duration::from_secs(o.timeout_vc);
    let backend = match o.solver.as_str() {
        "enum" => Backend::default(),
        s => match s.strip_prefix("cmd:") {
            Some(path) if !path.is_empty() => Backend::SmtLib { path: PathBuf::from(path), timeout },
            _ => return Err(Failure(format!("--solver expects enum or cmd:<path>, got `{s}`"))),
        },
    };
    Ok(PipelineConfig {
        width: width(o.width)?,
        unroll: o.unroll,
        steps,
        no_step2: o.no_step2,
        backend,
        deadline: Duration::from_secs(o.deadline),
        ..PipelineConfig::default()
    })
}

fn execute(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Run { file, inputs, width: bits, fuel } => {
            let p = load(&file)?;
            let machine = Machine::new(&p, width(bits)?)?;
            let mut bound = Inputs::new();
            for param in &p.entry_procedure().params {
                let zero = match param.kind {
                    ctprover_core::ast::VarKind::Scalar => ctprover_core::semantics::InputValue::Scalar(0),
                    ctprover_core::ast::VarKind::Array(n) => {
                        ctprover_core::semantics::InputValue::Array(vec![0; n as usize])
                    }
                };
                bound.insert(param.name.clone(), zero);
            }
            for b in &inputs {
                let (name, v) = parse_binding(b)?;
                if !bound.contains_key(&name) {
                    return Err(Failure(format!("no entry parameter named `{name}`")));
                }
                bound.insert(name, v);
            }
            let r = machine.run(&bound, &RunOptions::with_fuel(fuel))?;
            for line in r.trace.lines() {
                println!("{line}");
            }
            match r.outcome {
                Outcome::Completed { returns } => {
                    let vals: Vec<String> = returns.iter().map(u64::to_string).collect();
                    eprintln!("completed, returns [{}]", vals.join(", "));
                }
                Outcome::Stuck { label, cause } => eprintln!("stuck at {label}: {cause:?}"),
                Outcome::FuelExhausted => eprintln!("fuel exhausted"),
            }
            Ok(0)
        }
        Command::Oracle { file, width: bits, max_pairs, seed } => {
            let p = load(&file)?;
            let limits = OracleLimits { max_runs: max_pairs, seed, ..OracleLimits::default() };
            match oracle_check_ct(&p, width(bits)?, &limits)? {
                OracleVerdict::Secure { exhaustive, complete_runs } => {
                    let how = if exhaustive { "exhaustive" } else { "sampled" };
                    println!("secure ({how}, {complete_runs} complete runs)");
                    Ok(0)
                }
                OracleVerdict::Witness(w) => {
                    println!("leak: traces diverge at event {}", w.divergence);
                    println!("run 1: {}", bindings(&w.inputs1));
                    for l in w.trace1.lines() {
                        println!("  {l}");
                    }
                    println!("run 2: {}", bindings(&w.inputs2));
                    for l in w.trace2.lines() {
                        println!("  {l}");
                    }
                    Ok(1)
                }
            }
        }
        Command::Dump { file, icfg, defuse } => {
            let p = load(&file)?;
            let g = build_icfg(&p);
            if icfg {
                print!("{}", g.dump());
            }
            if defuse {
                let du = def_use(&p, &g);
                for (var, c) in du.scalars.iter().chain(&du.arrays) {
                    for (site, use_) in &c.chains {
                        let from = match site {
                            ctprover_core::semantics::DefSite::Entry => "entry".to_string(),
                            ctprover_core::semantics::DefSite::Stmt(l) => l.to_string(),
                        };
                        println!("{var}: {from} -> {use_}");
                    }
                }
            }
            if !icfg && !defuse {
                print!("{}", pretty_print(&p));
            }
            Ok(0)
        }
        Command::Taint { file, dump } => {
            let p = load(&file)?;
            let t = analyze(&p);
            if dump {
                print!("{}", t.dump());
            }
            for s in resolve_step1(&collect_sources(&p), &t) {
                println!("source {} {} {:?}: {:?}", s.label, s.var, s.kind, s.status);
            }
            Ok(0)
        }
        Command::Product { file, kind, output } => {
            let p = load(&file)?;
            let t = analyze(&p);
            let pp = match kind {
                Kind::Semi => build_semi_product(&p, &t)?,
                Kind::Cross => build_cross_product(&p, &t)?,
            };
            let text = pretty_print(&pp.program);
            match output {
                Some(out) => {
                    std::fs::write(&out, text).map_err(|e| Failure(format!("{}: {e}", out.display())))?;
                    let side = out.with_extension("guards.json");
                    std::fs::write(&side, pp.guards_json()).map_err(|e| Failure(format!("{}: {e}", side.display())))?;
                }
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Verify { file, opts, json, emit_smt } => {
            let p = load(&file)?;
            let cfg = PipelineConfig { emit_dir: emit_smt, ..pipeline_config(&opts)? };
            let name = file.file_stem().map_or_else(|| "program".to_string(), |s| s.to_string_lossy().into_owned());
            let report = run_pipeline(&p, &name, &cfg)?;
            for s in &report.sources {
                println!("{:>5} {:<12} {:<12} {:?}", s.label, s.var, format!("{:?}", s.kind), s.status);
                if let Some(w) = &s.witness {
                    println!("      run 1 {}: {}", bindings(&w.inputs1), w.trace1.join(" "));
                    println!("      run 2 {}: {}", bindings(&w.inputs2), w.trace2.join(" "));
                }
            }
            println!("{} ({})", report.verdict, report.counts.profile());
            if let Some(path) = json {
                std::fs::write(&path, report_json(&report, true))
                    .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            }
            Ok(report.verdict.exit_code() as u8)
        }
        Command::Corpus { manifest, opts } => {
            let cfg = pipeline_config(&opts)?;
            let summary = run_corpus(&manifest, &cfg)?;
            print!("{}", summary.table());
            Ok(if summary.passed() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
