//! SMT-LIB 2 (QF_BV) export and an external solver driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use super::term::{BvOp, CmpOp, Sort, Term, TermId, TermStore};
use super::{Model, UnknownReason, Verdict, VerifierError};

fn node_name(t: TermId) -> String {
    format!("n!{}", t.0)
}

fn quote(name: &str) -> String {
    format!("|{name}|")
}

/// A script whose `unsat` answer means `root` is valid.
pub fn emit_smtlib(s: &TermStore, root: TermId) -> String {
    let w = s.width().bits();
    let lit = |v: u64| format!("(_ bv{v} {w})");
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n(set-logic QF_BV)\n");
    let cone = s.cone(&[root]);
    for &t in &cone {
        if let Term::Sym(i) = *s.get(t) {
            let _ = writeln!(out, "(declare-const {} (_ BitVec {w}))", quote(s.symbol_name(i)));
        }
    }
    for &t in &cone {
        let r = |c: TermId| match *s.get(c) {
            Term::Sym(i) => quote(s.symbol_name(i)),
            _ => node_name(c),
        };
        let body = match *s.get(t) {
            Term::Sym(_) => continue,
            Term::Bv(v) => lit(v),
            Term::Bool(b) => b.to_string(),
            Term::Bin(op, a, b) => {
                let name = match op {
                    BvOp::Add => "bvadd",
                    BvOp::Sub => "bvsub",
                    BvOp::Mul => "bvmul",
                    BvOp::Div => "bvudiv",
                    BvOp::Rem => "bvurem",
                    BvOp::And => "bvand",
                    BvOp::Or => "bvor",
                    BvOp::Xor => "bvxor",
                    BvOp::Shl => "bvshl",
                    BvOp::Shr => "bvlshr",
                };
                if matches!(op, BvOp::Shl | BvOp::Shr) {
                    format!("({name} {} (bvurem {} {}))", r(a), r(b), lit(u64::from(w)))
                } else {
                    format!("({name} {} {})", r(a), r(b))
                }
            }
            Term::BvNot(a) => format!("(bvnot {})", r(a)),
            Term::Neg(a) => format!("(bvneg {})", r(a)),
            Term::Ite(c, a, b) => format!("(ite {} {} {})", r(c), r(a), r(b)),
            Term::Cmp(op, a, b) => {
                let name = match op {
                    CmpOp::Eq => "=",
                    CmpOp::Ult => "bvult",
                    CmpOp::Ule => "bvule",
                };
                format!("({name} {} {})", r(a), r(b))
            }
            Term::Not(a) => format!("(not {})", r(a)),
            Term::And(a, b) => format!("(and {} {})", r(a), r(b)),
            Term::Or(a, b) => format!("(or {} {})", r(a), r(b)),
        };
        let sort = match s.sort(t) {
            Sort::Bool => "Bool".to_string(),
            Sort::Bv => format!("(_ BitVec {w})"),
        };
        let _ = writeln!(out, "(define-fun {} () {sort} {body})", node_name(t));
    }
    let root_ref = match *s.get(root) {
        Term::Sym(i) => quote(s.symbol_name(i)),
        _ => node_name(root),
    };
    let _ = writeln!(out, "(assert (not {root_ref}))\n(check-sat)\n(get-model)");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' | ')' => {
                tokens.push(c.to_string());
                chars.next();
            }
            '|' => {
                chars.next();
                let mut sym = String::new();
                loop {
                    match chars.next() {
                        Some('|') => break,
                        Some(ch) => sym.push(ch),
                        None => return Err("unterminated quoted symbol".into()),
                    }
                }
                // quoted symbols keep a marker so `|(|` is not read as a paren
                tokens.push(format!("|{sym}"));
            }
            ';' => while chars.next().is_some_and(|ch| ch != '\n') {},
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut atom = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '|' || ch == ';' {
                        break;
                    }
                    atom.push(ch);
                    chars.next();
                }
                tokens.push(atom);
            }
        }
    }
    Ok(tokens)
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>, String> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for tok in tokenize(text)? {
        match tok.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().filter(|_| !stack.is_empty()).ok_or("unbalanced `)`")?;
                stack.last_mut().expect("outer level").push(Sexp::List(done));
            }
            _ => {
                let atom = tok.strip_prefix('|').map(str::to_string).unwrap_or(tok);
                stack.last_mut().expect("outer level").push(Sexp::Atom(atom));
            }
        }
    }
    match stack.pop() {
        Some(top) if stack.is_empty() => Ok(top),
        _ => Err("unbalanced `(`".into()),
    }
}

/// Literal value of a definition: `Ok(None)` for a non-literal body, `Err` for a malformed literal.
fn bv_value(e: &Sexp) -> Result<Option<u64>, ()> {
    match e {
        Sexp::Atom(a) if a.starts_with('#') => {
            let parsed = if let Some(hex) = a.strip_prefix("#x") {
                u64::from_str_radix(hex, 16).ok()
            } else {
                a.strip_prefix("#b").and_then(|bin| u64::from_str_radix(bin, 2).ok())
            };
            parsed.map(Some).ok_or(())
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(v), Sexp::Atom(_)] if u == "_" => {
                v.strip_prefix("bv").and_then(|d| d.parse().ok()).map(Some).ok_or(())
            }
            _ => Ok(None),
        },
        Sexp::Atom(_) => Ok(None),
    }
}

/// Reads the constant definitions of a `get-model` response.
pub fn parse_model(text: &str) -> Result<Model, VerifierError> {
    let top = parse_sexps(text).map_err(VerifierError::ModelParse)?;
    let mut out = BTreeMap::new();
    let mut stack: Vec<&Sexp> = top.iter().collect();
    while let Some(e) = stack.pop() {
        let Sexp::List(items) = e else { continue };
        match items.as_slice() {
            [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(args), sort, value] if kw == "define-fun" => {
                let is_bv = matches!(sort, Sexp::List(s) if s.get(1) == Some(&Sexp::Atom("BitVec".into())));
                if args.is_empty() && is_bv {
                    // solvers may also list helper definitions whose bodies are expressions
                    match bv_value(value) {
                        Ok(Some(v)) => {
                            out.insert(name.clone(), v);
                        }
                        Ok(None) => {}
                        Err(()) => return Err(VerifierError::ModelParse(format!("value of `{name}`"))),
                    }
                }
            }
            _ => stack.extend(items.iter()),
        }
    }
    Ok(Model(out))
}

/// Runs `solver file` on the script and interprets its answer.
pub fn check_smtlib(solver: &Path, script: &str, timeout: Duration) -> Result<Verdict, VerifierError> {
    let spawn_err = |e: std::io::Error| VerifierError::SolverSpawn(format!("{}: {e}", solver.display()));
    let file = tempfile::Builder::new().suffix(".smt2").tempfile().map_err(spawn_err)?;
    std::fs::write(file.path(), script).map_err(spawn_err)?;
    let mut child = Command::new(solver)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(spawn_err)?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut text = String::new();
        let _ = stdout.read_to_string(&mut text);
        text
    });
    match child.wait_timeout(timeout).map_err(spawn_err)? {
        Some(_) => {}
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(Verdict::Unknown(UnknownReason::Timeout));
        }
    }
    let text = reader.join().unwrap_or_default();
    let (first, rest) = text.trim_start().split_once('\n').unwrap_or((text.trim(), ""));
    match first.trim() {
        "unsat" => Ok(Verdict::Valid),
        "sat" => Ok(Verdict::Invalid(parse_model(rest)?)),
        "unknown" => Ok(Verdict::Unknown(UnknownReason::SolverUnknown)),
        other => Err(VerifierError::SolverOutput(other.chars().take(200).collect())),
    }
}
