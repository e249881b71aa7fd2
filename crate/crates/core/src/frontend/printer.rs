use std::fmt::Write;

use crate::ast::*;

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for (i, proc) in p.procedures.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_procedure(&mut out, proc);
    }
    out
}

fn print_procedure(out: &mut String, proc: &Procedure) {
    let params: Vec<String> = proc
        .params
        .iter()
        .map(|p| {
            let ann = match p.security {
                Some(Security::Public) => "pub ",
                Some(Security::Secret) => "sec ",
                None => "",
            };
            format!("{ann}{}", decl_text(&p.name, p.kind))
        })
        .collect();
    let _ = writeln!(out, "def {}({}) {{", proc.name, params.join(", "));
    let scalars: Vec<&str> = proc.locals.iter().filter(|d| !d.kind.is_array()).map(|d| d.name.as_str()).collect();
    if !scalars.is_empty() {
        let _ = writeln!(out, "  var {};", scalars.join(", "));
    }
    for d in proc.locals.iter().filter(|d| d.kind.is_array()) {
        let _ = writeln!(out, "  array {};", decl_text(&d.name, d.kind));
    }
    print_block(out, &proc.body, 1);
    if proc.returns.is_empty() {
        out.push_str("  return;\n");
    } else {
        let _ = writeln!(out, "  return {};", proc.returns.join(", "));
    }
    out.push_str("}\n");
}

fn decl_text(name: &str, kind: VarKind) -> String {
    match kind {
        VarKind::Scalar => name.to_string(),
        VarKind::Array(n) => format!("{name}[{n}]"),
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_block(out: &mut String, block: &[Stmt], depth: usize) {
    for s in block {
        print_stmt(out, s, depth);
    }
}

pub fn stmt_text(s: &Stmt) -> String {
    let mut out = String::new();
    print_stmt(&mut out, s, 0);
    out.trim_end().to_string()
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Skip => out.push_str("skip;\n"),
        StmtKind::Assign { lhs, rhs } => {
            let _ = writeln!(out, "{lhs} := {};", expr_text(rhs));
        }
        StmtKind::Load { lhs, array, index } => {
            let _ = writeln!(out, "{lhs} := {array}[{}];", expr_text(index));
        }
        StmtKind::Store { array, index, value } => {
            let _ = writeln!(out, "{array}[{}] := {};", expr_text(index), expr_text(value));
        }
        StmtKind::Assert(e) => {
            let _ = writeln!(out, "assert {};", expr_text(e));
        }
        StmtKind::Assume(e) => {
            let _ = writeln!(out, "assume {};", expr_text(e));
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            let _ = writeln!(out, "if {} then", expr_text(cond));
            print_block(out, then_branch, depth + 1);
            if !else_branch.is_empty() {
                indent(out, depth);
                out.push_str("else\n");
                print_block(out, else_branch, depth + 1);
            }
            indent(out, depth);
            out.push_str("fi\n");
        }
        StmtKind::While { cond, invariants, body } => {
            let _ = write!(out, "while {}", expr_text(cond));
            for inv in invariants {
                let _ = write!(out, " invariant {}", expr_text(inv));
            }
            out.push_str(" do\n");
            print_block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("od\n");
        }
        StmtKind::Call { lhs, callee, args } => {
            let args: Vec<String> = args.iter().map(expr_text).collect();
            if lhs.is_empty() {
                let _ = writeln!(out, "{callee}({});", args.join(", "));
            } else {
                let _ = writeln!(out, "{} := {callee}({});", lhs.join(", "), args.join(", "));
            }
        }
    }
}

/// Compound operands are always parenthesized, so the output re-parses to the same tree.
pub fn expr_text(e: &Expr) -> String {
    match e {
        Expr::Lit(n) => n.to_string(),
        Expr::Var(v) => v.clone(),
        Expr::Index(a, i) => format!("{a}[{}]", expr_text(i)),
        Expr::Unary(op, a) => format!("{}{}", op.symbol(), operand_text(a)),
        Expr::Binary(op, a, b) => format!("{} {} {}", operand_text(a), op.symbol(), operand_text(b)),
    }
}

fn operand_text(e: &Expr) -> String {
    match e {
        Expr::Lit(_) | Expr::Var(_) | Expr::Index(..) => expr_text(e),
        _ => format!("({})", expr_text(e)),
    }
}
