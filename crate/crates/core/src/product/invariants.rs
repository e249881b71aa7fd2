use std::collections::BTreeSet;

use super::ProductKind;
use crate::ast::*;

/// Candidate loop invariants: one per body-defined scalar that feeds the loop condition,
/// through data dependences inside the body. `!b$y` for the semi-product, `y == sh$y` for the cross-product.
pub fn gen_invariants(loop_stmt: &Stmt, kind: ProductKind) -> Vec<Expr> {
    let StmtKind::While { cond, body, .. } = &loop_stmt.kind else {
        return Vec::new();
    };
    let mut stmts = Vec::new();
    walk_block(body, &mut |s| stmts.push(s));
    let defined: BTreeSet<&str> = stmts.iter().flat_map(|s| s.scalar_defs()).collect();
    let mut feeding: BTreeSet<&str> = cond.vars().into_iter().collect();
    loop {
        let before = feeding.len();
        for s in &stmts {
            if !s.scalar_defs().iter().any(|d| feeding.contains(d)) {
                continue;
            }
            let reads: Vec<&str> = match &s.kind {
                StmtKind::Assign { rhs, .. } => rhs.vars(),
                StmtKind::Load { index, .. } => index.vars(),
                StmtKind::Call { args, .. } => args.iter().flat_map(Expr::vars).collect(),
                _ => Vec::new(),
            };
            feeding.extend(reads);
        }
        if feeding.len() == before {
            break;
        }
    }
    feeding
        .intersection(&defined)
        .map(|y| match kind {
            ProductKind::SemiCross => Expr::unary(UnOp::Not, Expr::var(kind.companion(y))),
            ProductKind::Cross => Expr::binary(BinOp::Eq, Expr::var(*y), Expr::var(kind.companion(y))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{expr_text, load_program};

    fn loop_of(p: &Program) -> &Stmt {
        p.entry_procedure().body.iter().find(|s| matches!(s.kind, StmtKind::While { .. })).unwrap()
    }

    #[test]
    fn counter_feeds_condition_accumulator_does_not() {
        let p = load_program(
            "def main(pub n, sec k){ var i, acc, t; t := i < n; while t do acc := acc + k; i := i + 1; t := i < n; od return; }",
        )
        .unwrap();
        let semi: Vec<String> = gen_invariants(loop_of(&p), ProductKind::SemiCross).iter().map(expr_text).collect();
        assert_eq!(semi, ["!b$i", "!b$t"]);
        let cross: Vec<String> = gen_invariants(loop_of(&p), ProductKind::Cross).iter().map(expr_text).collect();
        assert_eq!(cross, ["i == sh$i", "t == sh$t"]);
    }
}
