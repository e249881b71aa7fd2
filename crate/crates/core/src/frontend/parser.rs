use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;
use crate::ast::*;

const KEYWORDS: [&str; 17] = [
    "def",
    "var",
    "array",
    "pub",
    "sec",
    "skip",
    "if",
    "then",
    "else",
    "fi",
    "while",
    "do",
    "od",
    "assert",
    "assume",
    "return",
    "invariant",
];

pub fn parse(text: &str) -> Result<Program, FrontendError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut procedures: Vec<Procedure> = Vec::new();
    while !parser.at_eof() {
        let proc = parser.procedure()?;
        if procedures.iter().any(|p| p.name == proc.name) {
            return Err(FrontendError::DuplicateProcedure(proc.name));
        }
        procedures.push(proc);
    }
    let Some(main) = procedures.iter().find(|p| p.name == ENTRY) else {
        return Err(FrontendError::MissingEntry);
    };
    if let Some(p) = main.params.iter().find(|p| p.security.is_none()) {
        return Err(FrontendError::Annotation(format!("entry parameter `{}` needs `pub` or `sec`", p.name)));
    }
    for proc in procedures.iter().filter(|p| p.name != ENTRY) {
        if let Some(p) = proc.params.iter().find(|p| p.security.is_some()) {
            return Err(FrontendError::Annotation(format!(
                "parameter `{}` of `{}` is annotated; only `{ENTRY}` takes annotations",
                p.name, proc.name
            )));
        }
    }
    let mut program = Program { procedures, entry: ENTRY.to_string() };
    program.relabel();
    Ok(program)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.tokens[(self.pos + k).min(self.tokens.len() - 1)].tok
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    fn error(&self, expected: &str) -> FrontendError {
        let t = &self.tokens[self.pos];
        FrontendError::Syntax { line: t.line, col: t.col, expected: expected.to_string() }
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), FrontendError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(&format!("`{s}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), FrontendError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn number(&mut self) -> Result<u64, FrontendError> {
        match self.peek() {
            Tok::Num(n) => {
                let n = *n;
                self.bump();
                Ok(n)
            }
            _ => Err(self.error("integer literal")),
        }
    }

    fn array_len(&mut self) -> Result<u32, FrontendError> {
        self.expect_sym("[")?;
        let n = self.number()?;
        let len = u32::try_from(n).ok().filter(|&n| n > 0).ok_or_else(|| self.error("positive array length"))?;
        self.expect_sym("]")?;
        Ok(len)
    }

    fn procedure(&mut self) -> Result<Procedure, FrontendError> {
        self.expect_kw("def")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let security = if self.eat_kw("pub") {
                    Some(Security::Public)
                } else if self.eat_kw("sec") {
                    Some(Security::Secret)
                } else {
                    None
                };
                let name = self.ident()?;
                let kind = if self.is_sym("[") { VarKind::Array(self.array_len()?) } else { VarKind::Scalar };
                params.push(Param { name, kind, security });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.expect_sym("{")?;
        let mut locals = Vec::new();
        let mut body = self.block(&mut locals, &["return"])?;
        self.expect_kw("return")?;
        let mut returns = Vec::new();
        if !self.is_sym(";") {
            loop {
                returns.push(self.ident()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(";")?;
        self.expect_sym("}")?;
        if body.is_empty() {
            body.push(Stmt::unlabeled(StmtKind::Skip));
        }
        Ok(Procedure { name, params, locals, body, returns })
    }

    /// Statements and declarations up to one of the terminator keywords.
    fn block(&mut self, locals: &mut Vec<Decl>, terminators: &[&str]) -> Result<Block, FrontendError> {
        let mut out = Vec::new();
        loop {
            if terminators.iter().any(|t| self.is_kw(t)) {
                return Ok(out);
            }
            if self.at_eof() || self.is_sym("}") {
                return Err(self.error(&terminators.iter().map(|t| format!("`{t}`")).collect::<Vec<_>>().join(" or ")));
            }
            if self.eat_kw("var") {
                loop {
                    locals.push(Decl { name: self.ident()?, kind: VarKind::Scalar });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")?;
            } else if self.eat_kw("array") {
                loop {
                    let name = self.ident()?;
                    let len = self.array_len()?;
                    locals.push(Decl { name, kind: VarKind::Array(len) });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(";")?;
            } else {
                out.push(self.statement(locals)?);
            }
        }
    }

    fn statement(&mut self, locals: &mut Vec<Decl>) -> Result<Stmt, FrontendError> {
        let kind = if self.eat_kw("skip") {
            self.expect_sym(";")?;
            StmtKind::Skip
        } else if self.eat_kw("assert") {
            let e = self.expr()?;
            self.expect_sym(";")?;
            StmtKind::Assert(e)
        } else if self.eat_kw("assume") {
            let e = self.expr()?;
            self.expect_sym(";")?;
            StmtKind::Assume(e)
        } else if self.eat_kw("if") {
            let cond = self.expr()?;
            self.expect_kw("then")?;
            let then_branch = self.block(locals, &["else", "fi"])?;
            let else_branch = if self.eat_kw("else") { self.block(locals, &["fi"])? } else { Vec::new() };
            self.expect_kw("fi")?;
            StmtKind::If { cond, then_branch, else_branch }
        } else if self.eat_kw("while") {
            let cond = self.expr()?;
            let mut invariants = Vec::new();
            while self.eat_kw("invariant") {
                invariants.push(self.expr()?);
            }
            self.expect_kw("do")?;
            let body = self.block(locals, &["od"])?;
            self.expect_kw("od")?;
            StmtKind::While { cond, invariants, body }
        } else {
            self.simple_statement()?
        };
        Ok(Stmt::unlabeled(kind))
    }

    fn args(&mut self) -> Result<Vec<Expr>, FrontendError> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn simple_statement(&mut self) -> Result<StmtKind, FrontendError> {
        let first = self.ident()?;
        if self.is_sym("(") {
            let args = self.args()?;
            self.expect_sym(";")?;
            return Ok(StmtKind::Call { lhs: Vec::new(), callee: first, args });
        }
        if self.eat_sym("[") {
            let index = self.expr()?;
            self.expect_sym("]")?;
            self.expect_sym(":=")?;
            let value = self.expr()?;
            self.expect_sym(";")?;
            return Ok(StmtKind::Store { array: first, index, value });
        }
        let mut lhs = vec![first];
        while self.eat_sym(",") {
            lhs.push(self.ident()?);
        }
        self.expect_sym(":=")?;
        let is_call = matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
            && matches!(self.peek_at(1), Tok::Sym("("));
        if is_call {
            let callee = self.ident()?;
            let args = self.args()?;
            self.expect_sym(";")?;
            return Ok(StmtKind::Call { lhs, callee, args });
        }
        if lhs.len() != 1 {
            return Err(self.error("procedure call"));
        }
        let rhs = self.expr()?;
        self.expect_sym(";")?;
        let lhs = lhs.pop().unwrap_or_default();
        Ok(match rhs {
            Expr::Index(array, index) => StmtKind::Load { lhs, array, index: *index },
            rhs => StmtKind::Assign { lhs, rhs },
        })
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else { return None };
        BinOp::ALL.iter().copied().find(|op| op.symbol() == *s)
    }

    pub fn expr(&mut self) -> Result<Expr, FrontendError> {
        self.expr_prec(1)
    }

    fn expr_prec(&mut self, min: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop().filter(|op| op.precedence() >= min) {
            self.bump();
            let rhs = self.expr_prec(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        for op in [UnOp::BitNot, UnOp::Not, UnOp::Neg] {
            if self.eat_sym(op.symbol()) {
                return Ok(Expr::unary(op, self.unary()?));
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if let Tok::Num(_) = self.peek() {
            return Ok(Expr::Lit(self.number()?));
        }
        let name = self.ident().map_err(|_| self.error("expression"))?;
        if self.eat_sym("[") {
            let index = self.expr()?;
            self.expect_sym("]")?;
            return Ok(Expr::Index(name, Box::new(index)));
        }
        Ok(Expr::Var(name))
    }
}
