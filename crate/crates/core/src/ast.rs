//! Labeled abstract syntax shared by every pass.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Statement label. Labels are unique within a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Security {
    Public,
    Secret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Scalar,
    Array(u32),
}

impl VarKind {
    pub fn is_array(self) -> bool {
        matches!(self, VarKind::Array(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: VarKind,
    pub security: Option<Security>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decl {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub const ALL: [BinOp; 18] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::BitAnd,
        BinOp::BitOr,
        BinOp::BitXor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::BitOr => 3,
            BinOp::BitXor => 4,
            BinOp::BitAnd => 5,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 7,
            BinOp::Shl | BinOp::Shr => 8,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    BitNot,
    Not,
    Neg,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::BitNot => "~",
            UnOp::Not => "!",
            UnOp::Neg => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(u64),
    Var(String),
    /// Array read inside an expression; removed by normalization.
    Index(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn unary(op: UnOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Expr::Lit(_) | Expr::Var(_))
    }

    /// Flat means three-address: an atom, or one operator over atoms.
    pub fn is_flat(&self) -> bool {
        match self {
            Expr::Lit(_) | Expr::Var(_) => true,
            Expr::Index(..) => false,
            Expr::Unary(_, a) => a.is_atom(),
            Expr::Binary(_, a, b) => a.is_atom() && b.is_atom(),
        }
    }

    /// Variables read by the expression, arrays of `Index` nodes included.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => out.push(v),
            Expr::Index(a, i) => {
                out.push(a);
                i.collect_vars(out);
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Expr {
        match self {
            Expr::Lit(n) => Expr::Lit(*n),
            Expr::Var(v) => Expr::Var(f(v)),
            Expr::Index(a, i) => Expr::Index(f(a), Box::new(i.rename(f))),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.rename(f))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.rename(f)), Box::new(b.rename(f))),
        }
    }
}

/// Literal or variable; used for array indices and stored values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Lit(u64),
    Var(String),
}

impl Operand {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Lit(_) => None,
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            Operand::Lit(n) => Expr::Lit(*n),
            Operand::Var(v) => Expr::Var(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub label: Label,
    pub kind: StmtKind,
}

pub type Block = Vec<Stmt>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Skip,
    Assign {
        lhs: String,
        rhs: Expr,
    },
    /// `lhs := array[index]`
    Load {
        lhs: String,
        array: String,
        index: Expr,
    },
    /// `array[index] := value`
    Store {
        array: String,
        index: Expr,
        value: Expr,
    },
    Assert(Expr),
    Assume(Expr),
    If {
        cond: Expr,
        then_branch: Block,
        else_branch: Block,
    },
    While {
        cond: Expr,
        invariants: Vec<Expr>,
        body: Block,
    },
    Call {
        lhs: Vec<String>,
        callee: String,
        args: Vec<Expr>,
    },
}

impl Stmt {
    pub fn new(label: Label, kind: StmtKind) -> Stmt {
        Stmt { label, kind }
    }

    pub fn unlabeled(kind: StmtKind) -> Stmt {
        Stmt { label: Label(0), kind }
    }

    /// Scalar variables this statement (not its nested blocks) writes.
    pub fn scalar_defs(&self) -> Vec<&str> {
        match &self.kind {
            StmtKind::Assign { lhs, .. } | StmtKind::Load { lhs, .. } => vec![lhs],
            StmtKind::Call { lhs, .. } => lhs.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    /// Index operand of a load or store, as a variable name.
    pub fn index_var(&self) -> Option<&str> {
        match &self.kind {
            StmtKind::Load { index: Expr::Var(v), .. } | StmtKind::Store { index: Expr::Var(v), .. } => Some(v),
            _ => None,
        }
    }
}

/// Visits every statement in preorder, nested blocks included.
pub fn walk_block<'a>(block: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in block {
        f(s);
        match &s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                walk_block(then_branch, f);
                walk_block(else_branch, f);
            }
            StmtKind::While { body, .. } => walk_block(body, f),
            _ => {}
        }
    }
}

fn find_in(block: &[Stmt], label: Label) -> Option<&Stmt> {
    block.iter().find_map(|s| {
        if s.label == label {
            return Some(s);
        }
        match &s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                find_in(then_branch, label).or_else(|| find_in(else_branch, label))
            }
            StmtKind::While { body, .. } => find_in(body, label),
            _ => None,
        }
    })
}

pub fn walk_block_mut(block: &mut [Stmt], f: &mut impl FnMut(&mut Stmt)) {
    for s in block {
        f(s);
        match &mut s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                walk_block_mut(then_branch, f);
                walk_block_mut(else_branch, f);
            }
            StmtKind::While { body, .. } => walk_block_mut(body, f),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Procedure {
    pub name: String,
    pub params: Vec<Param>,
    pub locals: Vec<Decl>,
    pub body: Block,
    pub returns: Vec<String>,
}

impl Procedure {
    /// Kind of every parameter and local.
    pub fn scope(&self) -> BTreeMap<&str, VarKind> {
        self.params
            .iter()
            .map(|p| (p.name.as_str(), p.kind))
            .chain(self.locals.iter().map(|d| (d.name.as_str(), d.kind)))
            .collect()
    }

    pub fn kind_of(&self, name: &str) -> Option<VarKind> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.kind)
            .or_else(|| self.locals.iter().find(|d| d.name == name).map(|d| d.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub procedures: Vec<Procedure>,
    pub entry: String,
}

pub const ENTRY: &str = "main";

impl Program {
    pub fn procedure(&self, name: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.name == name)
    }

    pub fn entry_procedure(&self) -> &Procedure {
        self.procedure(&self.entry).expect("program has an entry procedure")
    }

    pub fn inputs(&self, security: Security) -> impl Iterator<Item = &Param> {
        self.entry_procedure().params.iter().filter(move |p| p.security == Some(security))
    }

    pub fn public_inputs(&self) -> impl Iterator<Item = &Param> {
        self.inputs(Security::Public)
    }

    pub fn secret_inputs(&self) -> impl Iterator<Item = &Param> {
        self.inputs(Security::Secret)
    }

    pub fn walk(&self, f: &mut impl FnMut(&Procedure, &Stmt)) {
        for p in &self.procedures {
            walk_block(&p.body, &mut |s| f(p, s));
        }
    }

    /// Statement with the given label, with its procedure.
    pub fn find(&self, label: Label) -> Option<(&Procedure, &Stmt)> {
        self.procedures.iter().find_map(|p| find_in(&p.body, label).map(|s| (p, s)))
    }

    pub fn statement_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _| n += 1);
        n
    }

    /// Reassigns labels 1, 2, ... in preorder across procedures.
    /// Returns the map from old to new labels.
    pub fn relabel(&mut self) -> BTreeMap<Label, Label> {
        let mut next = 1;
        let mut map = BTreeMap::new();
        for p in &mut self.procedures {
            walk_block_mut(&mut p.body, &mut |s| {
                map.insert(s.label, Label(next));
                s.label = Label(next);
                next += 1;
            });
        }
        map
    }

    pub fn relabeled(&self) -> Program {
        let mut p = self.clone();
        p.relabel();
        p
    }

    pub fn max_label(&self) -> Label {
        let mut m = Label(0);
        self.walk(&mut |_, s| m = m.max(s.label));
        m
    }
}
