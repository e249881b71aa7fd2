use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::{BinOp, UnOp};

/// Machine word width in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Width(u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported width {0}; expected one of 4, 8, 16, 32, 64")]
pub struct WidthError(pub u32);

impl Width {
    pub const SUPPORTED: [u32; 5] = [4, 8, 16, 32, 64];
    pub const W4: Width = Width(4);
    pub const W8: Width = Width(8);

    pub fn new(bits: u32) -> Result<Width, WidthError> {
        if Self::SUPPORTED.contains(&bits) {
            Ok(Width(bits))
        } else {
            Err(WidthError(bits))
        }
    }

    /// Any width from 1 to 64; used by tests that want tiny state spaces.
    pub fn custom(bits: u32) -> Result<Width, WidthError> {
        if (1..=64).contains(&bits) {
            Ok(Width(bits))
        } else {
            Err(WidthError(bits))
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn mask(self) -> u64 {
        if self.0 == 64 {
            u64::MAX
        } else {
            (1u64 << self.0) - 1
        }
    }

    pub fn truncate(self, v: u64) -> u64 {
        v & self.mask()
    }

    /// Number of distinct values, saturating at `u64::MAX`.
    pub fn cardinality(self) -> u64 {
        if self.0 == 64 {
            u64::MAX
        } else {
            1u64 << self.0
        }
    }
}

impl Default for Width {
    fn default() -> Self {
        Width::W8
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Width {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: u32 = s.parse().map_err(|_| format!("invalid width `{s}`"))?;
        Width::new(bits).map_err(|e| e.to_string())
    }
}

impl TryFrom<u32> for Width {
    type Error = WidthError;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        Width::custom(v)
    }
}

impl From<Width> for u32 {
    fn from(w: Width) -> u32 {
        w.0
    }
}

/// Result of applying a binary operator; `None` on division by zero.
pub fn eval_binop(op: BinOp, a: u64, b: u64, w: Width) -> Option<u64> {
    let m = w.mask();
    let (a, b) = (a & m, b & m);
    let bit = |c: bool| u64::from(c);
    let shift = |b: u64| (b % u64::from(w.bits())) as u32;
    let v = match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => a.checked_div(b)?,
        BinOp::Rem => a.checked_rem(b)?,
        BinOp::BitAnd => a & b,
        BinOp::BitOr => a | b,
        BinOp::BitXor => a ^ b,
        BinOp::Shl => a << shift(b),
        BinOp::Shr => a >> shift(b),
        BinOp::Eq => bit(a == b),
        BinOp::Ne => bit(a != b),
        BinOp::Lt => bit(a < b),
        BinOp::Le => bit(a <= b),
        BinOp::Gt => bit(a > b),
        BinOp::Ge => bit(a >= b),
        BinOp::And => bit(a != 0 && b != 0),
        BinOp::Or => bit(a != 0 || b != 0),
    };
    Some(v & m)
}

pub fn eval_unop(op: UnOp, a: u64, w: Width) -> u64 {
    let m = w.mask();
    match op {
        UnOp::BitNot => !a & m,
        UnOp::Not => u64::from(a & m == 0),
        UnOp::Neg => a.wrapping_neg() & m,
    }
}
