//! Constant-time security checked directly: run every secret against every public input.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::interp::{Machine, RunOptions, DEFAULT_FUEL};
use super::trace::{traces_prefix_equal, Trace, TraceComparison};
use super::value::Width;
use super::{InputValue, Inputs, SemanticsError};
use crate::ast::{Program, Security, VarKind};

#[derive(Debug, Clone)]
pub struct OracleLimits {
    /// Enumerate exhaustively when the total input bit count is at most this.
    pub exhaustive_bits: u32,
    /// Fail instead of sampling when enumeration would exceed `exhaustive_bits`.
    pub require_exhaustive: bool,
    /// Run budget for sampling mode.
    pub max_runs: u64,
    pub seed: u64,
    pub fuel: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            exhaustive_bits: 20,
            require_exhaustive: false,
            max_runs: 1_000_000,
            seed: 7,
            fuel: DEFAULT_FUEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub inputs1: Inputs,
    pub inputs2: Inputs,
    pub trace1: Trace,
    pub trace2: Trace,
    pub divergence: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    /// No violating pair found; `exhaustive` tells whether all pairs were covered.
    Secure {
        exhaustive: bool,
        complete_runs: u64,
    },
    Witness(Box<Witness>),
}

impl OracleVerdict {
    pub fn is_secure(&self) -> bool {
        matches!(self, OracleVerdict::Secure { .. })
    }
}

/// One w-bit input position: a scalar parameter or one array element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub param: String,
    pub element: Option<usize>,
}

/// Input cells of the entry procedure with the given annotation, in parameter order.
pub fn input_cells(p: &Program, security: Security) -> Vec<Cell> {
    let mut out = Vec::new();
    for param in p.inputs(security) {
        match param.kind {
            VarKind::Scalar => out.push(Cell { param: param.name.clone(), element: None }),
            VarKind::Array(n) => {
                out.extend((0..n as usize).map(|i| Cell { param: param.name.clone(), element: Some(i) }))
            }
        }
    }
    out
}

/// Builds an input binding from cell values; `values[i]` belongs to `cells[i]`.
fn bind(p: &Program, cells: &[&Cell], values: &[u64]) -> Inputs {
    let mut inputs = Inputs::new();
    for param in &p.entry_procedure().params {
        let v = match param.kind {
            VarKind::Scalar => InputValue::Scalar(0),
            VarKind::Array(n) => InputValue::Array(vec![0; n as usize]),
        };
        inputs.insert(param.name.clone(), v);
    }
    for (cell, &v) in cells.iter().zip(values) {
        match (inputs.get_mut(&cell.param), cell.element) {
            (Some(InputValue::Scalar(x)), None) => *x = v,
            (Some(InputValue::Array(xs)), Some(i)) => xs[i] = v,
            _ => {}
        }
    }
    inputs
}

/// Mixed-radix digits of `index`, most significant first, so numeric order is lexicographic order.
fn digits(mut index: u64, n: usize, w: Width) -> Vec<u64> {
    let mut out = vec![0; n];
    for d in out.iter_mut().rev() {
        *d = index & w.mask();
        index = if w.bits() == 64 { 0 } else { index >> w.bits() };
    }
    out
}

struct Space<'a> {
    p: &'a Program,
    machine: Machine,
    public: Vec<Cell>,
    secret: Vec<Cell>,
    opts: RunOptions,
}

impl Space<'_> {
    fn inputs(&self, pub_values: &[u64], sec_values: &[u64]) -> Inputs {
        let cells: Vec<&Cell> = self.public.iter().chain(&self.secret).collect();
        let values: Vec<u64> = pub_values.iter().chain(sec_values).copied().collect();
        bind(self.p, &cells, &values)
    }

    fn trace(&self, inputs: &Inputs) -> Result<Option<Trace>, SemanticsError> {
        let r = self.machine.run(inputs, &self.opts)?;
        Ok(r.is_complete().then_some(r.trace))
    }

    /// Compares every secret assignment for one public assignment against the first complete one.
    fn check_public<I: Iterator<Item = Vec<u64>>>(
        &self,
        pub_values: &[u64],
        secrets: I,
        runs: &mut u64,
    ) -> Result<Option<Witness>, SemanticsError> {
        let mut reference: Option<(Inputs, Trace)> = None;
        for sec in secrets {
            let inputs = self.inputs(pub_values, &sec);
            let Some(trace) = self.trace(&inputs)? else { continue };
            *runs += 1;
            match &reference {
                None => reference = Some((inputs, trace)),
                Some((ref_inputs, ref_trace)) => {
                    if let TraceComparison::MismatchAt(i) = traces_prefix_equal(ref_trace, &trace) {
                        return Ok(Some(Witness {
                            inputs1: ref_inputs.clone(),
                            inputs2: inputs,
                            trace1: ref_trace.clone(),
                            trace2: trace,
                            divergence: i,
                        }));
                    }
                }
            }
        }
        Ok(None)
    }
}

pub fn oracle_check_ct(p: &Program, width: Width, limits: &OracleLimits) -> Result<OracleVerdict, SemanticsError> {
    let space = Space {
        p,
        machine: Machine::new(p, width)?,
        public: input_cells(p, Security::Public),
        secret: input_cells(p, Security::Secret),
        opts: RunOptions::with_fuel(limits.fuel),
    };
    let bits = (space.public.len() + space.secret.len()) as u64 * u64::from(width.bits());
    if bits <= u64::from(limits.exhaustive_bits) {
        exhaustive(&space, width)
    } else if limits.require_exhaustive {
        Err(SemanticsError::CapExceeded { bits, cap: limits.exhaustive_bits })
    } else {
        sampled(&space, width, limits)
    }
}

fn exhaustive(space: &Space<'_>, w: Width) -> Result<OracleVerdict, SemanticsError> {
    let card = w.cardinality();
    let n_pub = space.public.len() as u32;
    let n_sec = space.secret.len() as u32;
    let pubs = card.pow(n_pub);
    let secs = card.pow(n_sec);
    let total = AtomicU64::new(0);
    let found = (0..pubs).into_par_iter().find_map_first(|pi| {
        let pub_values = digits(pi, n_pub as usize, w);
        let mut runs = 0;
        let secrets = (0..secs).map(|si| digits(si, n_sec as usize, w));
        let result = space.check_public(&pub_values, secrets, &mut runs);
        total.fetch_add(runs, Ordering::Relaxed);
        result.transpose()
    });
    if let Some(found) = found {
        return Ok(OracleVerdict::Witness(Box::new(found?)));
    }
    let total = total.into_inner();
    Ok(OracleVerdict::Secure { exhaustive: true, complete_runs: total })
}

fn sampled(space: &Space<'_>, w: Width, limits: &OracleLimits) -> Result<OracleVerdict, SemanticsError> {
    const SECRETS_PER_PUBLIC: u64 = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(limits.seed);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<u64> { (0..n).map(|_| rng.gen::<u64>() & w.mask()).collect() };
    let mut budget = limits.max_runs;
    let mut total = 0;
    while budget > 0 {
        let pub_values = draw(space.public.len(), &mut rng);
        let k = SECRETS_PER_PUBLIC.min(budget);
        budget -= k;
        let secrets: Vec<Vec<u64>> = (0..k).map(|_| draw(space.secret.len(), &mut rng)).collect();
        if let Some(found) = space.check_public(&pub_values, secrets.into_iter(), &mut total)? {
            return Ok(OracleVerdict::Witness(Box::new(found)));
        }
    }
    Ok(OracleVerdict::Secure { exhaustive: false, complete_runs: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load_program;

    #[test]
    fn one_bit_secret_branch_is_caught_at_event_zero() {
        let p = load_program("def main(sec k){ var t; t := k & 1; if t then skip; else skip; fi return; }").unwrap();
        let w = Width::custom(1).unwrap();
        let OracleVerdict::Witness(wit) = oracle_check_ct(&p, w, &OracleLimits::default()).unwrap() else {
            panic!("expected a witness")
        };
        assert_eq!(wit.inputs1["k"], InputValue::Scalar(0));
        assert_eq!(wit.inputs2["k"], InputValue::Scalar(1));
        assert_eq!(wit.divergence, 0);
        assert_eq!(traces_prefix_equal(&wit.trace1, &wit.trace2), TraceComparison::MismatchAt(wit.divergence));
    }

    #[test]
    fn mask_select_is_secure() {
        let p =
            load_program("def main(sec k, pub p){ var m, r; m := 0 - (p & 1); r := (k & m) | (p & ~m); return r; }")
                .unwrap();
        let v = oracle_check_ct(&p, Width::W4, &OracleLimits::default()).unwrap();
        assert!(matches!(v, OracleVerdict::Secure { exhaustive: true, .. }));
    }

    #[test]
    fn sampling_mode_is_deterministic() {
        let p = load_program("def main(sec k, pub p){ var t; t := k == p; if t then skip; fi return; }").unwrap();
        let limits = OracleLimits { max_runs: 10_000, ..OracleLimits::default() };
        let a = oracle_check_ct(&p, Width::new(16).unwrap(), &limits).unwrap();
        let b = oracle_check_ct(&p, Width::new(16).unwrap(), &limits).unwrap();
        assert_eq!(a, b);
        let strict = OracleLimits { require_exhaustive: true, ..limits };
        assert!(matches!(
            oracle_check_ct(&p, Width::new(16).unwrap(), &strict),
            Err(SemanticsError::CapExceeded { .. })
        ));
    }
}
