//! Constant-time verification for a small While language.
//!
//! The pipeline runs a sparse taint analysis, then a taint-directed
//! semi-cross-product that tracks taint precisely, then a taint-directed
//! self-composition that compares two runs directly.

pub mod ast;
pub mod corpus;
pub mod frontend;
pub mod pipeline;
pub mod preanalysis;
pub mod product;
pub mod semantics;
pub mod taint;
pub mod verifier;
