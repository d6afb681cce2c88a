//! Zeroth-order random-subspace SQP.
//!
//! The solver minimizes a black-box objective under black-box equality and
//! inequality constraints using only function evaluations. Each iteration
//! samples a low-dimensional subspace, builds finite-difference estimates of
//! the objective and constraint derivatives restricted to that subspace,
//! solves a small proximal QP for the reduced step and its multipliers, and
//! either takes the lifted step (optionally after an l1-merit line search) or
//! rejects the subspace and resamples when the multipliers are out of bounds.
//!
//! Layout:
//! - [`linalg`]: dense vectors/matrices, thin QR, saddle-point solves
//! - [`oracle`]: the black-box problem interface and evaluation counting
//! - [`subspace`]: deterministic RNG and Haar-distributed orthonormal bases
//! - [`estimator`]: two-point finite-difference reduced models
//! - [`qp`]: the reduced proximal QP (active set + brute-force reference)
//! - [`solver`]: the outer loop, step acceptance, Armijo line search, traces
//! - [`metrics`]: KKT gap, constraint violations, trace formatting
//! - [`problems`]: benchmark problems (synthetic NLP, power network dispatch)
//! - [`verify`]: self-contained verification suites used by tests and the CLI

pub mod estimator;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod problems;
pub mod qp;
pub mod solver;
pub mod subspace;
pub mod verify;
