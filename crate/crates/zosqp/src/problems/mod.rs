//! Benchmark problems.
//!
//! Two families: a seeded synthetic nonlinear program with a dense quadratic
//! objective, one cubic-perturbed equality, and coordinate-wise quadratic
//! inequalities; and a structure-preserving power network dispatch problem
//! whose transient angle-separation constraint is evaluated by simulating a
//! faulted swing-equation trajectory. Both implement the black-box problem
//! interface; the synthetic family also provides analytic gradients for
//! exact-model runs and gradient-based diagnostics.

pub mod power;
pub mod synthetic;
