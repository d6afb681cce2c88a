//! Black-box problem interface and evaluation accounting.
//!
//! A problem exposes a single zeroth-order query returning the objective and
//! all constraint values at a point; analytic gradients are optional and are
//! never consumed by the solver itself (they feed exact-model mode and the
//! reporting of KKT gaps). The [`Oracle`] wrapper owns the counting: every
//! query the solver pays for is tallied separately from diagnostic queries
//! made while computing metrics, so evaluation budgets in traces are exact.

use crate::linalg::Matrix;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("query has dimension {got}, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("problem returned {count} {kind} values, expected {expected}")]
    OutputShapeMismatch { kind: &'static str, expected: usize, count: usize },
    #[error("oracle returned a non-finite {which} value at the query point")]
    NonFiniteOutput { which: &'static str },
    #[error("problem does not provide analytic gradients")]
    GradientsUnsupported,
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

/// Problem dimensions: ambient variables and constraint counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub n: usize,
    pub m_eq: usize,
    pub m_ineq: usize,
}

/// One zeroth-order query result: objective, equality residuals h(x) (target
/// 0), inequality values g(x) (target <= 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub f: f64,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
}

/// Analytic first-order information, when a problem can supply it.
#[derive(Debug, Clone)]
pub struct GradientInfo {
    pub grad_f: Vec<f64>,
    /// m_eq x n Jacobian of the equality constraints.
    pub jac_h: Matrix,
    /// m_ineq x n Jacobian of the inequality constraints.
    pub jac_g: Matrix,
}

/// A derivative-free constrained problem.
pub trait BlackBox {
    fn dims(&self) -> ProblemDims;

    /// Evaluate objective and constraints at `x` (length n, already checked).
    fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError>;

    /// Analytic gradients, if available. The default is a gradient-free
    /// problem.
    fn gradients(&self, _x: &[f64]) -> Option<GradientInfo> {
        None
    }

    fn provides_gradients(&self) -> bool {
        false
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dims().n]
    }

    fn name(&self) -> &'static str {
        "problem"
    }
}

/// Snapshot of the solver-facing evaluation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounter {
    /// Full (f, h, g) evaluations charged to the solver.
    pub n_full: u64,
    /// Distinct points queried (by exact bit pattern), across all counters.
    pub n_points: u64,
}

/// Counting wrapper around a black-box problem.
///
/// All counters use atomics so a shared oracle can be queried concurrently;
/// the distinct-point set sits behind a mutex.
pub struct Oracle {
    problem: Box<dyn BlackBox + Send + Sync>,
    solver_evals: AtomicU64,
    metrics_evals: AtomicU64,
    gradient_calls: AtomicU64,
    points: Mutex<HashSet<u64>>,
}

impl Oracle {
    pub fn new(problem: Box<dyn BlackBox + Send + Sync>) -> Self {
        Oracle {
            problem,
            solver_evals: AtomicU64::new(0),
            metrics_evals: AtomicU64::new(0),
            gradient_calls: AtomicU64::new(0),
            points: Mutex::new(HashSet::new()),
        }
    }

    pub fn dims(&self) -> ProblemDims {
        self.problem.dims()
    }

    pub fn initial_point(&self) -> Vec<f64> {
        self.problem.initial_point()
    }

    pub fn problem_name(&self) -> &'static str {
        self.problem.name()
    }

    pub fn provides_gradients(&self) -> bool {
        self.problem.provides_gradients()
    }

    /// Solver-facing evaluation: counted against the zeroth-order budget.
    pub fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
        let out = self.checked_eval(x)?;
        self.solver_evals.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    /// Diagnostic evaluation (KKT gaps, finite-difference reference
    /// gradients): counted separately so it never pollutes the solver budget.
    pub fn eval_for_metrics(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
        let out = self.checked_eval(x)?;
        self.metrics_evals.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    fn checked_eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
        let dims = self.dims();
        if x.len() != dims.n {
            return Err(OracleError::DimensionMismatch { expected: dims.n, got: x.len() });
        }
        let out = self.problem.eval(x)?;
        if out.h.len() != dims.m_eq {
            return Err(OracleError::OutputShapeMismatch {
                kind: "equality",
                expected: dims.m_eq,
                count: out.h.len(),
            });
        }
        if out.g.len() != dims.m_ineq {
            return Err(OracleError::OutputShapeMismatch {
                kind: "inequality",
                expected: dims.m_ineq,
                count: out.g.len(),
            });
        }
        if !out.f.is_finite() {
            return Err(OracleError::NonFiniteOutput { which: "objective" });
        }
        if out.h.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFiniteOutput { which: "equality constraint" });
        }
        if out.g.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFiniteOutput { which: "inequality constraint" });
        }
        self.record_point(x);
        Ok(out)
    }

    /// Analytic gradients; errors when the problem does not provide them.
    pub fn gradients(&self, x: &[f64]) -> Result<GradientInfo, OracleError> {
        let dims = self.dims();
        if x.len() != dims.n {
            return Err(OracleError::DimensionMismatch { expected: dims.n, got: x.len() });
        }
        match self.problem.gradients(x) {
            Some(info) => {
                self.gradient_calls.fetch_add(1, Ordering::Relaxed);
                Ok(info)
            }
            None => Err(OracleError::GradientsUnsupported),
        }
    }

    fn record_point(&self, x: &[f64]) {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for v in x {
            v.to_bits().hash(&mut hasher);
        }
        self.points.lock().unwrap().insert(hasher.finish());
    }

    /// Counters charged to the solver's zeroth-order budget.
    pub fn counter(&self) -> EvalCounter {
        EvalCounter {
            n_full: self.solver_evals.load(Ordering::Relaxed),
            n_points: self.points.lock().unwrap().len() as u64,
        }
    }

    pub fn metrics_evals(&self) -> u64 {
        self.metrics_evals.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> u64 {
        self.gradient_calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f = ||x||^2, h = sum(x) - 1, g = (x_0 - 1, -x_0 - 1).
    struct Toy;

    impl BlackBox for Toy {
        fn dims(&self) -> ProblemDims {
            ProblemDims { n: 3, m_eq: 1, m_ineq: 2 }
        }

        fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
            Ok(Evaluation {
                f: x.iter().map(|v| v * v).sum(),
                h: vec![x.iter().sum::<f64>() - 1.0],
                g: vec![x[0] - 1.0, -x[0] - 1.0],
            })
        }
    }

    struct NanProblem;

    impl BlackBox for NanProblem {
        fn dims(&self) -> ProblemDims {
            ProblemDims { n: 1, m_eq: 0, m_ineq: 0 }
        }

        fn eval(&self, _x: &[f64]) -> Result<Evaluation, OracleError> {
            Ok(Evaluation { f: f64::NAN, h: vec![], g: vec![] })
        }
    }

    #[test]
    fn counts_full_evaluations_and_distinct_points() {
        let oracle = Oracle::new(Box::new(Toy));
        let a = [0.0, 0.0, 0.0];
        let b = [1.0, 2.0, 3.0];
        oracle.eval(&a).unwrap();
        oracle.eval(&a).unwrap();
        oracle.eval(&b).unwrap();
        let c = oracle.counter();
        assert_eq!(c.n_full, 3);
        assert_eq!(c.n_points, 2);
    }

    #[test]
    fn metrics_evaluations_do_not_touch_the_solver_budget() {
        let oracle = Oracle::new(Box::new(Toy));
        oracle.eval(&[0.0, 0.0, 0.0]).unwrap();
        oracle.eval_for_metrics(&[0.5, 0.5, 0.5]).unwrap();
        oracle.eval_for_metrics(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(oracle.counter().n_full, 1);
        assert_eq!(oracle.metrics_evals(), 2);
        // Distinct points still cover both kinds of query.
        assert_eq!(oracle.counter().n_points, 2);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let oracle = Oracle::new(Box::new(Toy));
        match oracle.eval(&[1.0, 2.0]) {
            Err(OracleError::DimensionMismatch { expected: 3, got: 2 }) => {}
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
        // Failed queries are not charged.
        assert_eq!(oracle.counter().n_full, 0);
    }

    #[test]
    fn rejects_non_finite_outputs() {
        let oracle = Oracle::new(Box::new(NanProblem));
        match oracle.eval(&[0.0]) {
            Err(OracleError::NonFiniteOutput { which: "objective" }) => {}
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn gradient_free_problems_report_unsupported() {
        let oracle = Oracle::new(Box::new(Toy));
        assert!(!oracle.provides_gradients());
        match oracle.gradients(&[0.0, 0.0, 0.0]) {
            Err(OracleError::GradientsUnsupported) => {}
            other => panic!("expected unsupported, got {other:?}"),
        }
    }

    #[test]
    fn evaluation_values_are_passed_through() {
        let oracle = Oracle::new(Box::new(Toy));
        let out = oracle.eval(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.f, 1.0);
        assert_eq!(out.h, vec![0.0]);
        assert_eq!(out.g, vec![0.0, -2.0]);
    }
}
