//! Synthetic constrained nonlinear program.
//!
//! Objective: f(x) = (1/2) x^T Q x + p^T x with Q = M^T M / n + I for a
//! seeded standard-normal M (positive definite by construction) and seeded
//! standard-normal p. One nonlinear equality h(x) = sum_i x_i +
//! 0.1 sum_i x_i^3 - 1 and m_ineq coordinate inequalities g_i(x) =
//! x_i^2 - 0.5. The instance is a pure function of (n, m_ineq, seed).

use crate::linalg::{dot, Matrix};
use crate::oracle::{BlackBox, Evaluation, GradientInfo, OracleError, ProblemDims};
use crate::solver::{Schedule, SolverConfig, StepMode};
use crate::subspace::RngState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticNlpSpec {
    pub n: usize,
    pub m_ineq: usize,
    pub seed: u64,
}

impl Default for SyntheticNlpSpec {
    fn default() -> Self {
        SyntheticNlpSpec { n: 100, m_ineq: 10, seed: 7 }
    }
}

pub struct SyntheticNlp {
    q: Matrix,
    p: Vec<f64>,
    m_ineq: usize,
}

/// Instantiate the problem data from its spec. Draw order is fixed — the
/// rows of M first, then p — so instances are reproducible byte for byte.
pub fn make_synthetic_nlp(spec: &SyntheticNlpSpec) -> SyntheticNlp {
    assert!(spec.n > 0, "dimension must be positive");
    assert!(spec.m_ineq <= spec.n, "at most one inequality per coordinate");
    let n = spec.n;
    let mut rng = RngState::new(spec.seed);
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        rng.fill_normal(m.row_mut(i));
    }
    let mut p = vec![0.0; n];
    rng.fill_normal(&mut p);

    // Q = M^T M / n + I.
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..n {
                s += m.get(k, i) * m.get(k, j);
            }
            s /= n as f64;
            if i == j {
                s += 1.0;
            }
            q.set(i, j, s);
            q.set(j, i, s);
        }
    }
    SyntheticNlp { q, p, m_ineq: spec.m_ineq }
}

impl SyntheticNlp {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }
}

impl BlackBox for SyntheticNlp {
    fn dims(&self) -> ProblemDims {
        ProblemDims { n: self.p.len(), m_eq: 1, m_ineq: self.m_ineq }
    }

    fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
        let qx = self.q.matvec(x);
        let f = 0.5 * dot(x, &qx) + dot(&self.p, x);
        let h = x.iter().map(|v| v + 0.1 * v * v * v).sum::<f64>() - 1.0;
        let g = (0..self.m_ineq).map(|i| x[i] * x[i] - 0.5).collect();
        Ok(Evaluation { f, h: vec![h], g })
    }

    fn gradients(&self, x: &[f64]) -> Option<GradientInfo> {
        let n = x.len();
        let mut grad_f = self.q.matvec(x);
        for (gi, pi) in grad_f.iter_mut().zip(&self.p) {
            *gi += pi;
        }
        let jac_h = Matrix::from_fn(1, n, |_, j| 1.0 + 0.3 * x[j] * x[j]);
        let mut jac_g = Matrix::zeros(self.m_ineq, n);
        for i in 0..self.m_ineq {
            jac_g.set(i, i, 2.0 * x[i]);
        }
        Some(GradientInfo { grad_f, jac_h, jac_g })
    }

    fn provides_gradients(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str {
        "synthetic-nlp"
    }
}

/// Solver settings for the synthetic benchmark runs: d = 10, L = 10,
/// two-point models over T = 2000 iterations at seed 7. The fixed step
/// eta = 0.5 is sized so the KKT gap contracts by well over two orders of
/// magnitude within the horizon; the line-search variant starts each Armijo
/// ladder at 1 and ignores the step schedule.
pub fn benchmark_config(mode: StepMode) -> SolverConfig {
    SolverConfig {
        subspace_dim: 10,
        prox_schedule: Schedule::Constant(10.0),
        step_schedule: Schedule::Constant(0.5),
        iterations: 2000,
        seed: 7,
        mode,
        ..SolverConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use crate::metrics;
    use crate::oracle::Oracle;

    /// Plain Cholesky; succeeds iff the matrix is positive definite.
    fn cholesky_ok(a: &Matrix) -> bool {
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return false;
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    l.set(i, j, s / l.get(j, j));
                }
            }
        }
        true
    }

    #[test]
    fn q_is_symmetric_positive_definite() {
        let nlp = make_synthetic_nlp(&SyntheticNlpSpec { n: 40, m_ineq: 5, seed: 3 });
        let q = nlp.q();
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(q.get(i, j), q.get(j, i));
            }
        }
        assert!(cholesky_ok(q));
    }

    #[test]
    fn instances_are_reproducible_and_seed_sensitive() {
        let spec = SyntheticNlpSpec { n: 15, m_ineq: 4, seed: 9 };
        let a = make_synthetic_nlp(&spec);
        let b = make_synthetic_nlp(&spec);
        assert_eq!(a.q(), b.q());
        assert_eq!(a.p(), b.p());
        let c = make_synthetic_nlp(&SyntheticNlpSpec { seed: 10, ..spec });
        assert_ne!(a.p(), c.p());
    }

    #[test]
    fn constraint_values_match_their_definitions() {
        let nlp = make_synthetic_nlp(&SyntheticNlpSpec { n: 4, m_ineq: 2, seed: 1 });
        let x = [1.0, -1.0, 2.0, 0.0];
        let out = nlp.eval(&x).unwrap();
        // sum x = 2, 0.1 sum x^3 = 0.1 * (1 - 1 + 8) = 0.8, minus 1.
        assert!((out.h[0] - 1.8).abs() < 1e-12);
        assert_eq!(out.g, vec![0.5, 0.5]);
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let spec = SyntheticNlpSpec { n: 12, m_ineq: 3, seed: 21 };
        let oracle = Oracle::new(Box::new(make_synthetic_nlp(&spec)));
        let mut rng = RngState::new(100);
        for _ in 0..20 {
            let x: Vec<f64> = (0..12).map(|_| 0.5 * rng.next_normal()).collect();
            let exact = oracle.gradients(&x).unwrap();
            let fd = metrics::fd_gradients(&oracle, &x, 1e-6).unwrap();
            let scale = norm2(&exact.grad_f).max(1.0);
            let mut dev: f64 = 0.0;
            for (a, b) in exact.grad_f.iter().zip(&fd.grad_f) {
                dev = dev.max((a - b).abs());
            }
            for j in 0..12 {
                dev = dev.max((exact.jac_h.get(0, j) - fd.jac_h.get(0, j)).abs());
            }
            for i in 0..3 {
                for j in 0..12 {
                    dev = dev.max((exact.jac_g.get(i, j) - fd.jac_g.get(i, j)).abs());
                }
            }
            assert!(dev / scale <= 1e-5, "gradient deviation {dev:.3e}");
        }
    }

    #[test]
    fn initial_point_is_the_origin() {
        let nlp = make_synthetic_nlp(&SyntheticNlpSpec { n: 6, m_ineq: 2, seed: 2 });
        assert_eq!(nlp.initial_point(), vec![0.0; 6]);
        // Origin violates the equality (h = -1) and satisfies the
        // inequalities strictly (g = -0.5).
        let out = nlp.eval(&[0.0; 6]).unwrap();
        assert_eq!(out.h[0], -1.0);
        assert!(out.g.iter().all(|&v| v == -0.5));
    }

    #[test]
    fn benchmark_config_validates_against_the_problem() {
        let n = SyntheticNlpSpec::default().n;
        benchmark_config(StepMode::FixedStep).validate(n).unwrap();
        benchmark_config(StepMode::LineSearch).validate(n).unwrap();
    }
}
