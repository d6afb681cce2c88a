//! Reduced-model construction.
//!
//! Given a subspace basis U, the two-point estimator queries the oracle at
//! x +/- r u_j for every column u_j and once at x itself — exactly 2d + 1
//! full evaluations — and assembles central-difference estimates of the
//! objective gradient and constraint Jacobians restricted to the subspace:
//!
//!   c_j ~ u_j . grad f,   A[:,j] ~ J_h u_j,   B[:,j] ~ J_g u_j.
//!
//! Central differences are exact on quadratics and carry an O(r^2) bias on
//! smooth functions. The exact-model variant evaluates analytic Jacobians
//! instead and is used to isolate subspace effects from estimation noise.

use crate::linalg::{dot, Matrix};
use crate::oracle::{Oracle, OracleError};
use crate::subspace::SubspaceBasis;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("sampling radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("proximal weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Subspace-restricted model of the problem at a center point x:
/// linearized objective and constraints in the reduced coordinates alpha,
/// together with the center values and the proximal weight of the step
/// subproblem
///
///   minimize  <c_hat, alpha> + (prox_weight/2) ||alpha||^2
///   subject to  h + A_hat alpha = 0,   g + B_hat alpha <= 0.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// Estimated reduced objective gradient (length d).
    pub c_hat: Vec<f64>,
    /// Estimated reduced equality Jacobian (m_eq x d).
    pub a_hat: Matrix,
    /// Estimated reduced inequality Jacobian (m_ineq x d).
    pub b_hat: Matrix,
    /// Objective at the center.
    pub f: f64,
    /// Equality residuals at the center.
    pub h: Vec<f64>,
    /// Inequality values at the center.
    pub g: Vec<f64>,
    /// Proximal weight of the step subproblem.
    pub prox_weight: f64,
    /// Sampling radius used (0 for exact models).
    pub radius: f64,
}

impl ReducedModel {
    pub fn dim(&self) -> usize {
        self.c_hat.len()
    }

    pub fn m_eq(&self) -> usize {
        self.a_hat.rows()
    }

    pub fn m_ineq(&self) -> usize {
        self.b_hat.rows()
    }

    /// Subproblem objective <c, alpha> + (L/2)||alpha||^2.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        dot(&self.c_hat, alpha) + 0.5 * self.prox_weight * dot(alpha, alpha)
    }

    /// Linearized equality residuals h + A alpha.
    pub fn eq_residual(&self, alpha: &[f64]) -> Vec<f64> {
        let mut r = self.a_hat.matvec(alpha);
        for (ri, hi) in r.iter_mut().zip(&self.h) {
            *ri += hi;
        }
        r
    }

    /// Linearized inequality values g + B alpha (feasible when <= 0).
    pub fn ineq_value(&self, alpha: &[f64]) -> Vec<f64> {
        let mut r = self.b_hat.matvec(alpha);
        for (ri, gi) in r.iter_mut().zip(&self.g) {
            *ri += gi;
        }
        r
    }
}

fn check_weight(l: f64) -> Result<(), EstimatorError> {
    if !(l.is_finite() && l > 0.0) {
        return Err(EstimatorError::InvalidWeight(l));
    }
    Ok(())
}

/// Build a reduced model by two-point central differences along each basis
/// direction. Costs exactly 2 d + 1 full oracle evaluations: the two offset
/// points per direction first, the center last.
pub fn build_reduced_model(
    oracle: &Oracle,
    x: &[f64],
    basis: &SubspaceBasis,
    radius: f64,
    prox_weight: f64,
) -> Result<ReducedModel, EstimatorError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(EstimatorError::InvalidRadius(radius));
    }
    check_weight(prox_weight)?;
    let dims = oracle.dims();
    let d = basis.dim();
    let mut c_hat = vec![0.0; d];
    let mut a_hat = Matrix::zeros(dims.m_eq, d);
    let mut b_hat = Matrix::zeros(dims.m_ineq, d);

    let mut plus = vec![0.0; dims.n];
    let mut minus = vec![0.0; dims.n];
    for j in 0..d {
        let u = basis.direction(j);
        for i in 0..dims.n {
            plus[i] = x[i] + radius * u[i];
            minus[i] = x[i] - radius * u[i];
        }
        let ep = oracle.eval(&plus)?;
        let em = oracle.eval(&minus)?;
        let inv = 1.0 / (2.0 * radius);
        c_hat[j] = (ep.f - em.f) * inv;
        for i in 0..dims.m_eq {
            a_hat.set(i, j, (ep.h[i] - em.h[i]) * inv);
        }
        for i in 0..dims.m_ineq {
            b_hat.set(i, j, (ep.g[i] - em.g[i]) * inv);
        }
    }
    let center = oracle.eval(x)?;

    Ok(ReducedModel {
        c_hat,
        a_hat,
        b_hat,
        f: center.f,
        h: center.h,
        g: center.g,
        prox_weight,
        radius,
    })
}

/// Build the reduced model from analytic gradients: c = U^T grad f,
/// A = J_h U, B = J_g U. Costs one full evaluation (the center) plus one
/// gradient query; the recorded radius is 0.
pub fn build_exact_model(
    oracle: &Oracle,
    x: &[f64],
    basis: &SubspaceBasis,
    prox_weight: f64,
) -> Result<ReducedModel, EstimatorError> {
    check_weight(prox_weight)?;
    let info = oracle.gradients(x)?;
    let center = oracle.eval(x)?;
    let u = basis.matrix();
    let c_hat = basis.project(&info.grad_f);
    let a_hat = info.jac_h.matmul(u);
    let b_hat = info.jac_g.matmul(u);

    Ok(ReducedModel {
        c_hat,
        a_hat,
        b_hat,
        f: center.f,
        h: center.h,
        g: center.g,
        prox_weight,
        radius: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, sub};
    use crate::oracle::{BlackBox, Evaluation, GradientInfo, ProblemDims};
    use crate::subspace::{sample_subspace, RngState};

    /// f = (1/2) x^T diag(w) x + p.x, h = a.x - 1, g = x_0^2 - 4 — all
    /// quadratic or affine, so central differences are exact.
    struct Quad {
        w: Vec<f64>,
        p: Vec<f64>,
        a: Vec<f64>,
    }

    impl Quad {
        fn new(n: usize) -> Self {
            Quad {
                w: (0..n).map(|i| 1.0 + i as f64).collect(),
                p: (0..n).map(|i| (i as f64 * 0.7).sin()).collect(),
                a: (0..n).map(|i| 1.0 + 0.1 * i as f64).collect(),
            }
        }
    }

    impl BlackBox for Quad {
        fn dims(&self) -> ProblemDims {
            ProblemDims { n: self.w.len(), m_eq: 1, m_ineq: 1 }
        }

        fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
            let f = 0.5 * x.iter().zip(&self.w).map(|(xi, wi)| wi * xi * xi).sum::<f64>()
                + dot(&self.p, x);
            Ok(Evaluation {
                f,
                h: vec![dot(&self.a, x) - 1.0],
                g: vec![x[0] * x[0] - 4.0],
            })
        }

        fn gradients(&self, x: &[f64]) -> Option<GradientInfo> {
            let n = self.w.len();
            let grad_f: Vec<f64> =
                (0..n).map(|i| self.w[i] * x[i] + self.p[i]).collect();
            let jac_h = Matrix::from_rows(&[self.a.clone()]);
            let mut jac_g = Matrix::zeros(1, n);
            jac_g.set(0, 0, 2.0 * x[0]);
            Some(GradientInfo { grad_f, jac_h, jac_g })
        }

        fn provides_gradients(&self) -> bool {
            true
        }
    }

    #[test]
    fn two_point_model_is_exact_on_quadratics() {
        let n = 12;
        let oracle = Oracle::new(Box::new(Quad::new(n)));
        let mut rng = RngState::new(11);
        let basis = sample_subspace(n, 4, &mut rng).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 0.3 * (i as f64).cos()).collect();

        let model = build_reduced_model(&oracle, &x, &basis, 1e-3, 1.0).unwrap();
        let exact = build_exact_model(&oracle, &x, &basis, 1.0).unwrap();

        assert!(norm2(&sub(&model.c_hat, &exact.c_hat)) <= 1e-10);
        for j in 0..4 {
            assert!((model.a_hat.get(0, j) - exact.a_hat.get(0, j)).abs() <= 1e-10);
            assert!((model.b_hat.get(0, j) - exact.b_hat.get(0, j)).abs() <= 1e-10);
        }
        assert_eq!(model.f, exact.f);
        assert_eq!(model.h, exact.h);
        assert_eq!(model.g, exact.g);
        assert_eq!(exact.radius, 0.0);
        assert_eq!(model.radius, 1e-3);
    }

    #[test]
    fn two_point_model_costs_exactly_2d_plus_1_evaluations() {
        let n = 10;
        let d = 3;
        let oracle = Oracle::new(Box::new(Quad::new(n)));
        let mut rng = RngState::new(5);
        let basis = sample_subspace(n, d, &mut rng).unwrap();
        let x = vec![0.0; n];
        build_reduced_model(&oracle, &x, &basis, 1e-4, 1.0).unwrap();
        assert_eq!(oracle.counter().n_full, (2 * d + 1) as u64);
        // 2d offset points plus the center, all distinct.
        assert_eq!(oracle.counter().n_points, (2 * d + 1) as u64);
    }

    #[test]
    fn rejects_bad_radius_and_weight() {
        let oracle = Oracle::new(Box::new(Quad::new(4)));
        let mut rng = RngState::new(1);
        let basis = sample_subspace(4, 2, &mut rng).unwrap();
        let x = vec![0.0; 4];
        assert!(matches!(
            build_reduced_model(&oracle, &x, &basis, 0.0, 1.0),
            Err(EstimatorError::InvalidRadius(_))
        ));
        assert!(matches!(
            build_reduced_model(&oracle, &x, &basis, -1e-3, 1.0),
            Err(EstimatorError::InvalidRadius(_))
        ));
        assert!(matches!(
            build_reduced_model(&oracle, &x, &basis, 1e-3, 0.0),
            Err(EstimatorError::InvalidWeight(_))
        ));
        assert_eq!(oracle.counter().n_full, 0);
    }

    #[test]
    fn model_helpers_evaluate_the_subproblem() {
        let model = ReducedModel {
            c_hat: vec![1.0, -2.0],
            a_hat: Matrix::from_rows(&[vec![1.0, 0.0]]),
            b_hat: Matrix::from_rows(&[vec![0.0, 1.0]]),
            f: 3.0,
            h: vec![0.5],
            g: vec![-1.0],
            prox_weight: 2.0,
            radius: 1e-4,
        };
        let alpha = [1.0, 1.0];
        assert!((model.objective(&alpha) - (1.0 - 2.0 + 2.0)).abs() < 1e-15);
        assert_eq!(model.eq_residual(&alpha), vec![1.5]);
        assert_eq!(model.ineq_value(&alpha), vec![0.0]);
    }

    #[test]
    fn difference_bias_shrinks_quadratically_on_smooth_functions() {
        // f with a cubic term: the central-difference error is exactly
        // proportional to r^2, so halving r four-folds the error.
        struct Cubic;
        impl BlackBox for Cubic {
            fn dims(&self) -> ProblemDims {
                ProblemDims { n: 3, m_eq: 0, m_ineq: 0 }
            }
            fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
                Ok(Evaluation { f: x.iter().map(|v| v.powi(3)).sum(), h: vec![], g: vec![] })
            }
            fn gradients(&self, x: &[f64]) -> Option<GradientInfo> {
                Some(GradientInfo {
                    grad_f: x.iter().map(|v| 3.0 * v * v).collect(),
                    jac_h: Matrix::zeros(0, 3),
                    jac_g: Matrix::zeros(0, 3),
                })
            }
            fn provides_gradients(&self) -> bool {
                true
            }
        }

        let oracle = Oracle::new(Box::new(Cubic));
        let mut rng = RngState::new(21);
        let basis = sample_subspace(3, 2, &mut rng).unwrap();
        let x = vec![0.4, -0.2, 0.9];
        let exact = build_exact_model(&oracle, &x, &basis, 1.0).unwrap();

        let err = |r: f64| {
            let m = build_reduced_model(&oracle, &x, &basis, r, 1.0).unwrap();
            norm2(&sub(&m.c_hat, &exact.c_hat))
        };
        let e1 = err(1e-2);
        let e2 = err(5e-3);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.05, "error ratio {ratio}");
    }
}
