//! Solution-quality metrics.
//!
//! The stationarity-based KKT gap, infinity-norm constraint violations, and
//! the central-difference reference gradients used to report gaps for
//! problems without analytic derivatives. Reference gradients are charged to
//! the oracle's metrics counter, never to the solver budget.

use crate::linalg::{axpy, norm2, Matrix};
use crate::oracle::{Evaluation, GradientInfo, Oracle, OracleError};

/// (||h||_inf, ||max(g, 0)||_inf): equality and inequality violation.
pub fn violations(eval: &Evaluation) -> (f64, f64) {
    let vh = eval.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let vg = eval.g.iter().fold(0.0f64, |m, v| m.max(*v));
    (vh, vg.max(0.0))
}

/// KKT gap at a point with candidate multipliers:
///
///   max( ||grad f + J_h^T lambda + J_g^T mu||_2,
///        ||h||_inf, ||max(g, 0)||_inf, ||mu . g||_inf )
///
/// with mu clamped to be nonnegative before use so that a slightly negative
/// multiplier estimate cannot shrink the reported gap.
pub fn kkt_gap(
    grads: &GradientInfo,
    h: &[f64],
    g: &[f64],
    lambda: &[f64],
    mu: &[f64],
) -> f64 {
    let mu_clamped: Vec<f64> = mu.iter().map(|v| v.max(0.0)).collect();
    let mut stationarity = grads.grad_f.clone();
    if !lambda.is_empty() {
        axpy(1.0, &grads.jac_h.tr_matvec(lambda), &mut stationarity);
    }
    if !mu_clamped.is_empty() {
        axpy(1.0, &grads.jac_g.tr_matvec(&mu_clamped), &mut stationarity);
    }
    let mut gap = norm2(&stationarity);
    for v in h {
        gap = gap.max(v.abs());
    }
    for (gi, mi) in g.iter().zip(&mu_clamped) {
        gap = gap.max(gi.max(0.0));
        gap = gap.max((mi * gi).abs());
    }
    gap
}

/// Central-difference gradients of (f, h, g): one coordinate at a time,
/// 2n metrics-counted evaluations.
pub fn fd_gradients(
    oracle: &Oracle,
    x: &[f64],
    radius: f64,
) -> Result<GradientInfo, OracleError> {
    assert!(radius > 0.0, "finite-difference radius must be positive");
    let dims = oracle.dims();
    let mut grad_f = vec![0.0; dims.n];
    let mut jac_h = Matrix::zeros(dims.m_eq, dims.n);
    let mut jac_g = Matrix::zeros(dims.m_ineq, dims.n);
    let mut point = x.to_vec();
    for j in 0..dims.n {
        point[j] = x[j] + radius;
        let ep = oracle.eval_for_metrics(&point)?;
        point[j] = x[j] - radius;
        let em = oracle.eval_for_metrics(&point)?;
        point[j] = x[j];
        let inv = 1.0 / (2.0 * radius);
        grad_f[j] = (ep.f - em.f) * inv;
        for i in 0..dims.m_eq {
            jac_h.set(i, j, (ep.h[i] - em.h[i]) * inv);
        }
        for i in 0..dims.m_ineq {
            jac_g.set(i, j, (ep.g[i] - em.g[i]) * inv);
        }
    }
    Ok(GradientInfo { grad_f, jac_h, jac_g })
}

/// Default central-difference radius for reference gradients at a point.
pub fn fd_radius(x: &[f64]) -> f64 {
    1e-6 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Format a float with 17 significant digits, enough to round-trip f64
/// exactly; used by every numeric artifact the CLI writes.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{BlackBox, ProblemDims};

    #[test]
    fn violations_take_positive_parts() {
        let eval = Evaluation { f: 0.0, h: vec![-0.3, 0.1], g: vec![-2.0, 0.4, -0.1] };
        let (vh, vg) = violations(&eval);
        assert_eq!(vh, 0.3);
        assert_eq!(vg, 0.4);
    }

    #[test]
    fn violations_of_feasible_points_are_zero() {
        let eval = Evaluation { f: 1.0, h: vec![0.0], g: vec![-1.0] };
        assert_eq!(violations(&eval), (0.0, 0.0));
    }

    #[test]
    fn kkt_gap_is_zero_at_a_kkt_point() {
        // min x^2 s.t. 1 - x <= 0: optimum x = 1, mu = 2.
        let grads = GradientInfo {
            grad_f: vec![2.0],
            jac_h: Matrix::zeros(0, 1),
            jac_g: Matrix::from_rows(&[vec![-1.0]]),
        };
        let gap = kkt_gap(&grads, &[], &[0.0], &[], &[2.0]);
        assert!(gap <= 1e-15);
    }

    #[test]
    fn kkt_gap_clamps_negative_multipliers() {
        let grads = GradientInfo {
            grad_f: vec![2.0],
            jac_h: Matrix::zeros(0, 1),
            jac_g: Matrix::from_rows(&[vec![-1.0]]),
        };
        // mu = -3 must act like mu = 0: gap is the raw gradient norm.
        let gap = kkt_gap(&grads, &[], &[-0.5], &[], &[-3.0]);
        assert!((gap - 2.0).abs() < 1e-15);
    }

    #[test]
    fn kkt_gap_picks_up_complementarity_violations() {
        let grads = GradientInfo {
            grad_f: vec![0.0],
            jac_h: Matrix::zeros(0, 1),
            jac_g: Matrix::from_rows(&[vec![1.0]]),
        };
        // Inactive constraint (g = -2) with a positive multiplier mu = 1:
        // stationarity contributes 1, complementarity |mu g| = 2 dominates.
        let gap = kkt_gap(&grads, &[], &[-2.0], &[], &[1.0]);
        assert!((gap - 2.0).abs() < 1e-15);
    }

    struct Quadratic;

    impl BlackBox for Quadratic {
        fn dims(&self) -> ProblemDims {
            ProblemDims { n: 3, m_eq: 1, m_ineq: 1 }
        }

        fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
            Ok(Evaluation {
                f: x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum(),
                h: vec![x[0] + 2.0 * x[1] - 1.0],
                g: vec![x[2] * x[2] - 0.5],
            })
        }
    }

    #[test]
    fn fd_gradients_match_analytic_values_on_quadratics() {
        let oracle = Oracle::new(Box::new(Quadratic));
        let x = [0.3, -0.7, 1.1];
        let info = fd_gradients(&oracle, &x, 1e-5).unwrap();
        let expect = [2.0 * 0.3, 4.0 * -0.7, 6.0 * 1.1];
        for (got, want) in info.grad_f.iter().zip(&expect) {
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
        assert!((info.jac_h.get(0, 0) - 1.0).abs() <= 1e-9);
        assert!((info.jac_h.get(0, 1) - 2.0).abs() <= 1e-9);
        assert!((info.jac_g.get(0, 2) - 2.2).abs() <= 1e-9);
        // 2n evaluations on the metrics counter, none on the solver budget.
        assert_eq!(oracle.metrics_evals(), 6);
        assert_eq!(oracle.counter().n_full, 0);
    }

    #[test]
    fn float_formatting_round_trips_exactly() {
        for &v in &[0.0, 1.0, -1.5, 0.1, std::f64::consts::PI, 1e-300, 2.5e17, f64::MIN_POSITIVE]
        {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }
}
