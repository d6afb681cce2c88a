//! The outer solver loop.
//!
//! Each iteration draws a random subspace, builds a reduced model there,
//! solves the proximal QP for a candidate step and its multipliers, and
//! either accepts the lifted step or rejects the subspace and redraws when
//! the QP fails or the multipliers exceed their bounds. Accepted steps are
//! applied with a fixed step-size schedule or with an Armijo backtracking
//! line search on the l1 exact-penalty merit
//!
//!   Phi(x) = f(x) + tau ||h(x)||_1 + tau ||max(g(x), 0)||_1,
//!
//! whose model-based directional surrogate decides both whether a direction
//! counts as descent and how much decrease to require.

use crate::estimator::{build_exact_model, build_reduced_model, EstimatorError, ReducedModel};
use crate::linalg::{axpy, norm2, norm_inf};
use crate::metrics;
use crate::oracle::{Oracle, OracleError};
use crate::qp::{default_max_iter, solve_reduced_qp, QpOutcome, QpStatus};
use crate::subspace::{sample_subspace, RngState, SubspaceBasis, SubspaceError};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("subspace dimension d={d} must satisfy 1 <= d <= n={n}")]
    BadSubspaceDim { d: usize, n: usize },
    #[error("{name} must be {requirement}, got {value}")]
    BadParameter { name: &'static str, requirement: &'static str, value: f64 },
    #[error("per-iteration schedule for {name} is empty")]
    EmptySchedule { name: &'static str },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("subspace sampling failed: {0}")]
    Subspace(#[from] SubspaceError),
    #[error("iteration {t}: rejected {rejections} subspaces, budget exhausted")]
    RejectionBudgetExhausted { t: usize, rejections: usize },
}

/// How an accepted direction is turned into an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// x <- x + eta_t dx with eta_t from the step-size schedule.
    FixedStep,
    /// Armijo backtracking on the merit function.
    LineSearch,
}

/// Where the reduced model comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMode {
    /// Two-point finite differences (2d + 1 evaluations per attempt).
    TwoPoint,
    /// Analytic gradients projected onto the subspace (for problems that
    /// provide them; isolates subspace effects from estimation error).
    Exact,
}

/// Per-iteration scalar schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant(f64),
    /// Explicit values; iterations beyond the end reuse the last value.
    PerIteration(Vec<f64>),
}

impl Schedule {
    pub fn value(&self, t: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::PerIteration(vals) => vals[t.min(vals.len() - 1)],
        }
    }

    fn check(&self, name: &'static str) -> Result<(), ConfigError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Schedule::Constant(v) if ok(*v) => Ok(()),
            Schedule::Constant(v) => Err(ConfigError::BadParameter {
                name,
                requirement: "positive and finite",
                value: *v,
            }),
            Schedule::PerIteration(vals) if vals.is_empty() => {
                Err(ConfigError::EmptySchedule { name })
            }
            Schedule::PerIteration(vals) => match vals.iter().find(|v| !ok(**v)) {
                Some(v) => Err(ConfigError::BadParameter {
                    name,
                    requirement: "positive and finite",
                    value: *v,
                }),
                None => Ok(()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Subspace dimension d.
    pub subspace_dim: usize,
    /// Two-point sampling radius; `None` selects 1e-4 * max(1, ||x||_inf)
    /// at each iteration.
    pub radius: Option<f64>,
    /// Proximal weight schedule L_t.
    pub prox_schedule: Schedule,
    /// Step-size schedule eta_t (fixed-step mode only).
    pub step_schedule: Schedule,
    /// Acceptance bound on ||lambda||_inf.
    pub lambda_bound: f64,
    /// Acceptance bound on ||mu||_inf.
    pub mu_bound: f64,
    /// Merit penalty weight.
    pub tau: f64,
    /// Armijo sufficient-decrease coefficient.
    pub sigma: f64,
    /// Backtracking factor.
    pub beta: f64,
    /// Maximum step-size reductions per line search.
    pub max_backtracks: usize,
    /// Maximum rejected subspaces per iteration.
    pub max_rejections: usize,
    /// Outer iterations T.
    pub iterations: usize,
    pub seed: u64,
    pub mode: StepMode,
    pub model_mode: ModelMode,
    /// Reduced-QP tolerance.
    pub qp_tol: f64,
    /// Reduced-QP iteration cap; `None` derives it from the constraint count.
    pub qp_max_iter: Option<usize>,
    /// When false, wall_ms is recorded as 0 so traces are byte-stable.
    pub record_wall_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            subspace_dim: 10,
            radius: None,
            prox_schedule: Schedule::Constant(10.0),
            step_schedule: Schedule::Constant(0.1),
            lambda_bound: 100.0,
            mu_bound: 100.0,
            tau: 100.0,
            sigma: 1e-4,
            beta: 0.5,
            max_backtracks: 30,
            max_rejections: 100,
            iterations: 100,
            seed: 0,
            mode: StepMode::FixedStep,
            model_mode: ModelMode::TwoPoint,
            qp_tol: 1e-8,
            qp_max_iter: None,
            record_wall_time: true,
        }
    }
}

impl SolverConfig {
    /// Validate against a problem of ambient dimension n. Returns
    /// non-fatal warnings (for now: a merit weight below the multiplier
    /// bounds, which voids the descent guarantee of accepted steps).
    pub fn validate(&self, n: usize) -> Result<Vec<String>, ConfigError> {
        if self.subspace_dim == 0 || self.subspace_dim > n {
            return Err(ConfigError::BadSubspaceDim { d: self.subspace_dim, n });
        }
        if let Some(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(ConfigError::BadParameter {
                    name: "radius",
                    requirement: "positive and finite",
                    value: r,
                });
            }
        }
        self.prox_schedule.check("prox_schedule")?;
        self.step_schedule.check("step_schedule")?;
        for (name, value) in [
            ("lambda_bound", self.lambda_bound),
            ("mu_bound", self.mu_bound),
            ("tau", self.tau),
            ("qp_tol", self.qp_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::BadParameter {
                    name,
                    requirement: "positive and finite",
                    value,
                });
            }
        }
        for (name, value) in [("sigma", self.sigma), ("beta", self.beta)] {
            if !(value.is_finite() && value > 0.0 && value < 1.0) {
                return Err(ConfigError::BadParameter {
                    name,
                    requirement: "in the open interval (0, 1)",
                    value,
                });
            }
        }
        let mut warnings = Vec::new();
        if self.tau < self.lambda_bound.max(self.mu_bound) {
            warnings.push(format!(
                "tau = {} is below max(lambda_bound, mu_bound) = {}; accepted steps are \
                 not guaranteed to be merit descent directions",
                self.tau,
                self.lambda_bound.max(self.mu_bound)
            ));
        }
        Ok(warnings)
    }

    /// Adaptive two-point radius at the current iterate.
    pub fn radius_at(&self, x: &[f64]) -> f64 {
        self.radius.unwrap_or_else(|| 1e-4 * norm_inf(x).max(1.0))
    }
}

/// Multiplier-bound acceptance test for a solved reduced QP.
pub fn accept(outcome: &QpOutcome, lambda_bound: f64, mu_bound: f64) -> bool {
    outcome.status == QpStatus::Optimal
        && norm_inf(&outcome.lambda) <= lambda_bound
        && norm_inf(&outcome.mu) <= mu_bound
}

/// Exact-penalty merit Phi = f + tau ||h||_1 + tau ||max(g, 0)||_1.
/// The weight must be positive for Phi to penalize infeasibility.
pub fn merit(f: f64, h: &[f64], g: &[f64], tau: f64) -> f64 {
    assert!(tau > 0.0, "merit weight tau must be positive");
    let h1: f64 = h.iter().map(|v| v.abs()).sum();
    let g1: f64 = g.iter().map(|v| v.max(0.0)).sum();
    f + tau * h1 + tau * g1
}

/// Model-based directional derivative of the merit along the reduced step:
///
///   D = <c, alpha> + tau sum_i sign(h_i) (A alpha)_i
///              + tau sum_{i : g_i > 0} (B alpha)_i
///
/// with sign(0) = 0. Negative D certifies model descent.
pub fn directional_surrogate(model: &ReducedModel, alpha: &[f64], tau: f64) -> f64 {
    let mut d = crate::linalg::dot(&model.c_hat, alpha);
    let a_alpha = model.a_hat.matvec(alpha);
    for (hi, ai) in model.h.iter().zip(&a_alpha) {
        if *hi > 0.0 {
            d += tau * ai;
        } else if *hi < 0.0 {
            d -= tau * ai;
        }
    }
    let b_alpha = model.b_hat.matvec(alpha);
    for (gi, bi) in model.g.iter().zip(&b_alpha) {
        if *gi > 0.0 {
            d += tau * bi;
        }
    }
    d
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearchParams {
    pub tau: f64,
    pub sigma: f64,
    pub beta: f64,
    pub max_backtracks: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearchResult {
    /// Accepted step size; 0 when no step achieved sufficient decrease.
    pub eta: f64,
    /// Oracle evaluations spent.
    pub evals: u64,
    /// Whether the Armijo condition was met (false implies eta = 0).
    pub sufficient: bool,
}

/// Armijo backtracking on the merit function along dx. Returns eta = 0
/// without evaluating anything when the surrogate is not a descent value;
/// otherwise tries eta = 1, beta, beta^2, ... until
///
///   Phi(x + eta dx) <= Phi(x) + sigma eta D
///
/// or the backtrack budget is exhausted (then eta = 0).
pub fn armijo(
    oracle: &Oracle,
    x: &[f64],
    dx: &[f64],
    phi_x: f64,
    d_surrogate: f64,
    params: &LineSearchParams,
) -> Result<LineSearchResult, OracleError> {
    if d_surrogate >= 0.0 {
        return Ok(LineSearchResult { eta: 0.0, evals: 0, sufficient: false });
    }
    let mut eta = 1.0;
    let mut trial = vec![0.0; x.len()];
    for attempt in 0..=params.max_backtracks {
        trial.copy_from_slice(x);
        axpy(eta, dx, &mut trial);
        let eval = oracle.eval(&trial)?;
        let phi_trial = merit(eval.f, &eval.h, &eval.g, params.tau);
        if phi_trial <= phi_x + params.sigma * eta * d_surrogate {
            return Ok(LineSearchResult { eta, evals: attempt as u64 + 1, sufficient: true });
        }
        eta *= params.beta;
    }
    Ok(LineSearchResult {
        eta: 0.0,
        evals: params.max_backtracks as u64 + 1,
        sufficient: false,
    })
}

/// Everything produced by one outer iteration.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub basis: SubspaceBasis,
    pub model: ReducedModel,
    pub qp: QpOutcome,
    /// Lifted direction U alpha.
    pub dx: Vec<f64>,
    /// Applied step size.
    pub eta: f64,
    /// Subspaces rejected before acceptance.
    pub rejections: usize,
    /// Oracle evaluations spent by the line search.
    pub ls_evals: u64,
    /// Merit at the iteration's center point.
    pub merit_before: f64,
    /// Directional surrogate along the accepted direction.
    pub d_surrogate: f64,
}

/// Incremental driver: owns the iterate, the iteration counter, and the RNG.
pub struct Solver<'a> {
    cfg: SolverConfig,
    oracle: &'a Oracle,
    x: Vec<f64>,
    t: usize,
    rng: RngState,
}

impl<'a> Solver<'a> {
    /// Validate the configuration and position the solver at `x0` (the
    /// problem's initial point when `None`). Validation warnings are
    /// discarded here; call `SolverConfig::validate` directly to see them.
    pub fn new(
        cfg: SolverConfig,
        oracle: &'a Oracle,
        x0: Option<Vec<f64>>,
    ) -> Result<Self, SolverError> {
        cfg.validate(oracle.dims().n)?;
        let x = x0.unwrap_or_else(|| oracle.initial_point());
        if x.len() != oracle.dims().n {
            return Err(SolverError::Oracle(OracleError::DimensionMismatch {
                expected: oracle.dims().n,
                got: x.len(),
            }));
        }
        let rng = RngState::new(cfg.seed);
        Ok(Solver { cfg, oracle, x, t: 0, rng })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Run one outer iteration: sample subspaces until a step is accepted,
    /// then apply it. Fails with `RejectionBudgetExhausted` when more than
    /// `max_rejections` subspaces are rejected.
    pub fn step(&mut self) -> Result<StepResult, SolverError> {
        let n = self.oracle.dims().n;
        let dims = self.oracle.dims();
        let l = self.cfg.prox_schedule.value(self.t);
        let radius = self.cfg.radius_at(&self.x);
        let qp_iter = self
            .cfg
            .qp_max_iter
            .unwrap_or_else(|| default_max_iter(dims.m_eq, dims.m_ineq));

        let mut rejections = 0usize;
        let (basis, model, qp) = loop {
            if rejections > self.cfg.max_rejections {
                return Err(SolverError::RejectionBudgetExhausted { t: self.t, rejections });
            }
            let basis = sample_subspace(n, self.cfg.subspace_dim, &mut self.rng)?;
            let model = match self.cfg.model_mode {
                ModelMode::TwoPoint => {
                    build_reduced_model(self.oracle, &self.x, &basis, radius, l)?
                }
                ModelMode::Exact => build_exact_model(self.oracle, &self.x, &basis, l)?,
            };
            let qp = solve_reduced_qp(&model, self.cfg.qp_tol, qp_iter);
            if accept(&qp, self.cfg.lambda_bound, self.cfg.mu_bound) {
                break (basis, model, qp);
            }
            rejections += 1;
        };

        let dx = basis.lift(&qp.alpha);
        let merit_before = merit(model.f, &model.h, &model.g, self.cfg.tau);
        let d_surrogate = directional_surrogate(&model, &qp.alpha, self.cfg.tau);
        let (eta, ls_evals) = match self.cfg.mode {
            StepMode::FixedStep => (self.cfg.step_schedule.value(self.t), 0),
            StepMode::LineSearch => {
                let params = LineSearchParams {
                    tau: self.cfg.tau,
                    sigma: self.cfg.sigma,
                    beta: self.cfg.beta,
                    max_backtracks: self.cfg.max_backtracks,
                };
                let ls = armijo(self.oracle, &self.x, &dx, merit_before, d_surrogate, &params)?;
                (ls.eta, ls.evals)
            }
        };

        if eta != 0.0 {
            axpy(eta, &dx, &mut self.x);
        }
        self.t += 1;

        Ok(StepResult {
            basis,
            model,
            qp,
            dx,
            eta,
            rejections,
            ls_evals,
            merit_before,
            d_surrogate,
        })
    }
}

/// One row of the iteration trace; all quantities describe the iterate at
/// the *start* of iteration t plus the step taken there. The last row holds
/// the final iterate with zero step fields.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub f: f64,
    pub viol_h: f64,
    pub viol_g: f64,
    pub kkt_gap: f64,
    pub step_norm: f64,
    pub eta: f64,
    pub rejections: usize,
    pub evals_cum: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// The iteration that ran out of subspace rejections; rows stop there.
    RejectionBudgetExhausted { at_iteration: usize },
}

/// Full run record: one row per started iteration plus the final row, the
/// merit value at each row's iterate, and the final point.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    pub merit: Vec<f64>,
    pub final_x: Vec<f64>,
    pub termination: Termination,
}

impl SolverTrace {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("trace always has a final row")
    }

    /// CSV rendering: fixed header, one line per row, reals at full f64
    /// precision. The byte-for-byte output is part of the determinism
    /// contract, so every writer must go through here.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                metrics::fmt_float(r.f),
                metrics::fmt_float(r.viol_h),
                metrics::fmt_float(r.viol_g),
                metrics::fmt_float(r.kkt_gap),
                metrics::fmt_float(r.step_norm),
                metrics::fmt_float(r.eta),
                r.rejections,
                r.evals_cum,
                metrics::fmt_float(r.wall_ms),
            ));
        }
        out
    }
}

pub const TRACE_CSV_HEADER: &str =
    "t,f,viol_h,viol_g,kkt_gap,step_norm,eta,rejections,evals_cum,wall_ms";

/// Run T iterations from `x0` (problem initial point when `None`) and
/// assemble the trace. A rejection-budget failure terminates the run early
/// and is recorded rather than returned as an error; anything else (oracle
/// failures, invalid configuration) propagates.
pub fn run(
    cfg: &SolverConfig,
    oracle: &Oracle,
    x0: Option<Vec<f64>>,
) -> Result<SolverTrace, SolverError> {
    let mut solver = Solver::new(cfg.clone(), oracle, x0)?;
    let start = Instant::now();
    let clock = |on: bool| if on { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    let mut rows: Vec<TraceRow> = Vec::with_capacity(cfg.iterations + 1);
    let mut merits: Vec<f64> = Vec::with_capacity(cfg.iterations + 1);
    let mut last_duals: (Vec<f64>, Vec<f64>) =
        (vec![0.0; oracle.dims().m_eq], vec![0.0; oracle.dims().m_ineq]);
    let mut termination = Termination::Completed;

    for t in 0..cfg.iterations {
        let x_t = solver.x().to_vec();
        match solver.step() {
            Ok(step) => {
                let gap = kkt_gap_at(oracle, &x_t, &step.model.h, &step.model.g, &step.qp)?;
                let (viol_h, viol_g) = center_violations(&step.model);
                rows.push(TraceRow {
                    t,
                    f: step.model.f,
                    viol_h,
                    viol_g,
                    kkt_gap: gap,
                    step_norm: norm2(&step.dx),
                    eta: step.eta,
                    rejections: step.rejections,
                    evals_cum: oracle.counter().n_full,
                    wall_ms: clock(cfg.record_wall_time),
                });
                merits.push(step.merit_before);
                last_duals = (step.qp.lambda.clone(), step.qp.mu.clone());
            }
            Err(SolverError::RejectionBudgetExhausted { t, .. }) => {
                termination = Termination::RejectionBudgetExhausted { at_iteration: t };
                break;
            }
            Err(other) => return Err(other),
        }
    }

    // Final row: metrics at the last iterate, no step fields.
    let x_final = solver.x().to_vec();
    let center = oracle.eval_for_metrics(&x_final)?;
    let grads = reference_gradients(oracle, &x_final)?;
    let gap = metrics::kkt_gap(&grads, &center.h, &center.g, &last_duals.0, &last_duals.1);
    let (viol_h, viol_g) = metrics::violations(&center);
    rows.push(TraceRow {
        t: rows.len(),
        f: center.f,
        viol_h,
        viol_g,
        kkt_gap: gap,
        step_norm: 0.0,
        eta: 0.0,
        rejections: 0,
        evals_cum: oracle.counter().n_full,
        wall_ms: clock(cfg.record_wall_time),
    });
    merits.push(merit(center.f, &center.h, &center.g, cfg.tau));

    Ok(SolverTrace { rows, merit: merits, final_x: x_final, termination })
}

/// Gradients for gap reporting: analytic when the problem has them,
/// central differences on the metrics counter otherwise.
fn reference_gradients(
    oracle: &Oracle,
    x: &[f64],
) -> Result<crate::oracle::GradientInfo, OracleError> {
    if oracle.provides_gradients() {
        oracle.gradients(x)
    } else {
        metrics::fd_gradients(oracle, x, metrics::fd_radius(x))
    }
}

fn kkt_gap_at(
    oracle: &Oracle,
    x: &[f64],
    h: &[f64],
    g: &[f64],
    qp: &QpOutcome,
) -> Result<f64, OracleError> {
    let grads = reference_gradients(oracle, x)?;
    Ok(metrics::kkt_gap(&grads, h, g, &qp.lambda, &qp.mu))
}

fn center_violations(model: &ReducedModel) -> (f64, f64) {
    let vh = model.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let vg = model.g.iter().fold(0.0f64, |m, v| m.max(*v)).max(0.0);
    (vh, vg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::oracle::{BlackBox, Evaluation, GradientInfo, ProblemDims};

    /// f = ||x - 1||^2 with one linear equality and one linear inequality.
    struct Smooth {
        n: usize,
    }

    impl BlackBox for Smooth {
        fn dims(&self) -> ProblemDims {
            ProblemDims { n: self.n, m_eq: 1, m_ineq: 1 }
        }

        fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
            let f = x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum();
            Ok(Evaluation {
                f,
                h: vec![x.iter().sum::<f64>()],
                g: vec![x[0] - 10.0],
            })
        }

        fn gradients(&self, x: &[f64]) -> Option<GradientInfo> {
            let grad_f = x.iter().map(|v| 2.0 * (v - 1.0)).collect();
            let jac_h = Matrix::from_fn(1, self.n, |_, _| 1.0);
            let mut jac_g = Matrix::zeros(1, self.n);
            jac_g.set(0, 0, 1.0);
            Some(GradientInfo { grad_f, jac_h, jac_g })
        }

        fn provides_gradients(&self) -> bool {
            true
        }
    }

    fn smooth_oracle(n: usize) -> Oracle {
        Oracle::new(Box::new(Smooth { n }))
    }

    fn base_config(d: usize) -> SolverConfig {
        SolverConfig {
            subspace_dim: d,
            prox_schedule: Schedule::Constant(5.0),
            step_schedule: Schedule::Constant(0.2),
            iterations: 5,
            seed: 11,
            record_wall_time: false,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn merit_combines_objective_and_violations() {
        let phi = merit(1.0, &[0.5], &[-1.0, 0.2], 10.0);
        assert!((phi - 8.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "merit weight tau must be positive")]
    fn merit_rejects_nonpositive_tau() {
        merit(1.0, &[], &[], 0.0);
    }

    #[test]
    fn surrogate_matches_hand_computation() {
        // <c, alpha> = -1; h = -0.2 so sign = -1 against (A alpha) = 0.1;
        // no positive g. D = -1 - 10 * 0.1 = -2.
        let model = ReducedModel {
            c_hat: vec![-1.0],
            a_hat: Matrix::from_rows(&[vec![0.1]]),
            b_hat: Matrix::from_rows(&[vec![5.0]]),
            f: 0.0,
            h: vec![-0.2],
            g: vec![-0.3],
            prox_weight: 1.0,
            radius: 0.0,
        };
        let d = directional_surrogate(&model, &[1.0], 10.0);
        assert!((d + 2.0).abs() < 1e-15);
    }

    #[test]
    fn surrogate_ignores_zero_residuals_and_inactive_inequalities() {
        let model = ReducedModel {
            c_hat: vec![2.0],
            a_hat: Matrix::from_rows(&[vec![100.0]]),
            b_hat: Matrix::from_rows(&[vec![100.0], vec![1.0]]),
            f: 0.0,
            h: vec![0.0],
            g: vec![-0.5, 0.5],
            prox_weight: 1.0,
            radius: 0.0,
        };
        // sign(0) = 0 kills the equality term; only g_1 > 0 contributes.
        let d = directional_surrogate(&model, &[1.0], 2.0);
        assert!((d - (2.0 + 2.0 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn accept_checks_status_and_bounds() {
        let ok = QpOutcome {
            status: QpStatus::Optimal,
            alpha: vec![0.0],
            lambda: vec![5.0],
            mu: vec![-0.0],
            kkt_residual: 0.0,
        };
        assert!(accept(&ok, 10.0, 10.0));
        assert!(!accept(&ok, 4.0, 10.0));
        let infeasible = QpOutcome {
            status: QpStatus::Infeasible,
            alpha: vec![],
            lambda: vec![],
            mu: vec![],
            kkt_residual: 1.0,
        };
        assert!(!accept(&infeasible, 10.0, 10.0));
    }

    #[test]
    fn armijo_returns_zero_without_descent() {
        let oracle = smooth_oracle(3);
        let params =
            LineSearchParams { tau: 10.0, sigma: 0.5, beta: 0.5, max_backtracks: 5 };
        let res = armijo(&oracle, &[0.0; 3], &[1.0; 3], 100.0, 0.5, &params).unwrap();
        assert_eq!(res.eta, 0.0);
        assert_eq!(res.evals, 0);
        assert!(!res.sufficient);
        assert_eq!(oracle.counter().n_full, 0);
    }

    /// Unconstrained 1-d problem for hand-checkable line searches.
    struct Parabola;

    impl BlackBox for Parabola {
        fn dims(&self) -> ProblemDims {
            ProblemDims { n: 1, m_eq: 0, m_ineq: 0 }
        }

        fn eval(&self, x: &[f64]) -> Result<Evaluation, OracleError> {
            Ok(Evaluation { f: x[0] * x[0], h: vec![], g: vec![] })
        }
    }

    #[test]
    fn armijo_accepts_the_full_step_when_it_suffices() {
        let oracle = Oracle::new(Box::new(Parabola));
        let params =
            LineSearchParams { tau: 1.0, sigma: 0.5, beta: 0.5, max_backtracks: 10 };
        // Phi(x) = x^2 at x = 1, dx = -1, D = -2: Phi(0) = 0 <= 1 - 1.
        let res = armijo(&oracle, &[1.0], &[-1.0], 1.0, -2.0, &params).unwrap();
        assert_eq!(res.eta, 1.0);
        assert_eq!(res.evals, 1);
        assert!(res.sufficient);
    }

    #[test]
    fn armijo_backtracks_on_overshoot() {
        let oracle = Oracle::new(Box::new(Parabola));
        let params =
            LineSearchParams { tau: 1.0, sigma: 0.5, beta: 0.5, max_backtracks: 10 };
        // dx = -3 overshoots; eta = 1 gives Phi = 4, eta = 0.5 gives 0.25
        // (needs <= -0.5), eta = 0.25 gives 0.0625 <= 0.25. Three trials.
        let res = armijo(&oracle, &[1.0], &[-3.0], 1.0, -6.0, &params).unwrap();
        assert_eq!(res.eta, 0.25);
        assert_eq!(res.evals, 3);
        assert!(res.sufficient);
    }

    #[test]
    fn armijo_exhausts_its_budget_and_reports_zero() {
        let oracle = Oracle::new(Box::new(Parabola));
        let params =
            LineSearchParams { tau: 1.0, sigma: 0.9, beta: 0.5, max_backtracks: 3 };
        // An absurdly steep surrogate no trial point can satisfy.
        let res = armijo(&oracle, &[1.0], &[-0.5], 1.0, -1e9, &params).unwrap();
        assert_eq!(res.eta, 0.0);
        assert_eq!(res.evals, 4);
        assert!(!res.sufficient);
        assert_eq!(oracle.counter().n_full, 4);
    }

    #[test]
    fn step_accounts_evaluations_exactly() {
        let oracle = smooth_oracle(8);
        let cfg = base_config(3);
        let mut solver = Solver::new(cfg, &oracle, None).unwrap();
        let step = solver.step().unwrap();
        let expected = (1 + step.rejections as u64) * (2 * 3 + 1) + step.ls_evals;
        assert_eq!(oracle.counter().n_full, expected);
    }

    #[test]
    fn rejection_budget_exhaustion_is_reported() {
        let oracle = smooth_oracle(6);
        // Equality residual at x0 is 0 but the gradient forces lambda != 0;
        // a sub-epsilon bound rejects every subspace.
        let cfg = SolverConfig {
            lambda_bound: 1e-15,
            max_rejections: 4,
            ..base_config(2)
        };
        let mut solver = Solver::new(cfg, &oracle, Some(vec![0.5; 6])).unwrap();
        match solver.step() {
            Err(SolverError::RejectionBudgetExhausted { t: 0, rejections }) => {
                assert_eq!(rejections, 5);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
        // 5 attempts, each a full model build.
        assert_eq!(oracle.counter().n_full, 5 * (2 * 2 + 1));
    }

    #[test]
    fn run_produces_one_row_per_iteration_plus_final() {
        let oracle = smooth_oracle(8);
        let cfg = SolverConfig { iterations: 6, ..base_config(3) };
        let trace = run(&cfg, &oracle, None).unwrap();
        assert_eq!(trace.rows.len(), 7);
        assert_eq!(trace.merit.len(), 7);
        assert_eq!(trace.termination, Termination::Completed);
        for (i, row) in trace.rows.iter().enumerate() {
            assert_eq!(row.t, i);
            assert!(row.wall_ms == 0.0);
        }
        let last = trace.final_row();
        assert_eq!(last.step_norm, 0.0);
        assert_eq!(last.eta, 0.0);
        assert_eq!(last.evals_cum, oracle.counter().n_full);
    }

    #[test]
    fn run_with_zero_iterations_emits_only_the_final_row() {
        let oracle = smooth_oracle(5);
        let cfg = SolverConfig { iterations: 0, ..base_config(2) };
        let trace = run(&cfg, &oracle, None).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].t, 0);
        assert_eq!(oracle.counter().n_full, 0);
    }

    #[test]
    fn runs_are_deterministic_in_the_seed() {
        let cfg = SolverConfig { iterations: 8, ..base_config(3) };
        let t1 = run(&cfg, &smooth_oracle(8), None).unwrap();
        let t2 = run(&cfg, &smooth_oracle(8), None).unwrap();
        assert_eq!(t1.rows, t2.rows);
        assert_eq!(t1.final_x, t2.final_x);
        let t3 = run(&SolverConfig { seed: 12, ..cfg }, &smooth_oracle(8), None).unwrap();
        assert_ne!(t1.final_x, t3.final_x);
    }

    #[test]
    fn trace_csv_is_stable_and_well_formed() {
        let cfg =
            SolverConfig { iterations: 5, record_wall_time: false, ..base_config(3) };
        let a = run(&cfg, &smooth_oracle(8), None).unwrap().to_csv();
        let b = run(&cfg, &smooth_oracle(8), None).unwrap().to_csv();
        assert_eq!(a, b);
        let mut lines = a.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        assert_eq!(lines.count(), 6);
        for line in a.lines().skip(1) {
            assert_eq!(line.split(',').count(), 10);
        }
        // Reals round-trip through the printed form.
        let row1 = a.lines().nth(1).unwrap();
        let f_printed: f64 = row1.split(',').nth(1).unwrap().parse().unwrap();
        let trace = run(&cfg, &smooth_oracle(8), None).unwrap();
        assert_eq!(f_printed, trace.rows[0].f);
    }

    #[test]
    fn fixed_step_reduces_the_equality_residual() {
        let oracle = smooth_oracle(10);
        let cfg = SolverConfig {
            iterations: 60,
            prox_schedule: Schedule::Constant(5.0),
            step_schedule: Schedule::Constant(0.2),
            subspace_dim: 4,
            seed: 3,
            record_wall_time: false,
            ..SolverConfig::default()
        };
        let trace = run(&cfg, &oracle, Some(vec![0.9; 10])).unwrap();
        let first = &trace.rows[0];
        let last = trace.final_row();
        assert!(last.viol_h < 0.2 * first.viol_h, "{} -> {}", first.viol_h, last.viol_h);
    }

    #[test]
    fn line_search_merit_is_nonincreasing_here() {
        let oracle = smooth_oracle(10);
        let cfg = SolverConfig {
            iterations: 40,
            mode: StepMode::LineSearch,
            subspace_dim: 4,
            prox_schedule: Schedule::Constant(5.0),
            tau: 50.0,
            seed: 5,
            record_wall_time: false,
            ..SolverConfig::default()
        };
        let trace = run(&cfg, &oracle, Some(vec![0.9; 10])).unwrap();
        for pair in trace.merit.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "merit rose: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn rejection_exhaustion_terminates_the_run_gracefully() {
        let oracle = smooth_oracle(6);
        let cfg = SolverConfig {
            lambda_bound: 1e-15,
            max_rejections: 2,
            iterations: 4,
            ..base_config(2)
        };
        let trace = run(&cfg, &oracle, Some(vec![0.5; 6])).unwrap();
        assert_eq!(trace.termination, Termination::RejectionBudgetExhausted { at_iteration: 0 });
        // Only the final row; the burned evaluations still show up there.
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.final_row().evals_cum, oracle.counter().n_full);
    }

    #[test]
    fn schedules_clamp_to_their_last_value() {
        let s = Schedule::PerIteration(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(2), 3.0);
        assert_eq!(s.value(99), 3.0);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let n = 10;
        let bad_dim = SolverConfig { subspace_dim: 11, ..SolverConfig::default() };
        assert!(matches!(bad_dim.validate(n), Err(ConfigError::BadSubspaceDim { .. })));
        let bad_sigma = SolverConfig { sigma: 1.0, ..SolverConfig::default() };
        assert!(matches!(bad_sigma.validate(n), Err(ConfigError::BadParameter { .. })));
        let bad_sched = SolverConfig {
            prox_schedule: Schedule::Constant(-1.0),
            ..SolverConfig::default()
        };
        assert!(matches!(bad_sched.validate(n), Err(ConfigError::BadParameter { .. })));
        let empty = SolverConfig {
            step_schedule: Schedule::PerIteration(vec![]),
            ..SolverConfig::default()
        };
        assert!(matches!(empty.validate(n), Err(ConfigError::EmptySchedule { .. })));
    }

    #[test]
    fn validation_warns_when_tau_is_below_the_multiplier_bounds() {
        let cfg = SolverConfig { tau: 1.0, ..SolverConfig::default() };
        let warnings = cfg.validate(10).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("tau"));
        let ok = SolverConfig::default();
        assert!(ok.validate(10).unwrap().is_empty());
    }
}
