//! Reduced proximal QP solver.
//!
//! Solves the strictly convex step subproblem
//!
//!   minimize  <c, alpha> + (L/2) ||alpha||^2
//!   subject to  h + A alpha = 0,   g + B alpha <= 0
//!
//! by a primal active-set exchange: start from the equality-constrained
//! minimizer, repeatedly solve the working-set KKT system via the dense
//! saddle-point kernel, drop the working constraint with the most negative
//! multiplier, and add the most violated inequality (lowest index on ties).
//! When the exchange stalls — a singular add, or the iteration cap — a
//! phase-1 slack program certifies feasibility: if the minimal total
//! violation exceeds the tolerance the problem is reported `Infeasible`,
//! otherwise the solve restarts from the feasible phase-1 point with a
//! null-space active-set method that maintains feasibility through blocking
//! steps.
//!
//! `brute_force_qp` is the independent reference: it enumerates every active
//! set, solves each candidate KKT system directly, and keeps the feasible
//! candidate with nonnegative multipliers. It shares only the saddle-point
//! kernel with the iterative path, so agreement between the two is a real
//! cross-check.

use crate::estimator::ReducedModel;
use crate::linalg::{axpy, dot, norm2, solve_saddle, LinalgError, Matrix};
use thiserror::Error;

/// Default working tolerance for feasibility, optimality, and the
/// infeasibility certificate.
pub const QP_DEFAULT_TOL: f64 = 1e-8;

/// Rank threshold for filtering dependent constraint rows.
const INDEP_TOL: f64 = 1e-9;

/// Proximal weight of the phase-1 slack program. It only breaks ties among
/// minimizers of the total violation; it must be small enough that the bias
/// it adds to the violation stays far below the infeasibility tolerance.
const PHASE1_WEIGHT: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("brute-force enumeration supports at most {limit} inequalities, got {m_ineq}")]
    TooManyConstraints { m_ineq: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    /// KKT point found to tolerance.
    Optimal,
    /// Phase-1 certificate: minimal total constraint violation exceeds the
    /// tolerance.
    Infeasible,
    /// Iteration cap hit before convergence.
    MaxIterations,
    /// Working-set system rank-deficient beyond recovery.
    Degenerate,
}

/// Result of a reduced QP solve. `alpha`, `lambda`, `mu` are filled for
/// `Optimal` outcomes (multipliers of dropped dependent rows are zero);
/// `kkt_residual` is the max KKT residual for `Optimal`, the certified
/// violation for `Infeasible`, and infinite otherwise.
#[derive(Debug, Clone)]
pub struct QpOutcome {
    pub status: QpStatus,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub kkt_residual: f64,
}

impl QpOutcome {
    fn non_optimal(status: QpStatus) -> Self {
        QpOutcome {
            status,
            alpha: Vec::new(),
            lambda: Vec::new(),
            mu: Vec::new(),
            kkt_residual: f64::INFINITY,
        }
    }
}

/// Default iteration cap, proportional to the constraint count.
pub fn default_max_iter(m_eq: usize, m_ineq: usize) -> usize {
    50 * (m_eq + m_ineq + 1)
}

/// Constraint system in solver form: eq_rows alpha = beq, ineq_rows alpha <= bineq.
struct QpProblem {
    l: f64,
    c: Vec<f64>,
    eq_rows: Matrix,
    beq: Vec<f64>,
    ineq_rows: Matrix,
    bineq: Vec<f64>,
}

impl QpProblem {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn m_ineq(&self) -> usize {
        self.ineq_rows.rows()
    }

    /// Stack the equality rows and the working inequality rows.
    fn working_system(&self, w: &[usize]) -> (Matrix, Vec<f64>) {
        let k = self.eq_rows.rows();
        let mut e = Matrix::zeros(k + w.len(), self.dim());
        let mut rhs = Vec::with_capacity(k + w.len());
        for i in 0..k {
            e.row_mut(i).copy_from_slice(self.eq_rows.row(i));
            rhs.push(self.beq[i]);
        }
        for (pos, &i) in w.iter().enumerate() {
            e.row_mut(k + pos).copy_from_slice(self.ineq_rows.row(i));
            rhs.push(self.bineq[i]);
        }
        (e, rhs)
    }

    fn ineq_violation(&self, alpha: &[f64], i: usize) -> f64 {
        dot(self.ineq_rows.row(i), alpha) - self.bineq[i]
    }
}

/// Indices of a maximal set of linearly independent rows, chosen greedily in
/// row order (twice-orthogonalized Gram-Schmidt).
fn independent_rows(mat: &Matrix, tol: f64) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..mat.rows() {
        let mut v = mat.row(i).to_vec();
        let row_scale = norm2(&v).max(1.0);
        for _ in 0..2 {
            for b in &basis {
                let coef = dot(&v, b);
                axpy(-coef, b, &mut v);
            }
        }
        let nv = norm2(&v);
        if nv > tol * row_scale {
            keep.push(i);
            for vi in v.iter_mut() {
                *vi /= nv;
            }
            basis.push(v);
        }
    }
    keep
}

/// Solve the reduced proximal QP. `tol` governs feasibility, multiplier
/// sign checks, and the infeasibility certificate; `max_iter` caps each
/// active-set loop.
pub fn solve_reduced_qp(model: &ReducedModel, tol: f64, max_iter: usize) -> QpOutcome {
    assert!(tol > 0.0, "tolerance must be positive");
    let d = model.dim();
    let m_eq = model.m_eq();

    // Right-hand sides: h + A alpha = 0 becomes A alpha = -h, likewise for g.
    let beq_all: Vec<f64> = model.h.iter().map(|v| -v).collect();
    let bineq: Vec<f64> = model.g.iter().map(|v| -v).collect();

    // Filter the equalities down to an independent subset; dependent rows are
    // only checked for consistency at a solution and carry zero multipliers.
    let eq_keep = independent_rows(&model.a_hat, INDEP_TOL);
    if eq_keep.len() > d {
        // More independent equality rows than variables cannot happen
        // (rank <= d), so this is unreachable; guard anyway.
        return QpOutcome::non_optimal(QpStatus::Degenerate);
    }
    let dep_rows: Vec<usize> = (0..m_eq).filter(|i| !eq_keep.contains(i)).collect();
    let eq_rows = Matrix::from_rows(
        &eq_keep.iter().map(|&i| model.a_hat.row(i).to_vec()).collect::<Vec<_>>(),
    );
    let beq: Vec<f64> = eq_keep.iter().map(|&i| beq_all[i]).collect();
    let eq_rows = if eq_keep.is_empty() { Matrix::zeros(0, d) } else { eq_rows };

    let problem = QpProblem {
        l: model.prox_weight,
        c: model.c_hat.clone(),
        eq_rows,
        beq,
        ineq_rows: model.b_hat.clone(),
        bineq,
    };

    let dep_check = |alpha: &[f64]| -> bool {
        dep_rows
            .iter()
            .all(|&i| (dot(model.a_hat.row(i), alpha) - beq_all[i]).abs() <= tol)
    };

    if max_iter == 0 {
        return QpOutcome::non_optimal(QpStatus::MaxIterations);
    }

    match exchange_loop(&problem, tol, max_iter) {
        ExchangeEnd::Solved { alpha, lambda_ind, mu } => {
            if !dep_check(&alpha) {
                let viol: f64 = dep_rows
                    .iter()
                    .map(|&i| (dot(model.a_hat.row(i), &alpha) - beq_all[i]).abs())
                    .sum();
                let mut out = QpOutcome::non_optimal(QpStatus::Infeasible);
                out.kkt_residual = viol;
                return out;
            }
            finish_optimal(model, &eq_keep, alpha, lambda_ind, mu)
        }
        ExchangeEnd::Stuck => {
            // Certify feasibility before deciding anything else.
            match phase1(&problem, tol) {
                Phase1End::Infeasible { violation } => {
                    let mut out = QpOutcome::non_optimal(QpStatus::Infeasible);
                    out.kkt_residual = violation;
                    out
                }
                Phase1End::Feasible { alpha } => {
                    if !dep_check(&alpha) {
                        let viol: f64 = dep_rows
                            .iter()
                            .map(|&i| (dot(model.a_hat.row(i), &alpha) - beq_all[i]).abs())
                            .sum();
                        let mut out = QpOutcome::non_optimal(QpStatus::Infeasible);
                        out.kkt_residual = viol;
                        return out;
                    }
                    match feasible_active_set(&problem, alpha, tol, max_iter) {
                        FeasibleEnd::Solved { alpha, lambda_ind, mu } => {
                            finish_optimal(model, &eq_keep, alpha, lambda_ind, mu)
                        }
                        FeasibleEnd::MaxIterations => {
                            QpOutcome::non_optimal(QpStatus::MaxIterations)
                        }
                        FeasibleEnd::Degenerate => QpOutcome::non_optimal(QpStatus::Degenerate),
                    }
                }
                Phase1End::Degenerate => QpOutcome::non_optimal(QpStatus::Degenerate),
            }
        }
        ExchangeEnd::Degenerate => QpOutcome::non_optimal(QpStatus::Degenerate),
    }
}

/// Scatter the working-set multipliers back to full-length vectors and
/// compute the final KKT residual.
fn finish_optimal(
    model: &ReducedModel,
    eq_keep: &[usize],
    alpha: Vec<f64>,
    lambda_ind: Vec<f64>,
    mu: Vec<f64>,
) -> QpOutcome {
    let mut lambda = vec![0.0; model.m_eq()];
    for (pos, &row) in eq_keep.iter().enumerate() {
        lambda[row] = lambda_ind[pos];
    }
    let kkt_residual = kkt_residual(model, &alpha, &lambda, &mu);
    QpOutcome { status: QpStatus::Optimal, alpha, lambda, mu, kkt_residual }
}

/// Maximum KKT residual of a candidate solution: stationarity, primal
/// feasibility of both constraint blocks, multiplier sign, complementarity.
pub fn kkt_residual(model: &ReducedModel, alpha: &[f64], lambda: &[f64], mu: &[f64]) -> f64 {
    let mut stat: Vec<f64> =
        model.c_hat.iter().zip(alpha).map(|(ci, ai)| ci + model.prox_weight * ai).collect();
    if model.m_eq() > 0 {
        axpy(1.0, &model.a_hat.tr_matvec(lambda), &mut stat);
    }
    if model.m_ineq() > 0 {
        axpy(1.0, &model.b_hat.tr_matvec(mu), &mut stat);
    }
    let eq_res = model.eq_residual(alpha);
    let ineq_val = model.ineq_value(alpha);
    let mut worst = norm2(&stat);
    for v in &eq_res {
        worst = worst.max(v.abs());
    }
    for (i, v) in ineq_val.iter().enumerate() {
        worst = worst.max(*v);
        worst = worst.max((mu[i] * v).abs());
        worst = worst.max(-mu[i]);
    }
    worst
}

enum ExchangeEnd {
    Solved { alpha: Vec<f64>, lambda_ind: Vec<f64>, mu: Vec<f64> },
    Stuck,
    Degenerate,
}

/// Primal exchange: jump to the working-set KKT solution each iteration,
/// drop the most negative multiplier first, then add the most violated
/// inequality (ties broken toward the lowest index).
fn exchange_loop(problem: &QpProblem, tol: f64, max_iter: usize) -> ExchangeEnd {
    let d = problem.dim();
    let k = problem.eq_rows.rows();
    let m_ineq = problem.m_ineq();
    let mult_tol = (1e-2 * tol).min(1e-9);
    let mut w: Vec<usize> = Vec::new();

    let mut iter = 0;
    loop {
        if iter >= max_iter {
            return ExchangeEnd::Stuck;
        }
        iter += 1;

        let (e, rhs) = problem.working_system(&w);
        let (alpha, y) = match solve_saddle(problem.l, &e, &problem.c, &rhs) {
            Ok(sol) => sol,
            Err(LinalgError::SingularSystem { .. }) => {
                // A freshly added row made the system singular (drops and the
                // pre-filtered equalities cannot). The row is redundant or
                // conflicting; let phase-1 decide which.
                return if w.pop().is_some() { ExchangeEnd::Stuck } else { ExchangeEnd::Degenerate };
            }
            Err(_) => return ExchangeEnd::Degenerate,
        };

        // Drop rule: most negative working multiplier, lowest index on ties.
        let mut drop_pos: Option<usize> = None;
        let mut drop_val = -mult_tol;
        for (pos, &mu_i) in y[k..].iter().enumerate() {
            let better = mu_i < drop_val
                || (mu_i == drop_val
                    && drop_pos.map_or(false, |p| w[pos] < w[p]));
            if better {
                drop_val = mu_i;
                drop_pos = Some(pos);
            }
        }
        if let Some(pos) = drop_pos {
            w.remove(pos);
            continue;
        }

        // Add rule: most violated non-working inequality, lowest index on ties.
        let mut add: Option<(usize, f64)> = None;
        for i in 0..m_ineq {
            if w.contains(&i) {
                continue;
            }
            let viol = problem.ineq_violation(&alpha, i);
            if viol > tol && add.map_or(true, |(_, best)| viol > best) {
                add = Some((i, viol));
            }
        }
        match add {
            None => {
                let lambda_ind = y[..k].to_vec();
                let mut mu = vec![0.0; m_ineq];
                for (pos, &i) in w.iter().enumerate() {
                    mu[i] = y[k + pos];
                }
                return ExchangeEnd::Solved { alpha, lambda_ind, mu };
            }
            Some((i, _)) => {
                if k + w.len() >= d {
                    // The working set already pins alpha; a still-violated
                    // constraint cannot be activated. Feasibility is in doubt.
                    return ExchangeEnd::Stuck;
                }
                w.push(i);
            }
        }
    }
}

enum Phase1End {
    Feasible { alpha: Vec<f64> },
    Infeasible { violation: f64 },
    Degenerate,
}

/// Phase-1: minimize the total inequality violation sum(s) subject to
/// eq_rows alpha = beq, ineq_rows alpha - s <= bineq, s >= 0, with a tiny
/// proximal term for strict convexity. The slack formulation has a trivially
/// feasible start, so the null-space active-set method applies directly.
fn phase1(problem: &QpProblem, tol: f64) -> Phase1End {
    let d = problem.dim();
    let k = problem.eq_rows.rows();
    let m = problem.m_ineq();
    let dz = d + m;

    // Start from the minimum-norm solution of the equalities.
    let alpha0 = if k == 0 {
        vec![0.0; d]
    } else {
        match solve_saddle(1.0, &problem.eq_rows, &vec![0.0; d], &problem.beq) {
            Ok((a, _)) => a,
            Err(_) => return Phase1End::Degenerate,
        }
    };

    let mut c_ext = vec![0.0; dz];
    for v in c_ext.iter_mut().skip(d) {
        *v = 1.0;
    }
    let mut eq_ext = Matrix::zeros(k, dz);
    for i in 0..k {
        eq_ext.row_mut(i)[..d].copy_from_slice(problem.eq_rows.row(i));
    }
    // Rows 0..m: ineq_i alpha - s_i <= bineq_i; rows m..2m: -s_i <= 0.
    let mut ineq_ext = Matrix::zeros(2 * m, dz);
    let mut bineq_ext = vec![0.0; 2 * m];
    for i in 0..m {
        ineq_ext.row_mut(i)[..d].copy_from_slice(problem.ineq_rows.row(i));
        ineq_ext.set(i, d + i, -1.0);
        bineq_ext[i] = problem.bineq[i];
        ineq_ext.set(m + i, d + i, -1.0);
    }

    let ext = QpProblem {
        l: PHASE1_WEIGHT,
        c: c_ext,
        eq_rows: eq_ext,
        beq: problem.beq.clone(),
        ineq_rows: ineq_ext,
        bineq: bineq_ext,
    };

    let mut z0 = vec![0.0; dz];
    z0[..d].copy_from_slice(&alpha0);
    for i in 0..m {
        z0[d + i] = problem.ineq_violation(&alpha0, i).max(0.0);
    }

    let budget = default_max_iter(k, 2 * m);
    match feasible_active_set(&ext, z0, tol, budget) {
        FeasibleEnd::Solved { alpha: z, .. } => {
            let alpha = z[..d].to_vec();
            let violation: f64 =
                (0..m).map(|i| problem.ineq_violation(&alpha, i).max(0.0)).sum();
            if violation > tol {
                Phase1End::Infeasible { violation }
            } else {
                Phase1End::Feasible { alpha }
            }
        }
        FeasibleEnd::MaxIterations | FeasibleEnd::Degenerate => Phase1End::Degenerate,
    }
}

enum FeasibleEnd {
    Solved { alpha: Vec<f64>, lambda_ind: Vec<f64>, mu: Vec<f64> },
    MaxIterations,
    Degenerate,
}

/// Null-space active-set method from a feasible starting point: compute the
/// proximal Newton direction restricted to the working set, take the largest
/// step that keeps every inequality satisfied (adding the blocking row), and
/// at stationarity drop the most negative multiplier or stop.
fn feasible_active_set(
    problem: &QpProblem,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> FeasibleEnd {
    let k = problem.eq_rows.rows();
    let m_ineq = problem.m_ineq();
    let mult_tol = (1e-2 * tol).min(1e-9);
    let mut x = x0;

    // Seed the working set with the constraints active at the start, keeping
    // the stacked system independent (verified by attempting the solve).
    let mut w: Vec<usize> = Vec::new();
    for i in 0..m_ineq {
        if problem.ineq_violation(&x, i).abs() <= 10.0 * tol {
            w.push(i);
        }
    }
    loop {
        let (e, _) = problem.working_system(&w);
        let ghat: Vec<f64> =
            problem.c.iter().zip(&x).map(|(ci, xi)| ci + problem.l * xi).collect();
        if solve_saddle(problem.l, &e, &ghat, &vec![0.0; e.rows()]).is_ok() {
            break;
        }
        if w.pop().is_none() {
            return FeasibleEnd::Degenerate;
        }
    }

    let mut iter = 0;
    loop {
        if iter >= max_iter {
            return FeasibleEnd::MaxIterations;
        }
        iter += 1;

        let ghat: Vec<f64> =
            problem.c.iter().zip(&x).map(|(ci, xi)| ci + problem.l * xi).collect();
        let (e, _) = problem.working_system(&w);
        let (p, y) = match solve_saddle(problem.l, &e, &ghat, &vec![0.0; e.rows()]) {
            Ok(sol) => sol,
            Err(_) => {
                // Only a just-added blocking row can break independence.
                if w.pop().is_some() {
                    continue;
                }
                return FeasibleEnd::Degenerate;
            }
        };

        let stat = problem.l * norm2(&p);
        let stat_tol = 1e-2 * tol * norm2(&ghat).max(1.0);
        if stat <= stat_tol {
            // Stationary on the working set: check multiplier signs.
            let mut drop_pos: Option<usize> = None;
            let mut drop_val = -mult_tol;
            for (pos, &mu_i) in y[k..].iter().enumerate() {
                let better = mu_i < drop_val
                    || (mu_i == drop_val && drop_pos.map_or(false, |p| w[pos] < w[p]));
                if better {
                    drop_val = mu_i;
                    drop_pos = Some(pos);
                }
            }
            match drop_pos {
                Some(pos) => {
                    w.remove(pos);
                    continue;
                }
                None => {
                    let lambda_ind = y[..k].to_vec();
                    let mut mu = vec![0.0; m_ineq];
                    for (pos, &i) in w.iter().enumerate() {
                        mu[i] = y[k + pos];
                    }
                    return FeasibleEnd::Solved { alpha: x, lambda_ind, mu };
                }
            }
        }

        // Ratio test: largest sigma in [0, 1] keeping all inequalities
        // satisfied; ascending scan keeps the lowest index on exact ties.
        let mut sigma = 1.0;
        let mut blocker: Option<usize> = None;
        let p_norm = norm2(&p);
        for i in 0..m_ineq {
            if w.contains(&i) {
                continue;
            }
            let bip = dot(problem.ineq_rows.row(i), &p);
            let row_norm = norm2(problem.ineq_rows.row(i));
            if bip <= 1e-13 * (row_norm * p_norm).max(1e-300) {
                continue;
            }
            let slack = problem.bineq[i] - dot(problem.ineq_rows.row(i), &x);
            let step = (slack / bip).max(0.0);
            if step < sigma {
                sigma = step;
                blocker = Some(i);
            }
        }

        if sigma > 0.0 {
            axpy(sigma, &p, &mut x);
        }
        if let Some(i) = blocker {
            w.push(i);
        }
    }
}

/// Exhaustive reference solver: enumerate all active sets, solve each KKT
/// candidate, keep the feasible one with nonnegative multipliers. Exponential
/// in the inequality count, hence the hard cap.
pub fn brute_force_qp(model: &ReducedModel) -> Result<QpOutcome, QpError> {
    const LIMIT: usize = 12;
    let tol = QP_DEFAULT_TOL;
    let d = model.dim();
    let m_eq = model.m_eq();
    let m_ineq = model.m_ineq();
    if m_ineq > LIMIT {
        return Err(QpError::TooManyConstraints { m_ineq, limit: LIMIT });
    }

    let beq_all: Vec<f64> = model.h.iter().map(|v| -v).collect();
    let bineq: Vec<f64> = model.g.iter().map(|v| -v).collect();
    let eq_keep = independent_rows(&model.a_hat, INDEP_TOL);
    let k = eq_keep.len();

    let mut best: Option<(f64, QpOutcome)> = None;
    let mut any_feasible = false;

    for mask in 0u64..(1u64 << m_ineq) {
        let active: Vec<usize> = (0..m_ineq).filter(|i| mask & (1 << i) != 0).collect();
        if k + active.len() > d {
            continue;
        }
        let mut e = Matrix::zeros(k + active.len(), d);
        let mut rhs = Vec::with_capacity(k + active.len());
        for (pos, &row) in eq_keep.iter().enumerate() {
            e.row_mut(pos).copy_from_slice(model.a_hat.row(row));
            rhs.push(beq_all[row]);
        }
        for (pos, &i) in active.iter().enumerate() {
            e.row_mut(k + pos).copy_from_slice(model.b_hat.row(i));
            rhs.push(bineq[i]);
        }
        let (alpha, y) = match solve_saddle(model.prox_weight, &e, &model.c_hat, &rhs) {
            Ok(sol) => sol,
            // Dependent active sets are redundant: some independent subset
            // reaches the same face.
            Err(_) => continue,
        };

        // Primal feasibility against the *full* constraint set, dependent
        // equality rows included.
        let eq_ok = (0..m_eq)
            .all(|i| (dot(model.a_hat.row(i), &alpha) - beq_all[i]).abs() <= tol);
        let ineq_ok =
            (0..m_ineq).all(|i| dot(model.b_hat.row(i), &alpha) - bineq[i] <= tol);
        if !(eq_ok && ineq_ok) {
            continue;
        }
        any_feasible = true;

        if y[k..].iter().any(|&mu_i| mu_i < -1e-9) {
            continue;
        }

        let obj = model.objective(&alpha);
        if best.as_ref().map_or(true, |(prev, _)| obj < *prev) {
            let mut lambda = vec![0.0; m_eq];
            for (pos, &row) in eq_keep.iter().enumerate() {
                lambda[row] = y[pos];
            }
            let mut mu = vec![0.0; m_ineq];
            for (pos, &i) in active.iter().enumerate() {
                mu[i] = y[k + pos];
            }
            let kkt = kkt_residual(model, &alpha, &lambda, &mu);
            best = Some((
                obj,
                QpOutcome { status: QpStatus::Optimal, alpha, lambda, mu, kkt_residual: kkt },
            ));
        }
    }

    match best {
        Some((_, outcome)) => Ok(outcome),
        None if any_feasible => Ok(QpOutcome::non_optimal(QpStatus::Degenerate)),
        None => Ok(QpOutcome::non_optimal(QpStatus::Infeasible)),
    }
}
