//! Smooth nonlinear programming with equality and inequality constraints:
//! an augmented-Lagrangian outer loop around a BFGS inner minimizer.
//!
//! Inequalities use the positive-part (Powell–Hestenes–Rockafellar) terms,
//! so the inner subproblem stays smooth and unconstrained; variable bounds
//! are folded in as identity-Jacobian inequality rows. Constraint rows are
//! rescaled once by their initial Jacobian row norms so residuals with
//! different units pull comparably; multipliers are reported in the user's
//! original units.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type ObjectiveFn = dyn Fn(&DVector<f64>) -> (f64, DVector<f64>);
pub type ConstraintFn = dyn Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>);

pub struct NlpProblem {
    pub n_vars: usize,
    pub objective: Box<ObjectiveFn>,
    /// Rows are feasible at zero.
    pub eq_constraints: Option<Box<ConstraintFn>>,
    /// Rows are feasible at or above zero.
    pub ineq_constraints: Option<Box<ConstraintFn>>,
    /// Per-variable `(lower, upper)`; use infinities for free variables.
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("objective returned a non-finite value or gradient")]
    ObjectiveFailure,
    #[error("equality constraint {0} returned a non-finite value or derivative")]
    EqualityFailure(usize),
    #[error("inequality constraint {0} returned a non-finite value or derivative")]
    InequalityFailure(usize),
    #[error("x0 has length {got}, problem has {expected} variables")]
    BadInitialPoint { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    Converged,
    MaxIterations,
    Stalled,
}

/// Optimality measures at the returned point, all recomputable from the
/// problem callbacks and the reported multipliers.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    /// max |c_eq|.
    pub feas_eq: f64,
    /// max violation of inequality rows and bounds (0 when feasible).
    pub feas_ineq: f64,
    /// ‖∇f + J_eqᵀλ − J_ineqᵀμ − μ_lower + μ_upper‖_∞.
    pub stationarity: f64,
    /// max |μ_k · c_k| over inequality rows and bounds.
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub x: DVector<f64>,
    pub status: NlpStatus,
    pub kkt_report: KktReport,
    /// Total inner iterations.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub wall_time: Duration,
    pub multipliers_eq: DVector<f64>,
    pub multipliers_ineq: DVector<f64>,
    pub multipliers_lower: DVector<f64>,
    pub multipliers_upper: DVector<f64>,
    /// Max unscaled constraint violation after each outer iteration.
    pub violation_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NlpOptions {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_cap: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-6,
            tol_opt: 1e-5,
            max_outer: 50,
            max_inner: 500,
            penalty_init: 10.0,
            penalty_cap: 1e8,
        }
    }
}

fn check_finite_vec(v: &DVector<f64>) -> Option<usize> {
    (0..v.nrows()).find(|&i| !v[i].is_finite())
}

fn check_finite_mat(m: &DMatrix<f64>) -> Option<usize> {
    (0..m.nrows()).find(|&r| (0..m.ncols()).any(|c| !m[(r, c)].is_finite()))
}

struct Evaluated {
    f: f64,
    grad_f: DVector<f64>,
    c_eq: DVector<f64>,
    j_eq: DMatrix<f64>,
    c_ineq: DVector<f64>,
    j_ineq: DMatrix<f64>,
}

struct Workspace<'a> {
    problem: &'a NlpProblem,
    bounds: Vec<(usize, f64, bool)>, // (var, bound, is_lower)
    scale_eq: DVector<f64>,
    scale_ineq: DVector<f64>,
    lambda: DVector<f64>,
    mu: DVector<f64>,
    mu_lower: DVector<f64>,
    mu_upper: DVector<f64>,
    penalty: f64,
}

impl<'a> Workspace<'a> {
    fn eval(&self, x: &DVector<f64>) -> Result<Evaluated, NlpError> {
        let (f, grad_f) = (self.problem.objective)(x);
        if !f.is_finite() || check_finite_vec(&grad_f).is_some() {
            return Err(NlpError::ObjectiveFailure);
        }
        let (c_eq, j_eq) = match &self.problem.eq_constraints {
            Some(cb) => {
                let (c, j) = cb(x);
                if let Some(i) = check_finite_vec(&c).or_else(|| check_finite_mat(&j)) {
                    return Err(NlpError::EqualityFailure(i));
                }
                (c, j)
            }
            None => (DVector::zeros(0), DMatrix::zeros(0, x.nrows())),
        };
        let (c_ineq, j_ineq) = match &self.problem.ineq_constraints {
            Some(cb) => {
                let (c, j) = cb(x);
                if let Some(i) = check_finite_vec(&c).or_else(|| check_finite_mat(&j)) {
                    return Err(NlpError::InequalityFailure(i));
                }
                (c, j)
            }
            None => (DVector::zeros(0), DMatrix::zeros(0, x.nrows())),
        };
        Ok(Evaluated {
            f,
            grad_f,
            c_eq,
            j_eq,
            c_ineq,
            j_ineq,
        })
    }

    /// Augmented-Lagrangian value and gradient at `x` under the current
    /// multipliers and penalty.
    fn al_value_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>), NlpError> {
        let ev = self.eval(x)?;
        let rho = self.penalty;
        let mut val = ev.f;
        let mut grad = ev.grad_f;
        if ev.c_eq.nrows() > 0 {
            let c = ev.c_eq.component_div(&self.scale_eq);
            let w = &self.lambda + &c * rho;
            val += self.lambda.dot(&c) + 0.5 * rho * c.norm_squared();
            grad += ev.j_eq.transpose() * w.component_div(&self.scale_eq);
        }
        if ev.c_ineq.nrows() > 0 {
            let c = ev.c_ineq.component_div(&self.scale_ineq);
            let mut w = DVector::zeros(c.nrows());
            for k in 0..c.nrows() {
                let act = (self.mu[k] - rho * c[k]).max(0.0);
                val += (act * act - self.mu[k] * self.mu[k]) / (2.0 * rho);
                w[k] = act;
            }
            grad -= ev.j_ineq.transpose() * w.component_div(&self.scale_ineq);
        }
        for (slot, &(var, bound, is_lower)) in self.bounds.iter().enumerate() {
            let (c, mu) = if is_lower {
                (x[var] - bound, self.mu_lower[slot])
            } else {
                (bound - x[var], self.mu_upper[slot])
            };
            let act = (mu - rho * c).max(0.0);
            val += (act * act - mu * mu) / (2.0 * rho);
            if is_lower {
                grad[var] -= act;
            } else {
                grad[var] += act;
            }
        }
        Ok((val, grad))
    }

    /// Inverse of the Gauss-Newton model of the augmented-Lagrangian
    /// Hessian at `x`: identity for the objective part plus ρ·J̃ᵀJ̃ over
    /// equality rows, active inequality rows, and active bounds. Seeds the
    /// inner BFGS so penalty stiffness is in the model from iteration one.
    fn inverse_hessian_seed(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, NlpError> {
        let n = x.nrows();
        let ev = self.eval(x)?;
        let rho = self.penalty;
        let mut h = DMatrix::<f64>::identity(n, n);
        if ev.c_eq.nrows() > 0 {
            let mut j = ev.j_eq.clone();
            for r in 0..j.nrows() {
                let s = 1.0 / self.scale_eq[r];
                for c in 0..n {
                    j[(r, c)] *= s;
                }
            }
            h += j.transpose() * j * rho;
        }
        if ev.c_ineq.nrows() > 0 {
            let c = ev.c_ineq.component_div(&self.scale_ineq);
            for r in 0..c.nrows() {
                if self.mu[r] - rho * c[r] > 0.0 {
                    let row = ev.j_ineq.row(r) / self.scale_ineq[r];
                    h += row.transpose() * row * rho;
                }
            }
        }
        for (slot, &(var, bound, is_lower)) in self.bounds.iter().enumerate() {
            let (cv, mu) = if is_lower {
                (x[var] - bound, self.mu_lower[slot])
            } else {
                (bound - x[var], self.mu_upper[slot])
            };
            if mu - rho * cv > 0.0 {
                h[(var, var)] += rho;
            }
        }
        Ok(h
            .cholesky()
            .map(|ch| ch.inverse())
            .unwrap_or_else(|| DMatrix::identity(n, n)))
    }

    /// Max unscaled violation over every constraint kind.
    fn violation(&self, ev: &Evaluated, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for k in 0..ev.c_eq.nrows() {
            v = v.max(ev.c_eq[k].abs());
        }
        for k in 0..ev.c_ineq.nrows() {
            v = v.max(-ev.c_ineq[k]);
        }
        for &(var, bound, is_lower) in &self.bounds {
            v = v.max(if is_lower {
                bound - x[var]
            } else {
                x[var] - bound
            });
        }
        v
    }

    fn update_multipliers(&mut self, ev: &Evaluated, x: &DVector<f64>) {
        let rho = self.penalty;
        if ev.c_eq.nrows() > 0 {
            let c = ev.c_eq.component_div(&self.scale_eq);
            self.lambda += c * rho;
        }
        if ev.c_ineq.nrows() > 0 {
            let c = ev.c_ineq.component_div(&self.scale_ineq);
            for k in 0..c.nrows() {
                self.mu[k] = (self.mu[k] - rho * c[k]).max(0.0);
            }
        }
        for (slot, &(var, bound, is_lower)) in self.bounds.iter().enumerate() {
            if is_lower {
                let c = x[var] - bound;
                self.mu_lower[slot] = (self.mu_lower[slot] - rho * c).max(0.0);
            } else {
                let c = bound - x[var];
                self.mu_upper[slot] = (self.mu_upper[slot] - rho * c).max(0.0);
            }
        }
    }

    /// Multipliers in the caller's units and the optimality report, built
    /// from one fresh callback evaluation.
    fn report(
        &self,
        x: &DVector<f64>,
    ) -> Result<(KktReport, DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>), NlpError>
    {
        let ev = self.eval(x)?;
        let lam = self.lambda.component_div(&self.scale_eq);
        let mu = self.mu.component_div(&self.scale_ineq);
        let n = x.nrows();
        let mut mu_lower = DVector::zeros(n);
        let mut mu_upper = DVector::zeros(n);
        for (slot, &(var, _, is_lower)) in self.bounds.iter().enumerate() {
            if is_lower {
                mu_lower[var] = self.mu_lower[slot];
            } else {
                mu_upper[var] = self.mu_upper[slot];
            }
        }
        let mut stat = ev.grad_f.clone();
        if ev.c_eq.nrows() > 0 {
            stat += ev.j_eq.transpose() * &lam;
        }
        if ev.c_ineq.nrows() > 0 {
            stat -= ev.j_ineq.transpose() * &mu;
        }
        stat -= &mu_lower;
        stat += &mu_upper;
        let mut feas_ineq: f64 = 0.0;
        let mut compl: f64 = 0.0;
        for k in 0..ev.c_ineq.nrows() {
            feas_ineq = feas_ineq.max(-ev.c_ineq[k]);
            compl = compl.max((mu[k] * ev.c_ineq[k]).abs());
        }
        for &(var, bound, is_lower) in &self.bounds {
            let c = if is_lower {
                x[var] - bound
            } else {
                bound - x[var]
            };
            feas_ineq = feas_ineq.max(-c);
            let m = if is_lower {
                mu_lower[var]
            } else {
                mu_upper[var]
            };
            compl = compl.max((m * c).abs());
        }
        let report = KktReport {
            feas_eq: ev.c_eq.amax().max(0.0),
            feas_ineq: feas_ineq.max(0.0),
            stationarity: stat.amax(),
            complementarity: compl,
        };
        Ok((report, lam, mu, mu_lower, mu_upper))
    }
}

/// Minimize the augmented Lagrangian from `x` to gradient tolerance `omega`:
/// BFGS (inverse-Hessian form) seeded with the Gauss-Newton curvature of the
/// penalty terms, Armijo backtracking. Returns the new point, iterations
/// spent, and whether the line search died before the tolerance was met.
fn inner_minimize(
    ws: &Workspace,
    x: &DVector<f64>,
    omega: f64,
    max_inner: usize,
) -> Result<(DVector<f64>, usize, bool), NlpError> {
    let mut x = x.clone();
    let (mut val, mut grad) = ws.al_value_grad(&x)?;
    let mut h = ws.inverse_hessian_seed(&x)?;
    let mut just_reset = true;
    for iter in 0..max_inner {
        if grad.amax() <= omega {
            return Ok((x, iter, false));
        }
        let mut dir = -(&h * &grad);
        if dir.dot(&grad) >= 0.0 {
            h = ws.inverse_hessian_seed(&x)?;
            just_reset = true;
            dir = -(&h * &grad);
            if dir.dot(&grad) >= 0.0 {
                dir = -grad.clone();
            }
        }
        let slope = dir.dot(&grad);
        let mut t = 1.0;
        let mut ok = false;
        for _ in 0..40 {
            let trial = &x + &dir * t;
            let (tv, _) = match ws.al_value_grad(&trial) {
                Ok(p) => p,
                // Off-domain trial points behave like insufficient decrease.
                Err(_) => {
                    t *= 0.5;
                    continue;
                }
            };
            if tv <= val + 1e-4 * t * slope {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if !ok {
            if just_reset {
                return Ok((x, iter + 1, true));
            }
            h = ws.inverse_hessian_seed(&x)?;
            just_reset = true;
            continue;
        }
        let step = &dir * t;
        let x_new = &x + &step;
        let (val_new, grad_new) = ws.al_value_grad(&x_new)?;
        let y = &grad_new - &grad;
        let sy = step.dot(&y);
        if sy > 1e-12 * step.norm() * y.norm() {
            // Inverse BFGS update.
            let rho_b = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            let ss = &step * step.transpose();
            let hys = &hy * step.transpose();
            h += ss * (rho_b * rho_b * yhy + rho_b)
                - (&hys + hys.transpose()) * rho_b;
            just_reset = false;
        } else {
            h = ws.inverse_hessian_seed(&x_new)?;
            just_reset = true;
        }
        x = x_new;
        val = val_new;
        grad = grad_new;
    }
    Ok((x, max_inner, false))
}

/// Solve the program from `x0`. Deterministic for fixed inputs; statuses
/// other than the hard callback failures are reported in the solution, not
/// as errors.
pub fn solve(
    problem: &NlpProblem,
    x0: &DVector<f64>,
    opts: &NlpOptions,
) -> Result<NlpSolution, NlpError> {
    let start = Instant::now();
    if x0.nrows() != problem.n_vars {
        return Err(NlpError::BadInitialPoint {
            expected: problem.n_vars,
            got: x0.nrows(),
        });
    }
    let mut bounds = Vec::new();
    if let Some(bx) = &problem.bounds {
        assert_eq!(bx.len(), problem.n_vars, "one bound pair per variable");
        for (var, &(lo, hi)) in bx.iter().enumerate() {
            assert!(lo <= hi, "empty bound interval on variable {var}");
            if lo.is_finite() {
                bounds.push((var, lo, true));
            }
            if hi.is_finite() {
                bounds.push((var, hi, false));
            }
        }
    }
    let mut ws = Workspace {
        problem,
        bounds,
        scale_eq: DVector::zeros(0),
        scale_ineq: DVector::zeros(0),
        lambda: DVector::zeros(0),
        mu: DVector::zeros(0),
        mu_lower: DVector::zeros(0),
        mu_upper: DVector::zeros(0),
        penalty: opts.penalty_init,
    };
    let ev0 = ws.eval(x0)?;
    let row_scales = |j: &DMatrix<f64>| {
        DVector::from_fn(j.nrows(), |r, _| {
            j.row(r).norm().clamp(1e-3, 1e3)
        })
    };
    ws.scale_eq = row_scales(&ev0.j_eq);
    ws.scale_ineq = row_scales(&ev0.j_ineq);
    ws.lambda = DVector::zeros(ev0.c_eq.nrows());
    ws.mu = DVector::zeros(ev0.c_ineq.nrows());
    ws.mu_lower = DVector::zeros(ws.bounds.len());
    ws.mu_upper = DVector::zeros(ws.bounds.len());

    let mut x = x0.clone();
    let mut total_inner = 0;
    let mut history = Vec::new();
    let mut prev_violation = f64::INFINITY;
    let mut last_round_violation = f64::INFINITY;
    let mut consecutive_dead = 0;
    let mut status = NlpStatus::MaxIterations;
    let mut outer_done = 0;
    for outer in 0..opts.max_outer {
        let omega = (1e-2 * 0.25_f64.powi(outer as i32)).max(0.1 * opts.tol_opt);
        let (x_new, inner_iters, line_search_died) =
            inner_minimize(&ws, &x, omega, opts.max_inner)?;
        x = x_new;
        total_inner += inner_iters;
        outer_done = outer + 1;
        let ev = ws.eval(&x)?;
        let violation = ws.violation(&ev, &x);
        if std::env::var_os("NLP_TRACE").is_some() {
            eprintln!(
                "outer {outer}: omega {omega:.2e} inner {inner_iters} died {line_search_died} violation {violation:.3e} penalty {:.1e}",
                ws.penalty
            );
        }
        // Safeguarded update: multipliers move only when the violation did
        // not grow past the last accepted level (or is already inside
        // tolerance); otherwise the penalty grows and they stay put. This
        // keeps the accepted-violation sequence non-increasing above
        // tol_feas.
        if violation <= prev_violation.max(opts.tol_feas) {
            ws.update_multipliers(&ev, &x);
            history.push(violation);
            if violation > 0.25 * prev_violation && violation > opts.tol_feas {
                ws.penalty = (ws.penalty * 10.0).min(opts.penalty_cap);
            }
            prev_violation = violation;
        } else {
            ws.penalty = (ws.penalty * 10.0).min(opts.penalty_cap);
        }
        let (report, _, mu, mu_lower, mu_upper) = ws.report(&x)?;
        let mu_scale = mu
            .amax()
            .max(mu_lower.amax())
            .max(mu_upper.amax())
            .max(0.0);
        if violation <= opts.tol_feas
            && report.stationarity <= opts.tol_opt
            && report.complementarity <= opts.tol_opt * (1.0 + mu_scale)
        {
            status = NlpStatus::Converged;
            break;
        }
        // A dead line search gets a stiffer subproblem and another chance;
        // only repeated deaths with no feasibility progress end the run.
        if line_search_died {
            consecutive_dead += 1;
            if violation > opts.tol_feas {
                ws.penalty = (ws.penalty * 10.0).min(opts.penalty_cap);
            }
            if consecutive_dead >= 3 && violation >= 0.999 * last_round_violation {
                status = NlpStatus::Stalled;
                break;
            }
        } else {
            consecutive_dead = 0;
        }
        last_round_violation = violation;
    }
    let (kkt_report, lam, mu, mu_lower, mu_upper) = ws.report(&x)?;
    Ok(NlpSolution {
        x,
        status,
        kkt_report,
        iterations: total_inner,
        outer_iterations: outer_done,
        wall_time: start.elapsed(),
        multipliers_eq: lam,
        multipliers_ineq: mu,
        multipliers_lower: mu_lower,
        multipliers_upper: mu_upper,
        violation_history: history,
    })
}

/// Canned constrained problems with known optima; the regression gate for
/// the solver. Each entry carries its start point and the reference
/// solution.
pub mod suite {
    use super::*;

    pub struct SuiteProblem {
        pub name: &'static str,
        pub problem: NlpProblem,
        pub x0: DVector<f64>,
        pub x_star: DVector<f64>,
        pub f_star: f64,
    }

    fn quadratic(
        q: DMatrix<f64>,
        b: DVector<f64>,
        c: f64,
    ) -> Box<ObjectiveFn> {
        Box::new(move |x| {
            let qx = &q * x;
            (0.5 * x.dot(&qx) + b.dot(x) + c, qx + &b)
        })
    }

    fn rosenbrock() -> Box<ObjectiveFn> {
        Box::new(|x| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = nalgebra::dvector![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a)
            ];
            (f, g)
        })
    }

    pub fn problems() -> Vec<SuiteProblem> {
        let mut out = Vec::new();

        out.push(SuiteProblem {
            name: "shifted_parabola_above_two",
            problem: NlpProblem {
                n_vars: 1,
                objective: Box::new(|x| {
                    ((x[0] - 1.0).powi(2), nalgebra::dvector![2.0 * (x[0] - 1.0)])
                }),
                eq_constraints: None,
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0] - 2.0],
                        DMatrix::from_row_slice(1, 1, &[1.0]),
                    )
                })),
                bounds: None,
            },
            x0: nalgebra::dvector![0.0],
            x_star: nalgebra::dvector![2.0],
            f_star: 1.0,
        });

        out.push(SuiteProblem {
            name: "sum_of_squares_on_a_line",
            problem: NlpProblem {
                n_vars: 2,
                objective: quadratic(
                    DMatrix::identity(2, 2) * 2.0,
                    DVector::zeros(2),
                    0.0,
                ),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0] + x[1] - 1.0],
                        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![3.0, -2.0],
            x_star: nalgebra::dvector![0.5, 0.5],
            f_star: 0.5,
        });

        // Reference computed offline with an independent SQP implementation
        // and polished on the KKT system.
        out.push(SuiteProblem {
            name: "rosenbrock_on_the_unit_circle",
            problem: NlpProblem {
                n_vars: 2,
                objective: rosenbrock(),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0] * x[0] + x[1] * x[1] - 1.0],
                        DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![0.8, 0.6],
            x_star: nalgebra::dvector![0.786415154168428, 0.617698312523393],
            f_star: 0.045674808719500,
        });

        out.push(SuiteProblem {
            name: "rosenbrock_unconstrained",
            problem: NlpProblem {
                n_vars: 2,
                objective: rosenbrock(),
                eq_constraints: None,
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![-1.2, 1.0],
            x_star: nalgebra::dvector![1.0, 1.0],
            f_star: 0.0,
        });

        out.push(SuiteProblem {
            name: "parabola_pinned_to_its_curve",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    (
                        (1.0 - x[0]).powi(2),
                        nalgebra::dvector![-2.0 * (1.0 - x[0]), 0.0],
                    )
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![10.0 * (x[1] - x[0] * x[0])],
                        DMatrix::from_row_slice(1, 2, &[-20.0 * x[0], 10.0]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![-1.2, 1.0],
            x_star: nalgebra::dvector![1.0, 1.0],
            f_star: 0.0,
        });

        out.push(SuiteProblem {
            name: "log_objective_on_a_quartic_shell",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    (
                        (1.0 + x[0] * x[0]).ln() - x[1],
                        nalgebra::dvector![2.0 * x[0] / (1.0 + x[0] * x[0]), -1.0],
                    )
                }),
                eq_constraints: Some(Box::new(|x| {
                    let s = 1.0 + x[0] * x[0];
                    (
                        nalgebra::dvector![s * s + x[1] * x[1] - 4.0],
                        DMatrix::from_row_slice(1, 2, &[4.0 * x[0] * s, 2.0 * x[1]]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![2.0, 2.0],
            x_star: nalgebra::dvector![0.0, 3.0_f64.sqrt()],
            f_star: -(3.0_f64.sqrt()),
        });

        out.push(SuiteProblem {
            name: "coupled_squares_on_a_plane",
            problem: NlpProblem {
                n_vars: 3,
                objective: Box::new(|x| {
                    let (a, b) = (x[0] + x[1], x[1] + x[2]);
                    (
                        a * a + b * b,
                        nalgebra::dvector![2.0 * a, 2.0 * (a + b), 2.0 * b],
                    )
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0] + 2.0 * x[1] + 3.0 * x[2] - 1.0],
                        DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![-4.0, 1.0, 1.0],
            x_star: nalgebra::dvector![0.5, -0.5, 0.5],
            f_star: 0.0,
        });

        out.push(SuiteProblem {
            name: "convex_qp_with_a_resource_row",
            problem: NlpProblem {
                n_vars: 3,
                objective: Box::new(|x| {
                    let f = 9.0 - 8.0 * x[0] - 6.0 * x[1] - 4.0 * x[2]
                        + 2.0 * x[0] * x[0]
                        + 2.0 * x[1] * x[1]
                        + x[2] * x[2]
                        + 2.0 * x[0] * x[1]
                        + 2.0 * x[0] * x[2];
                    let g = nalgebra::dvector![
                        -8.0 + 4.0 * x[0] + 2.0 * x[1] + 2.0 * x[2],
                        -6.0 + 4.0 * x[1] + 2.0 * x[0],
                        -4.0 + 2.0 * x[2] + 2.0 * x[0]
                    ];
                    (f, g)
                }),
                eq_constraints: None,
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![3.0 - x[0] - x[1] - 2.0 * x[2]],
                        DMatrix::from_row_slice(1, 3, &[-1.0, -1.0, -2.0]),
                    )
                })),
                bounds: Some(vec![(0.0, f64::INFINITY); 3]),
            },
            x0: nalgebra::dvector![0.5, 0.5, 0.5],
            x_star: nalgebra::dvector![4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0],
            f_star: 1.0 / 9.0,
        });

        out.push(SuiteProblem {
            name: "five_vars_two_planes",
            problem: NlpProblem {
                n_vars: 5,
                objective: Box::new(|x| {
                    let f = (x[0] - 1.0).powi(2)
                        + (x[1] - x[2]).powi(2)
                        + (x[3] - x[4]).powi(2);
                    let g = nalgebra::dvector![
                        2.0 * (x[0] - 1.0),
                        2.0 * (x[1] - x[2]),
                        -2.0 * (x[1] - x[2]),
                        2.0 * (x[3] - x[4]),
                        -2.0 * (x[3] - x[4])
                    ];
                    (f, g)
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![
                            x.sum() - 5.0,
                            x[2] - 2.0 * (x[3] + x[4]) + 3.0
                        ],
                        DMatrix::from_row_slice(
                            2,
                            5,
                            &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, -2.0, -2.0],
                        ),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![3.0, 5.0, -3.0, 2.0, -2.0],
            x_star: nalgebra::dvector![1.0, 1.0, 1.0, 1.0, 1.0],
            f_star: 0.0,
        });

        out.push(SuiteProblem {
            name: "five_vars_three_planes",
            problem: NlpProblem {
                n_vars: 5,
                objective: Box::new(|x| {
                    let f = (x[0] - x[1]).powi(2)
                        + (x[1] + x[2] - 2.0).powi(2)
                        + (x[3] - 1.0).powi(2)
                        + (x[4] - 1.0).powi(2);
                    let g = nalgebra::dvector![
                        2.0 * (x[0] - x[1]),
                        -2.0 * (x[0] - x[1]) + 2.0 * (x[1] + x[2] - 2.0),
                        2.0 * (x[1] + x[2] - 2.0),
                        2.0 * (x[3] - 1.0),
                        2.0 * (x[4] - 1.0)
                    ];
                    (f, g)
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![
                            x[0] + 3.0 * x[1] - 4.0,
                            x[2] + x[3] - 2.0 * x[4],
                            x[1] - x[4]
                        ],
                        DMatrix::from_row_slice(
                            3,
                            5,
                            &[
                                1.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.0,
                                1.0, 0.0, 0.0, -1.0,
                            ],
                        ),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![2.5, 0.5, 2.0, -1.0, 0.5],
            x_star: nalgebra::dvector![1.0, 1.0, 1.0, 1.0, 1.0],
            f_star: 0.0,
        });

        // Projection of a point onto a plane, closed form.
        out.push(SuiteProblem {
            name: "plane_projection",
            problem: NlpProblem {
                n_vars: 3,
                objective: Box::new(|x| {
                    let p = nalgebra::dvector![1.0, 2.0, 3.0];
                    let d = x - &p;
                    (0.5 * d.norm_squared(), d)
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0] + x[1] + x[2] - 1.0],
                        DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![0.0, 0.0, 0.0],
            x_star: nalgebra::dvector![-2.0 / 3.0, 1.0 / 3.0, 4.0 / 3.0],
            f_star: 25.0 / 6.0,
        });

        out.push(SuiteProblem {
            name: "linear_pull_into_a_box_corner",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    (-x[0] - 2.0 * x[1], nalgebra::dvector![-1.0, -2.0])
                }),
                eq_constraints: None,
                ineq_constraints: None,
                bounds: Some(vec![(0.0, 1.0), (0.0, 1.0)]),
            },
            x0: nalgebra::dvector![0.3, 0.3],
            x_star: nalgebra::dvector![1.0, 1.0],
            f_star: -3.0,
        });

        out.push(SuiteProblem {
            name: "weighted_pull_against_a_budget",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    (-x[0] - 2.0 * x[1], nalgebra::dvector![-1.0, -2.0])
                }),
                eq_constraints: None,
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![1.0 - x[0] - x[1], x[0], x[1]],
                        DMatrix::from_row_slice(
                            3,
                            2,
                            &[-1.0, -1.0, 1.0, 0.0, 0.0, 1.0],
                        ),
                    )
                })),
                bounds: None,
            },
            x0: nalgebra::dvector![0.2, 0.2],
            x_star: nalgebra::dvector![0.0, 1.0],
            f_star: -2.0,
        });

        out.push(SuiteProblem {
            name: "disk_boundary_projection",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    let d = nalgebra::dvector![x[0] - 2.0, x[1]];
                    (d.norm_squared(), d * 2.0)
                }),
                eq_constraints: None,
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![1.0 - x.norm_squared()],
                        DMatrix::from_row_slice(1, 2, &[-2.0 * x[0], -2.0 * x[1]]),
                    )
                })),
                bounds: None,
            },
            x0: nalgebra::dvector![0.1, 0.5],
            x_star: nalgebra::dvector![1.0, 0.0],
            f_star: 1.0,
        });

        out.push(SuiteProblem {
            name: "disk_interior_optimum",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    let d = nalgebra::dvector![x[0] - 0.3, x[1] - 0.2];
                    (d.norm_squared(), d * 2.0)
                }),
                eq_constraints: None,
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![1.0 - x.norm_squared()],
                        DMatrix::from_row_slice(1, 2, &[-2.0 * x[0], -2.0 * x[1]]),
                    )
                })),
                bounds: None,
            },
            x0: nalgebra::dvector![-0.5, -0.5],
            x_star: nalgebra::dvector![0.3, 0.2],
            f_star: 0.0,
        });

        out.push(SuiteProblem {
            name: "anisotropic_qp_two_planes",
            problem: NlpProblem {
                n_vars: 3,
                objective: Box::new(|x| {
                    (
                        x[0] * x[0] + 2.0 * x[1] * x[1] + 3.0 * x[2] * x[2],
                        nalgebra::dvector![2.0 * x[0], 4.0 * x[1], 6.0 * x[2]],
                    )
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0] + x[1] + x[2] - 1.0, x[0] - x[1]],
                        DMatrix::from_row_slice(
                            2,
                            3,
                            &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0],
                        ),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![1.0, -1.0, 2.0],
            x_star: nalgebra::dvector![0.4, 0.4, 0.2],
            f_star: 0.6,
        });

        // One row deliberately a thousand times stiffer than the objective.
        out.push(SuiteProblem {
            name: "stiff_row_rescaling",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    (
                        (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
                        nalgebra::dvector![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)],
                    )
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![1000.0 * (x[0] - x[1] - 1.0)],
                        DMatrix::from_row_slice(1, 2, &[1000.0, -1000.0]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![0.0, 0.0],
            x_star: nalgebra::dvector![1.5, 0.5],
            f_star: 4.5,
        });

        // Projecting (−1, 2) onto x₂ = x₁²: the stationarity cubic factors
        // as (t−1)(2t²+2t−1), global minimum at t = −(1+√3)/2.
        out.push(SuiteProblem {
            name: "point_pull_onto_a_parabola",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    let d = nalgebra::dvector![x[0] + 1.0, x[1] - 2.0];
                    (d.norm_squared(), d * 2.0)
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[1] - x[0] * x[0]],
                        DMatrix::from_row_slice(1, 2, &[-2.0 * x[0], 1.0]),
                    )
                })),
                ineq_constraints: None,
                bounds: None,
            },
            x0: nalgebra::dvector![-2.0, 3.0],
            x_star: nalgebra::dvector![
                -(1.0 + 3.0_f64.sqrt()) / 2.0,
                1.0 + 3.0_f64.sqrt() / 2.0
            ],
            f_star: 2.75 - 1.5 * 3.0_f64.sqrt(),
        });

        // A three-knot path capped to unit steps, chasing a far target.
        out.push(SuiteProblem {
            name: "speed_limited_chain",
            problem: NlpProblem {
                n_vars: 3,
                objective: Box::new(|x| {
                    let g = DVector::from_fn(3, |k, _| 2.0 * (x[k] - 3.0));
                    ((0..3).map(|k| (x[k] - 3.0).powi(2)).sum(), g)
                }),
                eq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[0]],
                        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
                    )
                })),
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![
                            1.0 - (x[1] - x[0]),
                            1.0 + (x[1] - x[0]),
                            1.0 - (x[2] - x[1]),
                            1.0 + (x[2] - x[1])
                        ],
                        DMatrix::from_row_slice(
                            4,
                            3,
                            &[
                                1.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0,
                                -1.0, 1.0,
                            ],
                        ),
                    )
                })),
                bounds: None,
            },
            x0: nalgebra::dvector![0.0, 0.0, 0.0],
            x_star: nalgebra::dvector![0.0, 1.0, 2.0],
            f_star: 14.0,
        });

        out.push(SuiteProblem {
            name: "shallow_valley_above_zero",
            problem: NlpProblem {
                n_vars: 2,
                objective: Box::new(|x| {
                    (
                        x[1] + 1e-2 * (x[1] - x[0]).powi(2),
                        nalgebra::dvector![
                            -2e-2 * (x[1] - x[0]),
                            1.0 + 2e-2 * (x[1] - x[0])
                        ],
                    )
                }),
                eq_constraints: None,
                ineq_constraints: Some(Box::new(|x| {
                    (
                        nalgebra::dvector![x[1]],
                        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
                    )
                })),
                bounds: None,
            },
            x0: nalgebra::dvector![10.0, 1.0],
            x_star: nalgebra::dvector![0.0, 0.0],
            f_star: 0.0,
        });

        out
    }
}
