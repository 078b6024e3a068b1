//! Direct-transcription trajectory optimization with touch-offset contact
//! blocks as first-class decision variables.
//!
//! The single-level formulation stacks, per knot and collision pair, the
//! hypothetical contact points, the offset distance, and the shared contact
//! direction next to the poses, and hands the whole system to the NLP
//! solver as smooth equality/inequality constraints. The bilevel baseline
//! keeps only the poses and re-solves a closest-point distance oracle with
//! finite-difference gradients every time a constraint is evaluated.

use std::rc::Rc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bodies::{eval_g, eval_grad, eval_hess, pose_jacobians, SmoothBody};
use crate::mott::{
    ray_boundary_point, solve_static_mott, ContactVariables, MottError, MottOptions,
};
use crate::nlp::{self, NlpOptions, NlpProblem, NlpSolution, NlpStatus};
use crate::oracle::{closest_points, OracleError, VertexHull};
use crate::pose::Pose;

/// One rigid body in a trajectory scene.
#[derive(Debug, Clone)]
pub struct TrajBody {
    pub body: SmoothBody,
    /// World pose at the start; static bodies stay here for all knots.
    pub pose0: Pose,
    pub mobile: bool,
    /// Body-frame vertices of the underlying polytope when there is one;
    /// the bilevel baseline requires them.
    pub hull: Option<Vec<DVector<f64>>>,
}

#[derive(Debug, Clone)]
pub struct TrajOptSpec {
    pub bodies: Vec<TrajBody>,
    /// Index pairs to keep separated.
    pub pairs: Vec<(usize, usize)>,
    /// Knot count T.
    pub horizon: usize,
    /// Stacked poses of the mobile bodies, in body order.
    pub q_init: DVector<f64>,
    pub q_goal: DVector<f64>,
    /// Per-coordinate limit on |q^{t+1} − q^t|.
    pub v_max: DVector<f64>,
    pub goal_weight: DMatrix<f64>,
    /// Pin the last knot to q_goal instead of only pulling toward it.
    pub fix_final: bool,
    /// Add the center-side test (c_j − c_i)·∇g_i(x_i) ≥ 0 as an inequality
    /// row per knot per pair. φ ≥ 0 already rules out the maximum-offset
    /// branch, so this is off by default.
    pub uniqueness_rows: bool,
    /// Clearance floor: the touch offset must stay at or above this at
    /// every knot (0 allows exact touching). Knots are discrete, so the
    /// linearly interpolated motion can cut inside by up to the chord
    /// sagitta between knots; a floor above that bound keeps the
    /// continuous motion clear as well.
    pub phi_min: f64,
}

#[derive(Debug, Error)]
pub enum TrajOptError {
    #[error("inconsistent dimensions: {0}")]
    DimensionMismatch(String),
    #[error("body {0} has no stored hull vertices, required by the bilevel baseline")]
    MissingHull(usize),
    #[error(transparent)]
    Nlp(#[from] nlp::NlpError),
    #[error(transparent)]
    Mott(#[from] MottError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl TrajOptSpec {
    /// Spatial dimension, from the first body.
    pub fn dim(&self) -> usize {
        self.bodies.first().map_or(0, |b| b.body.dim())
    }

    /// Stacked pose-parameter count over the mobile bodies.
    pub fn q_dim(&self) -> usize {
        self.bodies
            .iter()
            .filter(|b| b.mobile)
            .map(|b| b.pose0.param_dim())
            .sum()
    }

    /// Per body: offset of its pose parameters inside a knot's q, or None
    /// when static.
    pub fn mobile_offsets(&self) -> Vec<Option<usize>> {
        let mut off = 0;
        self.bodies
            .iter()
            .map(|b| {
                if b.mobile {
                    let o = off;
                    off += b.pose0.param_dim();
                    Some(o)
                } else {
                    None
                }
            })
            .collect()
    }

    /// World poses of every body at one knot configuration.
    pub fn poses_at(&self, q_knot: &DVector<f64>) -> Vec<Pose> {
        let offsets = self.mobile_offsets();
        let dim = self.dim();
        self.bodies
            .iter()
            .zip(&offsets)
            .map(|(b, off)| match off {
                Some(o) => {
                    Pose::from_vector(dim, &q_knot.rows(*o, b.pose0.param_dim()).into_owned())
                }
                None => b.pose0.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), TrajOptError> {
        let fail = |m: String| Err(TrajOptError::DimensionMismatch(m));
        if self.bodies.is_empty() {
            return fail("no bodies".into());
        }
        let dim = self.dim();
        for (k, b) in self.bodies.iter().enumerate() {
            if b.body.dim() != dim || b.pose0.dim() != dim {
                return fail(format!("body {k} is not {dim}-dimensional"));
            }
        }
        for &(i, j) in &self.pairs {
            if i >= self.bodies.len() || j >= self.bodies.len() || i == j {
                return fail(format!("bad pair ({i}, {j})"));
            }
        }
        let q_dim = self.q_dim();
        // A static scene (nothing mobile) may run a single knot; anything
        // that moves needs at least two.
        let min_horizon = if q_dim == 0 { 1 } else { 2 };
        if self.horizon < min_horizon {
            return fail(format!(
                "horizon {} below minimum {min_horizon}",
                self.horizon
            ));
        }
        if self.q_init.nrows() != q_dim || self.q_goal.nrows() != q_dim {
            return fail(format!(
                "q_init/q_goal lengths {}/{} do not match mobile pose total {q_dim}",
                self.q_init.nrows(),
                self.q_goal.nrows()
            ));
        }
        if self.v_max.nrows() != q_dim || self.v_max.iter().any(|&v| v <= 0.0) {
            return fail("v_max must be positive with one entry per mobile coordinate".into());
        }
        if self.goal_weight.nrows() != q_dim || self.goal_weight.ncols() != q_dim {
            return fail("goal_weight must be q_dim × q_dim".into());
        }
        Ok(())
    }
}

/// Index map for the single-level decision vector: all knot configurations
/// first, then one contact block (x_i, x_j, φ, a) per knot per pair.
#[derive(Debug, Clone, Copy)]
pub struct DecisionLayout {
    pub dim: usize,
    pub q_dim: usize,
    pub horizon: usize,
    pub n_pairs: usize,
}

impl DecisionLayout {
    pub fn of(spec: &TrajOptSpec) -> Self {
        Self {
            dim: spec.dim(),
            q_dim: spec.q_dim(),
            horizon: spec.horizon,
            n_pairs: spec.pairs.len(),
        }
    }

    pub fn block_dim(&self) -> usize {
        3 * self.dim + 1
    }

    pub fn n_vars(&self) -> usize {
        self.horizon * self.q_dim + self.horizon * self.n_pairs * self.block_dim()
    }

    pub fn q_start(&self, t: usize) -> usize {
        debug_assert!(t < self.horizon);
        t * self.q_dim
    }

    pub fn contact_start(&self, t: usize, pair: usize) -> usize {
        debug_assert!(t < self.horizon && pair < self.n_pairs);
        self.horizon * self.q_dim + (t * self.n_pairs + pair) * self.block_dim()
    }

    pub fn knot(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        x.rows(self.q_start(t), self.q_dim).into_owned()
    }

    pub fn contact(&self, x: &DVector<f64>, t: usize, pair: usize) -> ContactVariables {
        let s = self.contact_start(t, pair);
        ContactVariables::from_vector(
            &x.rows(s, self.block_dim()).into_owned(),
            self.dim,
        )
    }

    /// Equality-row count: initial pin, optional final pin, and one
    /// touch-offset block of 2 + 3n rows per knot per pair.
    pub fn n_eq_rows(&self, fix_final: bool) -> usize {
        let pins = self.q_dim * if fix_final { 2 } else { 1 };
        pins + self.horizon * self.n_pairs * (2 + 3 * self.dim)
    }

    /// Inequality-row count: one φ ≥ 0 row per knot per pair (doubled when
    /// the center-side rows are on) plus two velocity rows per coordinate
    /// per interval.
    pub fn n_ineq_rows(&self, uniqueness: bool) -> usize {
        let per_contact = if uniqueness { 2 } else { 1 };
        self.horizon * self.n_pairs * per_contact
            + 2 * self.q_dim * self.horizon.saturating_sub(1)
    }
}

/// Normalized gradient and the Jacobian factor of normalization. The norm
/// floor keeps values and derivatives bounded when an iterate drags a
/// contact point across a body's gradient zero mid-optimization; boundary
/// gradients sit far above the floor, so converged solutions see the exact
/// normalization.
fn safe_unit(grad: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    const FLOOR: f64 = 1e-3;
    let n = grad.nrows();
    let norm = grad.norm();
    if norm >= FLOOR {
        let ghat = grad / norm;
        let proj = (DMatrix::identity(n, n) - &ghat * ghat.transpose()) / norm;
        (ghat, proj)
    } else {
        // Below the floor the map is linear, G/FLOOR, and its derivative
        // has no tangential projection.
        (grad / FLOOR, DMatrix::identity(n, n) / FLOOR)
    }
}

struct Prepared {
    spec: TrajOptSpec,
    layout: DecisionLayout,
    offsets: Vec<Option<usize>>,
    /// goal_weight + its transpose, so gradients need one product.
    w_sym: DMatrix<f64>,
}

impl Prepared {
    fn new(spec: &TrajOptSpec) -> Self {
        Self {
            spec: spec.clone(),
            layout: DecisionLayout::of(spec),
            offsets: spec.mobile_offsets(),
            w_sym: &spec.goal_weight + spec.goal_weight.transpose(),
        }
    }
}

/// Assemble the single-level NLP: goal-tracking objective, pin +
/// touch-offset equalities, φ and velocity inequalities.
pub fn build_problem(spec: &TrajOptSpec) -> Result<NlpProblem, TrajOptError> {
    spec.validate()?;
    let prep = Rc::new(Prepared::new(spec));
    let layout = prep.layout;

    let p_obj = Rc::clone(&prep);
    let objective = Box::new(move |x: &DVector<f64>| {
        let l = p_obj.layout;
        let mut f = 0.0;
        let mut grad = DVector::zeros(l.n_vars());
        for t in 0..l.horizon {
            let d = l.knot(x, t) - &p_obj.spec.q_goal;
            f += d.dot(&(&p_obj.spec.goal_weight * &d));
            let g = &p_obj.w_sym * &d;
            for k in 0..l.q_dim {
                grad[l.q_start(t) + k] = g[k];
            }
        }
        (f, grad)
    });

    let p_eq = Rc::clone(&prep);
    let eq = Box::new(move |x: &DVector<f64>| {
        let l = p_eq.layout;
        let n = l.dim;
        let n_rows = l.n_eq_rows(p_eq.spec.fix_final);
        let mut c = DVector::zeros(n_rows);
        let mut jac = DMatrix::zeros(n_rows, l.n_vars());
        let mut row = 0;
        // Pin q⁰ (and optionally q^{T−1}).
        let pin = |c: &mut DVector<f64>,
                   jac: &mut DMatrix<f64>,
                   row: &mut usize,
                   t: usize,
                   target: &DVector<f64>| {
            for k in 0..l.q_dim {
                c[*row] = x[l.q_start(t) + k] - target[k];
                jac[(*row, l.q_start(t) + k)] = 1.0;
                *row += 1;
            }
        };
        pin(&mut c, &mut jac, &mut row, 0, &p_eq.spec.q_init);
        if p_eq.spec.fix_final {
            pin(&mut c, &mut jac, &mut row, l.horizon - 1, &p_eq.spec.q_goal);
        }
        for t in 0..l.horizon {
            let q_t = l.knot(x, t);
            let poses = p_eq.spec.poses_at(&q_t);
            for (pi, &(bi, bj)) in p_eq.spec.pairs.iter().enumerate() {
                let cv = l.contact(x, t, pi);
                let s = l.contact_start(t, pi);
                let (col_xi, col_xj, col_phi, col_a) = (s, s + n, s + 2 * n, s + 2 * n + 1);
                let body_i = &p_eq.spec.bodies[bi].body;
                let body_j = &p_eq.spec.bodies[bj].body;
                let (pose_i, pose_j) = (&poses[bi], &poses[bj]);
                let g_i = eval_g(body_i, &cv.x_i, pose_i);
                let g_j = eval_g(body_j, &cv.x_j, pose_j);
                let grad_i = eval_grad(body_i, &cv.x_i, pose_i);
                let grad_j = eval_grad(body_j, &cv.x_j, pose_j);
                let (ghat_i, proj_i) = safe_unit(&grad_i);
                let (ghat_j, proj_j) = safe_unit(&grad_j);
                let dhat_i = &proj_i * eval_hess(body_i, &cv.x_i, pose_i);
                let dhat_j = &proj_j * eval_hess(body_j, &cv.x_j, pose_j);
                // Pose sensitivities only exist for mobile bodies.
                let q_cols = |b: usize| {
                    p_eq.offsets[b].map(|o| {
                        (
                            l.q_start(t) + o,
                            p_eq.spec.bodies[b].pose0.param_dim(),
                        )
                    })
                };
                let pose_sens = |b: usize, body: &SmoothBody, xw: &DVector<f64>, pose: &Pose| {
                    q_cols(b).map(|(start, len)| {
                        let (dg, dgrad) = pose_jacobians(body, xw, pose);
                        (start, len, dg, dgrad)
                    })
                };
                let sens_i = pose_sens(bi, body_i, &cv.x_i, pose_i);
                let sens_j = pose_sens(bj, body_j, &cv.x_j, pose_j);

                // Boundary rows.
                c[row] = g_i;
                for k in 0..n {
                    jac[(row, col_xi + k)] = grad_i[k];
                }
                if let Some((qs, ql, dg, _)) = &sens_i {
                    for k in 0..*ql {
                        jac[(row, qs + k)] = dg[k];
                    }
                }
                row += 1;
                c[row] = g_j;
                for k in 0..n {
                    jac[(row, col_xj + k)] = grad_j[k];
                }
                if let Some((qs, ql, dg, _)) = &sens_j {
                    for k in 0..*ql {
                        jac[(row, qs + k)] = dg[k];
                    }
                }
                row += 1;
                // Direction rows: a − ĝ_i and a + ĝ_j.
                for k in 0..n {
                    c[row] = cv.a[k] - ghat_i[k];
                    jac[(row, col_a + k)] = 1.0;
                    for m in 0..n {
                        jac[(row, col_xi + m)] = -dhat_i[(k, m)];
                    }
                    if let Some((qs, ql, _, dgrad)) = &sens_i {
                        let drow = &proj_i * dgrad;
                        for m in 0..*ql {
                            jac[(row, qs + m)] = -drow[(k, m)];
                        }
                    }
                    row += 1;
                }
                for k in 0..n {
                    c[row] = cv.a[k] + ghat_j[k];
                    jac[(row, col_a + k)] = 1.0;
                    for m in 0..n {
                        jac[(row, col_xj + m)] = dhat_j[(k, m)];
                    }
                    if let Some((qs, ql, _, dgrad)) = &sens_j {
                        let drow = &proj_j * dgrad;
                        for m in 0..*ql {
                            jac[(row, qs + m)] = drow[(k, m)];
                        }
                    }
                    row += 1;
                }
                // Offset rows: (x_j − x_i) − φ·a.
                for k in 0..n {
                    c[row] = cv.x_j[k] - cv.x_i[k] - cv.phi * cv.a[k];
                    jac[(row, col_xj + k)] = 1.0;
                    jac[(row, col_xi + k)] = -1.0;
                    jac[(row, col_phi)] = -cv.a[k];
                    jac[(row, col_a + k)] = -cv.phi;
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, n_rows);
        (c, jac)
    });

    let p_in = Rc::clone(&prep);
    let ineq = Box::new(move |x: &DVector<f64>| {
        let l = p_in.layout;
        let n_rows = l.n_ineq_rows(p_in.spec.uniqueness_rows);
        let mut c = DVector::zeros(n_rows);
        let mut jac = DMatrix::zeros(n_rows, l.n_vars());
        let mut row = 0;
        for t in 0..l.horizon {
            for pi in 0..l.n_pairs {
                let col_phi = l.contact_start(t, pi) + 2 * l.dim;
                c[row] = x[col_phi] - p_in.spec.phi_min;
                jac[(row, col_phi)] = 1.0;
                row += 1;
            }
        }
        if p_in.spec.uniqueness_rows {
            // Center-side rows (c_j − c_i)·∇g_i(x_i) ≥ 0: the contact point
            // on body i must face body j's center.
            for t in 0..l.horizon {
                let q_t = l.knot(x, t);
                let poses = p_in.spec.poses_at(&q_t);
                for (pi, &(bi, bj)) in p_in.spec.pairs.iter().enumerate() {
                    let cv = l.contact(x, t, pi);
                    let col_xi = l.contact_start(t, pi);
                    let body_i = &p_in.spec.bodies[bi].body;
                    let body_j = &p_in.spec.bodies[bj].body;
                    let cb_i = body_i.interior_center_body();
                    let cb_j = body_j.interior_center_body();
                    let dc = poses[bj].to_world(&cb_j) - poses[bi].to_world(&cb_i);
                    let grad_i = eval_grad(body_i, &cv.x_i, &poses[bi]);
                    c[row] = dc.dot(&grad_i);
                    let dxi = eval_hess(body_i, &cv.x_i, &poses[bi]) * &dc;
                    for k in 0..l.dim {
                        jac[(row, col_xi + k)] = dxi[k];
                    }
                    // Pose columns: the centers move with their poses, and
                    // ∇g_i moves with body i's pose at fixed world x_i.
                    if let Some(o) = p_in.offsets[bi] {
                        let qs = l.q_start(t) + o;
                        let (_, dgrad) = pose_jacobians(body_i, &cv.x_i, &poses[bi]);
                        let dgq = dgrad.transpose() * &dc;
                        for m in 0..poses[bi].param_dim() {
                            jac[(row, qs + m)] = dgq[m];
                        }
                        for d in 0..l.dim {
                            jac[(row, qs + d)] -= grad_i[d];
                        }
                        for (r, dl) in
                            poses[bi].rotation_matrix_derivatives().iter().enumerate()
                        {
                            jac[(row, qs + l.dim + r)] -= (dl * &cb_i).dot(&grad_i);
                        }
                    }
                    if let Some(o) = p_in.offsets[bj] {
                        let qs = l.q_start(t) + o;
                        for d in 0..l.dim {
                            jac[(row, qs + d)] += grad_i[d];
                        }
                        for (r, dl) in
                            poses[bj].rotation_matrix_derivatives().iter().enumerate()
                        {
                            jac[(row, qs + l.dim + r)] += (dl * &cb_j).dot(&grad_i);
                        }
                    }
                    row += 1;
                }
            }
        }
        for t in 0..l.horizon.saturating_sub(1) {
            for k in 0..l.q_dim {
                let (cur, next) = (l.q_start(t) + k, l.q_start(t + 1) + k);
                let diff = x[next] - x[cur];
                c[row] = p_in.spec.v_max[k] - diff;
                jac[(row, next)] = -1.0;
                jac[(row, cur)] = 1.0;
                row += 1;
                c[row] = p_in.spec.v_max[k] + diff;
                jac[(row, next)] = 1.0;
                jac[(row, cur)] = -1.0;
                row += 1;
            }
        }
        debug_assert_eq!(row, n_rows);
        (c, jac)
    });

    Ok(NlpProblem {
        n_vars: layout.n_vars(),
        objective,
        eq_constraints: Some(eq),
        ineq_constraints: Some(ineq),
        bounds: None,
    })
}

/// Straight-line knot interpolation with contact blocks warm-started by the
/// static touch-offset solver at each interpolated configuration. Warm-start
/// failures fall back to center-ray values and are logged, never fatal.
pub fn initial_guess(spec: &TrajOptSpec) -> DVector<f64> {
    guess_with_knot_offsets(spec, None)
}

/// Same guess with an additive q-space offset per knot (used by the restart
/// ladder to bend the interpolant around obstacles). Contact blocks are
/// solved at the offset configurations, so blocks and poses stay
/// consistent.
fn guess_with_knot_offsets(spec: &TrajOptSpec, offsets: Option<&[DVector<f64>]>) -> DVector<f64> {
    let layout = DecisionLayout::of(spec);
    let mut x = DVector::zeros(layout.n_vars());
    let steps = (spec.horizon - 1).max(1) as f64;
    for t in 0..spec.horizon {
        let alpha = t as f64 / steps;
        let mut q_t = &spec.q_init * (1.0 - alpha) + &spec.q_goal * alpha;
        if let Some(offs) = offsets {
            q_t += &offs[t];
        }
        for k in 0..layout.q_dim {
            x[layout.q_start(t) + k] = q_t[k];
        }
        let poses = spec.poses_at(&q_t);
        for (pi, &(bi, bj)) in spec.pairs.iter().enumerate() {
            let body_i = &spec.bodies[bi].body;
            let body_j = &spec.bodies[bj].body;
            let (pose_i, pose_j) = (&poses[bi], &poses[bj]);
            let cv = solve_static_mott(body_i, pose_i, body_j, pose_j, &MottOptions::default())
                .unwrap_or_else(|err| {
                    eprintln!(
                        "warm start failed at knot {t} pair {pi}: {err}; using center-ray values"
                    );
                    center_ray_guess(body_i, pose_i, body_j, pose_j)
                });
            let s = layout.contact_start(t, pi);
            let block = cv.as_vector();
            for k in 0..layout.block_dim() {
                x[s + k] = block[k];
            }
        }
    }
    x
}

/// Contact block along the line between interior centers: boundary points by
/// bisection, direction the center line, offset their projected gap.
fn center_ray_guess(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
) -> ContactVariables {
    let c_i = pose_i.to_world(&body_i.interior_center_body());
    let c_j = pose_j.to_world(&body_j.interior_center_body());
    let n = c_i.nrows();
    let dist = (&c_j - &c_i).norm();
    let a = if dist < 1e-12 {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        e
    } else {
        (&c_j - &c_i) / dist
    };
    let x_i = ray_boundary_point(body_i, pose_i, &c_i, &a).unwrap_or_else(|_| c_i.clone());
    let x_j = ray_boundary_point(body_j, pose_j, &c_j, &(-&a)).unwrap_or_else(|_| c_j.clone());
    let phi = a.dot(&(&x_j - &x_i));
    ContactVariables { x_i, x_j, phi, a }
}

/// A solved (or partially solved) trajectory with its solver diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub knots: Vec<DVector<f64>>,
    /// Contact blocks per knot per pair; empty inner vectors for the bilevel
    /// baseline, which carries no contact variables.
    pub contacts: Vec<Vec<ContactVariables>>,
    pub solution: NlpSolution,
}

/// From-scratch feasibility audit of a trajectory against a spec.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryAudit {
    /// Largest touch-offset residual over all knots and pairs (0 when no
    /// contact blocks are present).
    pub max_mott_residual: f64,
    pub min_phi: f64,
    pub endpoint_err_init: f64,
    pub endpoint_err_final: f64,
    /// Largest overshoot of |q^{t+1} − q^t| past v_max (0 when within).
    pub max_velocity_excess: f64,
}

impl Trajectory {
    pub fn min_phi(&self) -> f64 {
        self.contacts
            .iter()
            .flatten()
            .map(|cv| cv.phi)
            .fold(f64::INFINITY, f64::min)
    }

    /// Re-evaluate every constraint directly from the spec's bodies; the
    /// residuals here come from the static solver's evaluation path, not
    /// the NLP callbacks.
    pub fn audit(&self, spec: &TrajOptSpec) -> Result<TrajectoryAudit, TrajOptError> {
        let mut max_res: f64 = 0.0;
        for (t, knot) in self.knots.iter().enumerate() {
            let poses = spec.poses_at(knot);
            if let Some(blocks) = self.contacts.get(t) {
                for (pi, cv) in blocks.iter().enumerate() {
                    let (bi, bj) = spec.pairs[pi];
                    let res = crate::mott::mott_residual(
                        &spec.bodies[bi].body,
                        &poses[bi],
                        &spec.bodies[bj].body,
                        &poses[bj],
                        cv,
                    )?;
                    max_res = max_res.max(res.inf_norm());
                }
            }
        }
        let endpoint_err_init = (&self.knots[0] - &spec.q_init).amax();
        let endpoint_err_final = if spec.fix_final {
            (self.knots.last().unwrap() - &spec.q_goal).amax()
        } else {
            0.0
        };
        let mut max_excess: f64 = 0.0;
        for w in self.knots.windows(2) {
            for k in 0..spec.q_dim() {
                max_excess = max_excess.max((w[1][k] - w[0][k]).abs() - spec.v_max[k]);
            }
        }
        Ok(TrajectoryAudit {
            max_mott_residual: max_res,
            min_phi: self.min_phi(),
            endpoint_err_init,
            endpoint_err_final,
            max_velocity_excess: max_excess,
        })
    }
}

/// Solve the single-level program from the warm-started interpolant.
pub fn solve_trajectory(
    spec: &TrajOptSpec,
    opts: &NlpOptions,
) -> Result<Trajectory, TrajOptError> {
    let problem = build_problem(spec)?;
    let x0 = initial_guess(spec);
    let solution = nlp::solve(&problem, &x0, opts)?;
    let layout = DecisionLayout::of(spec);
    let knots = (0..spec.horizon)
        .map(|t| layout.knot(&solution.x, t))
        .collect();
    let contacts = (0..spec.horizon)
        .map(|t| {
            (0..spec.pairs.len())
                .map(|pi| layout.contact(&solution.x, t, pi))
                .collect()
        })
        .collect();
    Ok(Trajectory {
        knots,
        contacts,
        solution,
    })
}

/// Attempt-0 guess plus a deterministic ladder of laterally bumped guesses.
///
/// A straight interpolant through an obstacle can start the solver in the
/// basin of a spurious stationary region (contact points collapsed onto
/// gradient-free interior centers). Each retry bends one mobile body's
/// path sideways with a half-sine bump, orthogonal to its net motion, at
/// growing amplitude; the first converged attempt wins. Returns the
/// trajectory and the index of the attempt that produced it; when nothing
/// converges, the attempt with the smallest constraint violation.
pub fn solve_trajectory_restarts(
    spec: &TrajOptSpec,
    opts: &NlpOptions,
    max_attempts: usize,
) -> Result<(Trajectory, usize), TrajOptError> {
    let problem = build_problem(spec)?;
    let layout = DecisionLayout::of(spec);
    let finish = |solution: NlpSolution| {
        let knots = (0..spec.horizon)
            .map(|t| layout.knot(&solution.x, t))
            .collect();
        let contacts = (0..spec.horizon)
            .map(|t| {
                (0..spec.pairs.len())
                    .map(|pi| layout.contact(&solution.x, t, pi))
                    .collect()
            })
            .collect();
        Trajectory {
            knots,
            contacts,
            solution,
        }
    };
    let mut best: Option<(Trajectory, usize, f64)> = None;
    for (attempt, offsets) in bump_ladder(spec).take(max_attempts.max(1)).enumerate() {
        let x0 = guess_with_knot_offsets(spec, offsets.as_deref());
        let solution = nlp::solve(&problem, &x0, opts)?;
        let violation = solution
            .kkt_report
            .feas_eq
            .max(solution.kkt_report.feas_ineq);
        let converged = solution.status == NlpStatus::Converged;
        let traj = finish(solution);
        if converged {
            return Ok((traj, attempt));
        }
        if best.as_ref().is_none_or(|(_, _, v)| violation < *v) {
            best = Some((traj, attempt, violation));
        }
    }
    let (traj, attempt, _) = best.expect("at least one attempt runs");
    Ok((traj, attempt))
}

/// Attempt 0 is the plain interpolant (no offsets); every later attempt
/// bumps one mobile body along one lateral direction with one sign, first
/// at its bounding radius, then at twice it.
fn bump_ladder(spec: &TrajOptSpec) -> impl Iterator<Item = Option<Vec<DVector<f64>>>> + '_ {
    let q_dim = spec.q_dim();
    let horizon = spec.horizon;
    let offsets = spec.mobile_offsets();
    let dim = spec.dim();
    // (q offset, lateral unit direction, amplitude base) per mobile body.
    let mut channels: Vec<(usize, DVector<f64>, f64)> = Vec::new();
    for (b, off) in offsets.iter().enumerate() {
        let Some(o) = *off else { continue };
        let delta = DVector::from_fn(dim, |d, _| spec.q_goal[o + d] - spec.q_init[o + d]);
        let radius = spec.bodies[b].body.bounding_radius_body();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        if delta.norm() > 1e-9 {
            basis.push(delta.normalize());
        }
        for d in 0..dim {
            let mut v = DVector::zeros(dim);
            v[d] = 1.0;
            for u in &basis {
                let p = v.dot(u);
                v -= u * p;
            }
            if v.norm() > 1e-9 {
                basis.push(v.normalize());
            }
        }
        // Drop the motion direction itself; bumps are purely lateral.
        let start = if delta.norm() > 1e-9 { 1 } else { 0 };
        for u in basis.drain(..).skip(start) {
            channels.push((o, u, radius.max(1e-6)));
        }
    }
    let plain = std::iter::once(None);
    let bumped = [1.0, 2.0].into_iter().flat_map(move |scale| {
        let channels = channels.clone();
        channels.into_iter().flat_map(move |(o, u, radius)| {
            [1.0, -1.0].into_iter().map(move |sign| {
                let steps = (horizon - 1).max(1) as f64;
                let offs: Vec<DVector<f64>> = (0..horizon)
                    .map(|t| {
                        let bump = (std::f64::consts::PI * t as f64 / steps).sin()
                            * sign
                            * scale
                            * radius;
                        let mut q = DVector::zeros(q_dim);
                        for d in 0..u.nrows() {
                            q[o + d] = bump * u[d];
                        }
                        q
                    })
                    .collect();
                Some(offs)
            })
        })
    });
    plain.chain(bumped)
}

/// Baseline: poses are the only decision variables and non-penetration is
/// enforced through the hull closest-point distance, differentiated by
/// forward differences at every constraint evaluation.
pub fn solve_trajectory_bilevel(
    spec: &TrajOptSpec,
    opts: &NlpOptions,
) -> Result<Trajectory, TrajOptError> {
    spec.validate()?;
    for &(i, j) in &spec.pairs {
        for b in [i, j] {
            if spec.bodies[b].hull.is_none() {
                return Err(TrajOptError::MissingHull(b));
            }
        }
    }
    let prep = Rc::new(Prepared::new(spec));
    let q_dim = spec.q_dim();
    let horizon = spec.horizon;
    let n_vars = horizon * q_dim;

    let p_obj = Rc::clone(&prep);
    let objective = Box::new(move |x: &DVector<f64>| {
        let mut f = 0.0;
        let mut grad = DVector::zeros(x.nrows());
        for t in 0..p_obj.layout.horizon {
            let q = x.rows(t * p_obj.layout.q_dim, p_obj.layout.q_dim);
            let d = q - &p_obj.spec.q_goal;
            f += d.dot(&(&p_obj.spec.goal_weight * &d));
            let g = &p_obj.w_sym * &d;
            for k in 0..p_obj.layout.q_dim {
                grad[t * p_obj.layout.q_dim + k] = g[k];
            }
        }
        (f, grad)
    });

    let p_eq = Rc::clone(&prep);
    let eq = Box::new(move |x: &DVector<f64>| {
        let l = p_eq.layout;
        let pins = if p_eq.spec.fix_final { 2 } else { 1 };
        let mut c = DVector::zeros(pins * l.q_dim);
        let mut jac = DMatrix::zeros(pins * l.q_dim, x.nrows());
        for k in 0..l.q_dim {
            c[k] = x[k] - p_eq.spec.q_init[k];
            jac[(k, k)] = 1.0;
        }
        if p_eq.spec.fix_final {
            let s = (l.horizon - 1) * l.q_dim;
            for k in 0..l.q_dim {
                c[l.q_dim + k] = x[s + k] - p_eq.spec.q_goal[k];
                jac[(l.q_dim + k, s + k)] = 1.0;
            }
        }
        (c, jac)
    });

    let p_in = Rc::clone(&prep);
    let ineq = Box::new(move |x: &DVector<f64>| {
        let l = p_in.layout;
        let spec = &p_in.spec;
        let pair_dist = |q: &DVector<f64>, bi: usize, bj: usize| -> f64 {
            let poses = spec.poses_at(q);
            let world = |b: usize| VertexHull {
                vertices: spec.bodies[b]
                    .hull
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|v| poses[b].to_world(v))
                    .collect(),
            };
            match closest_points(&world(bi), &world(bj)) {
                Ok((d, _, _)) => d,
                // NaN propagates out of the solver as a callback failure on
                // this row.
                Err(_) => f64::NAN,
            }
        };
        let n_rows = l.horizon * l.n_pairs + 2 * l.q_dim * l.horizon.saturating_sub(1);
        let mut c = DVector::zeros(n_rows);
        let mut jac = DMatrix::zeros(n_rows, x.nrows());
        let offsets = spec.mobile_offsets();
        let mut row = 0;
        let h = 1e-6;
        for t in 0..l.horizon {
            let q = x.rows(t * l.q_dim, l.q_dim).into_owned();
            for &(bi, bj) in &spec.pairs {
                let base = pair_dist(&q, bi, bj);
                c[row] = base - spec.phi_min;
                for b in [bi, bj] {
                    if let Some(o) = offsets[b] {
                        for k in 0..spec.bodies[b].pose0.param_dim() {
                            let mut qp = q.clone();
                            qp[o + k] += h;
                            jac[(row, t * l.q_dim + o + k)] =
                                (pair_dist(&qp, bi, bj) - base) / h;
                        }
                    }
                }
                row += 1;
            }
        }
        for t in 0..l.horizon.saturating_sub(1) {
            for k in 0..l.q_dim {
                let (cur, next) = (t * l.q_dim + k, (t + 1) * l.q_dim + k);
                let diff = x[next] - x[cur];
                c[row] = spec.v_max[k] - diff;
                jac[(row, next)] = -1.0;
                jac[(row, cur)] = 1.0;
                row += 1;
                c[row] = spec.v_max[k] + diff;
                jac[(row, next)] = 1.0;
                jac[(row, cur)] = -1.0;
                row += 1;
            }
        }
        debug_assert_eq!(row, n_rows);
        (c, jac)
    });

    let problem = NlpProblem {
        n_vars,
        objective,
        eq_constraints: Some(eq),
        ineq_constraints: Some(ineq),
        bounds: None,
    };
    let steps = (horizon - 1).max(1) as f64;
    let mut x0 = DVector::zeros(n_vars);
    for t in 0..horizon {
        let alpha = t as f64 / steps;
        let q_t = &spec.q_init * (1.0 - alpha) + &spec.q_goal * alpha;
        for k in 0..q_dim {
            x0[t * q_dim + k] = q_t[k];
        }
    }
    let solution = nlp::solve(&problem, &x0, opts)?;
    let knots = (0..horizon)
        .map(|t| solution.x.rows(t * q_dim, q_dim).into_owned())
        .collect();
    Ok(Trajectory {
        knots,
        contacts: vec![Vec::new(); horizon],
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::Polytope;
    use crate::nlp::NlpStatus;
    use crate::oracle::enumerate_vertices;
    use crate::randgen::random_superquad;
    use crate::SuperquadBody;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square_body(rho: u32) -> SuperquadBody {
        SuperquadBody::from_polytope(&Polytope::unit_box(2).unwrap(), rho).unwrap()
    }

    fn square_hull() -> Vec<DVector<f64>> {
        enumerate_vertices(&Polytope::unit_box(2).unwrap(), &Pose::identity(2))
            .unwrap()
            .vertices
    }

    fn crossing_spec(horizon: usize) -> TrajOptSpec {
        // A unit square sliding left to right straight through a static
        // unit square; the slight y offset keeps the two detours from
        // being exactly tied.
        let mover = TrajBody {
            body: SmoothBody::Superquad(unit_square_body(4)),
            pose0: Pose::identity(2),
            mobile: true,
            hull: Some(square_hull()),
        };
        let obstacle = TrajBody {
            body: SmoothBody::Superquad(unit_square_body(4)),
            pose0: Pose::identity(2),
            mobile: false,
            hull: Some(square_hull()),
        };
        TrajOptSpec {
            bodies: vec![mover, obstacle],
            pairs: vec![(0, 1)],
            horizon,
            q_init: nalgebra::dvector![-4.0, 0.15, 0.0],
            q_goal: nalgebra::dvector![4.0, 0.15, 0.0],
            v_max: DVector::from_element(3, 2.5),
            goal_weight: DMatrix::identity(3, 3),
            fix_final: true,
            uniqueness_rows: false,
            phi_min: 0.0,
        }
    }

    fn obstacle_free_spec(horizon: usize) -> TrajOptSpec {
        let mover = TrajBody {
            body: SmoothBody::Superquad(unit_square_body(4)),
            pose0: Pose::identity(2),
            mobile: true,
            hull: Some(square_hull()),
        };
        TrajOptSpec {
            bodies: vec![mover],
            pairs: vec![],
            horizon,
            q_init: nalgebra::dvector![0.0, 0.0, 0.0],
            q_goal: nalgebra::dvector![3.0, 1.5, 0.3],
            v_max: DVector::from_element(3, 10.0),
            goal_weight: DMatrix::identity(3, 3),
            fix_final: false,
            uniqueness_rows: false,
            phi_min: 0.0,
        }
    }

    #[test]
    fn layout_counts_for_a_planar_single_pair_two_knot_problem() {
        let spec = crossing_spec(2);
        let l = DecisionLayout::of(&spec);
        assert_eq!(l.q_dim, 3);
        assert_eq!(l.block_dim(), 7);
        assert_eq!(l.n_vars(), 20);
        // Ranges tile the decision vector exactly.
        let mut seen = vec![false; l.n_vars()];
        for t in 0..l.horizon {
            for k in 0..l.q_dim {
                let idx = l.q_start(t) + k;
                assert!(!seen[idx]);
                seen[idx] = true;
            }
            for p in 0..l.n_pairs {
                for k in 0..l.block_dim() {
                    let idx = l.contact_start(t, p) + k;
                    assert!(!seen[idx]);
                    seen[idx] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn constraint_rows_match_the_layout_recount() {
        let spec = crossing_spec(3);
        let problem = build_problem(&spec).unwrap();
        let l = DecisionLayout::of(&spec);
        let x = initial_guess(&spec);
        let (c_eq, j_eq) = (problem.eq_constraints.as_ref().unwrap())(&x);
        let (c_in, j_in) = (problem.ineq_constraints.as_ref().unwrap())(&x);
        assert_eq!(c_eq.nrows(), l.n_eq_rows(spec.fix_final));
        assert_eq!(c_eq.nrows(), 2 * 3 + 3 * 1 * (2 + 3 * 2));
        assert_eq!(j_eq.nrows(), c_eq.nrows());
        assert_eq!(j_eq.ncols(), l.n_vars());
        assert_eq!(c_in.nrows(), l.n_ineq_rows(false));
        assert_eq!(c_in.nrows(), 3 * 1 + 2 * 3 * 2);
        assert_eq!(j_in.ncols(), l.n_vars());
        // The center-side option adds one more row per knot per pair.
        let mut with_rows = spec.clone();
        with_rows.uniqueness_rows = true;
        let problem2 = build_problem(&with_rows).unwrap();
        let (c_in2, _) = (problem2.ineq_constraints.as_ref().unwrap())(&x);
        assert_eq!(c_in2.nrows(), l.n_ineq_rows(true));
        assert_eq!(c_in2.nrows(), c_in.nrows() + 3 * 1);
    }

    #[test]
    fn interpolant_endpoints_are_the_spec_endpoints() {
        let spec = crossing_spec(2);
        let l = DecisionLayout::of(&spec);
        let x = initial_guess(&spec);
        assert_eq!(l.knot(&x, 0), spec.q_init);
        assert_eq!(l.knot(&x, 1), spec.q_goal);
        let spec3 = crossing_spec(3);
        let x3 = initial_guess(&spec3);
        let mid = DecisionLayout::of(&spec3).knot(&x3, 1);
        assert!((mid - nalgebra::dvector![0.0, 0.15, 0.0]).amax() < 1e-12);
    }

    #[test]
    fn interpolating_through_an_obstacle_warm_starts_with_negative_phi() {
        let spec = crossing_spec(5);
        let x = initial_guess(&spec);
        let l = DecisionLayout::of(&spec);
        let min_phi = (0..5)
            .map(|t| l.contact(&x, t, 0).phi)
            .fold(f64::INFINITY, f64::min);
        // The middle knot sits inside the obstacle.
        assert!(min_phi < 0.0, "min warm-start phi {min_phi}");
    }

    #[test]
    fn constraint_jacobians_agree_with_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let spec = {
            let mover = TrajBody {
                body: SmoothBody::Superquad(random_superquad(2, 7, 5, &mut rng)),
                pose0: Pose::identity(2),
                mobile: true,
                hull: None,
            };
            let obstacle = TrajBody {
                body: SmoothBody::Superquad(random_superquad(2, 6, 3, &mut rng)),
                pose0: Pose::new(nalgebra::dvector![0.3, -0.2], nalgebra::dvector![0.4]),
                mobile: false,
                hull: None,
            };
            TrajOptSpec {
                bodies: vec![mover, obstacle],
                pairs: vec![(0, 1)],
                horizon: 2,
                q_init: nalgebra::dvector![-2.0, 0.1, 0.2],
                q_goal: nalgebra::dvector![2.0, -0.1, -0.2],
                v_max: DVector::from_element(3, 5.0),
                goal_weight: DMatrix::identity(3, 3),
                fix_final: false,
                uniqueness_rows: true,
                phi_min: 0.0,
            }
        };
        let problem = build_problem(&spec).unwrap();
        let x = {
            // Perturbed interpolant so nothing sits at a special point.
            let mut x = initial_guess(&spec);
            for k in 0..x.nrows() {
                x[k] += 0.05 * ((k as f64 * 0.7).sin());
            }
            x
        };
        let h = 1e-6;
        for (cb, label) in [
            (problem.eq_constraints.as_ref().unwrap(), "eq"),
            (problem.ineq_constraints.as_ref().unwrap(), "ineq"),
        ] {
            let (c0, jac) = cb(&x);
            for col in 0..x.nrows() {
                let mut xp = x.clone();
                xp[col] += h;
                let (cp, _) = cb(&xp);
                let mut xm = x.clone();
                xm[col] -= h;
                let (cm, _) = cb(&xm);
                for r in 0..c0.nrows() {
                    let fd = (cp[r] - cm[r]) / (2.0 * h);
                    let an = jac[(r, col)];
                    let scale = 1.0_f64.max(an.abs()).max(fd.abs());
                    assert!(
                        (fd - an).abs() / scale < 1e-5,
                        "{label} row {r} col {col}: analytic {an} fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn obstacle_free_solution_matches_the_interpolant() {
        let spec = obstacle_free_spec(4);
        let traj = solve_trajectory(&spec, &NlpOptions::default()).unwrap();
        assert_eq!(traj.solution.status, NlpStatus::Converged);
        assert_eq!(traj.knots.len(), 4);
        // Unconstrained goal pull: every free knot lands on the goal, the
        // first is pinned; all steps stay inside generous velocity limits.
        assert!((&traj.knots[0] - &spec.q_init).amax() <= 1e-6);
        for t in 1..4 {
            assert!(
                (&traj.knots[t] - &spec.q_goal).amax() <= 1e-4,
                "knot {t}: {:?}",
                traj.knots[t]
            );
        }
        let bilevel = solve_trajectory_bilevel(&spec, &NlpOptions::default()).unwrap();
        let goal_term = |knots: &[DVector<f64>]| -> f64 {
            knots
                .iter()
                .map(|q| {
                    let d = q - &spec.q_goal;
                    d.dot(&(&spec.goal_weight * &d))
                })
                .sum()
        };
        assert!(
            (goal_term(&traj.knots) - goal_term(&bilevel.knots)).abs() <= 1e-4,
            "single {} bilevel {}",
            goal_term(&traj.knots),
            goal_term(&bilevel.knots)
        );
    }

    #[test]
    fn crossing_scene_solves_collision_free() {
        let spec = crossing_spec(7);
        let traj = solve_trajectory(&spec, &NlpOptions::default()).unwrap();
        assert_eq!(
            traj.solution.status,
            NlpStatus::Converged,
            "report {:?}",
            traj.solution.kkt_report
        );
        let audit = traj.audit(&spec).unwrap();
        assert!(audit.max_mott_residual <= 1e-6, "{audit:?}");
        assert!(audit.min_phi >= -1e-6, "{audit:?}");
        assert!(audit.endpoint_err_init <= 1e-8, "{audit:?}");
        assert!(audit.endpoint_err_final <= 1e-8, "{audit:?}");
        assert!(audit.max_velocity_excess <= 1e-8, "{audit:?}");
    }

    #[test]
    fn bilevel_baseline_clears_the_same_crossing() {
        let spec = crossing_spec(7);
        let traj = solve_trajectory_bilevel(&spec, &NlpOptions::default()).unwrap();
        assert_eq!(traj.knots.len(), 7);
        // Audit geometrically: hull distance at every knot.
        for knot in &traj.knots {
            let poses = spec.poses_at(knot);
            let world = |b: usize| VertexHull {
                vertices: spec.bodies[b]
                    .hull
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|v| poses[b].to_world(v))
                    .collect(),
            };
            let (d, _, _) = closest_points(&world(0), &world(1)).unwrap();
            assert!(d >= -1e-9, "knot distance {d}");
        }
        assert!((&traj.knots[0] - &spec.q_init).amax() <= 1e-6);
    }

    #[test]
    fn static_single_knot_scene_reduces_to_the_static_contact_system() {
        let body = |tx: f64| TrajBody {
            body: SmoothBody::Superquad(unit_square_body(4)),
            pose0: Pose::new(nalgebra::dvector![tx, 0.0], nalgebra::dvector![0.0]),
            mobile: false,
            hull: None,
        };
        let spec = TrajOptSpec {
            bodies: vec![body(0.0), body(3.0)],
            pairs: vec![(0, 1)],
            horizon: 1,
            q_init: DVector::zeros(0),
            q_goal: DVector::zeros(0),
            v_max: DVector::zeros(0),
            goal_weight: DMatrix::zeros(0, 0),
            fix_final: false,
            uniqueness_rows: false,
            phi_min: 0.0,
        };
        let traj = solve_trajectory(&spec, &NlpOptions::default()).unwrap();
        assert_eq!(traj.solution.status, NlpStatus::Converged);
        let phi = traj.contacts[0][0].phi;
        let direct = solve_static_mott(
            &spec.bodies[0].body,
            &spec.bodies[0].pose0,
            &spec.bodies[1].body,
            &spec.bodies[1].pose0,
            &MottOptions::default(),
        )
        .unwrap();
        assert!(
            (phi - direct.phi).abs() <= 1e-6,
            "trajectory phi {phi} static phi {}",
            direct.phi
        );
    }

    #[test]
    fn repeated_trajectory_solves_are_identical() {
        let spec = crossing_spec(5);
        let a = solve_trajectory(&spec, &NlpOptions::default()).unwrap();
        let b = solve_trajectory(&spec, &NlpOptions::default()).unwrap();
        assert_eq!(a.solution.iterations, b.solution.iterations);
        assert!((&a.solution.x - &b.solution.x).amax() <= 1e-14);
    }

    #[test]
    fn invalid_specs_are_rejected_with_dimension_errors() {
        let mut spec = crossing_spec(2);
        spec.pairs = vec![(0, 5)];
        assert!(matches!(
            build_problem(&spec),
            Err(TrajOptError::DimensionMismatch(_))
        ));
        let mut spec = crossing_spec(2);
        spec.horizon = 1;
        assert!(matches!(
            build_problem(&spec),
            Err(TrajOptError::DimensionMismatch(_))
        ));
        let mut spec = crossing_spec(2);
        spec.v_max = DVector::from_element(3, -1.0);
        assert!(matches!(
            build_problem(&spec),
            Err(TrajOptError::DimensionMismatch(_))
        ));
        let mut spec = crossing_spec(2);
        spec.bodies[0].hull = None;
        assert!(matches!(
            solve_trajectory_bilevel(&spec, &NlpOptions::default()),
            Err(TrajOptError::MissingHull(0))
        ));
    }
}
