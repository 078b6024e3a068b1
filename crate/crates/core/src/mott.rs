//! The minimum-offset-to-touch contact system for one pair of smooth convex
//! bodies, its analytic Jacobian, and a damped least-squares solver.
//!
//! The contact variables are the two boundary witness points, the signed
//! offset `phi`, and the unit offset direction `a`. Translating body_i by
//! `phi·a` brings the bodies into boundary contact: `phi` is positive
//! separation distance, negative penetration depth. The system pins each
//! witness to its boundary, aligns `a` with body_i's outward normal and
//! against body_j's, and closes the loop with `x_j − x_i = phi·a`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bodies::{
    eval_g, eval_grad, eval_hess, unit_grad, unit_grad_projector, BodyError, SmoothBody,
};
use crate::pose::Pose;

#[derive(Debug, Error)]
pub enum MottError {
    #[error("no convergence in {iters} iterations (best residual {best:.3e})")]
    MaxIterations { iters: usize, best: f64 },
    #[error("both initializations converged to a maximum-offset branch")]
    UniquenessViolation,
    #[error("interior centers coincide; the initial direction is undefined")]
    CoincidentCenters,
    #[error("boundary ray from the interior center found no crossing")]
    NoBoundaryCrossing,
    #[error(transparent)]
    Body(#[from] BodyError),
}

/// Unknowns of the contact system.
#[derive(Debug, Clone)]
pub struct ContactVariables {
    pub x_i: DVector<f64>,
    pub x_j: DVector<f64>,
    pub phi: f64,
    pub a: DVector<f64>,
}

impl ContactVariables {
    pub fn dim(&self) -> usize {
        self.x_i.nrows()
    }

    /// Stacked as `[x_i; x_j; phi; a]`.
    pub fn as_vector(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros(3 * n + 1);
        v.rows_mut(0, n).copy_from(&self.x_i);
        v.rows_mut(n, n).copy_from(&self.x_j);
        v[2 * n] = self.phi;
        v.rows_mut(2 * n + 1, n).copy_from(&self.a);
        v
    }

    pub fn from_vector(v: &DVector<f64>, dim: usize) -> Self {
        assert_eq!(v.nrows(), 3 * dim + 1);
        Self {
            x_i: v.rows(0, dim).into_owned(),
            x_j: v.rows(dim, dim).into_owned(),
            phi: v[2 * dim],
            a: v.rows(2 * dim + 1, dim).into_owned(),
        }
    }
}

/// Residual blocks of the contact system; all zero at a solution.
#[derive(Debug, Clone)]
pub struct MottResidual {
    pub r_boundary_i: f64,
    pub r_boundary_j: f64,
    pub r_dir_i: DVector<f64>,
    pub r_dir_j: DVector<f64>,
    pub r_offset: DVector<f64>,
}

impl MottResidual {
    /// Stacked as `[boundary_i; boundary_j; dir_i; dir_j; offset]`,
    /// length 2 + 3n.
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.r_dir_i.nrows();
        let mut r = DVector::zeros(2 + 3 * n);
        r[0] = self.r_boundary_i;
        r[1] = self.r_boundary_j;
        r.rows_mut(2, n).copy_from(&self.r_dir_i);
        r.rows_mut(2 + n, n).copy_from(&self.r_dir_j);
        r.rows_mut(2 + 2 * n, n).copy_from(&self.r_offset);
        r
    }

    pub fn inf_norm(&self) -> f64 {
        self.flatten().amax()
    }
}

/// Residual of the contact conditions at `v`:
/// `[g_i(x_i); g_j(x_j); a − ∇̂g_i(x_i); a + ∇̂g_j(x_j); (x_j − x_i) − phi·a]`.
pub fn mott_residual(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    v: &ContactVariables,
) -> Result<MottResidual, MottError> {
    let ghat_i = unit_grad(body_i, &v.x_i, pose_i)?;
    let ghat_j = unit_grad(body_j, &v.x_j, pose_j)?;
    Ok(MottResidual {
        r_boundary_i: eval_g(body_i, &v.x_i, pose_i),
        r_boundary_j: eval_g(body_j, &v.x_j, pose_j),
        r_dir_i: &v.a - ghat_i,
        r_dir_j: &v.a + ghat_j,
        r_offset: &v.x_j - &v.x_i - &v.a * v.phi,
    })
}

/// Analytic Jacobian of the flattened residual with respect to
/// `[x_i; x_j; phi; a]`; shape (2+3n) × (3n+1).
///
/// The only non-obvious blocks differentiate the unit gradients:
/// `d∇̂g/dx = (I − ∇̂g∇̂gᵀ) ∇²g / ‖∇g‖`.
pub fn mott_jacobian(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    v: &ContactVariables,
) -> Result<DMatrix<f64>, MottError> {
    let n = v.dim();
    let grad_i = eval_grad(body_i, &v.x_i, pose_i);
    let grad_j = eval_grad(body_j, &v.x_j, pose_j);
    let dhat_i = unit_grad_projector(&grad_i)? * eval_hess(body_i, &v.x_i, pose_i);
    let dhat_j = unit_grad_projector(&grad_j)? * eval_hess(body_j, &v.x_j, pose_j);

    let col_xi = 0;
    let col_xj = n;
    let col_phi = 2 * n;
    let col_a = 2 * n + 1;
    let mut jac = DMatrix::zeros(2 + 3 * n, 3 * n + 1);
    for c in 0..n {
        jac[(0, col_xi + c)] = grad_i[c];
        jac[(1, col_xj + c)] = grad_j[c];
    }
    for r in 0..n {
        for c in 0..n {
            jac[(2 + r, col_xi + c)] = -dhat_i[(r, c)];
            jac[(2 + n + r, col_xj + c)] = dhat_j[(r, c)];
        }
        jac[(2 + r, col_a + r)] = 1.0;
        jac[(2 + n + r, col_a + r)] = 1.0;
        jac[(2 + 2 * n + r, col_xi + r)] = -1.0;
        jac[(2 + 2 * n + r, col_xj + r)] = 1.0;
        jac[(2 + 2 * n + r, col_phi)] = -v.a[r];
        jac[(2 + 2 * n + r, col_a + r)] = -v.phi;
    }
    Ok(jac)
}

#[derive(Debug, Clone)]
pub struct MottOptions {
    /// Accept when the residual's infinity norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Reject solutions on the maximum-offset branch (offset direction
    /// pointing away from the opposing body's interior).
    pub enforce_uniqueness: bool,
}

impl Default for MottOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            enforce_uniqueness: true,
        }
    }
}

/// First boundary crossing of `g` walking from `origin` (interior) along
/// `dir`, by bracketing and bisection.
pub(crate) fn ray_boundary_point(
    body: &SmoothBody,
    pose: &Pose,
    origin: &DVector<f64>,
    dir: &DVector<f64>,
) -> Result<DVector<f64>, MottError> {
    let mut hi = 0.5;
    let t_max = body.bounding_radius_body() * 4.0 + 8.0;
    while eval_g(body, &(origin + dir * hi), pose) < 0.0 {
        hi *= 2.0;
        if hi > t_max {
            return Err(MottError::NoBoundaryCrossing);
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval_g(body, &(origin + dir * mid), pose) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(origin + dir * (0.5 * (lo + hi)))
}

/// Levenberg–Marquardt on the least-squares residual from a fixed start.
/// Returns the solution together with the iteration count spent on it.
fn solve_from(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    init: &ContactVariables,
    opts: &MottOptions,
) -> Result<(ContactVariables, usize), MottError> {
    let n = init.dim();
    let mut v = init.clone();
    let mut r = mott_residual(body_i, pose_i, body_j, pose_j, &v)?.flatten();
    let mut damping = 1e-3;
    let mut best = r.amax();
    let mut used = 0;
    for iter in 0..opts.max_iter {
        used = iter;
        if r.amax() <= opts.tol {
            return Ok((v, used));
        }
        let jac = mott_jacobian(body_i, pose_i, body_j, pose_j, &v)?;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let lhs = &jtj + DMatrix::identity(3 * n + 1, 3 * n + 1) * damping;
        let step = match lhs.cholesky() {
            Some(ch) => ch.solve(&(-&jtr)),
            None => {
                damping *= 10.0;
                continue;
            }
        };
        if step.norm() <= 1e-12 {
            break;
        }
        let trial = ContactVariables::from_vector(&(v.as_vector() + &step), n);
        match mott_residual(body_i, pose_i, body_j, pose_j, &trial) {
            Ok(res) => {
                let r_trial = res.flatten();
                if r_trial.norm_squared() < r.norm_squared() {
                    v = trial;
                    r = r_trial;
                    best = best.min(r.amax());
                    damping = (damping / 10.0).max(1e-12);
                } else {
                    damping *= 10.0;
                }
            }
            // A step outside the gradient's validity region is rejected
            // like any other bad step.
            Err(MottError::Body(BodyError::DegenerateGradient(_))) => damping *= 10.0,
            Err(e) => return Err(e),
        }
        if iter + 1 == opts.max_iter {
            break;
        }
    }
    if r.amax() <= opts.tol {
        return Ok((v, used));
    }
    Err(MottError::MaxIterations {
        iters: opts.max_iter,
        best,
    })
}

fn initial_guess(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    a0: &DVector<f64>,
) -> Result<ContactVariables, MottError> {
    let c_i = pose_i.to_world(&body_i.interior_center_body());
    let c_j = pose_j.to_world(&body_j.interior_center_body());
    // Ray-boundary points approximately satisfy the two boundary residuals
    // at iterate zero.
    let x_i = ray_boundary_point(body_i, pose_i, &c_i, a0)?;
    let x_j = ray_boundary_point(body_j, pose_j, &c_j, &(-a0))?;
    let phi = a0.dot(&(&x_j - &x_i));
    Ok(ContactVariables {
        x_i,
        x_j,
        phi,
        a: a0.clone(),
    })
}

/// Candidate initial offset directions: the center line first, then a fixed
/// fan (signed axes and diagonals) ordered by alignment with it. The
/// least-squares merit has spurious stationary points for some deeply
/// penetrating pairs; restarting from the fan escapes them
/// deterministically, and the center-line-first order keeps the bias toward
/// the nearest exit.
fn candidate_directions(a0: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = a0.nrows();
    let mut fan: Vec<DVector<f64>> = Vec::new();
    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[k] = s;
            fan.push(e);
        }
    }
    let corners = 1usize << n;
    for mask in 0..corners {
        let v = DVector::from_fn(n, |d, _| if mask & (1 << d) != 0 { 1.0 } else { -1.0 });
        let l = v.norm();
        fan.push(v / l);
    }
    fan.retain(|d| (d - a0).norm() > 1e-9);
    fan.sort_by(|p, q| q.dot(a0).partial_cmp(&p.dot(a0)).unwrap());
    let mut out = vec![a0.clone()];
    out.extend(fan);
    out
}

/// Solve the static contact system between two posed bodies.
///
/// Initialization shoots boundary points along the center-to-center
/// direction, with deterministic fan restarts if the iteration stalls. An
/// accepted solution must pass the uniqueness test
/// `(c_j − c_i)·∇g_i(x_i) ≥ 0`: on the maximum-offset branch the witness
/// normals point away from the opposing body and that dot product goes
/// negative.
pub fn solve_static_mott(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    opts: &MottOptions,
) -> Result<ContactVariables, MottError> {
    solve_static_mott_traced(body_i, pose_i, body_j, pose_j, opts).map(|(v, _)| v)
}

/// Same solve, also reporting the total iteration count across restarts.
pub fn solve_static_mott_traced(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    opts: &MottOptions,
) -> Result<(ContactVariables, usize), MottError> {
    let c_i = pose_i.to_world(&body_i.interior_center_body());
    let c_j = pose_j.to_world(&body_j.interior_center_body());
    let span = &c_j - &c_i;
    let dist = span.norm();
    if dist < 1e-9 {
        return Err(MottError::CoincidentCenters);
    }
    let a0 = span / dist;
    let accepts = |v: &ContactVariables| -> bool {
        if !opts.enforce_uniqueness {
            return true;
        }
        let grad_i = eval_grad(body_i, &v.x_i, pose_i);
        (&c_j - &c_i).dot(&grad_i) >= -1e-9
    };
    let mut stalled: Option<MottError> = None;
    let mut rejected = false;
    let mut total = 0;
    for dir in candidate_directions(&a0) {
        let init = initial_guess(body_i, pose_i, body_j, pose_j, &dir)?;
        match solve_from(body_i, pose_i, body_j, pose_j, &init, opts) {
            Ok((v, used)) => {
                total += used;
                if accepts(&v) {
                    return Ok((v, total));
                }
                rejected = true;
            }
            Err(e @ MottError::MaxIterations { .. }) => {
                total += opts.max_iter;
                stalled = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    if rejected {
        Err(MottError::UniquenessViolation)
    } else {
        Err(stalled.unwrap_or(MottError::UniquenessViolation))
    }
}
