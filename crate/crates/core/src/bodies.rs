//! Collision geometry: polytopes, their smooth superquadratic inner
//! approximations, analytic smooth bodies, and world-frame evaluation of the
//! implicit surface function g with its derivatives.
//!
//! Every body is the sublevel set {x | g(x) <= 0} of a smooth convex g in its
//! own frame; a [`Pose`] carries the frame into the world. All derivatives
//! are analytic — nothing here differences.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lp;
use crate::pose::Pose;

/// Gradient norms below this make a unit gradient meaningless.
pub const EPS_GRAD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("bodies must live in 2 or 3 dimensions, got {0}")]
    BadDimension(usize),
    #[error("polytope needs at least dim+1 facets, got {0}")]
    TooFewFacets(usize),
    #[error("facet row {0} has zero norm")]
    ZeroFacetRow(usize),
    #[error("geometry contains non-finite entries")]
    NonFinite,
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("polytope has empty interior (Chebyshev radius {0:.3e})")]
    EmptyInterior(f64),
    #[error("facet bound {0} is not strictly positive")]
    NonPositiveBound(usize),
    #[error("superquadratic exponent must be a positive integer")]
    BadExponent,
    #[error("bound inflation must be >= 1, got {0}")]
    BadInflation(f64),
    #[error("center is not strictly inside the smoothed body (g = {0:.3e})")]
    CenterOutside(f64),
    #[error("sphere radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("ellipsoid shape matrix must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("gradient norm {0:.3e} is below the degeneracy threshold")]
    DegenerateGradient(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Lp(#[from] lp::LpError),
}

/// H-representation convex body: `facets * x <= offsets` in body frame.
///
/// Construction validates that the set is bounded with nonempty interior, so
/// downstream code can rely on both.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub facets: DMatrix<f64>,
    pub offsets: DVector<f64>,
    bbox: Vec<(f64, f64)>,
}

impl Polytope {
    pub fn new(facets: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, BodyError> {
        let (n_y, n_x) = facets.shape();
        if n_x != 2 && n_x != 3 {
            return Err(BodyError::BadDimension(n_x));
        }
        if n_y < n_x + 1 {
            return Err(BodyError::TooFewFacets(n_y));
        }
        if offsets.nrows() != n_y {
            return Err(BodyError::DimensionMismatch {
                expected: n_y,
                got: offsets.nrows(),
            });
        }
        if !facets.iter().chain(offsets.iter()).all(|v| v.is_finite()) {
            return Err(BodyError::NonFinite);
        }
        for k in 0..n_y {
            if facets.row(k).norm() < 1e-12 {
                return Err(BodyError::ZeroFacetRow(k));
            }
        }
        let bbox = lp::coordinate_bounds_raw(&facets, &offsets).map_err(|e| match e {
            lp::LpError::Unbounded => BodyError::UnboundedPolytope,
            lp::LpError::Infeasible => BodyError::EmptyInterior(0.0),
            other => BodyError::Lp(other),
        })?;
        match lp::chebyshev_center_raw(&facets, &offsets) {
            Ok(_) => {}
            Err(lp::LpError::EmptyInterior(r)) => return Err(BodyError::EmptyInterior(r)),
            Err(lp::LpError::Infeasible) => return Err(BodyError::EmptyInterior(0.0)),
            Err(other) => return Err(BodyError::Lp(other)),
        }
        Ok(Self {
            facets,
            offsets,
            bbox,
        })
    }

    /// `[-1, 1]^dim` with facet rows ±e_d.
    pub fn unit_box(dim: usize) -> Result<Self, BodyError> {
        Self::box_at(&vec![1.0; dim])
    }

    /// Axis-aligned box `|x_d| <= half_extents[d]`.
    pub fn box_at(half_extents: &[f64]) -> Result<Self, BodyError> {
        let dim = half_extents.len();
        let mut facets = DMatrix::zeros(2 * dim, dim);
        let mut offsets = DVector::zeros(2 * dim);
        for d in 0..dim {
            facets[(2 * d, d)] = 1.0;
            offsets[2 * d] = half_extents[d];
            facets[(2 * d + 1, d)] = -1.0;
            offsets[2 * d + 1] = half_extents[d];
        }
        Self::new(facets, offsets)
    }

    pub fn dim(&self) -> usize {
        self.facets.ncols()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.nrows()
    }

    /// Body-frame axis-aligned bounding box, cached from validation.
    pub fn bounding_box(&self) -> &[(f64, f64)] {
        &self.bbox
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let slack = &self.facets * x - &self.offsets;
        slack.iter().all(|&s| s <= tol)
    }
}

/// Smooth semi-algebraic inner approximation of a polytope:
/// `g(x) = Σ_k (2 y_k / ybar_k + 1)^{2 rho} − 1` with `y = facets·x − offsets`.
///
/// Every point with g <= 0 satisfies the source inequalities (each summand
/// must stay within [−1, 1], forcing y_k <= 0), and the approximation grows
/// toward the polytope as rho increases.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperquadBody {
    pub facets: DMatrix<f64>,
    pub offsets: DVector<f64>,
    /// Per-facet range of `facets·x − offsets` over the polytope, optionally
    /// inflated; strictly positive.
    pub ybar: DVector<f64>,
    pub rho: u32,
    /// Interior point (Chebyshev center of the source polytope).
    pub center: DVector<f64>,
    bbox: Vec<(f64, f64)>,
}

impl SuperquadBody {
    /// Build from a validated polytope: tight facet bounds plus Chebyshev
    /// center, each via one LP.
    pub fn from_polytope(p: &Polytope, rho: u32) -> Result<Self, BodyError> {
        Self::from_polytope_inflated(p, rho, 1.0)
    }

    /// Same with the bounds multiplied by `inflation >= 1`, trading tightness
    /// of the far-facet terms for a rounder shape.
    pub fn from_polytope_inflated(
        p: &Polytope,
        rho: u32,
        inflation: f64,
    ) -> Result<Self, BodyError> {
        if !(inflation >= 1.0 && inflation.is_finite()) {
            return Err(BodyError::BadInflation(inflation));
        }
        let ybar = lp::facet_bounds(p)? * inflation;
        let (center, _radius) = lp::chebyshev_center(p)?;
        Self::from_parts(p.facets.clone(), p.offsets.clone(), ybar, rho, center)
    }

    /// Assemble from precomputed pieces (e.g. an approximation sidecar file);
    /// re-validates everything, including that the center is strictly inside.
    pub fn from_parts(
        facets: DMatrix<f64>,
        offsets: DVector<f64>,
        ybar: DVector<f64>,
        rho: u32,
        center: DVector<f64>,
    ) -> Result<Self, BodyError> {
        let p = Polytope::new(facets, offsets)?;
        if rho < 1 {
            return Err(BodyError::BadExponent);
        }
        if ybar.nrows() != p.n_facets() {
            return Err(BodyError::DimensionMismatch {
                expected: p.n_facets(),
                got: ybar.nrows(),
            });
        }
        if center.nrows() != p.dim() {
            return Err(BodyError::DimensionMismatch {
                expected: p.dim(),
                got: center.nrows(),
            });
        }
        for k in 0..ybar.nrows() {
            if !(ybar[k] > 0.0 && ybar[k].is_finite()) {
                return Err(BodyError::NonPositiveBound(k));
            }
        }
        let bbox = p.bounding_box().to_vec();
        let body = Self {
            facets: p.facets,
            offsets: p.offsets,
            ybar,
            rho,
            center,
            bbox,
        };
        let g_center = body.g_body(&body.center);
        if g_center >= 0.0 {
            return Err(BodyError::CenterOutside(g_center));
        }
        Ok(body)
    }

    pub fn dim(&self) -> usize {
        self.facets.ncols()
    }

    /// The polytope this body approximates.
    pub fn source_polytope(&self) -> Polytope {
        Polytope::new(self.facets.clone(), self.offsets.clone())
            .expect("source polytope was validated at construction")
    }

    fn z(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(y.nrows(), |k, _| 2.0 * y[k] / self.ybar[k] + 1.0)
    }

    pub fn g_body(&self, x: &DVector<f64>) -> f64 {
        let y = &self.facets * x - &self.offsets;
        let z = self.z(&y);
        let p = 2 * self.rho as i32;
        z.iter().map(|&zk| zk.powi(p)).sum::<f64>() - 1.0
    }

    pub fn grad_body(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = &self.facets * x - &self.offsets;
        let z = self.z(&y);
        let p = 2 * self.rho as i32;
        let coeff = DVector::from_fn(z.nrows(), |k, _| {
            f64::from(p) * z[k].powi(p - 1) * 2.0 / self.ybar[k]
        });
        self.facets.transpose() * coeff
    }

    pub fn hess_body(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let y = &self.facets * x - &self.offsets;
        let z = self.z(&y);
        let p = 2 * self.rho as i32;
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for k in 0..z.nrows() {
            let w = f64::from(p) * f64::from(p - 1) * z[k].powi(p - 2)
                * (2.0 / self.ybar[k]).powi(2);
            if w != 0.0 {
                let a = self.facets.row(k);
                for i in 0..self.dim() {
                    for j in 0..self.dim() {
                        h[(i, j)] += w * a[i] * a[j];
                    }
                }
            }
        }
        h
    }
}

/// Smooth convex test bodies with closed-form everything.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticBody {
    /// `g(x) = ‖x‖² − radius²`.
    Sphere { dim: usize, radius: f64 },
    /// `g(x) = xᵀ·shape·x − 1`, shape symmetric positive definite.
    Ellipsoid { shape: DMatrix<f64> },
}

impl AnalyticBody {
    pub fn sphere(dim: usize, radius: f64) -> Result<Self, BodyError> {
        if dim != 2 && dim != 3 {
            return Err(BodyError::BadDimension(dim));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(BodyError::BadRadius(radius));
        }
        Ok(Self::Sphere { dim, radius })
    }

    pub fn ellipsoid(shape: DMatrix<f64>) -> Result<Self, BodyError> {
        let (r, c) = shape.shape();
        if r != c || (r != 2 && r != 3) {
            return Err(BodyError::BadDimension(r));
        }
        if (&shape - shape.transpose()).amax() > 1e-12 {
            return Err(BodyError::NotPositiveDefinite);
        }
        if shape.clone().cholesky().is_none() {
            return Err(BodyError::NotPositiveDefinite);
        }
        Ok(Self::Ellipsoid { shape })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Sphere { dim, .. } => *dim,
            Self::Ellipsoid { shape } => shape.nrows(),
        }
    }

    pub fn g_body(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Sphere { radius, .. } => x.dot(x) - radius * radius,
            Self::Ellipsoid { shape } => (shape * x).dot(x) - 1.0,
        }
    }

    pub fn grad_body(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Sphere { .. } => x * 2.0,
            Self::Ellipsoid { shape } => shape * x * 2.0,
        }
    }

    pub fn hess_body(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::Sphere { dim, .. } => DMatrix::identity(*dim, *dim) * 2.0,
            Self::Ellipsoid { shape } => shape * 2.0,
        }
    }
}

/// Any smooth body the solvers accept.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothBody {
    Superquad(SuperquadBody),
    Analytic(AnalyticBody),
}

impl SmoothBody {
    pub fn dim(&self) -> usize {
        match self {
            Self::Superquad(b) => b.dim(),
            Self::Analytic(b) => b.dim(),
        }
    }

    pub fn g_body(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Superquad(b) => b.g_body(x),
            Self::Analytic(b) => b.g_body(x),
        }
    }

    pub fn grad_body(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Superquad(b) => b.grad_body(x),
            Self::Analytic(b) => b.grad_body(x),
        }
    }

    pub fn hess_body(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::Superquad(b) => b.hess_body(x),
            Self::Analytic(b) => b.hess_body(x),
        }
    }

    /// A point strictly inside the body, in body frame.
    pub fn interior_center_body(&self) -> DVector<f64> {
        match self {
            Self::Superquad(b) => b.center.clone(),
            Self::Analytic(b) => DVector::zeros(b.dim()),
        }
    }

    /// Axis-aligned box containing the body, in body frame. Tight for
    /// superquads (their polytope's box), conservative for ellipsoids.
    pub fn body_bbox(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Superquad(b) => b.bbox.clone(),
            Self::Analytic(AnalyticBody::Sphere { dim, radius }) => {
                vec![(-radius, *radius); *dim]
            }
            Self::Analytic(AnalyticBody::Ellipsoid { shape }) => {
                let eig = shape.clone().symmetric_eigen();
                let r = 1.0 / eig.eigenvalues.min().sqrt();
                vec![(-r, r); shape.nrows()]
            }
        }
    }

    /// Radius of a ball around the interior center that contains the body.
    pub fn bounding_radius_body(&self) -> f64 {
        match self {
            Self::Superquad(b) => {
                let corners = 1usize << b.dim();
                let mut r: f64 = 0.0;
                for mask in 0..corners {
                    let mut d2 = 0.0;
                    for d in 0..b.dim() {
                        let v = if mask & (1 << d) != 0 {
                            b.bbox[d].1
                        } else {
                            b.bbox[d].0
                        };
                        d2 += (v - b.center[d]).powi(2);
                    }
                    r = r.max(d2.sqrt());
                }
                r
            }
            Self::Analytic(AnalyticBody::Sphere { radius, .. }) => *radius,
            Self::Analytic(AnalyticBody::Ellipsoid { shape }) => {
                let eig = shape.clone().symmetric_eigen();
                let min = eig.eigenvalues.min();
                1.0 / min.sqrt()
            }
        }
    }
}

fn check_dim(body: &SmoothBody, x_world: &DVector<f64>, pose: &Pose) {
    assert_eq!(body.dim(), x_world.nrows(), "point dimension mismatch");
    assert_eq!(body.dim(), pose.dim(), "pose dimension mismatch");
}

/// g evaluated at a world point: `g_body(Rᵀ(x − p))`.
pub fn eval_g(body: &SmoothBody, x_world: &DVector<f64>, pose: &Pose) -> f64 {
    check_dim(body, x_world, pose);
    body.g_body(&pose.to_body(x_world))
}

/// World-frame gradient `R ∇g_body`.
pub fn eval_grad(body: &SmoothBody, x_world: &DVector<f64>, pose: &Pose) -> DVector<f64> {
    check_dim(body, x_world, pose);
    let r = pose.rotation_matrix();
    let x_b = r.transpose() * (x_world - &pose.translation);
    r * body.grad_body(&x_b)
}

/// World-frame Hessian `R ∇²g_body Rᵀ`.
pub fn eval_hess(body: &SmoothBody, x_world: &DVector<f64>, pose: &Pose) -> DMatrix<f64> {
    check_dim(body, x_world, pose);
    let r = pose.rotation_matrix();
    let x_b = r.transpose() * (x_world - &pose.translation);
    &r * body.hess_body(&x_b) * r.transpose()
}

/// Normalized world-frame gradient; errors where the gradient vanishes.
pub fn unit_grad(
    body: &SmoothBody,
    x_world: &DVector<f64>,
    pose: &Pose,
) -> Result<DVector<f64>, BodyError> {
    let g = eval_grad(body, x_world, pose);
    let n = g.norm();
    if n < EPS_GRAD {
        return Err(BodyError::DegenerateGradient(n));
    }
    Ok(g / n)
}

/// `(I − ĝĝᵀ)/‖grad‖`: left-multiplier turning a gradient perturbation into
/// the induced unit-gradient perturbation.
pub fn unit_grad_projector(grad_world: &DVector<f64>) -> Result<DMatrix<f64>, BodyError> {
    let n = grad_world.norm();
    if n < EPS_GRAD {
        return Err(BodyError::DegenerateGradient(n));
    }
    let ghat = grad_world / n;
    let dim = grad_world.nrows();
    Ok((DMatrix::identity(dim, dim) - &ghat * ghat.transpose()) / n)
}

/// Partial derivatives of g and of the world-frame gradient with respect to
/// the pose parameters `[translation; rotation]` at a fixed world point.
///
/// Returns `(dg_dq, dgrad_dq)` with `dg_dq` of length n+rot and `dgrad_dq`
/// of shape n × (n+rot).
pub fn pose_jacobians(
    body: &SmoothBody,
    x_world: &DVector<f64>,
    pose: &Pose,
) -> (DVector<f64>, DMatrix<f64>) {
    check_dim(body, x_world, pose);
    let n = body.dim();
    let rd = pose.rot_dim();
    let r = pose.rotation_matrix();
    let rel = x_world - &pose.translation;
    let x_b = r.transpose() * &rel;
    let g_b = body.grad_body(&x_b);
    let h_b = body.hess_body(&x_b);
    let g_w = &r * &g_b;
    let h_w = &r * &h_b * r.transpose();
    let derivs = pose.rotation_matrix_derivatives();

    let mut dg_dq = DVector::zeros(n + rd);
    let mut dgrad_dq = DMatrix::zeros(n, n + rd);
    // Translation: moving the body by dp moves the body-frame point by
    // −Rᵀdp, so dg = −G_w·dp and dG_w = −H_w dp.
    for d in 0..n {
        dg_dq[d] = -g_w[d];
        for i in 0..n {
            dgrad_dq[(i, d)] = -h_w[(i, d)];
        }
    }
    for (l, dl) in derivs.iter().enumerate() {
        dg_dq[n + l] = rel.dot(&(dl * &g_b));
        let dx_b = dl.transpose() * &rel;
        let col = dl * &g_b + &r * (&h_b * dx_b);
        for i in 0..n {
            dgrad_dq[(i, n + l)] = col[i];
        }
    }
    (dg_dq, dgrad_dq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box_superquad(rho: u32) -> SuperquadBody {
        SuperquadBody::from_polytope(&Polytope::unit_box(2).unwrap(), rho).unwrap()
    }

    /// Walk from the interior center along `dir` until g crosses zero.
    fn ray_to_boundary(body: &SmoothBody, pose: &Pose, dir: &DVector<f64>) -> DVector<f64> {
        let c = pose.to_world(&body.interior_center_body());
        let mut hi = 1.0;
        while eval_g(body, &(&c + dir * hi), pose) < 0.0 {
            hi *= 2.0;
            assert!(hi < 1e6, "ray never left the body");
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if eval_g(body, &(&c + dir * mid), pose) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        &c + dir * (0.5 * (lo + hi))
    }

    #[test]
    fn unit_box_g_at_center_and_vertex() {
        let b = unit_box_superquad(1);
        assert_abs_diff_eq!(b.ybar[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            b.g_body(&DVector::from_column_slice(&[0.0, 0.0])),
            -1.0,
            epsilon = 1e-12
        );
        // The polytope vertex lies outside the inner approximation.
        assert_abs_diff_eq!(
            b.g_body(&DVector::from_column_slice(&[1.0, 1.0])),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn box_center_gradient_vanishes_and_unit_grad_rejects_it() {
        let b = SmoothBody::Superquad(unit_box_superquad(1));
        let pose = Pose::identity(2);
        let center = DVector::from_column_slice(&[0.0, 0.0]);
        assert!(eval_grad(&b, &center, &pose).norm() < 1e-14);
        assert!(matches!(
            unit_grad(&b, &center, &pose),
            Err(BodyError::DegenerateGradient(_))
        ));
    }

    #[test]
    fn sphere_boundary_values() {
        let s = SmoothBody::Analytic(AnalyticBody::sphere(2, 1.0).unwrap());
        let pose = Pose::new(
            DVector::from_column_slice(&[3.0, 0.0]),
            DVector::zeros(1),
        );
        let x = DVector::from_column_slice(&[4.0, 0.0]);
        assert_abs_diff_eq!(eval_g(&s, &x, &pose), 0.0, epsilon = 1e-12);
        let g = eval_grad(&s, &x, &pose);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        let u = unit_grad(&s, &DVector::from_column_slice(&[3.0, 2.0]), &pose).unwrap();
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_facet_region_aligns_unit_grad_at_high_rho() {
        let b = SmoothBody::Superquad(unit_box_superquad(5));
        let pose = Pose::identity(2);
        let x = ray_to_boundary(&b, &pose, &DVector::from_column_slice(&[1.0, 0.0]));
        let u = unit_grad(&b, &x, &pose).unwrap();
        assert!((u[0] - 1.0).abs() < 0.05, "unit grad {u:?}");
    }

    #[test]
    fn gradients_and_hessians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for case in 0..12 {
            let dim = if case % 2 == 0 { 2 } else { 3 };
            let body = if case % 3 == 2 {
                SmoothBody::Analytic(randgen::random_ellipsoid(dim, &mut rng))
            } else {
                let p = randgen::random_smoothable_polytope(dim, 4 + dim * 2, &mut rng);
                SmoothBody::Superquad(
                    SuperquadBody::from_polytope(&p, [1, 3, 5, 9][case % 4]).unwrap(),
                )
            };
            let pose = randgen::random_pose(dim, &mut rng, 2.0, 1.2);
            for _ in 0..8 {
                let dir = randgen::random_unit(dim, &mut rng);
                let on = ray_to_boundary(&body, &pose, &dir);
                let jitter = randgen::random_unit(dim, &mut rng) * rng.random_range(-0.05..0.05);
                let x = &on + jitter;

                let g = eval_grad(&body, &x, &pose);
                let hess = eval_hess(&body, &x, &pose);
                let scale_g = g.amax().max(1e-6);
                let scale_h = hess.amax().max(1e-6);
                for d in 0..dim {
                    let mut xp = x.clone();
                    xp[d] += h;
                    let mut xm = x.clone();
                    xm[d] -= h;
                    let fd = (eval_g(&body, &xp, &pose) - eval_g(&body, &xm, &pose)) / (2.0 * h);
                    assert!(
                        (fd - g[d]).abs() / scale_g <= 1e-5,
                        "case {case}: gradient mismatch {} vs {}",
                        fd,
                        g[d]
                    );
                    let col = (eval_grad(&body, &xp, &pose) - eval_grad(&body, &xm, &pose))
                        / (2.0 * h);
                    for i in 0..dim {
                        assert!(
                            (col[i] - hess[(i, d)]).abs() / scale_h <= 1e-5,
                            "case {case}: hessian mismatch at ({i},{d})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn smoothed_points_stay_inside_the_polytope() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for dim in [2usize, 3] {
            let p = randgen::random_smoothable_polytope(dim, 5 + dim * 2, &mut rng);
            for rho in 1..=9u32 {
                let b = SuperquadBody::from_polytope(&p, rho).unwrap();
                let mut accepted = 0;
                let mut attempts = 0;
                while accepted < 400 && attempts < 200_000 {
                    attempts += 1;
                    let x = DVector::from_fn(dim, |d, _| {
                        rng.random_range(p.bounding_box()[d].0..p.bounding_box()[d].1)
                    });
                    if b.g_body(&x) <= 0.0 {
                        accepted += 1;
                        let slack = &p.facets * &x - &p.offsets;
                        assert!(
                            slack.max() <= 1e-9,
                            "dim {dim} rho {rho}: smoothed point left the polytope"
                        );
                    }
                }
                assert!(accepted >= 400, "sampling starved at dim {dim} rho {rho}");
            }
        }
    }

    #[test]
    fn approximation_grows_with_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = randgen::random_smoothable_polytope(3, 10, &mut rng);
        let bodies: Vec<SuperquadBody> = (1..=9)
            .map(|rho| SuperquadBody::from_polytope(&p, rho).unwrap())
            .collect();
        let mut tested = 0;
        let mut attempts = 0;
        while tested < 1000 && attempts < 500_000 {
            attempts += 1;
            let x = DVector::from_fn(3, |d, _| {
                rng.random_range(p.bounding_box()[d].0..p.bounding_box()[d].1)
            });
            if bodies[0].g_body(&x) > 0.0 {
                // Only points inside some level are informative.
                let first_in = bodies.iter().position(|b| b.g_body(&x) <= 0.0);
                if let Some(i) = first_in {
                    for b in &bodies[i..] {
                        assert!(b.g_body(&x) <= 0.0, "inclusion broke as rho grew");
                    }
                    tested += 1;
                }
            } else {
                for b in &bodies[1..] {
                    assert!(b.g_body(&x) <= 0.0, "inclusion broke as rho grew");
                }
                tested += 1;
            }
        }
        assert!(tested >= 1000);
    }

    #[test]
    fn midpoints_of_interior_pairs_stay_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = randgen::random_smoothable_polytope(2, 7, &mut rng);
        let b = SuperquadBody::from_polytope(&p, 3).unwrap();
        let mut pairs = 0;
        let mut attempts = 0;
        let mut inside = Vec::new();
        while pairs < 1000 && attempts < 400_000 {
            attempts += 1;
            let x = DVector::from_fn(2, |d, _| {
                rng.random_range(p.bounding_box()[d].0..p.bounding_box()[d].1)
            });
            if b.g_body(&x) <= 0.0 {
                inside.push(x);
                if inside.len() >= 2 {
                    let a = &inside[inside.len() - 2];
                    let c = &inside[inside.len() - 1];
                    let mid = (a + c) * 0.5;
                    assert!(b.g_body(&mid) <= 1e-12, "midpoint escaped the sublevel set");
                    pairs += 1;
                }
            }
        }
        assert!(pairs >= 1000);
    }

    #[test]
    fn frame_change_leaves_g_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for dim in [2usize, 3] {
            let p = randgen::random_smoothable_polytope(dim, 6 + dim, &mut rng);
            let body = SmoothBody::Superquad(SuperquadBody::from_polytope(&p, 3).unwrap());
            for _ in 0..20 {
                let pose = randgen::random_pose(dim, &mut rng, 2.0, 1.2);
                let extra = randgen::random_pose(dim, &mut rng, 1.5, 1.0);
                let x = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
                let lhs = eval_g(&body, &extra.to_world(&x), &extra.compose(&pose));
                let rhs = eval_g(&body, &x, &pose);
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn pose_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let h = 1e-6;
        for case in 0..10 {
            let dim = if case % 2 == 0 { 2 } else { 3 };
            let body = if case % 3 == 0 {
                SmoothBody::Analytic(AnalyticBody::sphere(dim, 0.8).unwrap())
            } else {
                let p = randgen::random_smoothable_polytope(dim, 5 + dim, &mut rng);
                SmoothBody::Superquad(SuperquadBody::from_polytope(&p, 3).unwrap())
            };
            let pose = randgen::random_pose(dim, &mut rng, 1.5, 1.0);
            let dir = randgen::random_unit(dim, &mut rng);
            let x = ray_to_boundary(&body, &pose, &dir);

            let (dg, dgrad) = pose_jacobians(&body, &x, &pose);
            let q0 = pose.as_vector();
            for k in 0..q0.nrows() {
                let mut qp = q0.clone();
                qp[k] += h;
                let mut qm = q0.clone();
                qm[k] -= h;
                let pp = Pose::from_vector(dim, &qp);
                let pm = Pose::from_vector(dim, &qm);
                let fd_g = (eval_g(&body, &x, &pp) - eval_g(&body, &x, &pm)) / (2.0 * h);
                assert!(
                    (fd_g - dg[k]).abs() <= 1e-5 * (1.0 + dg.amax()),
                    "case {case}: dg/dq[{k}] {} vs {}",
                    fd_g,
                    dg[k]
                );
                let fd_grad =
                    (eval_grad(&body, &x, &pp) - eval_grad(&body, &x, &pm)) / (2.0 * h);
                for i in 0..dim {
                    assert!(
                        (fd_grad[i] - dgrad[(i, k)]).abs() <= 1e-5 * (1.0 + dgrad.amax()),
                        "case {case}: dgrad[{i},{k}]"
                    );
                }
            }
        }
    }

    #[test]
    fn translation_jacobian_is_negative_gradient() {
        let s = SmoothBody::Analytic(AnalyticBody::sphere(3, 1.0).unwrap());
        let pose = Pose::new(
            DVector::from_column_slice(&[0.5, -0.25, 1.0]),
            DVector::zeros(3),
        );
        let x = DVector::from_column_slice(&[1.2, 0.4, 1.3]);
        let g = eval_grad(&s, &x, &pose);
        let (dg, _) = pose_jacobians(&s, &x, &pose);
        for d in 0..3 {
            assert_abs_diff_eq!(dg[d], -g[d], epsilon = 1e-12);
        }
    }

    #[test]
    fn inflated_bounds_remain_inner_approximations() {
        // Inflation moves every z_k toward +1, so it can evict the center
        // just like lopsidedness can; redraw until the inflated build holds.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (p, b) = loop {
            let p = randgen::random_smoothable_polytope(2, 8, &mut rng);
            if let Ok(b) = SuperquadBody::from_polytope_inflated(&p, 3, 1.3) {
                break (p, b);
            }
        };
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < 500 && attempts < 200_000 {
            attempts += 1;
            let x = DVector::from_fn(2, |d, _| {
                rng.random_range(p.bounding_box()[d].0..p.bounding_box()[d].1)
            });
            if b.g_body(&x) <= 0.0 {
                accepted += 1;
                assert!((&p.facets * &x - &p.offsets).max() <= 1e-9);
            }
        }
        assert!(accepted >= 500);
    }

    #[test]
    fn invalid_constructions_are_rejected() {
        // Unbounded: half-space stack missing a lid.
        let facets = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        let offsets = DVector::from_column_slice(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            Polytope::new(facets, offsets),
            Err(BodyError::UnboundedPolytope)
        ));

        // Empty interior: x <= 0 and -x <= 0 squeeze a 2D set flat.
        let facets = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let offsets = DVector::from_column_slice(&[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            Polytope::new(facets, offsets),
            Err(BodyError::EmptyInterior(_))
        ));

        assert!(matches!(
            AnalyticBody::sphere(2, 0.0),
            Err(BodyError::BadRadius(_))
        ));
        let not_spd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            AnalyticBody::ellipsoid(not_spd),
            Err(BodyError::NotPositiveDefinite)
        ));

        let p = Polytope::unit_box(2).unwrap();
        assert!(matches!(
            SuperquadBody::from_polytope(&p, 0),
            Err(BodyError::BadExponent)
        ));
        assert!(matches!(
            SuperquadBody::from_polytope_inflated(&p, 3, 0.5),
            Err(BodyError::BadInflation(_))
        ));
    }
}
