//! Seeded random geometry: polytopes sampled as tangent half-spaces around
//! the unit ball, smooth test bodies, and poses. Shared by the test suites
//! and the CLI sweep so every randomized experiment is reproducible from a
//! single seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::bodies::{AnalyticBody, Polytope, SmoothBody, SuperquadBody};
use crate::pose::Pose;

pub fn random_unit(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.05 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation_vector(dim: usize, rng: &mut impl Rng, max_angle: f64) -> DVector<f64> {
    match dim {
        2 => DVector::from_column_slice(&[rng.random_range(-max_angle..max_angle)]),
        _ => random_unit(3, rng) * rng.random_range(0.0..max_angle),
    }
}

pub fn random_pose(dim: usize, rng: &mut impl Rng, t_extent: f64, max_angle: f64) -> Pose {
    Pose::new(
        DVector::from_fn(dim, |_, _| rng.random_range(-t_extent..t_extent)),
        random_rotation_vector(dim, rng, max_angle),
    )
}

/// Bounded polytope from `n_facets` half-spaces tangent to a shell around
/// the unit ball: random unit normals, offsets in [0.7, 1.3]. Redraws until
/// the directions positively span the space (the constructor's boundedness
/// check is the arbiter); the origin is always interior by construction.
pub fn random_polytope(dim: usize, n_facets: usize, rng: &mut impl Rng) -> Polytope {
    assert!(n_facets > dim, "need more facets than dimensions");
    for _ in 0..500 {
        let mut facets = DMatrix::zeros(n_facets, dim);
        for k in 0..n_facets {
            let u = random_unit(dim, rng);
            for d in 0..dim {
                facets[(k, d)] = u[d];
            }
        }
        let offsets = DVector::from_fn(n_facets, |_, _| rng.random_range(0.7..1.3));
        if let Ok(p) = Polytope::new(facets, offsets) {
            return p;
        }
    }
    panic!("random half-spaces failed to close a bounded polytope after 500 draws");
}

/// Like [`random_polytope`], but additionally redraws until the tight
/// smoothing construction validates at rho = 1 (a sufficiently lopsided
/// polytope can push the Chebyshev center outside its own approximation,
/// which the `SuperquadBody` constructor rejects). Since the approximation
/// grows with rho, success at rho = 1 covers every larger exponent.
pub fn random_smoothable_polytope(
    dim: usize,
    n_facets: usize,
    rng: &mut impl Rng,
) -> Polytope {
    for _ in 0..500 {
        let p = random_polytope(dim, n_facets, rng);
        if SuperquadBody::from_polytope(&p, 1).is_ok() {
            return p;
        }
    }
    panic!("no smoothable polytope after 500 draws");
}

pub fn random_superquad(
    dim: usize,
    n_facets: usize,
    rho: u32,
    rng: &mut impl Rng,
) -> SuperquadBody {
    let p = random_smoothable_polytope(dim, n_facets, rng);
    SuperquadBody::from_polytope(&p, rho).expect("smoothability was checked at rho = 1")
}

/// Ellipsoid with semi-axes in [0.45, 1.1] under a random rotation.
pub fn random_ellipsoid(dim: usize, rng: &mut impl Rng) -> AnalyticBody {
    let rot = Pose::new(
        DVector::zeros(dim),
        random_rotation_vector(dim, rng, 2.5),
    )
    .rotation_matrix();
    let mut diag = DMatrix::zeros(dim, dim);
    for d in 0..dim {
        let a: f64 = rng.random_range(0.45..1.1);
        diag[(d, d)] = 1.0 / (a * a);
    }
    let q = &rot * diag * rot.transpose();
    let q = (&q + q.transpose()) * 0.5;
    AnalyticBody::ellipsoid(q).expect("constructed shape matrix is SPD")
}

/// Poses placing two polytopes with an exact hull-to-hull clearance `gap`:
/// random orientations, then the separation along a random direction is
/// bisected until the vertex-hull distance hits `gap` to 1e-6.
pub fn poses_at_hull_gap(
    p_i: &Polytope,
    p_j: &Polytope,
    rng: &mut impl Rng,
    gap: f64,
) -> Result<(Pose, Pose), crate::oracle::OracleError> {
    assert!(gap > 0.0);
    let dim = p_i.dim();
    let pose_i = Pose::new(DVector::zeros(dim), random_rotation_vector(dim, rng, 3.0));
    let rot_j = random_rotation_vector(dim, rng, 3.0);
    let dir = random_unit(dim, rng);
    let h_i = crate::oracle::enumerate_vertices(p_i, &pose_i)?;
    let dist_at = |t: f64| -> Result<f64, crate::oracle::OracleError> {
        let pose_j = Pose::new(&dir * t, rot_j.clone());
        let h_j = crate::oracle::enumerate_vertices(p_j, &pose_j)?;
        Ok(crate::oracle::closest_points(&h_i, &h_j)?.0)
    };
    // Hull distance is nondecreasing in t once positive; bracket then bisect.
    let mut hi = 4.0 + gap;
    while dist_at(hi)? < gap {
        hi *= 1.5;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if dist_at(mid)? < gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((pose_i, Pose::new(&dir * hi, rot_j)))
}

/// Poses guaranteed to separate two smooth bodies: centers are placed a
/// bounding-radii sum plus `gap` apart, so the enclosing balls (hence the
/// bodies) are disjoint. The smooth-boundary clearance is positive but not
/// equal to `gap`.
pub fn separated_smooth_poses(
    body_i: &SmoothBody,
    body_j: &SmoothBody,
    rng: &mut impl Rng,
    gap: f64,
) -> (Pose, Pose) {
    assert!(gap > 0.0);
    let dim = body_i.dim();
    let rot_i = random_rotation_vector(dim, rng, 3.0);
    let rot_j = random_rotation_vector(dim, rng, 3.0);
    let dir = random_unit(dim, rng);
    // Center the enclosing balls, not the frames: the interior center of a
    // superquad need not be its frame origin.
    let c_i = body_i.interior_center_body();
    let c_j = body_j.interior_center_body();
    let pose_i = Pose::new(DVector::zeros(dim), rot_i);
    let ball_i = pose_i.to_world(&c_i);
    let target = &ball_i + &dir * (body_i.bounding_radius_body() + body_j.bounding_radius_body() + gap);
    let rot_mat_j = Pose::new(DVector::zeros(dim), rot_j.clone()).rotation_matrix();
    let translation_j = target - rot_mat_j * c_j;
    (pose_i, Pose::new(translation_j, rot_j))
}
