//! Ground-truth machinery the solvers are checked against: exact polytope
//! vertex enumeration, closest points between vertex hulls, a direction-sweep
//! offset oracle, and sampled penetration tests.
//!
//! Everything here is deliberately slow and structurally independent of the
//! solver stack: the sweep oracle touches smooth bodies only through
//! [`eval_g`] (bisected ray casts — no gradients, no Newton steps), so its
//! answers cannot inherit a solver bug.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bodies::{eval_g, BodyError, Polytope, SmoothBody};
use crate::pose::Pose;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no facet subset produced a vertex")]
    DegenerateFacetSet,
    #[error("closest-point iteration cap exceeded")]
    MaxIterations,
    #[error("boundary ray cast found no crossing within range {0:.3e}")]
    NoContactInRange(f64),
    #[error("reference offset {0:.3e} is too small for a percent error")]
    NonPositiveReference(f64),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}

/// World-frame vertex set of a polytope.
#[derive(Debug, Clone)]
pub struct VertexHull {
    pub vertices: Vec<DVector<f64>>,
}

/// Exact vertices by brute force: every dim-subset of facets is intersected,
/// kept when feasible, deduplicated at 1e-8.
pub fn enumerate_vertices(p: &Polytope, pose: &Pose) -> Result<VertexHull, OracleError> {
    let body_verts = enumerate_body_vertices(&p.facets, &p.offsets)?;
    Ok(VertexHull {
        vertices: body_verts.iter().map(|v| pose.to_world(v)).collect(),
    })
}

fn enumerate_body_vertices(
    facets: &DMatrix<f64>,
    offsets: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, OracleError> {
    let dim = facets.ncols();
    let n = facets.nrows();
    let mut verts: Vec<DVector<f64>> = Vec::new();
    let mut subset = vec![0usize; dim];
    enumerate_subsets(n, dim, &mut subset, 0, 0, &mut |rows: &[usize]| {
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        for (r, &k) in rows.iter().enumerate() {
            for c in 0..dim {
                a[(r, c)] = facets[(k, c)];
            }
            b[r] = offsets[k];
        }
        let lu = a.full_piv_lu();
        if lu.determinant().abs() < 1e-10 {
            return;
        }
        if let Some(x) = lu.solve(&b) {
            let slack = facets * &x - offsets;
            if slack.iter().all(|&s| s <= 1e-8)
                && !verts.iter().any(|v| (v - &x).norm() <= 1e-8)
            {
                verts.push(x);
            }
        }
    });
    if verts.is_empty() {
        return Err(OracleError::DegenerateFacetSet);
    }
    Ok(verts)
}

fn enumerate_subsets(
    n: usize,
    k: usize,
    scratch: &mut Vec<usize>,
    depth: usize,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        visit(scratch);
        return;
    }
    for i in start..n {
        scratch[depth] = i;
        enumerate_subsets(n, k, scratch, depth + 1, i + 1, visit);
    }
}

/// Second enumeration route for cross-checks: first drop every facet that is
/// strictly redundant (its function cannot reach its offset subject to the
/// remaining rows), then enumerate on the pruned system. Vertex sets must
/// agree with [`enumerate_vertices`] for valid polytopes.
pub fn enumerate_vertices_pruned(p: &Polytope, pose: &Pose) -> Result<VertexHull, OracleError> {
    let n = p.n_facets();
    let dim = p.dim();
    let mut keep: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        let mut a = DMatrix::zeros(others.len(), dim);
        let mut b = DVector::zeros(others.len());
        for (r, &i) in others.iter().enumerate() {
            for c in 0..dim {
                a[(r, c)] = p.facets[(i, c)];
            }
            b[r] = p.offsets[i];
        }
        let lp = crate::lp::LinearProgram {
            cost: -p.facets.row(k).transpose(),
            ineq_matrix: a,
            ineq_rhs: b,
        };
        let redundant = match crate::lp::solve_lp(&lp)? {
            crate::lp::LpOutcome::Optimal(sol) => -sol.value <= p.offsets[k] - 1e-9,
            // The row is what bounds this direction; certainly not redundant.
            crate::lp::LpOutcome::Unbounded => false,
            crate::lp::LpOutcome::Infeasible => false,
        };
        if !redundant {
            keep.push(k);
        }
    }
    let mut facets = DMatrix::zeros(keep.len(), dim);
    let mut offsets = DVector::zeros(keep.len());
    for (r, &k) in keep.iter().enumerate() {
        for c in 0..dim {
            facets[(r, c)] = p.facets[(k, c)];
        }
        offsets[r] = p.offsets[k];
    }
    let body_verts = enumerate_body_vertices(&facets, &offsets)?;
    Ok(VertexHull {
        vertices: body_verts.iter().map(|v| pose.to_world(v)).collect(),
    })
}

/// Closest points between two vertex hulls: minimize ½‖p_j − p_i‖² over the
/// Minkowski difference, whose atoms are vertex pairs, so the linear support
/// oracle separates into an argmax over one hull and an argmin over the
/// other. Min-norm-point active-set iteration: keep a corral of atoms, solve
/// the affine least-norm subproblem on it exactly, and when the solution
/// leaves the simplex step to the boundary and drop the atom that hit zero.
/// The exact subproblem solve is what keeps near-tied supports (almost
/// parallel faces) from stalling the iteration.
pub fn closest_points(
    h_i: &VertexHull,
    h_j: &VertexHull,
) -> Result<(f64, DVector<f64>, DVector<f64>), OracleError> {
    assert!(!h_i.vertices.is_empty() && !h_j.vertices.is_empty());
    let dim = h_i.vertices[0].nrows();
    let atom = |ia: usize, ja: usize| &h_j.vertices[ja] - &h_i.vertices[ia];
    let finish = |corral: &[(usize, usize)], weights: &[f64]| {
        let mut p_i = DVector::zeros(dim);
        let mut p_j = DVector::zeros(dim);
        for (&(ia, ja), &wt) in corral.iter().zip(weights) {
            p_i += &h_i.vertices[ia] * wt;
            p_j += &h_j.vertices[ja] * wt;
        }
        let d = (&p_j - &p_i).norm();
        (d, p_i, p_j)
    };
    let mut corral: Vec<(usize, usize)> = vec![(0, 0)];
    let mut weights: Vec<f64> = vec![1.0];
    let mut x = atom(0, 0);
    for _ in 0..1000 {
        // Support pair most aligned against the current difference point.
        let ia = (0..h_i.vertices.len())
            .max_by(|&a, &b| {
                x.dot(&h_i.vertices[a])
                    .partial_cmp(&x.dot(&h_i.vertices[b]))
                    .unwrap()
            })
            .unwrap();
        let ja = (0..h_j.vertices.len())
            .min_by(|&a, &b| {
                x.dot(&h_j.vertices[a])
                    .partial_cmp(&x.dot(&h_j.vertices[b]))
                    .unwrap()
            })
            .unwrap();
        let gap = x.dot(&x) - x.dot(&atom(ia, ja));
        // x is already the least-norm point of the corral's affine hull, so
        // an atom the corral contains cannot improve it further.
        if gap <= 1e-12 * x.dot(&x).max(1.0) || corral.contains(&(ia, ja)) {
            let (d, p_i, p_j) = finish(&corral, &weights);
            return Ok((d, p_i, p_j));
        }
        corral.push((ia, ja));
        weights.push(0.0);
        loop {
            let atoms: Vec<DVector<f64>> =
                corral.iter().map(|&(a, b)| atom(a, b)).collect();
            let m = atoms.len();
            // Affine least-norm weights, parametrized around the first atom:
            // x = a₀ + Dz with D = [a_k − a₀], solved as least squares so the
            // conditioning is ‖D‖/σ_min rather than its square. Errors along
            // a near-null direction of D are damped by the same σ when mapped
            // back to x, so x stays accurate even for near-duplicate atoms.
            let lam: Vec<f64> = if m == 1 {
                vec![1.0]
            } else {
                let mut diff = DMatrix::zeros(dim, m - 1);
                for k in 1..m {
                    diff.set_column(k - 1, &(&atoms[k] - &atoms[0]));
                }
                let svd = diff.svd(true, true);
                let cutoff = 1e-14 * svd.singular_values.max().max(1e-300);
                let z = match svd.solve(&(-&atoms[0]), cutoff) {
                    Ok(z) => z,
                    Err(_) => {
                        let (d, p_i, p_j) = finish(&corral, &weights);
                        return Ok((d, p_i, p_j));
                    }
                };
                let mut lam = Vec::with_capacity(m);
                lam.push(1.0 - z.sum());
                for k in 0..m - 1 {
                    lam.push(z[k]);
                }
                lam
            };
            if lam.iter().all(|&l| l > 0.0) {
                weights = lam;
                x = DVector::zeros(dim);
                for (a, &wt) in atoms.iter().zip(&weights) {
                    x += a * wt;
                }
                break;
            }
            // Step toward the affine solution until the first weight hits
            // zero, then drop that atom and re-solve on the smaller corral.
            let mut theta = f64::INFINITY;
            let mut drop = usize::MAX;
            for k in 0..m {
                if lam[k] <= 0.0 && weights[k] - lam[k] > 0.0 {
                    let t = weights[k] / (weights[k] - lam[k]);
                    if t < theta {
                        theta = t;
                        drop = k;
                    }
                }
            }
            if drop == usize::MAX || theta <= 0.0 {
                // The freshly added atom came back non-positive: numerically
                // nothing left to move.
                let (d, p_i, p_j) = finish(&corral, &weights);
                return Ok((d, p_i, p_j));
            }
            for k in 0..m {
                weights[k] = (1.0 - theta) * weights[k] + theta * lam[k];
            }
            corral.remove(drop);
            weights.remove(drop);
            let mut k = 0;
            while k < corral.len() {
                if weights[k] <= 1e-12 {
                    corral.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            if corral.is_empty() {
                corral.push((ia, ja));
                weights.push(1.0);
            }
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
    }
    Err(OracleError::MaxIterations)
}

/// Evenly spread unit directions: uniform angles in 2D, Fibonacci sphere in 3D.
pub fn direction_grid(dim: usize, n: usize) -> Vec<DVector<f64>> {
    match dim {
        2 => (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                DVector::from_column_slice(&[t.cos(), t.sin()])
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / (n as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * k as f64;
                    DVector::from_column_slice(&[r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
    }
}

/// Walk from `origin` along `dir` (unit) until g crosses zero; bisection to
/// 1e-6. Uses only [`eval_g`].
fn boundary_ray(
    body: &SmoothBody,
    pose: &Pose,
    origin: &DVector<f64>,
    dir: &DVector<f64>,
    t_max: f64,
) -> Result<DVector<f64>, OracleError> {
    debug_assert!(eval_g(body, origin, pose) < 0.0, "ray origin must be interior");
    let mut hi = t_max.min(0.5);
    while eval_g(body, &(origin + dir * hi), pose) < 0.0 {
        hi *= 2.0;
        if hi > t_max {
            return Err(OracleError::NoContactInRange(t_max));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if eval_g(body, &(origin + dir * mid), pose) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(origin + dir * (0.5 * (lo + hi)))
}

fn boundary_cloud(
    body: &SmoothBody,
    pose: &Pose,
    dirs: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>, OracleError> {
    let center = pose.to_world(&body.interior_center_body());
    let t_max = body.bounding_radius_body() * 4.0 + 8.0;
    dirs.par_iter()
        .map(|d| boundary_ray(body, pose, &center, d, t_max))
        .collect()
}

/// Directions inside the spherical cap of angular radius `radius` around
/// `axis` (unit), spiral-spread, axis included. 2D: a fan of angles.
fn cap_directions(axis: &DVector<f64>, radius: f64, n: usize) -> Vec<DVector<f64>> {
    let dim = axis.nrows();
    if dim == 2 {
        let base = axis[1].atan2(axis[0]);
        let mut out: Vec<DVector<f64>> = (0..n)
            .map(|k| {
                let t = base + radius * (2.0 * (k as f64 + 0.5) / (n as f64) - 1.0);
                DVector::from_column_slice(&[t.cos(), t.sin()])
            })
            .collect();
        out.push(axis.clone());
        return out;
    }
    // Tangent-plane basis.
    let helper = if axis[0].abs() < 0.9 {
        DVector::from_column_slice(&[1.0, 0.0, 0.0])
    } else {
        DVector::from_column_slice(&[0.0, 1.0, 0.0])
    };
    let e1 = {
        let v = &helper - axis * axis.dot(&helper);
        let n = v.norm();
        v / n
    };
    let e2 = DVector::from_column_slice(&[
        axis[1] * e1[2] - axis[2] * e1[1],
        axis[2] * e1[0] - axis[0] * e1[2],
        axis[0] * e1[1] - axis[1] * e1[0],
    ]);
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut out: Vec<DVector<f64>> = (0..n)
        .map(|k| {
            // sqrt radial profile spreads points area-uniformly over the cap.
            let alpha = radius * ((k as f64 + 0.5) / (n as f64)).sqrt();
            let t = golden * k as f64;
            axis * alpha.cos() + (&e1 * t.cos() + &e2 * t.sin()) * alpha.sin()
        })
        .collect();
    out.push(axis.clone());
    out
}

/// Support values of a point cloud along every direction: max of u·p per
/// direction when maximizing, min otherwise. Chunked over directions so the
/// clouds stream through cache; parallel across direction chunks.
fn sweep_supports(dirs: &[DVector<f64>], cloud: &[DVector<f64>], maximize: bool) -> Vec<f64> {
    let dim = dirs[0].nrows();
    let flat = |v: &DVector<f64>| {
        let mut a = [0.0f64; 3];
        for d in 0..dim {
            a[d] = v[d];
        }
        a
    };
    let pts: Vec<[f64; 3]> = cloud.iter().map(flat).collect();
    let chunks: Vec<Vec<f64>> = dirs
        .par_chunks(512)
        .map(|chunk| {
            let us: Vec<[f64; 3]> = chunk.iter().map(flat).collect();
            let init = if maximize {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            let mut acc = vec![init; us.len()];
            for p in &pts {
                for (k, u) in us.iter().enumerate() {
                    let s = u[0] * p[0] + u[1] * p[1] + u[2] * p[2];
                    acc[k] = if maximize { acc[k].max(s) } else { acc[k].min(s) };
                }
            }
            acc
        })
        .collect();
    chunks.concat()
}

/// Signed minimum offset to touch by direction sweep.
///
/// For a unit direction u, the support gap
/// `s(u) = min_{q in body_j} u·q − max_{p in body_i} u·p`
/// is the signed clearance along u; its maximum over the sphere is the MOTT
/// offset (positive separation distance, or minus the penetration depth),
/// attained at the offset direction. Supports are evaluated on boundary
/// clouds cast from the interior centers via bisected rays, then the best
/// direction is refined on shrinking caps with locally densified clouds.
/// Resolution-limited: accuracy is grid spacing squared plus the 1e-6 ray
/// tolerance.
pub fn brute_force_mott(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    n_dirs: usize,
) -> Result<(f64, DVector<f64>), OracleError> {
    let dim = body_i.dim();
    assert_eq!(dim, body_j.dim());
    let dirs = direction_grid(dim, n_dirs);
    let mut cloud_i = boundary_cloud(body_i, pose_i, &dirs)?;
    let mut cloud_j = boundary_cloud(body_j, pose_j, &dirs)?;

    let hi = sweep_supports(&dirs, &cloud_i, true);
    let lo = sweep_supports(&dirs, &cloud_j, false);
    let coarse_k = (0..dirs.len())
        .max_by(|&a, &b| (lo[a] - hi[a]).partial_cmp(&(lo[b] - hi[b])).unwrap())
        .unwrap();
    let mut best = lo[coarse_k] - hi[coarse_k];
    let mut best_dir = dirs[coarse_k].clone();

    let spacing = match dim {
        2 => 2.0 * std::f64::consts::PI / n_dirs as f64,
        _ => (4.0 * std::f64::consts::PI / n_dirs as f64).sqrt(),
    };
    let center_i = pose_i.to_world(&body_i.interior_center_body());
    let center_j = pose_j.to_world(&body_j.interior_center_body());
    // The support witnesses move continuously with the direction, so each
    // round casts fresh rays around the current witnesses' positions,
    // densifying the clouds where the supports are decided, and re-sweeps a
    // shrinking cap of directions. Cloud-based gaps overestimate the true
    // support gap (clouds are subsets), so values drift down toward the
    // exact offset as the clouds grow; the last round's value is the best
    // estimate and is always kept.
    let ray_caps = [0.9, 0.35, 0.15, 0.06, 0.025, 0.01];
    let mut sweep_radius = 3.0 * spacing;
    for &ray_radius in &ray_caps {
        let witness_dir = |cloud: &[DVector<f64>], center: &DVector<f64>, sign: f64| {
            let u = &best_dir;
            let k = (0..cloud.len())
                .max_by(|&a, &b| {
                    (sign * u.dot(&cloud[a]))
                        .partial_cmp(&(sign * u.dot(&cloud[b])))
                        .unwrap()
                })
                .unwrap();
            let v = &cloud[k] - center;
            let n = v.norm();
            if n < 1e-12 {
                u * sign
            } else {
                v / n
            }
        };
        let wd_i = witness_dir(&cloud_i, &center_i, 1.0);
        let wd_j = witness_dir(&cloud_j, &center_j, -1.0);
        cloud_i.extend(boundary_cloud(
            body_i,
            pose_i,
            &cap_directions(&wd_i, ray_radius, 900),
        )?);
        cloud_j.extend(boundary_cloud(
            body_j,
            pose_j,
            &cap_directions(&wd_j, ray_radius, 900),
        )?);
        // Supports for directions within the sweep cap are decided by points
        // scoring within 2·chord·radius of the cap center's support; prune
        // the rest before the dense sub-sweep.
        let margin_i = 2.0 * sweep_radius * body_i.bounding_radius_body() + 1e-9;
        let margin_j = 2.0 * sweep_radius * body_j.bounding_radius_body() + 1e-9;
        let top_i = cloud_i
            .iter()
            .map(|p| best_dir.dot(p))
            .fold(f64::NEG_INFINITY, f64::max);
        let bot_j = cloud_j
            .iter()
            .map(|q| best_dir.dot(q))
            .fold(f64::INFINITY, f64::min);
        let sub_i: Vec<DVector<f64>> = cloud_i
            .iter()
            .filter(|p| best_dir.dot(p) >= top_i - margin_i)
            .cloned()
            .collect();
        let sub_j: Vec<DVector<f64>> = cloud_j
            .iter()
            .filter(|q| best_dir.dot(q) <= bot_j + margin_j)
            .cloned()
            .collect();
        let sweep = cap_directions(&best_dir, sweep_radius, 700);
        let round_best = sweep
            .par_iter()
            .enumerate()
            .map(|(k, u)| {
                let hi = sub_i
                    .iter()
                    .map(|p| u.dot(p))
                    .fold(f64::NEG_INFINITY, f64::max);
                let lo = sub_j.iter().map(|q| u.dot(q)).fold(f64::INFINITY, f64::min);
                (lo - hi, k)
            })
            .reduce(
                || (f64::NEG_INFINITY, 0),
                |a, b| if a.0 >= b.0 { a } else { b },
            );
        best = round_best.0;
        best_dir = sweep[round_best.1].clone();
        sweep_radius *= 0.45;
    }
    Ok((best, best_dir))
}

/// Relative offset error in percent, positive when the solver overestimates.
pub fn percent_error(phi_solution: f64, phi_accurate: f64) -> Result<f64, OracleError> {
    if phi_accurate <= 1e-9 {
        return Err(OracleError::NonPositiveReference(phi_accurate));
    }
    Ok(100.0 * (phi_solution - phi_accurate) / phi_accurate)
}

#[derive(Debug, Clone)]
pub enum Penetration {
    Separated,
    Overlapping { witness: DVector<f64> },
}

/// One-sided overlap check: rejection-samples body_i's interior and reports
/// the first sample that also lies inside body_j. A `Separated` verdict can
/// miss thin overlaps; it is probabilistic by design. Deterministic for a
/// given `n_samples` (internally seeded).
pub fn sampled_penetration(
    body_i: &SmoothBody,
    pose_i: &Pose,
    body_j: &SmoothBody,
    pose_j: &Pose,
    n_samples: usize,
) -> Penetration {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15 ^ n_samples as u64);
    let bbox = body_i.body_bbox();
    let dim = body_i.dim();
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < n_samples && attempts < 200 * n_samples {
        attempts += 1;
        let x_b = DVector::from_fn(dim, |d, _| rng.random_range(bbox[d].0..bbox[d].1));
        if body_i.g_body(&x_b) <= 0.0 {
            accepted += 1;
            let x_w = pose_i.to_world(&x_b);
            if eval_g(body_j, &x_w, pose_j) <= 0.0 {
                return Penetration::Overlapping { witness: x_w };
            }
        }
    }
    Penetration::Separated
}

/// Exact hull-to-hull distance by exhaustive feature search, for checking
/// the iterative closest-points routine. Covers vertex pairs, vertices
/// against triangulated faces (both ways), and edge pairs, which together
/// attain the minimum for every configuration of two disjoint convex
/// polytopes.
#[cfg(test)]
mod feature_search {
    use super::*;

    pub fn hull_distance(
        p_i: &Polytope,
        pose_i: &Pose,
        p_j: &Polytope,
        pose_j: &Pose,
    ) -> Result<f64, OracleError> {
        let fi = features(p_i, pose_i)?;
        let fj = features(p_j, pose_j)?;
        let mut best = f64::INFINITY;
        for v in &fi.verts {
            for w in &fj.verts {
                best = best.min((v - w).norm());
            }
        }
        for v in &fi.verts {
            for (a, b, c) in fj.tris() {
                best = best.min((v - closest_on_triangle(v, a, b, c)).norm());
            }
        }
        for w in &fj.verts {
            for (a, b, c) in fi.tris() {
                best = best.min((w - closest_on_triangle(w, a, b, c)).norm());
            }
        }
        for (p1, q1) in fi.segs() {
            for (p2, q2) in fj.segs() {
                let (c1, c2) = closest_segment_segment(p1, q1, p2, q2);
                best = best.min((c1 - c2).norm());
            }
        }
        Ok(best)
    }

    struct Features {
        verts: Vec<DVector<f64>>,
        edges: Vec<(usize, usize)>,
        faces: Vec<Vec<usize>>,
    }

    impl Features {
        fn segs(&self) -> impl Iterator<Item = (&DVector<f64>, &DVector<f64>)> {
            self.edges.iter().map(|&(a, b)| (&self.verts[a], &self.verts[b]))
        }

        fn tris(&self) -> Vec<(&DVector<f64>, &DVector<f64>, &DVector<f64>)> {
            let mut out = Vec::new();
            for face in &self.faces {
                for k in 1..face.len() - 1 {
                    out.push((
                        &self.verts[face[0]],
                        &self.verts[face[k]],
                        &self.verts[face[k + 1]],
                    ));
                }
            }
            out
        }
    }

    fn features(p: &Polytope, pose: &Pose) -> Result<Features, OracleError> {
        let body = enumerate_vertices(p, &Pose::identity(p.dim()))?.vertices;
        let dim = p.dim();
        // Facet activity decides incidence; computed in body frame, measured
        // in world frame (rigid maps preserve both).
        let active: Vec<Vec<usize>> = (0..p.n_facets())
            .map(|k| {
                (0..body.len())
                    .filter(|&v| {
                        (p.facets.row(k).transpose().dot(&body[v]) - p.offsets[k]).abs() <= 1e-7
                    })
                    .collect()
            })
            .collect();
        let mut edges = Vec::new();
        if dim == 2 {
            for verts in &active {
                if verts.len() == 2 {
                    edges.push((verts[0], verts[1]));
                }
            }
        } else {
            for a in 0..body.len() {
                for b in a + 1..body.len() {
                    let shared = active
                        .iter()
                        .filter(|f| f.contains(&a) && f.contains(&b))
                        .count();
                    if shared >= 2 {
                        edges.push((a, b));
                    }
                }
            }
        }
        let mut faces = Vec::new();
        if dim == 3 {
            for (k, verts) in active.iter().enumerate() {
                if verts.len() < 3 {
                    continue;
                }
                faces.push(order_face(&p.facets.row(k).transpose(), &body, verts));
            }
        }
        Ok(Features {
            verts: body.iter().map(|v| pose.to_world(v)).collect(),
            edges,
            faces,
        })
    }

    /// Sort a face's vertices by angle around the face centroid in the
    /// facet's plane so fan triangulation is valid (convex face).
    fn order_face(normal: &DVector<f64>, verts: &[DVector<f64>], idx: &[usize]) -> Vec<usize> {
        let n = normal / normal.norm();
        let helper = if n[0].abs() < 0.9 {
            DVector::from_column_slice(&[1.0, 0.0, 0.0])
        } else {
            DVector::from_column_slice(&[0.0, 1.0, 0.0])
        };
        let e1 = {
            let v = &helper - &n * n.dot(&helper);
            let l = v.norm();
            v / l
        };
        let e2 = DVector::from_column_slice(&[
            n[1] * e1[2] - n[2] * e1[1],
            n[2] * e1[0] - n[0] * e1[2],
            n[0] * e1[1] - n[1] * e1[0],
        ]);
        let centroid = idx.iter().fold(DVector::zeros(3), |acc, &v| acc + &verts[v])
            / idx.len() as f64;
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            let ta = {
                let d = &verts[a] - &centroid;
                e2.dot(&d).atan2(e1.dot(&d))
            };
            let tb = {
                let d = &verts[b] - &centroid;
                e2.dot(&d).atan2(e1.dot(&d))
            };
            ta.partial_cmp(&tb).unwrap()
        });
        order
    }

    fn closest_on_triangle(
        p: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> DVector<f64> {
        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return a.clone();
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return b.clone();
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return a + &ab * (d1 / (d1 - d3));
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return c.clone();
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return a + &ac * (d2 / (d2 - d6));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
        }
        let denom = 1.0 / (va + vb + vc);
        a + ab * (vb * denom) + ac * (vc * denom)
    }

    fn closest_segment_segment(
        p1: &DVector<f64>,
        q1: &DVector<f64>,
        p2: &DVector<f64>,
        q2: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let d1 = q1 - p1;
        let d2 = q2 - p2;
        let r = p1 - p2;
        let a = d1.dot(&d1);
        let e = d2.dot(&d2);
        let f = d2.dot(&r);
        let eps = 1e-14;
        let (s, t);
        if a <= eps && e <= eps {
            return (p1.clone(), p2.clone());
        }
        if a <= eps {
            s = 0.0;
            t = (f / e).clamp(0.0, 1.0);
        } else {
            let c = d1.dot(&r);
            if e <= eps {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else {
                let b = d1.dot(&d2);
                let denom = a * e - b * b;
                let mut s_ = if denom.abs() > eps {
                    ((b * f - c * e) / denom).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let mut t_ = (b * s_ + f) / e;
                if t_ < 0.0 {
                    t_ = 0.0;
                    s_ = (-c / a).clamp(0.0, 1.0);
                } else if t_ > 1.0 {
                    t_ = 1.0;
                    s_ = ((b - c) / a).clamp(0.0, 1.0);
                }
                s = s_;
                t = t_;
            }
        }
        (p1 + d1 * s, p2 + d2 * t)
    }
}
