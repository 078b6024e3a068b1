//! Scene files and the artifacts built from them: the approximation
//! sidecar, trajectory CSV, validation reports, and SVG renderings.
//!
//! A scene is a JSON document listing rigid bodies (polytopes, spheres,
//! ellipsoids) with poses, which pairs must stay separated, and the
//! trajectory horizon and limits. Parsing and serialization round-trip
//! field for field.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bodies::{AnalyticBody, BodyError, Polytope, SmoothBody, SuperquadBody};
use crate::mott::{solve_static_mott, MottError, MottOptions};
use crate::oracle::{closest_points, sampled_penetration, OracleError, Penetration};
use crate::pose::{rot_dim, Pose};
use crate::trajopt::{TrajBody, TrajOptError, TrajOptSpec, Trajectory};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scene parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("body \"{0}\" has no current approximation; run the approximate command first")]
    ApproximationMissing(String),
    #[error("trajectory file does not match the scene: {0}")]
    Schema(String),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    TrajOpt(#[from] TrajOptError),
    #[error(transparent)]
    Mott(#[from] MottError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Pose as written in scene files: translation plus rotation vector
/// (one angle in 2D, an axis-angle vector in 3D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub translation: Vec<f64>,
    pub rotation: Vec<f64>,
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        Pose::new(
            DVector::from_column_slice(&self.translation),
            DVector::from_column_slice(&self.rotation),
        )
    }

    pub fn from_pose(p: &Pose) -> Self {
        let v = p.as_vector();
        let s = v.as_slice();
        Self {
            translation: s[..p.dim()].to_vec(),
            rotation: s[p.dim()..].to_vec(),
        }
    }
}

/// Shape description; `kind` selects the variant in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometrySpec {
    Polytope {
        /// Outward facet normals, one row per facet.
        facets: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        /// Smoothing exponent for the inner approximation.
        rho: u32,
    },
    Sphere {
        radius: f64,
    },
    Ellipsoid {
        /// Symmetric positive definite shape matrix Q of x'Qx <= 1.
        shape: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub name: String,
    #[serde(flatten)]
    pub geometry: GeometrySpec,
    pub mobile: bool,
    pub initial_pose: PoseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_pose: Option<PoseSpec>,
}

/// Either the literal "all" or an explicit list of name pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairsSpec {
    Keyword(String),
    Explicit(Vec<[String; 2]>),
}

/// Scalar limit applied to every coordinate, or one limit per coordinate
/// of the stacked mobile-pose vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VMaxSpec {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_tol_feas")]
    pub tol_feas: f64,
    #[serde(default = "default_tol_opt")]
    pub tol_opt: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol_feas() -> f64 {
    1e-6
}
fn default_tol_opt() -> f64 {
    1e-5
}
fn default_max_iter() -> usize {
    50
}
fn default_true() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol_feas: default_tol_feas(),
            tol_opt: default_tol_opt(),
            max_iter: default_max_iter(),
        }
    }
}

impl SolverSpec {
    pub fn to_options(&self) -> crate::nlp::NlpOptions {
        crate::nlp::NlpOptions {
            tol_feas: self.tol_feas,
            tol_opt: self.tol_opt,
            max_outer: self.max_iter,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub dimension: usize,
    pub bodies: Vec<BodySpec>,
    pub pairs: PairsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<VMaxSpec>,
    /// Pin the final knot to the goal poses instead of only pulling
    /// toward them.
    #[serde(default = "default_true")]
    pub fix_final: bool,
    /// Quadratic goal weight over the stacked mobile poses; identity when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_weight: Option<Vec<Vec<f64>>>,
    /// Add the center-side uniqueness inequality per knot and pair.
    #[serde(default)]
    pub uniqueness_rows: bool,
    /// Clearance floor on every pair at every knot. Knots are discrete;
    /// keeping this above the worst inter-knot chord sagitta keeps the
    /// interpolated motion clear of the obstacles too.
    #[serde(default)]
    pub clearance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, SceneError> {
    if rows.is_empty() {
        return Err(SceneError::Invalid(format!("{what} has no rows")));
    }
    let ncols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(SceneError::Invalid(format!(
                "{what} row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serialization");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let dim = self.dimension;
        if !(dim == 2 || dim == 3) {
            return Err(SceneError::Invalid(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if self.bodies.is_empty() {
            return Err(SceneError::Invalid("scene has no bodies".into()));
        }
        let mut seen = BTreeSet::new();
        for b in &self.bodies {
            if !seen.insert(b.name.as_str()) {
                return Err(SceneError::Invalid(format!(
                    "duplicate body name \"{}\"",
                    b.name
                )));
            }
            let check_pose = |p: &PoseSpec, which: &str| -> Result<(), SceneError> {
                if p.translation.len() != dim || p.rotation.len() != rot_dim(dim) {
                    return Err(SceneError::Invalid(format!(
                        "body \"{}\" {which} pose needs {dim} translation and {} rotation entries",
                        b.name,
                        rot_dim(dim)
                    )));
                }
                Ok(())
            };
            check_pose(&b.initial_pose, "initial")?;
            if let Some(g) = &b.goal_pose {
                check_pose(g, "goal")?;
            }
            match &b.geometry {
                GeometrySpec::Polytope {
                    facets,
                    offsets,
                    rho,
                } => {
                    let m = matrix_from_rows(facets, &format!("body \"{}\" facets", b.name))?;
                    if m.ncols() != dim {
                        return Err(SceneError::Invalid(format!(
                            "body \"{}\" facet rows have {} entries, expected {dim}",
                            b.name,
                            m.ncols()
                        )));
                    }
                    if offsets.len() != m.nrows() {
                        return Err(SceneError::Invalid(format!(
                            "body \"{}\" has {} facets but {} offsets",
                            b.name,
                            m.nrows(),
                            offsets.len()
                        )));
                    }
                    if *rho < 1 {
                        return Err(SceneError::Invalid(format!(
                            "body \"{}\" rho must be at least 1",
                            b.name
                        )));
                    }
                }
                GeometrySpec::Sphere { radius } => {
                    if !(*radius > 0.0) {
                        return Err(SceneError::Invalid(format!(
                            "body \"{}\" sphere radius must be positive",
                            b.name
                        )));
                    }
                }
                GeometrySpec::Ellipsoid { shape } => {
                    let m = matrix_from_rows(shape, &format!("body \"{}\" shape", b.name))?;
                    if m.nrows() != dim || m.ncols() != dim {
                        return Err(SceneError::Invalid(format!(
                            "body \"{}\" shape matrix must be {dim}x{dim}",
                            b.name
                        )));
                    }
                }
            }
        }
        // Resolving also checks pair names.
        self.resolved_pairs()?;
        if let Some(w) = &self.goal_weight {
            matrix_from_rows(w, "goal_weight")?;
        }
        Ok(())
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    /// Separation pairs as body indices. The "all" keyword expands to
    /// every unordered pair with at least one mobile body; pairs of two
    /// static bodies cannot move and are skipped.
    pub fn resolved_pairs(&self) -> Result<Vec<(usize, usize)>, SceneError> {
        match &self.pairs {
            PairsSpec::Keyword(k) if k == "all" => {
                let mut out = Vec::new();
                for i in 0..self.bodies.len() {
                    for j in i + 1..self.bodies.len() {
                        if self.bodies[i].mobile || self.bodies[j].mobile {
                            out.push((i, j));
                        }
                    }
                }
                Ok(out)
            }
            PairsSpec::Keyword(k) => Err(SceneError::Invalid(format!(
                "pairs must be \"all\" or an explicit list, got \"{k}\""
            ))),
            PairsSpec::Explicit(list) => {
                let mut out = Vec::new();
                for [a, b] in list {
                    let ia = self
                        .body_index(a)
                        .ok_or_else(|| SceneError::Invalid(format!("unknown body \"{a}\"")))?;
                    let ib = self
                        .body_index(b)
                        .ok_or_else(|| SceneError::Invalid(format!("unknown body \"{b}\"")))?;
                    if ia == ib {
                        return Err(SceneError::Invalid(format!(
                            "pair [\"{a}\", \"{b}\"] names the same body twice"
                        )));
                    }
                    out.push((ia, ib));
                }
                Ok(out)
            }
        }
    }

    /// The source polytope of body `k`, when it is one.
    pub fn polytope(&self, k: usize) -> Option<Result<Polytope, SceneError>> {
        match &self.bodies[k].geometry {
            GeometrySpec::Polytope {
                facets, offsets, ..
            } => Some(
                matrix_from_rows(facets, "facets")
                    .and_then(|m| {
                        Polytope::new(m, DVector::from_column_slice(offsets))
                            .map_err(SceneError::from)
                    }),
            ),
            _ => None,
        }
    }

    /// Smooth solver bodies in scene order; polytopes come from the
    /// sidecar and fail with `ApproximationMissing` when the sidecar
    /// lacks a current entry.
    pub fn smooth_bodies(&self, approx: &ApproxFile) -> Result<Vec<SmoothBody>, SceneError> {
        self.bodies
            .iter()
            .map(|b| match &b.geometry {
                GeometrySpec::Polytope {
                    facets,
                    offsets,
                    rho,
                } => {
                    let m = matrix_from_rows(facets, "facets")?;
                    let o = DVector::from_column_slice(offsets);
                    let hash = geometry_hash(&m, &o);
                    let entry = approx
                        .bodies
                        .iter()
                        .find(|e| e.name == b.name && e.geometry_hash == hash)
                        .ok_or_else(|| SceneError::ApproximationMissing(b.name.clone()))?;
                    let sq = SuperquadBody::from_parts(
                        m,
                        o,
                        DVector::from_column_slice(&entry.ybar),
                        *rho,
                        DVector::from_column_slice(&entry.center),
                    )?;
                    Ok(SmoothBody::Superquad(sq))
                }
                GeometrySpec::Sphere { radius } => Ok(SmoothBody::Analytic(
                    AnalyticBody::sphere(self.dimension, *radius)?,
                )),
                GeometrySpec::Ellipsoid { shape } => {
                    let m = matrix_from_rows(shape, "shape")?;
                    Ok(SmoothBody::Analytic(AnalyticBody::ellipsoid(m)?))
                }
            })
            .collect()
    }

    /// Assemble the trajectory problem. Needs `horizon`, goal poses on
    /// every mobile body, and `v_max` when anything moves.
    pub fn to_trajopt_spec(&self, approx: &ApproxFile) -> Result<TrajOptSpec, SceneError> {
        let smooth = self.smooth_bodies(approx)?;
        let dim = self.dimension;
        let mut bodies = Vec::with_capacity(self.bodies.len());
        for (k, (b, sb)) in self.bodies.iter().zip(smooth).enumerate() {
            let hull = match self.polytope(k) {
                Some(p) => Some(
                    crate::oracle::enumerate_vertices(&p?, &Pose::identity(dim))?.vertices,
                ),
                None => None,
            };
            bodies.push(TrajBody {
                body: sb,
                pose0: b.initial_pose.to_pose(),
                mobile: b.mobile,
                hull,
            });
        }
        let mut q_init = Vec::new();
        let mut q_goal = Vec::new();
        for b in &self.bodies {
            if !b.mobile {
                continue;
            }
            q_init.extend_from_slice(b.initial_pose.to_pose().as_vector().as_slice());
            let goal = b.goal_pose.as_ref().ok_or_else(|| {
                SceneError::Invalid(format!("mobile body \"{}\" needs a goal_pose", b.name))
            })?;
            q_goal.extend_from_slice(goal.to_pose().as_vector().as_slice());
        }
        let q_dim = q_init.len();
        let horizon = self
            .horizon
            .ok_or_else(|| SceneError::Invalid("scene needs a horizon".into()))?;
        let v_max = match (&self.v_max, q_dim) {
            (_, 0) => DVector::zeros(0),
            (Some(VMaxSpec::Uniform(s)), _) => DVector::from_element(q_dim, *s),
            (Some(VMaxSpec::PerCoordinate(v)), _) => {
                if v.len() != q_dim {
                    return Err(SceneError::Invalid(format!(
                        "v_max has {} entries but the mobile poses stack to {q_dim}",
                        v.len()
                    )));
                }
                DVector::from_column_slice(v)
            }
            (None, _) => {
                return Err(SceneError::Invalid(
                    "scene with mobile bodies needs v_max".into(),
                ))
            }
        };
        let goal_weight = match &self.goal_weight {
            None => DMatrix::identity(q_dim, q_dim),
            Some(rows) => {
                let m = matrix_from_rows(rows, "goal_weight")?;
                if m.nrows() != q_dim || m.ncols() != q_dim {
                    return Err(SceneError::Invalid(format!(
                        "goal_weight must be {q_dim}x{q_dim}"
                    )));
                }
                m
            }
        };
        let spec = TrajOptSpec {
            bodies,
            pairs: self.resolved_pairs()?,
            horizon,
            q_init: DVector::from_column_slice(&q_init),
            q_goal: DVector::from_column_slice(&q_goal),
            v_max,
            goal_weight,
            fix_final: self.fix_final,
            uniqueness_rows: self.uniqueness_rows,
            phi_min: self.clearance,
        };
        spec.validate()?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// Approximation sidecar

/// Precomputed smoothing data for one polytope body, keyed by name and a
/// content hash of the geometry so edits invalidate stale entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxEntry {
    pub name: String,
    pub geometry_hash: String,
    /// Per-facet bound on `facets . x - offsets` over the polytope.
    pub ybar: Vec<f64>,
    /// Chebyshev center of the polytope.
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApproxFile {
    pub bodies: Vec<ApproxEntry>,
}

impl ApproxFile {
    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sidecar serialization");
        s.push('\n');
        s
    }
}

/// `scene.json` keeps its approximations in `scene.approx.json`.
pub fn sidecar_path(scene_path: &Path) -> PathBuf {
    let stem = scene_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    scene_path.with_file_name(format!("{stem}.approx.json"))
}

/// FNV-1a over the exact bit patterns, row-major facets then offsets.
/// Stable across runs and platforms, unlike the default hasher.
pub fn geometry_hash(facets: &DMatrix<f64>, offsets: &DVector<f64>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: f64| {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for i in 0..facets.nrows() {
        for j in 0..facets.ncols() {
            eat(facets[(i, j)]);
        }
    }
    for k in 0..offsets.nrows() {
        eat(offsets[k]);
    }
    format!("{h:016x}")
}

/// Run the bound and center programs for every polytope body and collect
/// the sidecar. Spheres and ellipsoids need no precomputation.
pub fn approximate_scene(scene: &Scene) -> Result<ApproxFile, SceneError> {
    let mut out = ApproxFile::default();
    for (k, b) in scene.bodies.iter().enumerate() {
        let Some(p) = scene.polytope(k) else { continue };
        let p = p?;
        let GeometrySpec::Polytope { rho, .. } = b.geometry else {
            unreachable!()
        };
        let sq = SuperquadBody::from_polytope(&p, rho)?;
        out.bodies.push(ApproxEntry {
            name: b.name.clone(),
            geometry_hash: geometry_hash(&p.facets, &p.offsets),
            ybar: sq.ybar.as_slice().to_vec(),
            center: sq.center.as_slice().to_vec(),
        });
    }
    Ok(out)
}

/// Interior-sampling check of one smoothed body against its source
/// inequalities.
#[derive(Debug, Clone, Copy)]
pub struct ContainmentStats {
    /// Interior points actually drawn (can fall short of the request when
    /// the body is thin relative to its box).
    pub accepted: usize,
    /// max over samples of max_k (facets . x - offsets)_k; <= 0 means
    /// every sample satisfied the source polytope exactly.
    pub max_facet_excess: f64,
}

/// Rejection-sample `n` points with g <= 0 from the body's box and
/// measure how far any of them steps outside the source polytope.
pub fn containment_stats(sq: &SuperquadBody, n: usize, seed: u64) -> ContainmentStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sq.source_polytope();
    let bbox = p.bounding_box().to_vec();
    let dim = sq.dim();
    let mut accepted = 0;
    let mut attempts = 0;
    let mut excess = f64::NEG_INFINITY;
    while accepted < n && attempts < 500 * n {
        attempts += 1;
        let x = DVector::from_fn(dim, |d, _| rng.random_range(bbox[d].0..bbox[d].1));
        if sq.g_body(&x) <= 0.0 {
            accepted += 1;
            let slack = &p.facets * &x - &p.offsets;
            excess = excess.max(slack.max());
        }
    }
    ContainmentStats {
        accepted,
        max_facet_excess: excess,
    }
}

// ---------------------------------------------------------------------------
// Distance sweep

/// One smoothing-exponent row of a distance sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub rho: u32,
    pub mean_solve_ms: f64,
    pub mean_abs_pct_error: f64,
    pub n_pairs: usize,
    /// Pairs whose contact solve failed at this exponent; excluded from
    /// the means.
    pub n_failed: usize,
}

/// Benchmark static contact solves against exact polytope distances.
///
/// Draws `n_pairs` seeded random cuboid pairs (half-extents in
/// [0.2, 0.6] per axis, random orientations) placed in a [−3.2, 3.2]³
/// volume, resampling placements until the hulls are at least 0.5 apart;
/// at closer range the relative-error metric diverges as the distance
/// goes to zero. For each exponent in `rhos` the contact system is
/// solved on the smoothed bodies and the touch offset scored against the
/// closest-point distance of the source hulls. The smoothing is an inner
/// approximation, so the offset overshoots the hull distance and the
/// error column shrinks as the exponent grows. Facet bounds and centers
/// are computed once per polytope and shared across exponents. Solves
/// run in parallel; pair generation and accumulation are sequential, so
/// the table is deterministic for a given seed apart from the timing
/// column.
pub fn distance_sweep(
    n_pairs: usize,
    rhos: &[u32],
    seed: u64,
) -> Result<Vec<SweepRow>, SceneError> {
    assert!(!rhos.is_empty() && n_pairs > 0);
    struct PairCase {
        polys: [Polytope; 2],
        ybars: [DVector<f64>; 2],
        centers: [DVector<f64>; 2],
        poses: [Pose; 2],
        hull_distance: f64,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(n_pairs);
    while cases.len() < n_pairs {
        let half = |rng: &mut ChaCha8Rng| {
            let he: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..0.6)).collect();
            Polytope::box_at(&he).expect("positive half-extents form a box")
        };
        let place = |rng: &mut ChaCha8Rng| {
            Pose::new(
                DVector::from_fn(3, |_, _| rng.random_range(-3.2..3.2)),
                crate::randgen::random_rotation_vector(3, rng, 3.0),
            )
        };
        let (p_i, p_j) = (half(&mut rng), half(&mut rng));
        let (pose_i, pose_j) = (place(&mut rng), place(&mut rng));
        let h_i = crate::oracle::enumerate_vertices(&p_i, &pose_i)?;
        let h_j = crate::oracle::enumerate_vertices(&p_j, &pose_j)?;
        let (hull_distance, _, _) = closest_points(&h_i, &h_j)?;
        if hull_distance < 0.5 {
            continue;
        }
        let sq_i = SuperquadBody::from_polytope(&p_i, 1)?;
        let sq_j = SuperquadBody::from_polytope(&p_j, 1)?;
        cases.push(PairCase {
            ybars: [sq_i.ybar.clone(), sq_j.ybar.clone()],
            centers: [sq_i.center.clone(), sq_j.center.clone()],
            polys: [p_i, p_j],
            poses: [pose_i, pose_j],
            hull_distance,
        });
    }
    let opts = MottOptions::default();
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let solved: Vec<Option<(f64, f64)>> = cases
            .par_iter()
            .map(|c| {
                let body = |k: usize| {
                    SuperquadBody::from_parts(
                        c.polys[k].facets.clone(),
                        c.polys[k].offsets.clone(),
                        c.ybars[k].clone(),
                        rho,
                        c.centers[k].clone(),
                    )
                    .map(SmoothBody::Superquad)
                };
                let (b_i, b_j) = (body(0).ok()?, body(1).ok()?);
                let t0 = Instant::now();
                let v = solve_static_mott(&b_i, &c.poses[0], &b_j, &c.poses[1], &opts).ok()?;
                let ms = t0.elapsed().as_secs_f64() * 1e3;
                let pct = (v.phi - c.hull_distance).abs() / c.hull_distance * 100.0;
                Some((ms, pct))
            })
            .collect();
        let mut ms_sum = 0.0;
        let mut pct_sum = 0.0;
        let mut n_failed = 0;
        for s in &solved {
            match s {
                Some((ms, pct)) => {
                    ms_sum += ms;
                    pct_sum += pct;
                }
                None => n_failed += 1,
            }
        }
        let n_ok = (n_pairs - n_failed).max(1) as f64;
        rows.push(SweepRow {
            rho,
            mean_solve_ms: ms_sum / n_ok,
            mean_abs_pct_error: pct_sum / n_ok,
            n_pairs,
            n_failed,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Trajectory CSV

/// Column suffixes for one body's pose: translations then rotation
/// coordinates.
pub fn pose_suffixes(dim: usize) -> &'static [&'static str] {
    match dim {
        2 => &["tx", "ty", "rz"],
        _ => &["tx", "ty", "tz", "rx", "ry", "rz"],
    }
}

/// `knot,<body>_tx,...,phi_<a>_<b>,...` with every body in scene order
/// and every resolved pair.
pub fn trajectory_header(scene: &Scene) -> Result<String, SceneError> {
    let mut h = String::from("knot");
    for b in &scene.bodies {
        for s in pose_suffixes(scene.dimension) {
            write!(h, ",{}_{s}", b.name).unwrap();
        }
    }
    for (i, j) in scene.resolved_pairs()? {
        write!(h, ",phi_{}_{}", scene.bodies[i].name, scene.bodies[j].name).unwrap();
    }
    Ok(h)
}

/// One row per knot; floats print in shortest round-trip form, so parsing
/// recovers the exact values.
pub fn write_trajectory_csv(
    scene: &Scene,
    spec: &TrajOptSpec,
    traj: &Trajectory,
) -> Result<String, SceneError> {
    let mut out = trajectory_header(scene)?;
    out.push('\n');
    let n_pairs = spec.pairs.len();
    for (t, knot) in traj.knots.iter().enumerate() {
        let poses = spec.poses_at(knot);
        write!(out, "{t}").unwrap();
        for p in &poses {
            for v in p.as_vector().iter() {
                write!(out, ",{v}").unwrap();
            }
        }
        let blocks = &traj.contacts[t];
        if blocks.len() != n_pairs {
            return Err(SceneError::Invalid(
                "trajectory carries no contact blocks to report".into(),
            ));
        }
        for cv in blocks {
            write!(out, ",{}", cv.phi).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// A trajectory read back from CSV: world poses for every body and the
/// recorded clearances, per knot.
#[derive(Debug, Clone)]
pub struct ParsedTrajectory {
    pub poses: Vec<Vec<Pose>>,
    pub phis: Vec<Vec<f64>>,
}

impl ParsedTrajectory {
    pub fn horizon(&self) -> usize {
        self.poses.len()
    }
}

pub fn parse_trajectory_csv(scene: &Scene, text: &str) -> Result<ParsedTrajectory, SceneError> {
    let expected = trajectory_header(scene)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SceneError::Schema("empty file".into()))?;
    if header.trim_end() != expected {
        return Err(SceneError::Schema(format!(
            "header is \"{header}\" but the scene defines \"{expected}\""
        )));
    }
    let dim = scene.dimension;
    let per_pose = dim + rot_dim(dim);
    let n_pairs = scene.resolved_pairs()?.len();
    let n_cols = 1 + scene.bodies.len() * per_pose + n_pairs;
    let mut poses = Vec::new();
    let mut phis = Vec::new();
    for (t, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(SceneError::Schema(format!(
                "row {t} has {} fields, expected {n_cols}",
                fields.len()
            )));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| SceneError::Schema(format!("row {t} has knot label \"{}\"", fields[0])))?;
        if idx != t {
            return Err(SceneError::Schema(format!(
                "row {t} is labeled knot {idx}"
            )));
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| SceneError::Schema(format!("row {t}: bad number \"{f}\"")))
            })
            .collect::<Result<_, _>>()?;
        let mut row_poses = Vec::with_capacity(scene.bodies.len());
        for b in 0..scene.bodies.len() {
            let q = DVector::from_column_slice(&values[b * per_pose..(b + 1) * per_pose]);
            row_poses.push(Pose::from_vector(dim, &q));
        }
        poses.push(row_poses);
        phis.push(values[scene.bodies.len() * per_pose..].to_vec());
    }
    if poses.is_empty() {
        return Err(SceneError::Schema("no knot rows".into()));
    }
    if let Some(h) = scene.horizon {
        if poses.len() != h {
            return Err(SceneError::Schema(format!(
                "{} knot rows but the scene horizon is {h}",
                poses.len()
            )));
        }
    }
    Ok(ParsedTrajectory { poses, phis })
}

// ---------------------------------------------------------------------------
// Trajectory validation

#[derive(Debug, Clone, Serialize)]
pub struct PairValidation {
    pub bodies: [String; 2],
    /// Smallest recorded clearance in the file.
    pub min_phi_csv: f64,
    /// Largest gap between a recorded clearance and a fresh static
    /// contact solve at the same poses.
    pub max_phi_mismatch: f64,
    /// Smallest hull distance seen over the upsampled poses; absent
    /// unless both bodies are polytopes.
    pub min_hull_distance: Option<f64>,
    /// Knots whose recorded clearance sits within 1e-3 of contact;
    /// reported, not failed.
    pub close_knots: Vec<usize>,
    /// Fractional knot positions where interior sampling found overlap.
    pub overlap_positions: Vec<f64>,
    /// The subset of overlap positions that are exact knots.
    pub overlap_knots: Vec<usize>,
    /// Knots where the fresh static solve failed outright.
    pub solve_failures: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub horizon: usize,
    pub upsample: usize,
    pub samples: usize,
    pub pairs: Vec<PairValidation>,
}

/// Check a parsed trajectory against the scene: recorded clearances must
/// match fresh static contact solves, and interior sampling at upsampled
/// poses must find no overlap anywhere along the motion.
pub fn validate_trajectory(
    scene: &Scene,
    approx: &ApproxFile,
    parsed: &ParsedTrajectory,
    upsample: usize,
    n_samples: usize,
) -> Result<ValidationReport, SceneError> {
    assert!(upsample >= 1);
    let smooth = scene.smooth_bodies(approx)?;
    let pairs = scene.resolved_pairs()?;
    let horizon = parsed.horizon();
    let hulls: Vec<Option<Polytope>> = (0..scene.bodies.len())
        .map(|k| scene.polytope(k).transpose())
        .collect::<Result<_, _>>()?;

    // Poses at fractional positions t + s/upsample, linear in the pose
    // vector between knots.
    let pose_at = |pos: f64| -> Vec<Pose> {
        let t = (pos.floor() as usize).min(horizon - 1);
        let a = pos - t as f64;
        (0..scene.bodies.len())
            .map(|b| {
                if a == 0.0 || t + 1 >= horizon {
                    parsed.poses[t][b].clone()
                } else {
                    let lo = parsed.poses[t][b].as_vector();
                    let hi = parsed.poses[t + 1][b].as_vector();
                    Pose::from_vector(scene.dimension, &(&lo * (1.0 - a) + &hi * a))
                }
            })
            .collect()
    };

    let mut out = Vec::new();
    let mut pass = true;
    for (pi, &(bi, bj)) in pairs.iter().enumerate() {
        let mut v = PairValidation {
            bodies: [scene.bodies[bi].name.clone(), scene.bodies[bj].name.clone()],
            min_phi_csv: f64::INFINITY,
            max_phi_mismatch: 0.0,
            min_hull_distance: None,
            close_knots: Vec::new(),
            overlap_positions: Vec::new(),
            overlap_knots: Vec::new(),
            solve_failures: Vec::new(),
        };
        for t in 0..horizon {
            let phi_csv = parsed.phis[t][pi];
            v.min_phi_csv = v.min_phi_csv.min(phi_csv);
            if phi_csv.abs() < 1e-3 {
                v.close_knots.push(t);
            }
            let poses = &parsed.poses[t];
            match solve_static_mott(
                &smooth[bi],
                &poses[bi],
                &smooth[bj],
                &poses[bj],
                &MottOptions::default(),
            ) {
                Ok(cv) => {
                    v.max_phi_mismatch = v.max_phi_mismatch.max((cv.phi - phi_csv).abs())
                }
                Err(_) => v.solve_failures.push(t),
            }
        }
        let n_pos = (horizon - 1) * upsample + 1;
        for k in 0..n_pos {
            let pos = k as f64 / upsample as f64;
            let poses = pose_at(pos);
            let overlap = matches!(
                sampled_penetration(&smooth[bi], &poses[bi], &smooth[bj], &poses[bj], n_samples),
                Penetration::Overlapping { .. }
            ) || matches!(
                sampled_penetration(&smooth[bj], &poses[bj], &smooth[bi], &poses[bi], n_samples),
                Penetration::Overlapping { .. }
            );
            if overlap {
                v.overlap_positions.push(pos);
                if k % upsample == 0 {
                    v.overlap_knots.push(k / upsample);
                }
            }
            if let (Some(pa), Some(pb)) = (&hulls[bi], &hulls[bj]) {
                let ha = crate::oracle::enumerate_vertices(pa, &poses[bi])?;
                let hb = crate::oracle::enumerate_vertices(pb, &poses[bj])?;
                let (d, _, _) = closest_points(&ha, &hb)?;
                v.min_hull_distance =
                    Some(v.min_hull_distance.map_or(d, |m: f64| m.min(d)));
            }
        }
        if v.min_phi_csv < -1e-6
            || v.max_phi_mismatch > 1e-4
            || !v.overlap_positions.is_empty()
            || !v.solve_failures.is_empty()
        {
            pass = false;
        }
        out.push(v);
    }
    Ok(ValidationReport {
        pass,
        horizon,
        upsample,
        samples: n_samples,
        pairs: out,
    })
}

// ---------------------------------------------------------------------------
// SVG rendering

/// Outline of one body in its own frame, as a closed polyline in the
/// drawing plane. 3D bodies are projected onto (x, y) after posing, so
/// outlines of posed 3D bodies must be recomputed per pose; this helper
/// returns body-frame sample points instead, dense enough that the
/// projected hull is faithful.
fn body_sample_points(scene: &Scene, k: usize) -> Result<Vec<DVector<f64>>, SceneError> {
    let dim = scene.dimension;
    match &scene.bodies[k].geometry {
        GeometrySpec::Polytope { .. } => {
            let p = scene.polytope(k).unwrap()?;
            Ok(crate::oracle::enumerate_vertices(&p, &Pose::identity(dim))?.vertices)
        }
        GeometrySpec::Sphere { radius } => Ok(sphere_samples(dim, *radius)),
        GeometrySpec::Ellipsoid { shape } => {
            let q = matrix_from_rows(shape, "shape")?;
            // Boundary points x satisfy x'Qx = 1: map unit directions
            // through Q^{-1/2} via the symmetric eigendecomposition.
            let eig = q.symmetric_eigen();
            let mut pts = sphere_samples(dim, 1.0);
            for p in &mut pts {
                let y = eig.eigenvectors.transpose() * &*p;
                let scaled =
                    DVector::from_fn(dim, |i, _| y[i] / eig.eigenvalues[i].max(1e-12).sqrt());
                *p = &eig.eigenvectors * scaled;
            }
            Ok(pts)
        }
    }
}

fn sphere_samples(dim: usize, radius: f64) -> Vec<DVector<f64>> {
    if dim == 2 {
        (0..64)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
                DVector::from_column_slice(&[radius * a.cos(), radius * a.sin()])
            })
            .collect()
    } else {
        // Fibonacci sphere: even coverage with a fixed budget.
        let n = 128;
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                DVector::from_column_slice(&[radius * r * a.cos(), radius * r * a.sin(), radius * z])
            })
            .collect()
    }
}

/// Convex hull of 2D points by monotone chain, counterclockwise.
fn hull_2d(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p: Vec<(f64, f64)> = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &pt in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], pt) <= 0.0 {
            lower.pop();
        }
        lower.push(pt);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &pt in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], pt) <= 0.0 {
            upper.pop();
        }
        upper.push(pt);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

const PALETTE: [&str; 6] = [
    "#0b72b9", "#c03529", "#2b8a3e", "#8d48ab", "#c07b18", "#0f8b8d",
];

/// Draw the motion: every body outlined at every knot, mobile bodies
/// fading from faint (start) to solid (end), static bodies in gray.
/// 3D scenes are projected onto the (x, y) plane.
pub fn render_svg(
    scene: &Scene,
    knot_poses: &[Vec<Pose>],
) -> Result<String, SceneError> {
    let samples: Vec<Vec<DVector<f64>>> = (0..scene.bodies.len())
        .map(|k| body_sample_points(scene, k))
        .collect::<Result<_, _>>()?;

    // Outline per body per knot, in drawing coordinates (y flipped so
    // world +y points up on screen).
    let mut outlines: Vec<(usize, usize, Vec<(f64, f64)>)> = Vec::new();
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (t, poses) in knot_poses.iter().enumerate() {
        for (k, pose) in poses.iter().enumerate() {
            if t > 0 && !scene.bodies[k].mobile {
                continue;
            }
            let projected: Vec<(f64, f64)> = samples[k]
                .iter()
                .map(|p| {
                    let w = pose.to_world(p);
                    (w[0], -w[1])
                })
                .collect();
            let hull = hull_2d(&projected);
            for &(x, y) in &hull {
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
            outlines.push((t, k, hull));
        }
    }
    let w = (max_x - min_x).max(1e-6);
    let h = (max_y - min_y).max(1e-6);
    let margin = 0.05 * w.max(h);
    let horizon = knot_poses.len().max(2);

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.4} {:.4} {:.4} {:.4}\">\n",
        min_x - margin,
        min_y - margin,
        w + 2.0 * margin,
        h + 2.0 * margin
    )
    .unwrap();
    let stroke_w = 0.004 * w.max(h);
    for (t, k, hull) in &outlines {
        if hull.len() < 2 {
            continue;
        }
        let mut d = String::new();
        for (i, (x, y)) in hull.iter().enumerate() {
            write!(d, "{}{x:.4} {y:.4} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        d.push('Z');
        let mobile = scene.bodies[*k].mobile;
        if mobile {
            let color = PALETTE[*k % PALETTE.len()];
            let alpha = 0.25 + 0.75 * *t as f64 / (horizon - 1) as f64;
            write!(
                svg,
                "  <path id=\"{}-k{t}\" d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.05\" \
                 stroke=\"{color}\" stroke-opacity=\"{alpha:.3}\" stroke-width=\"{stroke_w:.4}\"/>\n",
                scene.bodies[*k].name
            )
            .unwrap();
        } else {
            write!(
                svg,
                "  <path id=\"{}\" d=\"{d}\" fill=\"#777\" fill-opacity=\"0.35\" \
                 stroke=\"#555\" stroke-width=\"{stroke_w:.4}\"/>\n",
                scene.bodies[*k].name
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_scene() -> Scene {
        // The post sits slightly off the slider's straight-line path, so a
        // collision is forced but the scene has no exact symmetry to
        // stall on.
        Scene {
            dimension: 2,
            bodies: vec![
                BodySpec {
                    name: "slider".into(),
                    geometry: GeometrySpec::Polytope {
                        facets: vec![
                            vec![1.0, 0.0],
                            vec![-1.0, 0.0],
                            vec![0.0, 1.0],
                            vec![0.0, -1.0],
                        ],
                        offsets: vec![0.5, 0.5, 0.5, 0.5],
                        rho: 3,
                    },
                    mobile: true,
                    initial_pose: PoseSpec {
                        translation: vec![-2.0, 0.1],
                        rotation: vec![0.0],
                    },
                    goal_pose: Some(PoseSpec {
                        translation: vec![2.0, 0.1],
                        rotation: vec![0.0],
                    }),
                },
                BodySpec {
                    name: "post".into(),
                    geometry: GeometrySpec::Sphere { radius: 0.4 },
                    mobile: false,
                    initial_pose: PoseSpec {
                        translation: vec![0.1, -0.3],
                        rotation: vec![0.0],
                    },
                    goal_pose: None,
                },
            ],
            pairs: PairsSpec::Keyword("all".into()),
            horizon: Some(7),
            v_max: Some(VMaxSpec::Uniform(0.8)),
            fix_final: true,
            goal_weight: None,
            uniqueness_rows: false,
            clearance: 0.2,
            solver: Some(SolverSpec::default()),
        }
    }

    #[test]
    fn scene_json_round_trip_preserves_every_field() {
        let mut scene = demo_scene();
        // Exercise the remaining field shapes too.
        scene.v_max = Some(VMaxSpec::PerCoordinate(vec![1.0, 1.0, 0.5]));
        scene.pairs = PairsSpec::Explicit(vec![["slider".into(), "post".into()]]);
        scene.goal_weight = Some(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.2],
        ]);
        let text = scene.to_json();
        let back = Scene::from_json(&text).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn all_keyword_expands_to_pairs_touching_a_mobile_body() {
        let mut scene = demo_scene();
        scene.bodies.push(BodySpec {
            name: "wall".into(),
            geometry: GeometrySpec::Sphere { radius: 0.3 },
            mobile: false,
            initial_pose: PoseSpec {
                translation: vec![0.0, 2.0],
                rotation: vec![0.0],
            },
            goal_pose: None,
        });
        // post-wall is static-static and drops out.
        assert_eq!(scene.resolved_pairs().unwrap(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn stale_sidecar_entries_are_rejected_by_name_and_content() {
        let scene = demo_scene();
        let approx = approximate_scene(&scene).unwrap();
        assert_eq!(approx.bodies.len(), 1);
        assert!(scene.smooth_bodies(&approx).is_ok());

        // Same name, edited geometry: the hash no longer matches.
        let mut edited = scene.clone();
        if let GeometrySpec::Polytope { offsets, .. } = &mut edited.bodies[0].geometry {
            offsets[0] = 0.6;
        }
        match edited.smooth_bodies(&approx) {
            Err(SceneError::ApproximationMissing(name)) => assert_eq!(name, "slider"),
            other => panic!("expected a stale-approximation error, got {other:?}"),
        }

        // Rho lives in the scene, not the sidecar: changing it reuses the
        // same entry.
        let mut rho_bump = scene.clone();
        if let GeometrySpec::Polytope { rho, .. } = &mut rho_bump.bodies[0].geometry {
            *rho = 9;
        }
        assert!(rho_bump.smooth_bodies(&approx).is_ok());
    }

    #[test]
    fn sidecar_bodies_match_direct_construction() {
        let scene = demo_scene();
        let approx = approximate_scene(&scene).unwrap();
        let smooth = scene.smooth_bodies(&approx).unwrap();
        let p = scene.polytope(0).unwrap().unwrap();
        let direct = SuperquadBody::from_polytope(&p, 3).unwrap();
        match &smooth[0] {
            SmoothBody::Superquad(sq) => assert_eq!(sq, &direct),
            other => panic!("expected a smoothed polytope, got {other:?}"),
        }
    }

    #[test]
    fn interior_samples_stay_inside_the_source_polytope() {
        let scene = demo_scene();
        let approx = approximate_scene(&scene).unwrap();
        let SmoothBody::Superquad(sq) = &scene.smooth_bodies(&approx).unwrap()[0] else {
            unreachable!()
        };
        let stats = containment_stats(sq, 2000, 7);
        assert!(stats.accepted == 2000);
        assert!(
            stats.max_facet_excess <= 1e-9,
            "samples left the polytope by {}",
            stats.max_facet_excess
        );
    }

    #[test]
    fn trajectory_csv_round_trips_bitwise() {
        let scene = demo_scene();
        let approx = approximate_scene(&scene).unwrap();
        let spec = scene.to_trajopt_spec(&approx).unwrap();
        let (traj, _) =
            crate::trajopt::solve_trajectory_restarts(&spec, &Default::default(), 9).unwrap();
        let csv = write_trajectory_csv(&scene, &spec, &traj).unwrap();
        let parsed = parse_trajectory_csv(&scene, &csv).unwrap();
        assert_eq!(parsed.horizon(), 7);
        for (t, knot) in traj.knots.iter().enumerate() {
            let poses = spec.poses_at(knot);
            for (b, pose) in poses.iter().enumerate() {
                assert_eq!(
                    pose.as_vector(),
                    parsed.poses[t][b].as_vector(),
                    "knot {t} body {b} changed across the round trip"
                );
            }
            for (pi, cv) in traj.contacts[t].iter().enumerate() {
                assert_eq!(cv.phi, parsed.phis[t][pi]);
            }
        }
    }

    #[test]
    fn header_mismatch_and_bad_rows_are_schema_errors() {
        let scene = demo_scene();
        let err = parse_trajectory_csv(&scene, "knot,slider_tx\n0,1.0\n");
        assert!(matches!(err, Err(SceneError::Schema(_))));
        let header = trajectory_header(&scene).unwrap();
        let err = parse_trajectory_csv(&scene, &format!("{header}\n0,a,b,c,d,e,f,g\n"));
        assert!(matches!(err, Err(SceneError::Schema(_))));
    }

    #[test]
    fn validation_passes_a_solved_trajectory_and_fails_a_corrupted_one() {
        let scene = demo_scene();
        let approx = approximate_scene(&scene).unwrap();
        let spec = scene.to_trajopt_spec(&approx).unwrap();
        let (traj, _) =
            crate::trajopt::solve_trajectory_restarts(&spec, &Default::default(), 9).unwrap();
        let csv = write_trajectory_csv(&scene, &spec, &traj).unwrap();
        let parsed = parse_trajectory_csv(&scene, &csv).unwrap();
        let report = validate_trajectory(&scene, &approx, &parsed, 4, 400).unwrap();
        assert!(report.pass, "clean trajectory failed: {report:?}");

        // Teleport the slider onto the post at knot 3.
        let mut bad = parsed.clone();
        bad.poses[3][0] = Pose::new(DVector::from_column_slice(&[0.1, -0.3]), DVector::zeros(1));
        let report = validate_trajectory(&scene, &approx, &bad, 4, 400).unwrap();
        assert!(!report.pass);
        assert!(
            report.pairs[0].overlap_knots.contains(&3),
            "corrupted knot not identified: {:?}",
            report.pairs[0]
        );
    }

    #[test]
    fn svg_outlines_every_body() {
        let scene = demo_scene();
        let approx = approximate_scene(&scene).unwrap();
        let spec = scene.to_trajopt_spec(&approx).unwrap();
        let (traj, _) =
            crate::trajopt::solve_trajectory_restarts(&spec, &Default::default(), 9).unwrap();
        let poses: Vec<Vec<Pose>> = traj.knots.iter().map(|k| spec.poses_at(k)).collect();
        let svg = render_svg(&scene, &poses).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("id=\"slider-k0\""));
        assert!(svg.contains("id=\"slider-k6\""));
        assert!(svg.contains("id=\"post\""));
    }

    #[test]
    fn missing_goal_or_v_max_is_reported_by_name() {
        let mut scene = demo_scene();
        scene.bodies[0].goal_pose = None;
        let approx = approximate_scene(&scene).unwrap();
        match scene.to_trajopt_spec(&approx) {
            Err(SceneError::Invalid(msg)) => assert!(msg.contains("slider")),
            other => panic!("expected an invalid-scene error, got {other:?}"),
        }
        let mut scene = demo_scene();
        scene.v_max = None;
        match scene.to_trajopt_spec(&approx) {
            Err(SceneError::Invalid(msg)) => assert!(msg.contains("v_max")),
            other => panic!("expected an invalid-scene error, got {other:?}"),
        }
    }
}
