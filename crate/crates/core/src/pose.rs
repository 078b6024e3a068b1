//! Rigid-body poses parameterized by translation plus rotation vector.
//!
//! The rotation vector is a planar angle in 2D and an axis-angle vector in
//! 3D, so a pose is a flat unconstrained parameter block — exactly what a
//! trajectory optimizer wants to differentiate through. The exponential map,
//! its inverse, and the per-component derivative of the rotation matrix are
//! all analytic, with series branches near zero angle.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// World-frame position of the body origin, meters.
    pub translation: DVector<f64>,
    /// Length 1 (planar angle, radians) in 2D, length 3 (axis-angle) in 3D.
    pub rotation: DVector<f64>,
}

/// Angle below which series expansions replace the closed-form trig ratios.
const SMALL_ANGLE: f64 = 1e-4;

impl Pose {
    pub fn new(translation: DVector<f64>, rotation: DVector<f64>) -> Self {
        let dim = translation.nrows();
        assert!(dim == 2 || dim == 3, "pose dimension must be 2 or 3");
        assert_eq!(
            rotation.nrows(),
            rot_dim(dim),
            "rotation vector length does not match dimension"
        );
        Self {
            translation,
            rotation,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DVector::zeros(rot_dim(dim)))
    }

    pub fn dim(&self) -> usize {
        self.translation.nrows()
    }

    pub fn rot_dim(&self) -> usize {
        self.rotation.nrows()
    }

    /// Number of scalar parameters (translation + rotation).
    pub fn param_dim(&self) -> usize {
        self.dim() + self.rot_dim()
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        match self.dim() {
            2 => {
                let (s, c) = self.rotation[0].sin_cos();
                DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            }
            _ => rodrigues(&self.rotation),
        }
    }

    /// Partial derivative of the rotation matrix with respect to each
    /// rotation-vector component.
    pub fn rotation_matrix_derivatives(&self) -> Vec<DMatrix<f64>> {
        match self.dim() {
            2 => {
                let (s, c) = self.rotation[0].sin_cos();
                vec![DMatrix::from_row_slice(2, 2, &[-s, -c, c, -s])]
            }
            _ => rotation_vector_jacobian(&self.rotation),
        }
    }

    pub fn to_world(&self, x_body: &DVector<f64>) -> DVector<f64> {
        self.rotation_matrix() * x_body + &self.translation
    }

    pub fn to_body(&self, x_world: &DVector<f64>) -> DVector<f64> {
        self.rotation_matrix().transpose() * (x_world - &self.translation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        assert_eq!(self.dim(), other.dim());
        let r_self = self.rotation_matrix();
        let translation = &r_self * &other.translation + &self.translation;
        let rotation = if self.dim() == 2 {
            DVector::from_column_slice(&[self.rotation[0] + other.rotation[0]])
        } else {
            rotation_vector_from_matrix(&(r_self * other.rotation_matrix()))
        };
        Pose::new(translation, rotation)
    }

    /// Flatten into a configuration block `[translation; rotation]`.
    pub fn as_vector(&self) -> DVector<f64> {
        let mut q = DVector::zeros(self.param_dim());
        q.rows_mut(0, self.dim()).copy_from(&self.translation);
        q.rows_mut(self.dim(), self.rot_dim())
            .copy_from(&self.rotation);
        q
    }

    pub fn from_vector(dim: usize, q: &DVector<f64>) -> Self {
        assert_eq!(q.nrows(), dim + rot_dim(dim), "configuration length mismatch");
        Self::new(
            q.rows(0, dim).into_owned(),
            q.rows(dim, rot_dim(dim)).into_owned(),
        )
    }
}

pub fn rot_dim(dim: usize) -> usize {
    match dim {
        2 => 1,
        3 => 3,
        _ => panic!("unsupported dimension {dim}"),
    }
}

fn skew(w: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0, -w[2], w[1], //
            w[2], 0.0, -w[0], //
            -w[1], w[0], 0.0,
        ],
    )
}

fn rodrigues(w: &DVector<f64>) -> DMatrix<f64> {
    let theta = w.norm();
    let k = skew(w);
    let (c1, c2) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    DMatrix::identity(3, 3) + &k * c1 + (&k * &k) * c2
}

/// ∂R/∂w_l for a 3D rotation vector w, one matrix per component.
///
/// Away from w = 0 this is the closed form
/// `((w_l [w]x + [w × ((I − R) e_l)]x) / ‖w‖²) R`; near zero it switches to
/// the series `[e_l]x + ½([e_l]x [w]x + [w]x [e_l]x)`.
fn rotation_vector_jacobian(w: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let theta = w.norm();
    let r = rodrigues(w);
    let mut out = Vec::with_capacity(3);
    if theta < SMALL_ANGLE {
        let k = skew(w);
        for l in 0..3 {
            let mut e = DVector::zeros(3);
            e[l] = 1.0;
            let el = skew(&e);
            out.push(&el + (&el * &k + &k * &el) * 0.5);
        }
    } else {
        let theta2 = theta * theta;
        let i3 = DMatrix::identity(3, 3);
        for l in 0..3 {
            let mut e = DVector::zeros(3);
            e[l] = 1.0;
            let v = (&i3 - &r) * &e;
            let cross = DVector::from_column_slice(&[
                w[1] * v[2] - w[2] * v[1],
                w[2] * v[0] - w[0] * v[2],
                w[0] * v[1] - w[1] * v[0],
            ]);
            let num = skew(w) * w[l] + skew(&cross);
            out.push((num / theta2) * &r);
        }
    }
    out
}

/// Inverse of the exponential map. The result has angle in [0, π]; inputs
/// with larger angles come back as their wrapped equivalent.
pub fn rotation_vector_from_matrix(r: &DMatrix<f64>) -> DVector<f64> {
    assert_eq!(r.shape(), (3, 3));
    let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let vee = DVector::from_column_slice(&[
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ]);
    if theta < 1e-7 {
        return vee * 0.5;
    }
    if theta > std::f64::consts::PI - 1e-3 {
        // Near π the skew part degenerates; recover the axis from
        // R + Rᵀ = 2cosθ·I + 2(1−cosθ)·aaᵀ and orient it against what
        // remains of the skew part.
        let denom = 1.0 - cos_theta;
        let k = (0..3)
            .max_by(|&i, &j| r[(i, i)].partial_cmp(&r[(j, j)]).unwrap())
            .unwrap();
        let mut axis = DVector::zeros(3);
        axis[k] = (((r[(k, k)] - cos_theta) / denom).max(0.0)).sqrt();
        for i in 0..3 {
            if i != k {
                axis[i] = (r[(i, k)] + r[(k, i)]) / (2.0 * denom * axis[k]);
            }
        }
        axis = axis.normalize();
        if vee.dot(&axis) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / (2.0 * theta.sin()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotvec(rng: &mut ChaCha8Rng, max_angle: f64) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v * (rng.random_range(0.01..max_angle) / n);
            }
        }
    }

    #[test]
    fn rotation_matrices_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let pose = Pose::new(DVector::zeros(3), random_rotvec(&mut rng, 3.0));
            let r = pose.rotation_matrix();
            let defect = (r.transpose() * &r - DMatrix::identity(3, 3)).amax();
            assert!(defect <= 1e-12, "orthonormality defect {defect}");
            assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn planar_quarter_turn_sends_x_to_y() {
        let pose = Pose::new(
            DVector::zeros(2),
            DVector::from_column_slice(&[std::f64::consts::FRAC_PI_2]),
        );
        let y = pose.to_world(&DVector::from_column_slice(&[1.0, 0.0]));
        assert_abs_diff_eq!(y[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for case in 0..30 {
            let w = if case % 5 == 0 {
                DVector::from_fn(3, |_, _| rng.random_range(-1e-6..1e-6))
            } else {
                random_rotvec(&mut rng, 2.5)
            };
            let pose = Pose::new(DVector::zeros(3), w.clone());
            let derivs = pose.rotation_matrix_derivatives();
            for l in 0..3 {
                let mut wp = w.clone();
                wp[l] += h;
                let mut wm = w.clone();
                wm[l] -= h;
                let fd = (rodrigues(&wp) - rodrigues(&wm)) / (2.0 * h);
                let err = (&derivs[l] - fd).amax();
                assert!(err <= 1e-6, "case {case} component {l}: error {err}");
            }
        }
    }

    #[test]
    fn planar_rotation_derivative_matches_finite_differences() {
        let h = 1e-6;
        for &angle in &[0.0, 0.3, -1.2, 2.7] {
            let pose = Pose::new(DVector::zeros(2), DVector::from_column_slice(&[angle]));
            let d = &pose.rotation_matrix_derivatives()[0];
            let rp = Pose::new(DVector::zeros(2), DVector::from_column_slice(&[angle + h]))
                .rotation_matrix();
            let rm = Pose::new(DVector::zeros(2), DVector::from_column_slice(&[angle - h]))
                .rotation_matrix();
            let err = (d - (rp - rm) / (2.0 * h)).amax();
            assert!(err <= 1e-9, "angle {angle}: error {err}");
        }
    }

    #[test]
    fn log_inverts_exp_below_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w = random_rotvec(&mut rng, 3.0);
            let back = rotation_vector_from_matrix(&rodrigues(&w));
            assert!((&back - &w).amax() <= 1e-9, "roundtrip failed for {w:?}");
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = Pose::new(
                DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)),
                random_rotvec(&mut rng, 1.5),
            );
            let b = Pose::new(
                DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)),
                random_rotvec(&mut rng, 1.5),
            );
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let direct = a.compose(&b).to_world(&x);
            let nested = a.to_world(&b.to_world(&x));
            assert!((direct - nested).amax() <= 1e-9);
        }
    }

    #[test]
    fn to_body_inverts_to_world() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2usize, 3] {
            for _ in 0..10 {
                let rotation = if dim == 2 {
                    DVector::from_column_slice(&[rng.random_range(-3.0..3.0)])
                } else {
                    random_rotvec(&mut rng, 2.5)
                };
                let pose = Pose::new(
                    DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)),
                    rotation,
                );
                let x = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
                let back = pose.to_body(&pose.to_world(&x));
                assert!((back - x).amax() <= 1e-12);
            }
        }
    }
}
