use nalgebra::{Isometry3, Quaternion, SMatrix, SVector, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Seven joint values. Positions in rad, velocities in rad/s, torques in N·m;
/// the unit is carried by context.
pub type JointVector = SVector<f64, 7>;
pub type Vector6 = SVector<f64, 6>;
/// Geometric Jacobian, linear rows first.
pub type Jacobian = SMatrix<f64, 6, 7>;

pub fn joint_vector_is_finite(v: &JointVector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// End-effector pose in the base frame.
///
/// The orientation is kept normalized and in the `w >= 0` hemisphere so that
/// equal rotations compare equal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a position and a (possibly non-unit) `w, x, y, z`
    /// quaternion. Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(position: [f64; 3], wxyz: [f64; 4]) -> Option<Self> {
        if !position.iter().chain(wxyz.iter()).all(|v| v.is_finite()) {
            return None;
        }
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if norm < 1e-12 {
            return None;
        }
        Some(Pose::new(
            Vector3::from(position),
            UnitQuaternion::new_unchecked(q / norm),
        ))
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// Pose translated by `dp` and rotated by the rotation vector `dr`
    /// (applied in the base frame).
    pub fn perturbed(&self, dp: Vector3<f64>, dr: Vector3<f64>) -> Self {
        Pose::new(
            self.position + dp,
            UnitQuaternion::from_scaled_axis(dr) * self.orientation,
        )
    }
}

/// Normalizes and flips to the `w >= 0` hemisphere.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::new_normalize(*q.quaternion());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-*q.quaternion())
    } else {
        q
    }
}

/// Shortest-arc spherical interpolation, `s` in `[0, 1]`.
pub fn slerp(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let a = from.quaternion();
    let mut b = *to.quaternion();
    let mut dot = a.coords.dot(&b.coords);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let out = if dot > 1.0 - 1e-12 {
        a.lerp(&b, s)
    } else {
        let theta = dot.clamp(-1.0, 1.0).acos();
        let sin_theta = theta.sin();
        let wa = ((1.0 - s) * theta).sin() / sin_theta;
        let wb = (s * theta).sin() / sin_theta;
        a * wa + b * wb
    };
    canonical(UnitQuaternion::new_normalize(out))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector6 {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn from_vector(v: &Vector6) -> Self {
        Twist {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Force (N) and torque (N·m) acting at the end-effector, base frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Wrench {
            force: Vector3::new(v[0], v[1], v[2]),
            torque: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }

    pub fn to_vector(&self) -> Vector6 {
        Vector6::from(self.to_array())
    }

    pub fn from_vector(v: &Vector6) -> Self {
        Wrench::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;

    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

impl std::ops::Mul<f64> for Wrench {
    type Output = Wrench;

    fn mul(self, rhs: f64) -> Wrench {
        Wrench {
            force: self.force * rhs,
            torque: self.torque * rhs,
        }
    }
}
