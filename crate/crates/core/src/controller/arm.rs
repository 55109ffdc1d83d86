//! Planar three-link arm carrying the part at its tool point.
//!
//! Joint angles are relative; link `i` points along `phi_i = q_1 + ... + q_i` in the
//! x-z plane of the goal frame. The tool frame is the end of the last link, and the part
//! angle is `phi_3 + pi/2`, so `theta = 0` has the last link pointing straight down.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::sim::{normalize_angle, Pose, Twist};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmGeometry {
    /// Position of the first joint in the goal frame (m).
    pub base: [f64; 2],
    pub lengths: [f64; 3],
    /// Link masses (kg); each link is a uniform rod.
    pub masses: [f64; 3],
    /// Point mass (kg) and rotational inertia (kg m^2) held rigidly at the tool point.
    pub payload_mass: f64,
    pub payload_inertia: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            base: [-0.4, 0.45],
            lengths: [0.45, 0.4, 0.1],
            masses: [0.4, 0.3, 0.1],
            payload_mass: 5.0,
            payload_inertia: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManipulatorModel {
    pub geometry: ArmGeometry,
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

impl ManipulatorModel {
    pub fn new(geometry: ArmGeometry, q: Vector3<f64>) -> Self {
        Self {
            geometry,
            q,
            qd: Vector3::zeros(),
        }
    }

    fn absolute_angles(&self) -> [f64; 3] {
        let q = &self.q;
        [q[0], q[0] + q[1], q[0] + q[1] + q[2]]
    }

    /// Tool pose and twist in the goal frame.
    pub fn forward_kinematics(&self) -> (Pose, Twist) {
        let phi = self.absolute_angles();
        let l = &self.geometry.lengths;
        let mut x = self.geometry.base[0];
        let mut z = self.geometry.base[1];
        for i in 0..3 {
            x += l[i] * phi[i].cos();
            z += l[i] * phi[i].sin();
        }
        let v = self.jacobian() * self.qd;
        (
            Pose::new(x, z, normalize_angle(phi[2] + FRAC_PI_2)),
            Twist::new(v[0], v[1], v[2]),
        )
    }

    /// Jacobian of `(x, z, theta)` of the tool with respect to `q`.
    pub fn jacobian(&self) -> Matrix3<f64> {
        self.point_jacobian(2, 1.0)
    }

    /// Jacobian of the point at fraction `s` along link `link`, with its angle row.
    fn point_jacobian(&self, link: usize, s: f64) -> Matrix3<f64> {
        let phi = self.absolute_angles();
        let l = &self.geometry.lengths;
        let mut j = Matrix3::zeros();
        for col in 0..3 {
            if col > link {
                break;
            }
            let (mut dx, mut dz) = (0.0, 0.0);
            for (i, &p) in phi.iter().enumerate().take(link + 1).skip(col) {
                let len = if i == link { s * l[i] } else { l[i] };
                dx -= len * p.sin();
                dz += len * p.cos();
            }
            j[(0, col)] = dx;
            j[(1, col)] = dz;
            j[(2, col)] = 1.0;
        }
        j
    }

    /// Joint-space inertia at the current configuration.
    pub fn inertia(&self) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        for i in 0..3 {
            let m = self.geometry.masses[i];
            let l = self.geometry.lengths[i];
            let jc = self.point_jacobian(i, 0.5);
            let jv = jc.fixed_rows::<2>(0);
            let jw = jc.fixed_rows::<1>(2);
            h += m * jv.transpose() * jv + (m * l * l / 12.0) * jw.transpose() * jw;
        }
        let jt = self.jacobian();
        let jv = jt.fixed_rows::<2>(0);
        let jw = jt.fixed_rows::<1>(2);
        h + self.geometry.payload_mass * jv.transpose() * jv
            + self.geometry.payload_inertia * jw.transpose() * jw
    }

    /// Tool mobility `J H^-1 J^T`: tool acceleration per unit tool wrench.
    pub fn mobility(&self) -> Option<Matrix3<f64>> {
        let j = self.jacobian();
        let hinv = self.inertia().cholesky()?.inverse();
        Some(j * hinv * j.transpose())
    }

    /// Cartesian inertia `(J H^-1 J^T)^-1` seen at the tool, if the arm is not singular.
    pub fn cartesian_inertia(&self) -> Option<Matrix3<f64>> {
        self.mobility()?.try_inverse()
    }

    /// Joint angles placing the tool at `pose`, elbow chosen to stay above the wrist line.
    pub fn inverse_kinematics(geometry: &ArmGeometry, pose: &Pose) -> Option<Vector3<f64>> {
        let [l1, l2, l3] = geometry.lengths;
        let phi3 = pose.theta - FRAC_PI_2;
        let wx = pose.x - l3 * phi3.cos() - geometry.base[0];
        let wz = pose.z - l3 * phi3.sin() - geometry.base[1];
        let r2 = wx * wx + wz * wz;
        let cos_q2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0..=1.0).contains(&cos_q2) {
            return None;
        }
        let q2 = -cos_q2.acos();
        let q1 = wz.atan2(wx) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        let q3 = phi3 - q1 - q2;
        Some(Vector3::new(q1, q2, normalize_angle(q3)))
    }
}
