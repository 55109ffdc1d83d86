use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

/// Planar pose of the steered part, expressed in the goal frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Lateral offset (m).
    pub x: f64,
    /// Offset along the insertion axis (m), positive away from the hole bottom.
    pub z: f64,
    /// Orientation (rad), normalized to (-pi, pi].
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vz: f64,
    pub omega: f64,
}

/// Planar force-torque vector `(fx, fz, tau)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fz: f64,
    pub tau: f64,
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

macro_rules! triple {
    ($ty:ident, $a:ident, $b:ident, $c:ident) => {
        impl $ty {
            pub const ZERO: $ty = $ty {
                $a: 0.0,
                $b: 0.0,
                $c: 0.0,
            };

            pub const fn new($a: f64, $b: f64, $c: f64) -> Self {
                Self { $a, $b, $c }
            }

            pub fn to_array(self) -> [f64; 3] {
                [self.$a, self.$b, self.$c]
            }

            pub fn from_array(v: [f64; 3]) -> Self {
                Self {
                    $a: v[0],
                    $b: v[1],
                    $c: v[2],
                }
            }

            pub fn is_finite(&self) -> bool {
                self.$a.is_finite() && self.$b.is_finite() && self.$c.is_finite()
            }
        }
    };
}

triple!(Pose, x, z, theta);
triple!(Twist, vx, vz, omega);
triple!(Wrench, fx, fz, tau);

impl Wrench {
    /// Clamps each component into `[-limit, limit]`.
    pub fn clamp(self, limits: [f64; 3]) -> Self {
        Self {
            fx: self.fx.clamp(-limits[0], limits[0]),
            fz: self.fz.clamp(-limits[1], limits[1]),
            tau: self.tau.clamp(-limits[2], limits[2]),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.fx * self.fx + self.fz * self.fz + self.tau * self.tau
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, o: Wrench) -> Wrench {
        Wrench::new(self.fx + o.fx, self.fz + o.fz, self.tau + o.tau)
    }
}

impl Sub for Wrench {
    type Output = Wrench;
    fn sub(self, o: Wrench) -> Wrench {
        Wrench::new(self.fx - o.fx, self.fz - o.fz, self.tau - o.tau)
    }
}

impl Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench::new(-self.fx, -self.fz, -self.tau)
    }
}

impl Mul<f64> for Wrench {
    type Output = Wrench;
    fn mul(self, s: f64) -> Wrench {
        Wrench::new(self.fx * s, self.fz * s, self.tau * s)
    }
}

/// Snapshot of the simulated part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub pose: Pose,
    pub twist: Twist,
    /// Reaction exerted by the environment on the part during the last step.
    pub contact_wrench: Wrench,
    pub t: f64,
    pub in_contact: bool,
}

impl SimState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite()
            && self.twist.is_finite()
            && self.contact_wrench.is_finite()
            && self.t.is_finite()
    }
}
