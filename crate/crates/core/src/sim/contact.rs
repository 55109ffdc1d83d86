//! Penalty contact between the rectangular peg and the chamfered hole.
//!
//! The environment is the region below the boundary polyline
//! `(-W, zs) (-(hw+ch), zs) (-hw, zs-ch) (-hw, zb) (hw, zb) (hw, zs-ch) (hw+ch, zs) (W, zs)`.
//! Two kinds of contacts are generated: peg corners inside the environment and
//! convex environment corners (the chamfer edges) inside the peg. All queries
//! fold the lateral coordinate onto `x >= 0` and sum mirrored pairs first, so the
//! model is exactly mirror-symmetric in floating point.

use super::{Pose, SimConfig, Twist, Wrench};

/// A single penetrating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPoint {
    /// World-frame contact location.
    pub point: [f64; 2],
    /// Unit direction of the normal force acting on the peg.
    pub normal: [f64; 2],
    pub depth: f64,
}

/// Geometry in the true goal frame (perturbation already removed).
struct Cell {
    hw: f64,
    ch: f64,
    zs: f64,
    zb: f64,
}

impl Cell {
    fn new(cfg: &SimConfig) -> Self {
        Self {
            hw: cfg.hole_half_width,
            ch: cfg.chamfer,
            zs: cfg.surface_z(),
            zb: cfg.floor_z(),
        }
    }

    /// Right half of the boundary (x >= 0), starting at the hole center.
    fn right_boundary(&self) -> [[f64; 2]; 5] {
        [
            [0.0, self.zb],
            [self.hw, self.zb],
            [self.hw, self.zs - self.ch],
            [self.hw + self.ch, self.zs],
            [self.hw + self.ch + 10.0, self.zs],
        ]
    }

    /// Solid test for a point with `ax = |x| >= 0`.
    fn inside_folded(&self, ax: f64, z: f64) -> bool {
        if ax < self.hw {
            z < self.zb
        } else if ax < self.hw + self.ch {
            z < self.zs - self.ch + (ax - self.hw)
        } else {
            z < self.zs
        }
    }

    /// Penetration depth and escape direction for a point inside the solid.
    fn penetration(&self, p: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let ax = p[0].abs();
        if !self.inside_folded(ax, p[1]) {
            return None;
        }
        let q = [ax, p[1]];
        let pts = self.right_boundary();
        let mut best = (f64::INFINITY, [0.0, 1.0]);
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len_sq = d[0] * d[0] + d[1] * d[1];
            if len_sq == 0.0 {
                continue;
            }
            let s = (((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / len_sq).clamp(0.0, 1.0);
            let c = [a[0] + s * d[0], a[1] + s * d[1]];
            let e = [c[0] - q[0], c[1] - q[1]];
            let dist = (e[0] * e[0] + e[1] * e[1]).sqrt();
            if dist < best.0 {
                let len = len_sq.sqrt();
                // outward normal of the segment: solid lies to the right of travel
                let seg_n = [-d[1] / len, d[0] / len];
                let n = if dist > 1e-15 {
                    [e[0] / dist, e[1] / dist]
                } else {
                    seg_n
                };
                best = (dist, n);
            }
        }
        let (depth, mut n) = best;
        if p[0].is_sign_negative() {
            n[0] = -n[0];
        }
        Some((depth, n))
    }

    /// Convex environment corners as mirrored pairs `(left, right)`.
    fn corner_pairs(&self) -> Vec<([f64; 2], [f64; 2])> {
        if self.ch > 0.0 {
            vec![
                (
                    [-(self.hw + self.ch), self.zs],
                    [self.hw + self.ch, self.zs],
                ),
                ([-self.hw, self.zs - self.ch], [self.hw, self.zs - self.ch]),
            ]
        } else {
            vec![([-self.hw, self.zs], [self.hw, self.zs])]
        }
    }
}

/// Maps a goal-frame pose into the true goal frame.
fn to_true_frame(pose: &Pose, cfg: &SimConfig) -> Pose {
    let g = &cfg.goal_perturbation;
    if *g == Pose::ZERO {
        return *pose;
    }
    let (s, c) = g.theta.sin_cos();
    Pose::new(
        g.x + c * pose.x - s * pose.z,
        g.z + s * pose.x + c * pose.z,
        pose.theta + g.theta,
    )
}

fn rotate_to_true(v: [f64; 2], cfg: &SimConfig) -> [f64; 2] {
    let th = cfg.goal_perturbation.theta;
    if th == 0.0 {
        return v;
    }
    let (s, c) = th.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn rotate_from_true(v: [f64; 2], cfg: &SimConfig) -> [f64; 2] {
    let th = cfg.goal_perturbation.theta;
    if th == 0.0 {
        return v;
    }
    let (s, c) = th.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// Peg corner offsets as mirrored pairs `(left, right)` in the part frame.
fn peg_corner_pairs(cfg: &SimConfig) -> [([f64; 2], [f64; 2]); 2] {
    let (w, h) = (cfg.part_half_width, cfg.part_half_height);
    [([-w, -h], [w, -h]), ([-w, h], [w, h])]
}

fn corner_world(center: &Pose, local: [f64; 2]) -> [f64; 2] {
    let (s, c) = center.theta.sin_cos();
    [
        center.x + (c * local[0] - s * local[1]),
        center.z + (s * local[0] + c * local[1]),
    ]
}

fn peg_corner_contact(cell: &Cell, pose: &Pose, local: [f64; 2]) -> Option<ContactPoint> {
    let p = corner_world(pose, local);
    cell.penetration(p).map(|(depth, normal)| ContactPoint {
        point: p,
        normal,
        depth,
    })
}

fn env_corner_contact(pose: &Pose, cfg: &SimConfig, v: [f64; 2]) -> Option<ContactPoint> {
    let (s, c) = pose.theta.sin_cos();
    let (dx, dz) = (v[0] - pose.x, v[1] - pose.z);
    let lx = c * dx + s * dz;
    let lz = -s * dx + c * dz;
    let (w, h) = (cfg.part_half_width, cfg.part_half_height);
    if !(lx.abs() < w && lz.abs() < h) {
        return None;
    }
    let side = w - lx.abs();
    let end = h - lz.abs();
    // force on the peg points from the corner into the peg, opposite the nearest face normal
    let local_n = if side <= end {
        [-lx.signum(), 0.0]
    } else {
        [0.0, -lz.signum()]
    };
    let normal = [
        c * local_n[0] - s * local_n[1],
        s * local_n[0] + c * local_n[1],
    ];
    Some(ContactPoint {
        point: v,
        normal,
        depth: side.min(end),
    })
}

/// Mirrored pairs of potential contacts, in the true goal frame.
fn contact_pairs(
    pose: &Pose,
    cfg: &SimConfig,
) -> Vec<(Option<ContactPoint>, Option<ContactPoint>)> {
    let cell = Cell::new(cfg);
    let p = to_true_frame(pose, cfg);
    let mut pairs = Vec::with_capacity(4);
    for (l, r) in peg_corner_pairs(cfg) {
        pairs.push((
            peg_corner_contact(&cell, &p, l),
            peg_corner_contact(&cell, &p, r),
        ));
    }
    for (l, r) in cell.corner_pairs() {
        pairs.push((
            env_corner_contact(&p, cfg, l),
            env_corner_contact(&p, cfg, r),
        ));
    }
    pairs
}

/// All penetrating points for a pose, in the true goal frame.
pub fn contact_points(pose: &Pose, cfg: &SimConfig) -> Vec<ContactPoint> {
    contact_pairs(pose, cfg)
        .into_iter()
        .flat_map(|(a, b)| a.into_iter().chain(b))
        .collect()
}

/// True when any peg corner lies inside the environment or any environment corner
/// lies inside the peg. Pure geometry, independent of the force model.
pub fn is_penetrating(pose: &Pose, cfg: &SimConfig) -> bool {
    !contact_points(pose, cfg).is_empty()
}

fn point_velocity(r: [f64; 2], twist: &[f64; 3]) -> [f64; 2] {
    [twist[0] - twist[2] * r[1], twist[1] + twist[2] * r[0]]
}

fn point_wrench(
    cp: &ContactPoint,
    center: &Pose,
    motion: &Motion,
    cfg: &SimConfig,
    n_contacts: f64,
) -> Wrench {
    let r = [cp.point[0] - center.x, cp.point[1] - center.z];
    let n = cp.normal;
    let v = point_velocity(r, &motion.normal);
    let v_n = v[0] * n[0] + v[1] * n[1];
    let f_n = (cfg.contact_stiffness * cp.depth - cfg.contact_damping * v_n).max(0.0);

    let t = [-n[1], n[0]];
    let v = point_velocity(r, &motion.tangential);
    let v_t = v[0] * t[0] + v[1] * t[1];
    let mu = if v_t.abs() < cfg.stiction_vel_eps {
        cfg.stiction_mu
    } else {
        cfg.friction_mu
    };
    let r_cross_t = r[0] * t[1] - r[1] * t[0];
    let inv_m_eff = 1.0 / cfg.mass + r_cross_t * r_cross_t / cfg.rot_inertia;
    // friction never exceeds the force that would stop the sliding within one step
    let stop = v_t.abs() / (inv_m_eff * cfg.dt * n_contacts);
    let f_t = -v_t.signum() * (mu * f_n).min(stop);
    let f_t = if v_t == 0.0 { 0.0 } else { f_t };

    let f = [f_n * n[0] + f_t * t[0], f_n * n[1] + f_t * t[1]];
    Wrench::new(f[0], f[1], r[0] * f[1] - r[1] * f[0])
}

/// Twists in the true frame used by the normal damping and by friction.
struct Motion {
    normal: [f64; 3],
    tangential: [f64; 3],
}

/// Contact wrench on the part at `pose` moving with `twist`, about the part center
/// and expressed in the reported goal frame.
///
/// Normal force is `k * depth - c * v_n` clamped at zero. Tangential force is
/// Coulomb friction, using `stiction_mu` below `stiction_vel_eps`, capped at the
/// force that brings the contact point to rest within one step.
pub fn contact_resolve(pose: &Pose, twist: &Twist, cfg: &SimConfig) -> Wrench {
    contact_resolve_split(pose, twist, twist, cfg)
}

/// Like [`contact_resolve`], with normal damping evaluated on `twist` and friction on
/// `slide`, the velocity the part would reach this step without contact.
pub(crate) fn contact_resolve_split(
    pose: &Pose,
    twist: &Twist,
    slide: &Twist,
    cfg: &SimConfig,
) -> Wrench {
    let pairs = contact_pairs(pose, cfg);
    let n_contacts = pairs
        .iter()
        .map(|(a, b)| a.is_some() as usize + b.is_some() as usize)
        .sum::<usize>();
    if n_contacts == 0 {
        return Wrench::ZERO;
    }
    let center = to_true_frame(pose, cfg);
    let to_true = |t: &Twist| {
        let lin = rotate_to_true([t.vx, t.vz], cfg);
        [lin[0], lin[1], t.omega]
    };
    let motion = Motion {
        normal: to_true(twist),
        tangential: to_true(slide),
    };
    let n = n_contacts as f64;
    let eval = |c: &Option<ContactPoint>| {
        c.map_or(Wrench::ZERO, |cp| {
            point_wrench(&cp, &center, &motion, cfg, n)
        })
    };
    let mut total = Wrench::ZERO;
    for (a, b) in &pairs {
        total = total + (eval(a) + eval(b));
    }
    let f = rotate_from_true([total.fx, total.fz], cfg);
    Wrench::new(f[0], f[1], total.tau)
}
