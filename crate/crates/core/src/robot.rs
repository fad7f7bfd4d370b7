//! Planar kinematics of the rail-mounted three-joint robot: a prismatic
//! carriage `q1` along the rail followed by two revolute joints `q2`, `q3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of collision spheres approximating the robot body.
pub const N_SPHERES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointConfig {
    /// Rail position (m).
    pub q1: f64,
    /// Shoulder angle (rad).
    pub q2: f64,
    /// Elbow angle (rad).
    pub q3: f64,
}

impl JointConfig {
    pub const fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self { q1, q2, q3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.q1, self.q2, self.q3]
    }

    pub fn from_array(q: [f64; 3]) -> Self {
        Self { q1: q[0], q2: q[1], q3: q[2] }
    }
}

/// End-effector pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

/// Which rigid body a collision sphere is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Carriage,
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereMount {
    pub link: Link,
    /// Offset in the link frame (m); the link x-axis points along the link.
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotGeometry {
    pub rail_origin: [f64; 2],
    /// Rail direction as a heading angle (rad); 0 means the world x-axis.
    #[serde(default)]
    pub rail_heading: f64,
    pub upper_length: f64,
    pub lower_length: f64,
    pub spheres: Vec<SphereMount>,
    pub sphere_radius: f64,
}

impl Default for RobotGeometry {
    fn default() -> Self {
        let l1 = 1.0;
        let l2 = 0.8;
        let mut spheres = Vec::with_capacity(N_SPHERES);
        for x in [-0.45, -0.15, 0.15, 0.45] {
            spheres.push(SphereMount { link: Link::Carriage, offset: [x, 0.0] });
        }
        for k in 0..4 {
            spheres.push(SphereMount { link: Link::Upper, offset: [l1 * k as f64 / 3.0, 0.0] });
        }
        for k in 1..=4 {
            spheres.push(SphereMount { link: Link::Lower, offset: [l2 * k as f64 / 4.0, 0.0] });
        }
        Self {
            rail_origin: [0.0, -2.0],
            rail_heading: 0.0,
            upper_length: l1,
            lower_length: l2,
            spheres,
            sphere_radius: 0.4,
        }
    }
}

impl RobotGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.spheres.len() != N_SPHERES {
            return Err(Error::InvalidConfig(format!(
                "robot needs exactly {N_SPHERES} collision spheres, got {}",
                self.spheres.len()
            )));
        }
        if !(self.sphere_radius > 0.0) {
            return Err(Error::InvalidConfig("sphere radius must be positive".into()));
        }
        if !(self.upper_length > 0.0 && self.lower_length > 0.0) {
            return Err(Error::InvalidConfig("link lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Position/velocity/acceleration/jerk limits per joint, plus the end-effector
/// speed bound. Units: m or rad, per second powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub position_min: [f64; 3],
    pub position_max: [f64; 3],
    pub velocity_max: [f64; 3],
    pub acceleration_max: [f64; 3],
    pub jerk_max: [f64; 3],
    pub ee_speed_max: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            position_min: [-2.0, -PI, -PI],
            position_max: [2.0, PI, PI],
            velocity_max: [0.5; 3],
            acceleration_max: [2.0; 3],
            jerk_max: [20.0; 3],
            ee_speed_max: 0.6,
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<()> {
        for j in 0..3 {
            if !(self.position_max[j] > self.position_min[j]) {
                return Err(Error::InvalidConfig(format!("joint {} has an empty position range", j + 1)));
            }
            if !(self.velocity_max[j] > 0.0 && self.acceleration_max[j] > 0.0 && self.jerk_max[j] > 0.0) {
                return Err(Error::InvalidConfig(format!("joint {} limits must be positive", j + 1)));
            }
        }
        if !(self.ee_speed_max > 0.0) {
            return Err(Error::InvalidConfig("end-effector speed limit must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, q: &JointConfig) -> bool {
        let q = q.to_array();
        (0..3).all(|j| q[j] >= self.position_min[j] && q[j] <= self.position_max[j])
    }
}

/// End-effector pose together with the joint configuration that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub ee: Pose,
    pub joints: JointConfig,
}

impl RobotState {
    pub fn from_joints(joints: JointConfig, geom: &RobotGeometry) -> Self {
        Self { ee: forward_kinematics(&joints, geom), joints }
    }
}

/// Sines and cosines shared by every kinematic quantity at one configuration.
#[derive(Debug, Clone, Copy)]
pub struct Frames {
    pub base: [f64; 2],
    pub rail: [f64; 2],
    /// cos/sin of the upper link angle (heading + q2).
    pub upper: [f64; 2],
    /// cos/sin of the lower link angle (heading + q2 + q3).
    pub lower: [f64; 2],
    pub elbow: [f64; 2],
}

impl Frames {
    #[inline]
    pub fn new(q: &[f64; 3], geom: &RobotGeometry) -> Self {
        let (sh, ch) = geom.rail_heading.sin_cos();
        let base = [geom.rail_origin[0] + q[0] * ch, geom.rail_origin[1] + q[0] * sh];
        let (s1, c1) = (geom.rail_heading + q[1]).sin_cos();
        let (s2, c2) = (geom.rail_heading + q[1] + q[2]).sin_cos();
        let elbow = [base[0] + geom.upper_length * c1, base[1] + geom.upper_length * s1];
        Self { base, rail: [ch, sh], upper: [c1, s1], lower: [c2, s2], elbow }
    }

    #[inline]
    fn rotate(cs: [f64; 2], o: [f64; 2]) -> [f64; 2] {
        [cs[0] * o[0] - cs[1] * o[1], cs[1] * o[0] + cs[0] * o[1]]
    }

    #[inline]
    fn rotate_derivative(cs: [f64; 2], o: [f64; 2]) -> [f64; 2] {
        [-cs[1] * o[0] - cs[0] * o[1], cs[0] * o[0] - cs[1] * o[1]]
    }

    #[inline]
    pub fn sphere_center(&self, mount: &SphereMount) -> [f64; 2] {
        let (origin, cs) = match mount.link {
            Link::Carriage => (self.base, self.rail),
            Link::Upper => (self.base, self.upper),
            Link::Lower => (self.elbow, self.lower),
        };
        let r = Self::rotate(cs, mount.offset);
        [origin[0] + r[0], origin[1] + r[1]]
    }

    /// Columns d(center)/dq_j of a sphere center.
    #[inline]
    pub fn sphere_jacobian(&self, mount: &SphereMount, geom: &RobotGeometry) -> [[f64; 2]; 3] {
        match mount.link {
            Link::Carriage => [self.rail, [0.0; 2], [0.0; 2]],
            Link::Upper => [self.rail, Self::rotate_derivative(self.upper, mount.offset), [0.0; 2]],
            Link::Lower => {
                let d_lower = Self::rotate_derivative(self.lower, mount.offset);
                let l1 = geom.upper_length;
                [
                    self.rail,
                    [-l1 * self.upper[1] + d_lower[0], l1 * self.upper[0] + d_lower[1]],
                    d_lower,
                ]
            }
        }
    }

    #[inline]
    pub fn ee_position(&self, geom: &RobotGeometry) -> [f64; 2] {
        [
            self.elbow[0] + geom.lower_length * self.lower[0],
            self.elbow[1] + geom.lower_length * self.lower[1],
        ]
    }

    /// Row-major 3x3 end-effector Jacobian (rows x, y, theta).
    #[inline]
    pub fn jacobian(&self, geom: &RobotGeometry) -> [[f64; 3]; 3] {
        let (l1, l2) = (geom.upper_length, geom.lower_length);
        let [c1, s1] = self.upper;
        let [c2, s2] = self.lower;
        [
            [self.rail[0], -l1 * s1 - l2 * s2, -l2 * s2],
            [self.rail[1], l1 * c1 + l2 * c2, l2 * c2],
            [0.0, 1.0, 1.0],
        ]
    }

    /// Partial derivatives of the Jacobian with respect to q2 and q3.
    #[inline]
    pub fn jacobian_derivatives(&self, geom: &RobotGeometry) -> [[[f64; 3]; 3]; 2] {
        let (l1, l2) = (geom.upper_length, geom.lower_length);
        let [c1, s1] = self.upper;
        let [c2, s2] = self.lower;
        let d_q2 = [
            [0.0, -l1 * c1 - l2 * c2, -l2 * c2],
            [0.0, -l1 * s1 - l2 * s2, -l2 * s2],
            [0.0; 3],
        ];
        let d_q3 = [[0.0, -l2 * c2, -l2 * c2], [0.0, -l2 * s2, -l2 * s2], [0.0; 3]];
        [d_q2, d_q3]
    }
}

pub fn forward_kinematics(q: &JointConfig, geom: &RobotGeometry) -> Pose {
    let f = Frames::new(&q.to_array(), geom);
    let p = f.ee_position(geom);
    Pose { x: p[0], y: p[1], theta: geom.rail_heading + q.q2 + q.q3 }
}

pub fn jacobian(q: &JointConfig, geom: &RobotGeometry) -> [[f64; 3]; 3] {
    Frames::new(&q.to_array(), geom).jacobian(geom)
}

pub fn sphere_centers(q: &JointConfig, geom: &RobotGeometry) -> Vec<[f64; 2]> {
    let f = Frames::new(&q.to_array(), geom);
    geom.spheres.iter().map(|m| f.sphere_center(m)).collect()
}

/// Zero-order-hold joint integration; the pose is recomputed from the joints.
pub fn step_kinematics(x: &RobotState, u: [f64; 3], ts: f64, geom: &RobotGeometry) -> RobotState {
    let q = x.joints.to_array();
    let joints = JointConfig::from_array([q[0] + ts * u[0], q[1] + ts * u[1], q[2] + ts * u[2]]);
    RobotState::from_joints(joints, geom)
}

pub fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_chain_along_x() {
        let g = RobotGeometry::default();
        let p = forward_kinematics(&JointConfig::new(0.0, 0.0, 0.0), &g);
        assert!((p.x - 1.8).abs() < 1e-12 && (p.y + 2.0).abs() < 1e-12 && p.theta == 0.0);
    }

    #[test]
    fn chain_along_y() {
        let g = RobotGeometry::default();
        let p = forward_kinematics(&JointConfig::new(0.5, FRAC_PI_2, 0.0), &g);
        assert!((p.x - 0.5).abs() < 1e-12);
        assert!((p.y - (-2.0 + 1.8)).abs() < 1e-12);
        assert!((p.theta - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn jacobian_structure() {
        let g = RobotGeometry::default();
        let j = jacobian(&JointConfig::new(0.3, 1.1, -0.4), &g);
        assert_eq!([j[0][0], j[1][0], j[2][0]], [1.0, 0.0, 0.0]);
        let j0 = jacobian(&JointConfig::default(), &g);
        assert_eq!(j0[2], [0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_offset_sphere_sits_on_joint() {
        let g = RobotGeometry::default();
        let centers = sphere_centers(&JointConfig::default(), &g);
        // Upper-link spheres: offsets 0 and L1.
        assert_eq!(centers[4], [0.0, -2.0]);
        assert!((centers[7][0] - 1.0).abs() < 1e-12 && (centers[7][1] + 2.0).abs() < 1e-12);
        // Last lower-link sphere is the end effector.
        assert!((centers[11][0] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn step_identity_and_translation() {
        let g = RobotGeometry::default();
        let x = RobotState::from_joints(JointConfig::new(0.2, 0.3, -0.5), &g);
        assert_eq!(step_kinematics(&x, [0.0; 3], 0.05, &g), x);
        let y = step_kinematics(&x, [0.1, 0.0, 0.0], 0.05, &g);
        assert!((y.joints.q1 - 0.205).abs() < 1e-15);
        assert!((y.ee.x - x.ee.x - 0.005).abs() < 1e-12);
        assert!((y.ee.y - x.ee.y).abs() < 1e-12);
    }

    #[test]
    fn default_geometry_is_valid() {
        RobotGeometry::default().validate().unwrap();
        JointLimits::default().validate().unwrap();
        let mut g = RobotGeometry::default();
        g.spheres.pop();
        assert!(g.validate().is_err());
    }
}
