//! Dual-quaternion algebra for rigid-body poses.
//!
//! A pose is stored as `real + ε dual` where `real` is the unit rotation
//! quaternion and `dual = ½ t * real` encodes the translation `t`.
//! Composition follows the homogeneous-matrix convention: `a.mul(&b)` is the
//! transform that applies `b` first and then `a`, so a child pose is
//! `parent.mul(&relative)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ArticError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);
    pub const ZERO: Quat = Quat::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn pure(v: Vec3) -> Self {
        Quat::new(0.0, v.x, v.y, v.z)
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Quat::IDENTITY;
        };
        let (s, c) = (0.5 * angle).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Uniformly distributed random rotation (Shoemake's subgroup algorithm).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        Quat::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin())
    }

    /// Rotation about a uniformly random axis with a normally distributed angle.
    pub fn random_perturbation<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Self {
        if sigma <= 0.0 {
            return Quat::IDENTITY;
        }
        let axis = loop {
            let v = Vec3::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            if let Some(a) = v.normalized() {
                break a;
            }
        };
        let angle: f64 = StandardNormal.sample(rng);
        Quat::from_axis_angle(axis, angle * sigma)
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Sign representative with `w >= 0`, ties broken on x, then y, then z.
    pub fn canonical(self) -> Self {
        let lead = [self.w, self.x, self.y, self.z]
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(0.0);
        if lead < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Rotate a vector by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Geodesic angle in `[0, π]` between the rotations of two unit quaternions.
    pub fn angle_to(self, o: Quat) -> f64 {
        let rel = self.conjugate() * o;
        2.0 * rel.vector().norm().atan2(rel.w.abs())
    }

    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl Add for Quat {
    type Output = Quat;
    fn add(self, o: Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quat {
    type Output = Quat;
    fn sub(self, o: Quat) -> Quat {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Rigid transform `real + ε dual`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualQuaternion {
    pub real: Quat,
    pub dual: Quat,
}

impl Default for DualQuaternion {
    fn default() -> Self {
        DualQuaternion::IDENTITY
    }
}

impl DualQuaternion {
    pub const IDENTITY: DualQuaternion = DualQuaternion {
        real: Quat::IDENTITY,
        dual: Quat::ZERO,
    };

    pub const fn new(real: Quat, dual: Quat) -> Self {
        DualQuaternion { real, dual }
    }

    /// Pure translation `[1,0,0,0][0, x/2, y/2, z/2]`.
    pub fn from_translation(t: Vec3) -> Self {
        DualQuaternion::new(Quat::IDENTITY, Quat::pure(t * 0.5))
    }

    /// Pure rotation `[qw,qx,qy,qz][0,0,0,0]`.
    pub fn from_rotation(q: Quat) -> Self {
        DualQuaternion::new(q, Quat::ZERO)
    }

    /// `translation(t) * rotation(q)`: rotate first, then translate.
    pub fn from_rotation_translation(q: Quat, t: Vec3) -> Self {
        DualQuaternion::new(q, Quat::pure(t) * q.scale(0.5))
    }

    pub fn translation(&self) -> Vec3 {
        (self.dual * self.real.conjugate()).vector() * 2.0
    }

    pub fn rotation(&self) -> Quat {
        self.real
    }

    pub fn is_finite(&self) -> bool {
        self.real.is_finite() && self.dual.is_finite()
    }

    pub fn mul(&self, o: &DualQuaternion) -> DualQuaternion {
        dq_mul(self, o)
    }

    pub fn inverse(&self) -> DualQuaternion {
        dq_conjugate(self)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        dq_apply(self, p)
    }

    pub fn normalize(&self) -> Result<DualQuaternion> {
        dq_normalize(self)
    }

    pub fn to_pose(&self) -> Pose6D {
        dq_to_pose(self)
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.real.to_matrix(),
            translation: self.translation(),
        }
    }

    /// Homogeneous 4×4 matrix of the transform.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.real.to_matrix();
        let t = self.translation();
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Bit pattern of the eight components, usable as an exact hash key.
    pub fn bits(&self) -> [u64; 8] {
        let (r, d) = (self.real, self.dual);
        [r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z].map(f64::to_bits)
    }
}

/// 6-D pose `(x, y, z, qw, qx, qy, qz)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 7]", into = "[f64; 7]")]
pub struct Pose6D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl Default for Pose6D {
    fn default() -> Self {
        Pose6D::IDENTITY
    }
}

impl Pose6D {
    pub const IDENTITY: Pose6D = Pose6D {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        qw: 1.0,
        qx: 0.0,
        qy: 0.0,
        qz: 0.0,
    };

    pub fn new(t: Vec3, q: Quat) -> Self {
        Pose6D {
            x: t.x,
            y: t.y,
            z: t.z,
            qw: q.w,
            qx: q.x,
            qy: q.y,
            qz: q.z,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn orientation(&self) -> Quat {
        Quat::new(self.qw, self.qx, self.qy, self.qz)
    }

    pub fn to_dq(&self) -> Result<DualQuaternion> {
        dq_from_pose(self)
    }

    pub fn to_array(self) -> [f64; 7] {
        [self.x, self.y, self.z, self.qw, self.qx, self.qy, self.qz]
    }
}

impl From<[f64; 7]> for Pose6D {
    fn from(a: [f64; 7]) -> Self {
        Pose6D {
            x: a[0],
            y: a[1],
            z: a[2],
            qw: a[3],
            qx: a[4],
            qy: a[5],
            qz: a[6],
        }
    }
}

impl From<Pose6D> for [f64; 7] {
    fn from(p: Pose6D) -> Self {
        p.to_array()
    }
}

impl fmt::Display for Pose6D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(
            f,
            "{} {} {} {} {} {} {}",
            a[0], a[1], a[2], a[3], a[4], a[5], a[6]
        )
    }
}

impl FromStr for Pose6D {
    type Err = ArticError;

    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| ArticError::parse("pose", format!("`{tok}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let arr: [f64; 7] = values.as_slice().try_into().map_err(|_| {
            ArticError::parse("pose", format!("expected 7 values, found {}", values.len()))
        })?;
        Ok(Pose6D::from(arr))
    }
}

/// Pose distance split into a positional and an angular component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDistance {
    pub pos: f64,
    pub ori: f64,
}

/// Rotation matrix plus translation, for transforming many points with one pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl RigidTransform {
    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + self.translation.x,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + self.translation.y,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + self.translation.z,
        )
    }
}

fn check_finite(a: &DualQuaternion) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(ArticError::InvalidArgument(
            "non-finite dual quaternion component".into(),
        ))
    }
}

/// `dq_pos(x,y,z) * dq_ori(q)`.
pub fn dq_from_pose(p: &Pose6D) -> Result<DualQuaternion> {
    if !p.to_array().iter().all(|v| v.is_finite()) {
        return Err(ArticError::InvalidArgument("non-finite pose component".into()));
    }
    let q = p.orientation();
    let n = q.norm();
    if n == 0.0 {
        return Err(ArticError::DegeneratePose);
    }
    let dq_pos = DualQuaternion::from_translation(p.position());
    let dq_ori = DualQuaternion::from_rotation(q.scale(1.0 / n));
    Ok(dq_mul(&dq_pos, &dq_ori))
}

pub fn dq_to_pose(a: &DualQuaternion) -> Pose6D {
    Pose6D::new(a.translation(), a.real)
}

/// Dual-quaternion product; the result applies `b` first, then `a`.
pub fn dq_mul(a: &DualQuaternion, b: &DualQuaternion) -> DualQuaternion {
    DualQuaternion::new(a.real * b.real, a.real * b.dual + a.dual * b.real)
}

/// Quaternion conjugate of both parts, which is the inverse transform for unit inputs.
pub fn dq_conjugate(a: &DualQuaternion) -> DualQuaternion {
    DualQuaternion::new(a.real.conjugate(), a.dual.conjugate())
}

/// Transform a point with the sandwich product `a * p * a_c`, where `a_c` is
/// the combined quaternion/dual conjugate.
pub fn dq_apply(a: &DualQuaternion, p: Vec3) -> Vec3 {
    let point = DualQuaternion::new(Quat::IDENTITY, Quat::pure(p));
    let a_c = DualQuaternion::new(a.real.conjugate(), -a.dual.conjugate());
    dq_mul(&dq_mul(a, &point), &a_c).dual.vector()
}

/// Positional Euclidean distance plus geodesic rotation angle.
pub fn dq_distance(a: &DualQuaternion, b: &DualQuaternion) -> PoseDistance {
    let pos = a.translation().distance(b.translation());
    let ori = a.real.canonical().angle_to(b.real.canonical());
    PoseDistance { pos, ori }
}

/// Unit real part and a dual part orthogonal to it.
pub fn dq_normalize(a: &DualQuaternion) -> Result<DualQuaternion> {
    check_finite(a)?;
    let n = a.real.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(ArticError::DegeneratePose);
    }
    let real = a.real.scale(1.0 / n);
    let dual = a.dual.scale(1.0 / n);
    let dual = dual - real.scale(real.dot(dual));
    Ok(DualQuaternion::new(real, dual))
}
