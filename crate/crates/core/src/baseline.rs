//! Whole-object particle filter: the state is the root pose plus one value
//! per movable joint, weighted by the unary of the union of all part clouds.

use std::f64::consts::PI;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ArticError, Result};
use crate::geometry::{DualQuaternion, Quat, Vec3};
use crate::model::{forward_kinematics_indexed, KinematicModel};
use crate::observation::Aabb;
use crate::pmpnbp::{systematic_resample, Anneal};
use crate::potentials::UnaryModel;
use crate::random::{self, DOMAIN_FILTER};

/// Root pose as position and ZYX Euler angles, plus movable joint values.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectState {
    pub position: Vec3,
    /// (φ, ψ, χ): rotations about z, then y, then x, each in (−π, π].
    pub euler: [f64; 3],
    /// Indexed like `KinematicModel::movable_joints()`.
    pub joints: Vec<f64>,
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub fn euler_zyx_to_quat(e: [f64; 3]) -> Quat {
    Quat::from_axis_angle(Vec3::Z, e[0]) * Quat::from_axis_angle(Vec3::Y, e[1]) * Quat::from_axis_angle(Vec3::X, e[2])
}

impl ObjectState {
    pub fn dimension(&self) -> usize {
        6 + self.joints.len()
    }

    pub fn root_pose(&self) -> DualQuaternion {
        DualQuaternion::from_rotation_translation(euler_zyx_to_quat(self.euler), self.position)
    }

    /// Part poses indexed like `model.parts`.
    pub fn part_poses(&self, model: &KinematicModel) -> Vec<DualQuaternion> {
        let mut values = vec![0.0; model.joints.len()];
        for (v, j) in self.joints.iter().zip(model.movable_joints()) {
            values[j] = *v;
        }
        forward_kinematics_indexed(model, &values, &self.root_pose())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<ObjectState>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Highest-weight particle; ties go to the lowest index.
    pub fn best(&self) -> &ObjectState {
        let best = (0..self.weights.len()).fold(0, |b, i| if self.weights[i] > self.weights[b] { i } else { b });
        &self.particles[best]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfParams {
    pub particles: usize,
    pub steps: usize,
    pub diffusion_pos: f64,
    /// Standard deviation of each Euler angle, radians.
    pub diffusion_ori: f64,
    /// Standard deviation of each joint value, meters or radians.
    pub diffusion_joint: f64,
    pub anneal: Anneal,
    pub workspace_padding: f64,
}

impl Default for PfParams {
    fn default() -> Self {
        PfParams {
            particles: 400,
            steps: 100,
            diffusion_pos: 0.01,
            diffusion_ori: 0.05,
            diffusion_joint: 0.01,
            anneal: Anneal::default(),
            workspace_padding: 0.1,
        }
    }
}

impl PfParams {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.steps == 0 {
            return Err(ArticError::InvalidArgument("particles and steps must be >= 1".into()));
        }
        for (name, v) in [
            ("diffusion_pos", self.diffusion_pos),
            ("diffusion_ori", self.diffusion_ori),
            ("diffusion_joint", self.diffusion_joint),
            ("workspace_padding", self.workspace_padding),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ArticError::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        self.anneal.validate()
    }

    /// Diffusion `(pos, ori, joint)` at step `n` (1-based).
    pub fn diffusion_at(&self, n: usize) -> Diffusion {
        let scale = self.anneal.diffusion_scale(n, self.steps);
        Diffusion {
            pos: self.diffusion_pos * scale,
            ori: self.diffusion_ori * scale,
            joint: self.diffusion_joint * scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diffusion {
    pub pos: f64,
    pub ori: f64,
    pub joint: f64,
}

fn joint_limits(model: &KinematicModel) -> Vec<(f64, f64)> {
    model
        .movable_joints()
        .into_iter()
        .map(|j| (model.joints[j].limit_lo, model.joints[j].limit_hi))
        .collect()
}

/// Uniform root positions over `bounds`, random orientations, uniform joint values.
pub fn pf_init<R: Rng + ?Sized>(model: &KinematicModel, bounds: &Aabb, n: usize, rng: &mut R) -> ParticleSet {
    let limits = joint_limits(model);
    let particles = (0..n)
        .map(|_| {
            let position = bounds.sample(rng);
            let euler = [
                wrap_angle(rng.gen_range(-PI..PI)),
                wrap_angle(rng.gen_range(-PI..PI)),
                wrap_angle(rng.gen_range(-PI..PI)),
            ];
            let joints = limits
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect();
            ObjectState {
                position,
                euler,
                joints,
            }
        })
        .collect();
    ParticleSet {
        particles,
        weights: vec![1.0 / n as f64; n],
    }
}

/// Weights proportional to the unary of the whole rendered object; returns
/// whether the weights were degenerate and reset to uniform.
pub fn pf_weight(ps: &mut ParticleSet, model: &KinematicModel, unary: &UnaryModel) -> bool {
    pf_weight_scaled(ps, model, unary, 1.0)
}

/// [`pf_weight`] with the log-likelihood multiplied by `factor`.
pub fn pf_weight_scaled(ps: &mut ParticleSet, model: &KinematicModel, unary: &UnaryModel, factor: f64) -> bool {
    let logs: Vec<f64> = ps
        .particles
        .par_iter()
        .map(|s| factor * unary.log_potential_union(&s.part_poses(model)))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = ps.len();
    if !max.is_finite() {
        warn!("particle filter weights are all zero; resetting to uniform");
        ps.weights = vec![1.0 / n as f64; n];
        return true;
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    ps.weights = w.into_iter().map(|x| x / total).collect();
    false
}

/// Systematic resampling, Gaussian diffusion of every state dimension,
/// joint clamping, then reweighting.
pub fn pf_step<R: Rng + ?Sized>(
    ps: &ParticleSet,
    model: &KinematicModel,
    unary: &UnaryModel,
    d: Diffusion,
    rng: &mut R,
) -> (ParticleSet, bool) {
    pf_step_scaled(ps, model, unary, d, 1.0, rng)
}

/// [`pf_step`] with the log-likelihood multiplied by `factor`.
pub fn pf_step_scaled<R: Rng + ?Sized>(
    ps: &ParticleSet,
    model: &KinematicModel,
    unary: &UnaryModel,
    d: Diffusion,
    factor: f64,
    rng: &mut R,
) -> (ParticleSet, bool) {
    let n = ps.len();
    let limits = joint_limits(model);
    let noise = |sigma: f64, rng: &mut R| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
        } else {
            0.0
        }
    };
    let particles = systematic_resample(&ps.weights, n, rng)
        .into_iter()
        .map(|i| {
            let s = &ps.particles[i];
            let position = s.position + Vec3::new(noise(d.pos, rng), noise(d.pos, rng), noise(d.pos, rng));
            let euler = [
                wrap_angle(s.euler[0] + noise(d.ori, rng)),
                wrap_angle(s.euler[1] + noise(d.ori, rng)),
                wrap_angle(s.euler[2] + noise(d.ori, rng)),
            ];
            let joints = s
                .joints
                .iter()
                .zip(&limits)
                .map(|(v, &(lo, hi))| (v + noise(d.joint, rng)).clamp(lo, hi))
                .collect();
            ObjectState {
                position,
                euler,
                joints,
            }
        })
        .collect();
    let mut next = ParticleSet {
        particles,
        weights: vec![1.0 / n as f64; n],
    };
    let degenerate = pf_weight_scaled(&mut next, model, unary, factor);
    (next, degenerate)
}

/// Runs the filter for `params.steps` steps with its own random stream;
/// `on_step` sees the weighted set after initialization (step 0) and after every step.
pub fn run_filter<F: FnMut(usize, &ParticleSet, bool)>(
    model: &KinematicModel,
    unary: &UnaryModel,
    workspace: &Aabb,
    params: &PfParams,
    seed: u64,
    mut on_step: F,
) -> Result<ParticleSet> {
    params.validate()?;
    let mut rng = random::stream(seed, &[DOMAIN_FILTER]);
    let mut ps = pf_init(model, workspace, params.particles, &mut rng);
    let degenerate = pf_weight(&mut ps, model, unary);
    on_step(0, &ps, degenerate);
    for n in 1..=params.steps {
        let factor = params.anneal.unary_scale(n, params.steps);
        let (next, degenerate) = pf_step_scaled(&ps, model, unary, params.diffusion_at(n), factor, &mut rng);
        ps = next;
        on_step(n, &ps, degenerate);
    }
    Ok(ps)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::parse_model;
    use crate::observation::PointCloud;
    use crate::potentials::UnaryParams;

    fn model() -> KinematicModel {
        parse_model(
            r#"{"root": "frame", "parts": [
                {"id": "frame", "geometry": {"kind": "box", "w": 0.3, "h": 0.3, "d": 0.3}},
                {"id": "a", "geometry": {"kind": "box", "w": 0.2, "h": 0.2, "d": 0.1}},
                {"id": "b", "geometry": {"kind": "box", "w": 0.2, "h": 0.2, "d": 0.1}},
                {"id": "c", "geometry": {"kind": "box", "w": 0.2, "h": 0.2, "d": 0.1}}],
              "joints": [
                {"parent": "frame", "child": "a", "kind": "prismatic", "axis": [0, -1, 0], "limits": [0, 0.3]},
                {"parent": "frame", "child": "b", "kind": "prismatic", "axis": [0, -1, 0], "limits": [0, 0.3]},
                {"parent": "frame", "child": "c", "kind": "prismatic", "axis": [0, -1, 0], "limits": [0, 0.3]}]}"#,
        )
        .unwrap()
    }

    fn unit_bounds() -> Aabb {
        Aabb {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    #[test]
    fn init_examples() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = pf_init(&m, &unit_bounds(), 1, &mut rng);
        assert_eq!(one.weights, vec![1.0]);
        assert_eq!(one.particles[0].dimension(), 9);

        let padded = unit_bounds().padded(0.1);
        let many = pf_init(&m, &padded, 400, &mut rng);
        for s in &many.particles {
            assert!(s.joints.iter().all(|v| (0.0..=0.3).contains(v)));
            assert!(padded.contains(s.position));
            assert!(s.euler.iter().all(|a| *a > -PI && *a <= PI));
        }
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn euler_zyx_matches_composed_rotations() {
        let q = euler_zyx_to_quat([0.3, 0.0, 0.0]);
        let v = q.rotate(Vec3::X);
        assert!((v.x - 0.3f64.cos()).abs() < 1e-12 && (v.y - 0.3f64.sin()).abs() < 1e-12);
        // Roll is applied first: x-rotation, then z.
        let q = euler_zyx_to_quat([PI / 2.0, 0.0, PI / 2.0]);
        let v = q.rotate(Vec3::Y);
        assert!((v - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    fn scene(m: &KinematicModel) -> (UnaryModel, ObjectState) {
        let truth = ObjectState {
            position: Vec3::new(0.5, 0.5, 0.5),
            euler: [0.2, 0.0, 0.0],
            joints: vec![0.1, 0.2, 0.0],
        };
        let poses = truth.part_poses(m);
        let mut cloud = PointCloud::default();
        for (i, part) in m.parts.iter().enumerate() {
            let pc = crate::observation::sample_part_cloud(&part.geometry, &poses[i], 800.0, i as u64).unwrap();
            cloud.extend(pc);
        }
        (UnaryModel::new(m, &cloud, UnaryParams::default()).unwrap(), truth)
    }

    #[test]
    fn truth_outweighs_random_particles() {
        let m = model();
        let (unary, truth) = scene(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = pf_init(&m, &unit_bounds(), 50, &mut rng);
        ps.particles[17] = truth.clone();
        ps.particles.push(truth);
        ps.weights.push(0.0);
        pf_weight(&mut ps, &m, &unary);
        assert!((ps.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let top = ps.weights.iter().copied().fold(0.0, f64::max);
        assert_eq!(ps.weights[17], top);
        assert_eq!(ps.weights[17], ps.weights[50]);
    }

    #[test]
    fn step_without_diffusion_copies_states() {
        let m = model();
        let (unary, _) = scene(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = pf_init(&m, &unit_bounds(), 30, &mut rng);
        pf_weight(&mut ps, &m, &unary);
        let zero = Diffusion {
            pos: 0.0,
            ori: 0.0,
            joint: 0.0,
        };
        let (next, _) = pf_step(&ps, &m, &unary, zero, &mut rng);
        assert_eq!(next.len(), 30);
        assert!(next.particles.iter().all(|s| ps.particles.contains(s)));
    }

    #[test]
    fn joints_are_clamped() {
        let m = model();
        let (unary, mut truth) = scene(&m);
        truth.joints = vec![0.3, 0.3, 0.3];
        let ps = ParticleSet {
            particles: vec![truth; 50],
            weights: vec![0.02; 50],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Diffusion {
            pos: 0.01,
            ori: 0.05,
            joint: 0.1,
        };
        let (next, _) = pf_step(&ps, &m, &unary, d, &mut rng);
        assert!(next.particles.iter().all(|s| s.joints.iter().all(|v| (0.0..=0.3).contains(v))));
    }

    #[test]
    fn run_is_deterministic() {
        let m = model();
        let (unary, _) = scene(&m);
        let p = PfParams {
            particles: 20,
            steps: 3,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let a = run_filter(&m, &unary, &unit_bounds(), &p, 5, |n, _, _| seen.push(n)).unwrap();
        let b = run_filter(&m, &unary, &unit_bounds(), &p, 5, |_, _, _| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }
}
