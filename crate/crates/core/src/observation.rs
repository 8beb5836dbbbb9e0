//! Synthetic observations: surface sampling, scene rendering, noise and occlusion.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ArticError, Result};
use crate::geometry::{DualQuaternion, Pose6D, Vec3};
use crate::model::{forward_kinematics, KinematicModel, LimitMode, PartGeometry, Shape};
use crate::random::{self, DOMAIN_NOISE, DOMAIN_PART_SAMPLING};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Source part index per point. Generation metadata; inference never reads it.
    pub labels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points, labels: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        let first = *self.points.first()?;
        let (mut lo, mut hi) = (first, first);
        for p in &self.points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        Some(Aabb {
            min: lo.to_array(),
            max: hi.to_array(),
        })
    }

    pub fn as_arrays(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.to_array()).collect()
    }

    pub fn transformed(&self, pose: &DualQuaternion) -> PointCloud {
        let tf = pose.to_transform();
        PointCloud {
            points: self.points.iter().map(|&p| tf.apply(p)).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn extend(&mut self, other: PointCloud) {
        let offset = self.points.len();
        match (&mut self.labels, other.labels) {
            (Some(mine), Some(theirs)) => mine.extend(theirs),
            (None, None) => {}
            (mine, theirs) => {
                let mut l = mine.take().unwrap_or_else(|| vec![usize::MAX; offset]);
                l.extend(theirs.unwrap_or_else(|| vec![usize::MAX; other.points.len()]));
                *mine = Some(l);
            }
        }
        self.points.extend(other.points);
    }

    /// ASCII XYZ: one `x y z` triple per line, `#` lines are comments.
    pub fn to_xyz(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 48);
        for p in &self.points {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
        out
    }

    pub fn from_xyz(text: &str) -> Result<PointCloud> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ArticError::parse(format!("line {}", n + 1), format!("{e}")))?;
            let [x, y, z] = vals[..] else {
                return Err(ArticError::parse(
                    format!("line {}", n + 1),
                    format!("expected 3 values, found {}", vals.len()),
                ));
            };
            let p = Vec3::new(x, y, z);
            if !p.is_finite() {
                return Err(ArticError::parse(format!("line {}", n + 1), "non-finite coordinate"));
            }
            points.push(p);
        }
        Ok(PointCloud::new(points))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PointCloud> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ArticError::io(path, e))?;
        PointCloud::from_xyz(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_xyz()).map_err(|e| ArticError::io(path, e))
    }
}

/// Axis-aligned box in world coordinates, bounds inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn contains(&self, p: Vec3) -> bool {
        let p = p.to_array();
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Grows every side by `frac` of the box extent along that axis.
    pub fn padded(&self, frac: f64) -> Aabb {
        let mut out = *self;
        for i in 0..3 {
            let pad = (self.max[i] - self.min[i]) * frac;
            out.min[i] -= pad;
            out.max[i] += pad;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let mut p = [0.0; 3];
        for i in 0..3 {
            p[i] = if self.max[i] > self.min[i] {
                rng.gen_range(self.min[i]..=self.max[i])
            } else {
                self.min[i]
            };
        }
        Vec3::from_array(p)
    }
}

/// Rectangle patch `center + s·u + t·v`, `s ∈ [-a/2, a/2]`, `t ∈ [-b/2, b/2]`.
struct Patch {
    center: Vec3,
    u: Vec3,
    v: Vec3,
    a: f64,
    b: f64,
    kind: PatchKind,
}

enum PatchKind {
    Flat,
    /// Cylinder side: `s` is arc length around z at radius `radius`.
    Lateral { radius: f64 },
    /// Disk of radius `radius`, sampled area-uniformly.
    Disk { radius: f64 },
}

impl Patch {
    fn area(&self) -> f64 {
        match self.kind {
            PatchKind::Disk { radius } => std::f64::consts::PI * radius * radius,
            _ => self.a * self.b,
        }
    }

    /// Maps unit-square coordinates onto the surface.
    fn point(&self, s: f64, t: f64) -> Vec3 {
        match self.kind {
            PatchKind::Flat => self.center + self.u * ((s - 0.5) * self.a) + self.v * ((t - 0.5) * self.b),
            PatchKind::Lateral { radius } => {
                let theta = s * std::f64::consts::TAU;
                Vec3::new(radius * theta.cos(), radius * theta.sin(), self.center.z + (t - 0.5) * self.b)
            }
            PatchKind::Disk { radius } => {
                let r = radius * s.sqrt();
                let theta = t * std::f64::consts::TAU;
                self.center + Vec3::new(r * theta.cos(), r * theta.sin(), 0.0)
            }
        }
    }
}

fn patches(shape: &Shape) -> Vec<Patch> {
    match *shape {
        Shape::Box { w, h, d } => {
            let (hx, hy, hz) = (w / 2.0, h / 2.0, d / 2.0);
            let flat = |center: Vec3, u: Vec3, v: Vec3, a: f64, b: f64| Patch {
                center,
                u,
                v,
                a,
                b,
                kind: PatchKind::Flat,
            };
            vec![
                flat(Vec3::new(hx, 0.0, 0.0), Vec3::Y, Vec3::Z, h, d),
                flat(Vec3::new(-hx, 0.0, 0.0), Vec3::Y, Vec3::Z, h, d),
                flat(Vec3::new(0.0, hy, 0.0), Vec3::X, Vec3::Z, w, d),
                flat(Vec3::new(0.0, -hy, 0.0), Vec3::X, Vec3::Z, w, d),
                flat(Vec3::new(0.0, 0.0, hz), Vec3::X, Vec3::Y, w, h),
                flat(Vec3::new(0.0, 0.0, -hz), Vec3::X, Vec3::Y, w, h),
            ]
        }
        Shape::Cylinder { r, l } => {
            let disk = |z: f64| Patch {
                center: Vec3::new(0.0, 0.0, z),
                u: Vec3::X,
                v: Vec3::Y,
                a: r * std::f64::consts::PI.sqrt(),
                b: r * std::f64::consts::PI.sqrt(),
                kind: PatchKind::Disk { radius: r },
            };
            vec![
                Patch {
                    center: Vec3::ZERO,
                    u: Vec3::X,
                    v: Vec3::Z,
                    a: std::f64::consts::TAU * r,
                    b: l,
                    kind: PatchKind::Lateral { radius: r },
                },
                disk(l / 2.0),
                disk(-l / 2.0),
            ]
        }
        Shape::PointSet { .. } => Vec::new(),
    }
}

/// Splits `total` points across patches proportionally to area (largest remainder).
fn allocate(total: usize, areas: &[f64]) -> Vec<usize> {
    let sum: f64 = areas.iter().sum();
    let exact: Vec<f64> = areas.iter().map(|a| a / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

fn stratified<R: Rng + ?Sized>(patch: &Patch, n: usize, rng: &mut R, out: &mut Vec<Vec3>) {
    if n == 0 {
        return;
    }
    let nu = ((n as f64 * patch.a / patch.b).sqrt().round() as usize).clamp(1, n);
    let nv = n.div_ceil(nu);
    let mut cells: Vec<usize> = (0..nu * nv).collect();
    let (chosen, _) = cells.partial_shuffle(rng, n);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    for c in chosen {
        let (iu, iv) = (c % nu, c / nu);
        let s = (iu as f64 + rng.gen::<f64>()) / nu as f64;
        let t = (iv as f64 + rng.gen::<f64>()) / nv as f64;
        out.push(patch.point(s, t));
    }
}

/// Surface area of the primitive (zero for point sets).
pub fn surface_area(g: &PartGeometry) -> f64 {
    patches(&g.shape).iter().map(Patch::area).sum()
}

/// Points on the part surface, expressed in the part frame.
pub fn sample_surface(g: &PartGeometry, density: f64, seed: u64) -> Result<Vec<Vec3>> {
    g.validate().map_err(ArticError::InvalidArgument)?;
    if !(density > 0.0 && density.is_finite()) {
        return Err(ArticError::InvalidArgument(format!("density must be positive, got {density}")));
    }
    if let Shape::PointSet { points } = &g.shape {
        return Ok(points.iter().map(|p| Vec3::from_array(*p)).collect());
    }
    let patches = patches(&g.shape);
    let areas: Vec<f64> = patches.iter().map(Patch::area).collect();
    let total = ((density * areas.iter().sum::<f64>()).round() as usize).max(1);
    let counts = allocate(total, &areas);
    let mut rng = random::stream(seed, &[DOMAIN_PART_SAMPLING]);
    let mut points = Vec::with_capacity(total);
    for (patch, n) in patches.iter().zip(counts) {
        stratified(patch, n, &mut rng, &mut points);
    }
    Ok(points)
}

/// Stratified surface samples of a part placed at `pose`.
pub fn sample_part_cloud(g: &PartGeometry, pose: &DualQuaternion, density: f64, seed: u64) -> Result<PointCloud> {
    let local = PointCloud::new(sample_surface(g, density, seed)?);
    Ok(local.transformed(pose))
}

/// Exactly the points outside every box, in their original order.
pub fn occlude(c: &PointCloud, boxes: &[Aabb]) -> PointCloud {
    if boxes.is_empty() {
        return c.clone();
    }
    let keep: Vec<bool> = c.points.iter().map(|p| !boxes.iter().any(|b| b.contains(*p))).collect();
    PointCloud {
        points: c.points.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect(),
        labels: c
            .labels
            .as_ref()
            .map(|l| l.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect()),
    }
}

/// Serializable scene description; the kinematic model is supplied separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub joint_config: BTreeMap<String, f64>,
    #[serde(default)]
    pub root_pose: Pose6D,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub occlusions: Vec<Aabb>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides every part's own sample density when set.
    #[serde(default)]
    pub density: Option<f64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            joint_config: BTreeMap::new(),
            root_pose: Pose6D::IDENTITY,
            noise_sigma: 0.0,
            occlusions: Vec::new(),
            seed: 0,
            density: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneSpec<'a> {
    pub model: &'a KinematicModel,
    pub config: SceneConfig,
}

/// Renders the scene: per-part surface samples at the forward-kinematics poses,
/// i.i.d. Gaussian noise per coordinate, then occlusion. Also returns the
/// ground-truth part poses.
pub fn render_scene(s: &SceneSpec) -> Result<(PointCloud, BTreeMap<String, DualQuaternion>)> {
    let cfg = &s.config;
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(ArticError::InvalidArgument(format!("noise_sigma must be >= 0, got {}", cfg.noise_sigma)));
    }
    let root = cfg.root_pose.to_dq()?;
    let poses = forward_kinematics(s.model, &cfg.joint_config, &root, LimitMode::Strict)?;
    let mut cloud = PointCloud {
        points: Vec::new(),
        labels: Some(Vec::new()),
    };
    for (i, part) in s.model.parts.iter().enumerate() {
        let density = cfg.density.unwrap_or(part.geometry.sample_density);
        let seed = random::derive_seed(cfg.seed, &[i as u64]);
        let mut pc = sample_part_cloud(&part.geometry, &poses[&part.id], density, seed)?;
        pc.labels = Some(vec![i; pc.len()]);
        cloud.extend(pc);
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        let mut rng = random::stream(cfg.seed, &[DOMAIN_NOISE]);
        for p in &mut cloud.points {
            *p = *p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    let cloud = occlude(&cloud, &cfg.occlusions);
    if cloud.is_empty() {
        return Err(ArticError::EmptyObservation("every point was occluded".into()));
    }
    Ok((cloud, poses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use crate::model::parse_model;

    fn unit_box() -> PartGeometry {
        PartGeometry::new(Shape::Box { w: 1.0, h: 1.0, d: 1.0 })
    }

    fn on_box_surface(p: Vec3, half: [f64; 3], tol: f64) -> bool {
        let a = [p.x.abs(), p.y.abs(), p.z.abs()];
        let inside = (0..3).all(|i| a[i] <= half[i] + tol);
        let on_face = (0..3).any(|i| (a[i] - half[i]).abs() <= tol);
        inside && on_face
    }

    /// Distance from `p` to the surface of a centered box.
    fn box_surface_distance(p: Vec3, half: [f64; 3]) -> f64 {
        let a = [p.x.abs(), p.y.abs(), p.z.abs()];
        let outside: [f64; 3] = std::array::from_fn(|i| (a[i] - half[i]).max(0.0));
        let out = Vec3::from_array(outside).norm();
        if out > 0.0 {
            out
        } else {
            (0..3).map(|i| half[i] - a[i]).fold(f64::INFINITY, f64::min)
        }
    }

    #[test]
    fn unit_box_count_and_membership() {
        let pc = sample_part_cloud(&unit_box(), &DualQuaternion::IDENTITY, 600.0, 1).unwrap();
        assert!((pc.len() as i64 - 3600).abs() <= 1);
        assert!(pc.points.iter().all(|p| on_box_surface(*p, [0.5; 3], 1e-9)));
    }

    #[test]
    fn translation_equivariance() {
        let base = sample_part_cloud(&unit_box(), &DualQuaternion::IDENTITY, 600.0, 4).unwrap();
        let t = DualQuaternion::from_translation(Vec3::X);
        let moved = sample_part_cloud(&unit_box(), &t, 600.0, 4).unwrap();
        for (a, b) in base.points.iter().zip(&moved.points) {
            assert_eq!(*a + Vec3::X, *b);
        }
    }

    #[test]
    fn cylinder_surface() {
        let g = PartGeometry::new(Shape::Cylinder { r: 0.1, l: 0.5 });
        let pc = sample_part_cloud(&g, &DualQuaternion::IDENTITY, 2000.0, 2).unwrap();
        let area = 2.0 * std::f64::consts::PI * 0.1 * 0.5 + 2.0 * std::f64::consts::PI * 0.01;
        assert!((pc.len() as f64 - 2000.0 * area).abs() <= 1.0);
        for p in &pc.points {
            let radial = (p.x * p.x + p.y * p.y).sqrt();
            let lateral = (radial - 0.1).abs() < 1e-9 && p.z.abs() <= 0.25 + 1e-9;
            let cap = (p.z.abs() - 0.25).abs() < 1e-9 && radial <= 0.1 + 1e-9;
            assert!(lateral || cap, "{p:?}");
        }
    }

    #[test]
    fn stratification_one_point_per_cell() {
        // 600 points on the top face fill a 24 x 25 grid of strata, one point each.
        let g = PartGeometry::new(Shape::Box { w: 1.0, h: 1.0, d: 1.0 });
        let pts = sample_surface(&g, 600.0, 9).unwrap();
        let top: Vec<&Vec3> = pts.iter().filter(|p| (p.z - 0.5).abs() < 1e-12).collect();
        assert_eq!(top.len(), 600);
        let mut cells: Vec<(usize, usize)> = top
            .iter()
            .map(|p| ((((p.x + 0.5) * 24.0) as usize).min(23), (((p.y + 0.5) * 25.0) as usize).min(24)))
            .collect();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), 600);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let g = PartGeometry::new(Shape::Box { w: 0.0, h: 1.0, d: 1.0 });
        assert!(sample_part_cloud(&g, &DualQuaternion::IDENTITY, 10.0, 0).is_err());
        assert!(sample_part_cloud(&unit_box(), &DualQuaternion::IDENTITY, 0.0, 0).is_err());
        let g = PartGeometry::new(Shape::PointSet { points: vec![] });
        assert!(sample_part_cloud(&g, &DualQuaternion::IDENTITY, 10.0, 0).is_err());
    }

    #[test]
    fn occlude_examples() {
        let pc = sample_part_cloud(&unit_box(), &DualQuaternion::IDENTITY, 100.0, 3).unwrap();
        assert_eq!(occlude(&pc, &[]), pc);
        let all = Aabb {
            min: [-1e9; 3],
            max: [1e9; 3],
        };
        assert!(occlude(&pc, &[all]).is_empty());
        let half = Aabb {
            min: [0.0, -1.0, -1.0],
            max: [1.0, 1.0, 1.0],
        };
        let kept = occlude(&pc, &[half]);
        let brute: Vec<Vec3> = pc
            .points
            .iter()
            .copied()
            .filter(|p| !(p.x >= 0.0 && p.x <= 1.0 && p.y.abs() <= 1.0 && p.z.abs() <= 1.0))
            .collect();
        assert_eq!(kept.points, brute);
    }

    fn cabinet() -> KinematicModel {
        parse_model(
            r#"{"root": "frame",
              "parts": [
                {"id": "frame", "geometry": {"kind": "box", "w": 0.45, "h": 0.4, "d": 0.7}},
                {"id": "drawer1", "geometry": {"kind": "box", "w": 0.4, "h": 0.36, "d": 0.2}},
                {"id": "drawer2", "geometry": {"kind": "box", "w": 0.4, "h": 0.36, "d": 0.2}}],
              "joints": [
                {"parent": "frame", "child": "drawer1", "kind": "prismatic", "axis": [0, -1, 0],
                 "limits": [0.0, 0.3], "origin": [0, -0.02, 0.22, 1, 0, 0, 0]},
                {"parent": "frame", "child": "drawer2", "kind": "prismatic", "axis": [0, -1, 0],
                 "limits": [0.0, 0.3], "origin": [0, -0.02, -0.11, 1, 0, 0, 0]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn clean_scene_points_lie_on_parts() {
        let m = cabinet();
        let spec = SceneSpec {
            model: &m,
            config: SceneConfig {
                joint_config: BTreeMap::from([("drawer1".into(), 0.2)]),
                root_pose: Pose6D::new(Vec3::new(0.3, 0.1, 0.5), Quat::from_axis_angle(Vec3::Z, 0.4)),
                seed: 5,
                ..Default::default()
            },
        };
        let (cloud, poses) = render_scene(&spec).unwrap();
        let labels = cloud.labels.as_ref().unwrap();
        for (p, &l) in cloud.points.iter().zip(labels) {
            let part = &m.parts[l];
            let local = poses[&part.id].inverse().apply(*p);
            let Shape::Box { w, h, d } = part.geometry.shape else { unreachable!() };
            assert!(on_box_surface(local, [w / 2.0, h / 2.0, d / 2.0], 1e-9));
        }
        let (again, _) = render_scene(&spec).unwrap();
        assert_eq!(again, cloud);
    }

    #[test]
    fn occlusion_box_removes_part() {
        let m = cabinet();
        let mut config = SceneConfig {
            noise_sigma: 0.003,
            seed: 1,
            ..Default::default()
        };
        let (full, poses) = render_scene(&SceneSpec { model: &m, config: config.clone() }).unwrap();
        let c = poses["drawer2"].translation();
        config.occlusions = vec![Aabb {
            min: [c.x - 0.22, c.y - 0.2, c.z - 0.12],
            max: [c.x + 0.22, c.y + 0.2, c.z + 0.12],
        }];
        let (cloud, _) = render_scene(&SceneSpec { model: &m, config }).unwrap();
        assert!(cloud.len() < full.len());
        assert!(!cloud.labels.unwrap().contains(&2));
    }

    #[test]
    fn all_occluded_is_error() {
        let m = cabinet();
        let config = SceneConfig {
            occlusions: vec![Aabb {
                min: [-10.0; 3],
                max: [10.0; 3],
            }],
            ..Default::default()
        };
        assert!(matches!(
            render_scene(&SceneSpec { model: &m, config }),
            Err(ArticError::EmptyObservation(_))
        ));
    }

    #[test]
    fn noise_matches_folded_normal() {
        let big = parse_model(
            r#"{"root": "b", "parts": [{"id": "b", "geometry": {"kind": "box", "w": 2, "h": 2, "d": 2, "sample_density": 2000}}]}"#,
        )
        .unwrap();
        let sigma = 0.005;
        let config = SceneConfig {
            noise_sigma: sigma,
            seed: 21,
            ..Default::default()
        };
        let (cloud, _) = render_scene(&SceneSpec { model: &big, config }).unwrap();
        let mean = cloud.points.iter().map(|p| box_surface_distance(*p, [1.0; 3])).sum::<f64>() / cloud.len() as f64;
        // Monte-Carlo estimate of E|N(0, sigma^2)| from an independent generator.
        let mut rng = random::stream(99, &[]);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mc = (0..200_000).map(|_| f64::abs(normal.sample(&mut rng))).sum::<f64>() / 200_000.0;
        assert!((mc - sigma * (2.0 / std::f64::consts::PI).sqrt()).abs() < 2e-5);
        assert!((mean - mc).abs() / mc < 0.03, "mean {mean} vs {mc}");
    }

    #[test]
    fn xyz_round_trip_and_errors() {
        let pc = sample_part_cloud(&unit_box(), &DualQuaternion::IDENTITY, 20.0, 3).unwrap();
        let text = format!("# header\n{}", pc.to_xyz());
        assert_eq!(PointCloud::from_xyz(&text).unwrap().points, pc.points);
        assert!(PointCloud::from_xyz("1 2\n").is_err());
        assert!(PointCloud::from_xyz("1 2 x\n").is_err());
    }
}
