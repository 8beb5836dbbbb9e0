//! Kinematic models and the pairwise MRF built from them.
//!
//! Models are read from a small JSON document:
//!
//! ```json
//! {"root": "frame",
//!  "parts": [{"id": "frame", "geometry": {"kind": "box", "w": 0.4, "h": 0.4, "d": 0.7}}],
//!  "joints": [{"parent": "frame", "child": "drawer", "kind": "prismatic",
//!              "axis": [0, -1, 0], "limits": [0.0, 0.3],
//!              "origin": [0, 0, 0, 1, 0, 0, 0]}]}
//! ```
//!
//! Box dimensions are full extents along the part frame's x (`w`), y (`h`)
//! and z (`d`) axes; cylinders run along z. Joint values are keyed by the id
//! of the joint's child part.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ArticError, Result};
use crate::geometry::{dq_mul, DualQuaternion, Pose6D, Quat, Vec3};

pub const DEFAULT_SAMPLE_DENSITY: f64 = 500.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box { w: f64, h: f64, d: f64 },
    Cylinder { r: f64, l: f64 },
    PointSet { points: Vec<[f64; 3]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartGeometry {
    #[serde(flatten)]
    pub shape: Shape,
    /// Points per square meter when sampling the surface.
    #[serde(default = "default_density")]
    pub sample_density: f64,
}

fn default_density() -> f64 {
    DEFAULT_SAMPLE_DENSITY
}

impl PartGeometry {
    pub fn new(shape: Shape) -> Self {
        PartGeometry {
            shape,
            sample_density: DEFAULT_SAMPLE_DENSITY,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        match &self.shape {
            Shape::Box { w, h, d } => {
                positive("w", *w)?;
                positive("h", *h)?;
                positive("d", *d)?;
            }
            Shape::Cylinder { r, l } => {
                positive("r", *r)?;
                positive("l", *l)?;
            }
            Shape::PointSet { points } => {
                if points.is_empty() {
                    return Err("point_set must not be empty".into());
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err("point_set contains non-finite coordinates".into());
                }
            }
        }
        positive("sample_density", self.sample_density)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Prismatic,
    Revolute,
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub id: String,
    pub geometry: PartGeometry,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub parent: String,
    pub child: String,
    pub kind: JointKind,
    pub axis: Vec3,
    pub limit_lo: f64,
    pub limit_hi: f64,
    /// Child frame relative to the parent at zero displacement.
    pub origin: Pose6D,
}

impl Joint {
    pub fn articulation(&self) -> Articulation {
        Articulation {
            kind: self.kind,
            axis: self.axis,
            lo: self.limit_lo,
            hi: self.limit_hi,
            origin: self
                .origin
                .to_dq()
                .expect("joint origin validated at construction"),
        }
    }
}

/// Everything the pairwise potential needs to know about one joint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Articulation {
    pub kind: JointKind,
    pub axis: Vec3,
    pub lo: f64,
    pub hi: f64,
    pub origin: DualQuaternion,
}

impl Articulation {
    /// Pure joint motion by `u` along (prismatic) or about (revolute) the axis.
    pub fn displacement(&self, u: f64) -> DualQuaternion {
        match self.kind {
            JointKind::Prismatic => DualQuaternion::from_translation(self.axis * u),
            JointKind::Revolute => DualQuaternion::from_rotation(Quat::from_axis_angle(self.axis, u)),
            JointKind::Fixed => DualQuaternion::IDENTITY,
        }
    }

    /// Child pose in the parent frame at joint value `u`: `origin ∘ displacement(u)`.
    pub fn relative(&self, u: f64) -> DualQuaternion {
        match self.kind {
            JointKind::Fixed => self.origin,
            _ => dq_mul(&self.origin, &self.displacement(u)),
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.kind == JointKind::Fixed
    }

    pub fn limits_as_dq(&self) -> (DualQuaternion, DualQuaternion) {
        (self.relative(self.lo), self.relative(self.hi))
    }
}

pub fn limits_as_dq(j: &Joint) -> (DualQuaternion, DualQuaternion) {
    j.articulation().limits_as_dq()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicModel {
    pub root: String,
    pub parts: Vec<Part>,
    pub joints: Vec<Joint>,
    part_index: HashMap<String, usize>,
    /// Joint indices ordered so that every parent is placed before its children.
    fk_order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    root: String,
    parts: Vec<PartDoc>,
    #[serde(default)]
    joints: Vec<JointDoc>,
}

#[derive(Serialize, Deserialize)]
struct PartDoc {
    id: String,
    geometry: PartGeometry,
}

#[derive(Serialize, Deserialize)]
struct JointDoc {
    parent: String,
    child: String,
    kind: JointKind,
    #[serde(default)]
    axis: Option<[f64; 3]>,
    #[serde(default)]
    limits: Option<[f64; 2]>,
    #[serde(default)]
    origin: Option<[f64; 7]>,
}

impl KinematicModel {
    /// Validates the tree structure and builds the lookup tables.
    pub fn new(root: String, parts: Vec<Part>, joints: Vec<Joint>) -> Result<Self> {
        let mut part_index = HashMap::new();
        for (i, p) in parts.iter().enumerate() {
            p.geometry
                .validate()
                .map_err(|m| ArticError::parse(format!("parts[{i}].geometry"), m))?;
            if part_index.insert(p.id.clone(), i).is_some() {
                return Err(ArticError::parse(
                    format!("parts[{i}].id"),
                    format!("duplicate id `{}`", p.id),
                ));
            }
        }
        let root_idx = *part_index
            .get(&root)
            .ok_or_else(|| ArticError::parse("root", format!("missing root `{root}`")))?;

        let mut parent_of: Vec<Option<usize>> = vec![None; parts.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); parts.len()];
        for (j, joint) in joints.iter().enumerate() {
            let ctx = |field: &str| format!("joints[{j}].{field}");
            let lookup = |id: &String, field: &str| {
                part_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| ArticError::parse(ctx(field), format!("unknown part `{id}`")))
            };
            let p = lookup(&joint.parent, "parent")?;
            let c = lookup(&joint.child, "child")?;
            if p == c {
                return Err(ArticError::parse(
                    ctx("child"),
                    format!("self-loop on `{}`", joint.child),
                ));
            }
            if !(joint.limit_lo.is_finite() && joint.limit_hi.is_finite()) {
                return Err(ArticError::parse(ctx("limits"), "limits must be finite"));
            }
            if joint.limit_lo > joint.limit_hi {
                return Err(ArticError::parse(
                    ctx("limits"),
                    format!("limit_lo {} > limit_hi {}", joint.limit_lo, joint.limit_hi),
                ));
            }
            if joint.kind == JointKind::Fixed && (joint.limit_lo != 0.0 || joint.limit_hi != 0.0) {
                return Err(ArticError::parse(ctx("limits"), "fixed joints require limits [0, 0]"));
            }
            if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(ArticError::parse(ctx("axis"), "axis must be a unit vector"));
            }
            if (joint.origin.orientation().norm() - 1.0).abs() > 1e-9 {
                return Err(ArticError::parse(ctx("origin"), "origin quaternion must be unit"));
            }
            if c == root_idx || parent_of[c].is_some() {
                return Err(ArticError::parse(
                    ctx("child"),
                    format!("cycle detected: `{}` has more than one parent", joint.child),
                ));
            }
            parent_of[c] = Some(j);
            children[p].push(j);
        }

        let mut fk_order = Vec::with_capacity(joints.len());
        let mut seen = vec![false; parts.len()];
        seen[root_idx] = true;
        let mut queue = VecDeque::from([root_idx]);
        while let Some(n) = queue.pop_front() {
            for &j in &children[n] {
                let c = part_index[&joints[j].child];
                if !seen[c] {
                    seen[c] = true;
                    fk_order.push(j);
                    queue.push_back(c);
                }
            }
        }
        if let Some(unreached) = seen.iter().position(|s| !s) {
            let msg = if joints.len() + 1 == parts.len() {
                "cycle detected"
            } else {
                "graph is not connected"
            };
            return Err(ArticError::parse(
                format!("parts[{unreached}]"),
                format!("{msg}: `{}` unreachable from root", parts[unreached].id),
            ));
        }
        if joints.len() + 1 != parts.len() {
            return Err(ArticError::parse(
                "joints",
                format!("expected {} joints for {} parts, found {}", parts.len() - 1, parts.len(), joints.len()),
            ));
        }

        Ok(KinematicModel {
            root,
            parts,
            joints,
            part_index,
            fk_order,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_model(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ArticError::io(path, e))?;
        parse_model(&text).map_err(|e| match e {
            ArticError::Parse { context, message } => ArticError::Parse {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            root: self.root.clone(),
            parts: self
                .parts
                .iter()
                .map(|p| PartDoc {
                    id: p.id.clone(),
                    geometry: p.geometry.clone(),
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| JointDoc {
                    parent: j.parent.clone(),
                    child: j.child.clone(),
                    kind: j.kind,
                    axis: Some(j.axis.to_array()),
                    limits: Some([j.limit_lo, j.limit_hi]),
                    origin: Some(j.origin.to_array()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part_index(&self, id: &str) -> Option<usize> {
        self.part_index.get(id).copied()
    }

    pub fn root_index(&self) -> usize {
        self.part_index[&self.root]
    }

    /// Index of the joint whose child is part `part`, if any.
    pub fn parent_joint(&self, part: usize) -> Option<usize> {
        let id = &self.parts[part].id;
        self.joints.iter().position(|j| &j.child == id)
    }

    /// Indices of joints that carry a degree of freedom.
    pub fn movable_joints(&self) -> Vec<usize> {
        (0..self.joints.len())
            .filter(|&j| self.joints[j].kind != JointKind::Fixed)
            .collect()
    }

    pub fn fk_order(&self) -> &[usize] {
        &self.fk_order
    }
}

pub fn parse_model(text: &str) -> Result<KinematicModel> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| {
        ArticError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let parts = doc
        .parts
        .into_iter()
        .map(|p| Part {
            id: p.id,
            geometry: p.geometry,
        })
        .collect();
    let joints = doc
        .joints
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            let axis = Vec3::from_array(j.axis.unwrap_or([0.0, 0.0, 1.0]));
            let axis = axis
                .normalized()
                .ok_or_else(|| ArticError::parse(format!("joints[{i}].axis"), "axis must be non-zero"))?;
            let [limit_lo, limit_hi] = match (j.kind, j.limits) {
                (_, Some(l)) => l,
                (JointKind::Fixed, None) => [0.0, 0.0],
                (_, None) => {
                    return Err(ArticError::parse(
                        format!("joints[{i}].limits"),
                        "limits required for movable joints",
                    ))
                }
            };
            let mut origin = Pose6D::from(j.origin.unwrap_or(Pose6D::IDENTITY.to_array()));
            let n = origin.orientation().norm();
            if !(n > 0.0 && n.is_finite()) || !origin.position().is_finite() {
                return Err(ArticError::parse(format!("joints[{i}].origin"), "invalid origin pose"));
            }
            origin = Pose6D::new(origin.position(), origin.orientation().scale(1.0 / n));
            Ok(Joint {
                parent: j.parent,
                child: j.child,
                kind: j.kind,
                axis,
                limit_lo,
                limit_hi,
                origin,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    KinematicModel::new(doc.root, parts, joints)
}

/// One joint as an undirected MRF edge.
#[derive(Clone, Debug, PartialEq)]
pub struct MrfEdge {
    pub parent: usize,
    pub child: usize,
    pub articulation: Articulation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
}

/// Directed edge `from → to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedEdge {
    pub from: usize,
    pub to: usize,
    pub edge: usize,
}

impl DirectedEdge {
    /// Stable id in `0..2·|E|` used to derive per-edge random streams.
    pub fn id(&self, graph: &MrfGraph) -> usize {
        let e = &graph.edges[self.edge];
        2 * self.edge + usize::from(self.from == e.parent)
    }
}

/// Hidden pose node per part, observed node per part, one edge per joint.
#[derive(Clone, Debug, PartialEq)]
pub struct MrfGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<MrfEdge>,
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl MrfGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Both orientations of every edge, ordered by directed-edge id.
    pub fn directed_edges(&self) -> Vec<DirectedEdge> {
        self.edges
            .iter()
            .enumerate()
            .flat_map(|(i, e)| {
                [
                    DirectedEdge { from: e.child, to: e.parent, edge: i },
                    DirectedEdge { from: e.parent, to: e.child, edge: i },
                ]
            })
            .collect()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }
}

pub fn build_mrf(m: &KinematicModel) -> MrfGraph {
    let nodes: Vec<String> = m.parts.iter().map(|p| p.id.clone()).collect();
    let mut neighbors = vec![Vec::new(); nodes.len()];
    let edges = m
        .joints
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let parent = m.part_index[&j.parent];
            let child = m.part_index[&j.child];
            neighbors[parent].push(Neighbor { node: child, edge: i });
            neighbors[child].push(Neighbor { node: parent, edge: i });
            MrfEdge {
                parent,
                child,
                articulation: j.articulation(),
            }
        })
        .collect();
    MrfGraph {
        nodes,
        edges,
        neighbors,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    #[default]
    Strict,
    Clamp,
}

/// Part poses from joint values indexed by joint. Fixed joints ignore their value.
pub fn forward_kinematics_indexed(
    m: &KinematicModel,
    values: &[f64],
    root_pose: &DualQuaternion,
) -> Vec<DualQuaternion> {
    let mut poses = vec![DualQuaternion::IDENTITY; m.parts.len()];
    poses[m.root_index()] = *root_pose;
    for &j in &m.fk_order {
        let joint = &m.joints[j];
        let parent = m.part_index[&joint.parent];
        let child = m.part_index[&joint.child];
        let rel = joint.articulation().relative(values[j]);
        poses[child] = dq_mul(&poses[parent], &rel);
    }
    poses
}

/// Part poses keyed by part id. `config` maps a joint's child id to its value;
/// missing entries default to 0.
pub fn forward_kinematics(
    m: &KinematicModel,
    config: &BTreeMap<String, f64>,
    root_pose: &DualQuaternion,
    mode: LimitMode,
) -> Result<BTreeMap<String, DualQuaternion>> {
    for key in config.keys() {
        if !m.joints.iter().any(|j| &j.child == key) {
            return Err(ArticError::InvalidArgument(format!(
                "joint config names `{key}`, which is not the child of any joint"
            )));
        }
    }
    let values = joint_values(m, config, mode)?;
    let poses = forward_kinematics_indexed(m, &values, root_pose);
    Ok(m.parts
        .iter()
        .zip(poses)
        .map(|(p, dq)| (p.id.clone(), dq))
        .collect())
}

/// Joint values indexed by joint, checked (or clamped) against the limits.
pub fn joint_values(
    m: &KinematicModel,
    config: &BTreeMap<String, f64>,
    mode: LimitMode,
) -> Result<Vec<f64>> {
    m.joints
        .iter()
        .map(|j| {
            if j.kind == JointKind::Fixed {
                return Ok(0.0);
            }
            let v = config.get(&j.child).copied().unwrap_or(0.0);
            if !v.is_finite() {
                return Err(ArticError::InvalidArgument(format!("joint `{}` value is not finite", j.child)));
            }
            if v < j.limit_lo || v > j.limit_hi {
                match mode {
                    LimitMode::Strict => {
                        return Err(ArticError::OutOfRange {
                            joint: j.child.clone(),
                            value: v,
                            lo: j.limit_lo,
                            hi: j.limit_hi,
                        })
                    }
                    LimitMode::Clamp => return Ok(v.clamp(j.limit_lo, j.limit_hi)),
                }
            }
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::dq_distance;

    const CABINET: &str = r#"{
      "root": "frame",
      "parts": [
        {"id": "frame", "geometry": {"kind": "box", "w": 0.45, "h": 0.4, "d": 0.7}},
        {"id": "drawer1", "geometry": {"kind": "box", "w": 0.4, "h": 0.36, "d": 0.2}},
        {"id": "drawer2", "geometry": {"kind": "box", "w": 0.4, "h": 0.36, "d": 0.2}},
        {"id": "drawer3", "geometry": {"kind": "box", "w": 0.4, "h": 0.36, "d": 0.2}}
      ],
      "joints": [
        {"parent": "frame", "child": "drawer1", "kind": "prismatic", "axis": [0, -1, 0],
         "limits": [0.0, 0.3], "origin": [0, -0.02, 0.22, 1, 0, 0, 0]},
        {"parent": "frame", "child": "drawer2", "kind": "prismatic", "axis": [0, -1, 0],
         "limits": [0.0, 0.3], "origin": [0, -0.02, 0.0, 1, 0, 0, 0]},
        {"parent": "frame", "child": "drawer3", "kind": "prismatic", "axis": [0, -1, 0],
         "limits": [0.0, 0.3], "origin": [0, -0.02, -0.22, 1, 0, 0, 0]}
      ]
    }"#;

    fn cabinet() -> KinematicModel {
        parse_model(CABINET).unwrap()
    }

    fn parse_err(text: &str) -> String {
        match parse_model(text) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected parse error"),
        }
    }

    #[test]
    fn cabinet_parses() {
        let m = cabinet();
        assert_eq!(m.len(), 4);
        assert_eq!(m.joints.len(), 3);
        assert!(m.joints.iter().all(|j| j.kind == JointKind::Prismatic));
    }

    #[test]
    fn single_part_model() {
        let m = parse_model(
            r#"{"root": "a", "parts": [{"id": "a", "geometry": {"kind": "cylinder", "r": 0.1, "l": 0.5}}]}"#,
        )
        .unwrap();
        let g = build_mrf(&m);
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn invalid_models_rejected() {
        let part = |id: &str| format!(r#"{{"id": "{id}", "geometry": {{"kind": "box", "w": 1, "h": 1, "d": 1}}}}"#);
        let self_loop = format!(
            r#"{{"root": "a", "parts": [{}, {}], "joints": [{{"parent": "a", "child": "a", "kind": "fixed"}}]}}"#,
            part("a"),
            part("b")
        );
        assert!(parse_err(&self_loop).contains("self-loop"));

        let dup = format!(r#"{{"root": "a", "parts": [{}, {}]}}"#, part("a"), part("a"));
        assert!(parse_err(&dup).contains("duplicate id"));

        let no_root = format!(r#"{{"root": "z", "parts": [{}]}}"#, part("a"));
        assert!(parse_err(&no_root).contains("missing root"));

        let limits = format!(
            r#"{{"root": "a", "parts": [{}, {}], "joints": [{{"parent": "a", "child": "b", "kind": "prismatic", "limits": [0.5, 0.1]}}]}}"#,
            part("a"),
            part("b")
        );
        let msg = parse_err(&limits);
        assert!(msg.contains("limit_lo") && msg.contains("joints[0].limits"), "{msg}");

        let cycle = format!(
            r#"{{"root": "a", "parts": [{}, {}, {}], "joints": [
                {{"parent": "b", "child": "c", "kind": "fixed"}},
                {{"parent": "c", "child": "b", "kind": "fixed"}}]}}"#,
            part("a"),
            part("b"),
            part("c")
        );
        assert!(parse_err(&cycle).contains("cycle"));

        let syntax = parse_err("{\n \"root\": ");
        assert!(syntax.contains("line 2"), "{syntax}");
    }

    #[test]
    fn serialize_round_trip() {
        let m = cabinet();
        let again = parse_model(&m.to_json()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn mrf_counts() {
        let g = build_mrf(&cabinet());
        assert_eq!((g.node_count(), g.edge_count()), (4, 3));
        assert_eq!(g.neighbors[0].len(), 3);
        assert_eq!(g.directed_edges().len(), 6);
        for e in &g.edges {
            let (a, b) = e.articulation.limits_as_dq();
            assert!(dq_distance(&a, &e.articulation.relative(0.0)).pos < 1e-12);
            assert!(dq_distance(&b, &e.articulation.relative(0.3)).pos < 1e-12);
        }
    }

    fn joint(kind: JointKind, axis: Vec3, lo: f64, hi: f64, origin: Pose6D) -> Joint {
        Joint {
            parent: "a".into(),
            child: "b".into(),
            kind,
            axis,
            limit_lo: lo,
            limit_hi: hi,
            origin,
        }
    }

    #[test]
    fn limits_examples() {
        let (a, b) = limits_as_dq(&joint(JointKind::Prismatic, Vec3::Z, 0.0, 0.4, Pose6D::IDENTITY));
        assert_eq!(a, DualQuaternion::IDENTITY);
        assert!(b.translation().distance(Vec3::new(0.0, 0.0, 0.4)) < 1e-12);

        let (_, b) = limits_as_dq(&joint(JointKind::Revolute, Vec3::Z, 0.0, FRAC_PI_2, Pose6D::IDENTITY));
        let expect = DualQuaternion::from_rotation(Quat::from_axis_angle(Vec3::Z, FRAC_PI_2));
        let d = dq_distance(&b, &expect);
        assert!(d.pos < 1e-12 && d.ori < 1e-12);

        let origin = Pose6D::new(Vec3::new(0.1, 0.0, 0.0), Quat::IDENTITY);
        let (a, b) = limits_as_dq(&joint(JointKind::Fixed, Vec3::Z, 0.0, 0.0, origin));
        assert_eq!(a, b);
        assert!(a.translation().distance(Vec3::new(0.1, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn fk_zero_config_is_origin_chain() {
        let m = cabinet();
        let poses = forward_kinematics(&m, &BTreeMap::new(), &DualQuaternion::IDENTITY, LimitMode::Strict).unwrap();
        assert_eq!(poses["frame"], DualQuaternion::IDENTITY);
        assert!(poses["drawer3"].translation().distance(Vec3::new(0.0, -0.02, -0.22)) < 1e-12);
    }

    #[test]
    fn fk_prismatic_displacement() {
        let m = cabinet();
        let root = Pose6D::new(Vec3::new(1.0, 2.0, 0.3), Quat::from_axis_angle(Vec3::Z, 0.7))
            .to_dq()
            .unwrap();
        let zero = forward_kinematics(&m, &BTreeMap::new(), &root, LimitMode::Strict).unwrap();
        let cfg = BTreeMap::from([("drawer1".to_string(), 0.3)]);
        let open = forward_kinematics(&m, &cfg, &root, LimitMode::Strict).unwrap();
        let d = dq_distance(&zero["drawer1"], &open["drawer1"]);
        assert!((d.pos - 0.3).abs() < 1e-12 && d.ori < 1e-12);
        assert_eq!(zero["drawer2"], open["drawer2"]);
    }

    #[test]
    fn fk_limit_modes() {
        let m = cabinet();
        let cfg = BTreeMap::from([("drawer2".to_string(), 0.5)]);
        let err = forward_kinematics(&m, &cfg, &DualQuaternion::IDENTITY, LimitMode::Strict);
        assert!(matches!(err, Err(ArticError::OutOfRange { .. })));
        let clamped = forward_kinematics(&m, &cfg, &DualQuaternion::IDENTITY, LimitMode::Clamp).unwrap();
        let full = BTreeMap::from([("drawer2".to_string(), 0.3)]);
        let expect = forward_kinematics(&m, &full, &DualQuaternion::IDENTITY, LimitMode::Strict).unwrap();
        assert_eq!(clamped, expect);
    }

    fn axis_angle_matrix(axis: Vec3, angle: f64, t: Vec3) -> Matrix4<f64> {
        let a = nalgebra::Unit::new_normalize(nalgebra::Vector3::new(axis.x, axis.y, axis.z));
        let r = nalgebra::Rotation3::from_axis_angle(&a, angle);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        m[(0, 3)] = t.x;
        m[(1, 3)] = t.y;
        m[(2, 3)] = t.z;
        m
    }

    #[test]
    fn fk_matches_matrix_chain() {
        // a -(revolute x)-> b -(prismatic z)-> c -(revolute y)-> d
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let origins: Vec<(Vec3, f64, Vec3)> = (0..3)
            .map(|_| {
                (
                    Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                    rng.gen_range(-1.0..1.0),
                    Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                )
            })
            .collect();
        let kinds = [
            (JointKind::Revolute, Vec3::X),
            (JointKind::Prismatic, Vec3::Z),
            (JointKind::Revolute, Vec3::Y),
        ];
        let names = ["a", "b", "c", "d"];
        let parts = names
            .iter()
            .map(|n| Part {
                id: n.to_string(),
                geometry: PartGeometry::new(Shape::Box { w: 0.1, h: 0.1, d: 0.1 }),
            })
            .collect();
        let joints = (0..3)
            .map(|i| {
                let (oaxis, oangle, ot) = origins[i];
                Joint {
                    parent: names[i].into(),
                    child: names[i + 1].into(),
                    kind: kinds[i].0,
                    axis: kinds[i].1,
                    limit_lo: -1.0,
                    limit_hi: 1.0,
                    origin: Pose6D::new(ot, Quat::from_axis_angle(oaxis, oangle)),
                }
            })
            .collect();
        let m = KinematicModel::new("a".into(), parts, joints).unwrap();
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cfg: BTreeMap<String, f64> = (0..3).map(|i| (names[i + 1].to_string(), q[i])).collect();
            let root_axis = Vec3::new(rng.gen(), rng.gen(), 1.0);
            let root_angle = rng.gen_range(-3.0..3.0);
            let root_t = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let root = Pose6D::new(root_t, Quat::from_axis_angle(root_axis, root_angle))
                .to_dq()
                .unwrap();
            let poses = forward_kinematics(&m, &cfg, &root, LimitMode::Strict).unwrap();

            let mut chain = axis_angle_matrix(root_axis, root_angle, root_t);
            for i in 0..3 {
                let (oaxis, oangle, ot) = origins[i];
                let disp = match kinds[i].0 {
                    JointKind::Prismatic => axis_angle_matrix(Vec3::Z, 0.0, kinds[i].1 * q[i]),
                    _ => axis_angle_matrix(kinds[i].1, q[i], Vec3::ZERO),
                };
                chain = chain * axis_angle_matrix(oaxis, oangle, ot) * disp;
                let got = poses[names[i + 1]].to_matrix();
                let got = Matrix4::from_fn(|r, c| got[r][c]);
                assert!((got - chain).abs().max() < 1e-9);
            }
        }
    }

    #[test]
    fn prismatic_fk_is_monotone() {
        let m = cabinet();
        let root = DualQuaternion::IDENTITY;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (a, b) = (rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3));
            let pa = forward_kinematics(&m, &BTreeMap::from([("drawer2".into(), a)]), &root, LimitMode::Strict).unwrap();
            let pb = forward_kinematics(&m, &BTreeMap::from([("drawer2".into(), b)]), &root, LimitMode::Strict).unwrap();
            assert!((dq_distance(&pa["drawer2"], &pb["drawer2"]).pos - (a - b).abs()).abs() < 1e-12);
        }
    }
}
