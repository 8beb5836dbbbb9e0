//! Unary likelihood against the observed cloud, the joint-limit pairwise
//! kernel, and sampling a neighbor pose across a joint.

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArticError, Result};
use crate::geometry::{dq_distance, dq_mul, DualQuaternion, Quat, Vec3};
use crate::model::{Articulation, KinematicModel, PartGeometry};
use crate::observation::{sample_surface, PointCloud};
use crate::random::{self, DOMAIN_TEMPLATE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnaryParams {
    /// Scaling factor in 1/m; negative so the likelihood decays with distance.
    pub lambda_r: f64,
    /// Density of the synthetic cloud rendered for each hypothesis, points/m².
    pub sample_density: f64,
    /// Per-point cap on the associated distance, meters.
    pub max_assoc_dist: f64,
}

impl Default for UnaryParams {
    fn default() -> Self {
        UnaryParams {
            lambda_r: -50.0,
            sample_density: 200.0,
            max_assoc_dist: 0.1,
        }
    }
}

impl UnaryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_r < 0.0 && self.lambda_r.is_finite()) {
            return Err(ArticError::InvalidArgument(format!("lambda_r must be negative, got {}", self.lambda_r)));
        }
        if !(self.max_assoc_dist > 0.0 && self.max_assoc_dist.is_finite()) {
            return Err(ArticError::InvalidArgument("max_assoc_dist must be positive".into()));
        }
        if !(self.sample_density > 0.0 && self.sample_density.is_finite()) {
            return Err(ArticError::InvalidArgument("sample_density must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairwiseParams {
    pub sigma_pos: f64,
    pub sigma_ori: f64,
}

impl Default for PairwiseParams {
    fn default() -> Self {
        PairwiseParams {
            sigma_pos: 0.02,
            sigma_ori: 0.1,
        }
    }
}

impl PairwiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_pos > 0.0 && self.sigma_ori > 0.0) {
            return Err(ArticError::InvalidArgument("pairwise sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Nearest-neighbor index over the observed cloud, built once per observation.
pub struct ObservationIndex {
    tree: ImmutableKdTree<f64, 3>,
    len: usize,
}

impl ObservationIndex {
    pub fn new(obs: &PointCloud) -> Result<Self> {
        if obs.is_empty() {
            return Err(ArticError::EmptyObservation("observation has no points".into()));
        }
        Ok(ObservationIndex {
            tree: ImmutableKdTree::new_from_slice(&obs.as_arrays()),
            len: obs.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn nearest_distance(&self, p: Vec3) -> f64 {
        self.tree
            .nearest_one::<SquaredEuclidean>(&p.to_array())
            .distance
            .sqrt()
    }
}

/// Mean over rendered points of the capped distance to the nearest observed point.
pub fn mean_assoc_distance(rendered: impl ExactSizeIterator<Item = Vec3>, index: &ObservationIndex, cap: f64) -> f64 {
    let n = rendered.len();
    if n == 0 {
        return cap;
    }
    rendered.map(|p| index.nearest_distance(p).min(cap)).sum::<f64>() / n as f64
}

const TEMPLATE_SEED: u64 = 0x7e3a_1c55;

/// Synthetic cloud of a part in its own frame, fixed per part geometry.
pub fn render_template(part: &PartGeometry, p: &UnaryParams) -> Result<Vec<Vec3>> {
    sample_surface(part, p.sample_density, random::derive_seed(TEMPLATE_SEED, &[DOMAIN_TEMPLATE]))
}

/// `exp(λ_r · D)` with `D` the capped mean render-to-observation distance.
pub fn unary_potential(
    pose: &DualQuaternion,
    part: &PartGeometry,
    obs: &ObservationIndex,
    p: &UnaryParams,
) -> Result<f64> {
    p.validate()?;
    let template = render_template(part, p)?;
    let tf = pose.to_transform();
    let d = mean_assoc_distance(template.iter().map(|&q| tf.apply(q)), obs, p.max_assoc_dist);
    Ok((p.lambda_r * d).exp())
}

/// Unary scoring for every part of a model against one observation.
pub struct UnaryModel {
    templates: Vec<Vec<Vec3>>,
    index: ObservationIndex,
    params: UnaryParams,
}

impl UnaryModel {
    pub fn new(model: &KinematicModel, obs: &PointCloud, params: UnaryParams) -> Result<Self> {
        params.validate()?;
        let templates = model
            .parts
            .iter()
            .map(|part| render_template(&part.geometry, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(UnaryModel {
            templates,
            index: ObservationIndex::new(obs)?,
            params,
        })
    }

    pub fn params(&self) -> &UnaryParams {
        &self.params
    }

    pub fn index(&self) -> &ObservationIndex {
        &self.index
    }

    pub fn template(&self, part: usize) -> &[Vec3] {
        &self.templates[part]
    }

    pub fn mean_distance(&self, part: usize, pose: &DualQuaternion) -> f64 {
        let tf = pose.to_transform();
        mean_assoc_distance(
            self.templates[part].iter().map(|&q| tf.apply(q)),
            &self.index,
            self.params.max_assoc_dist,
        )
    }

    /// `λ_r · D` for one part.
    pub fn log_potential(&self, part: usize, pose: &DualQuaternion) -> f64 {
        self.params.lambda_r * self.mean_distance(part, pose)
    }

    pub fn potential(&self, part: usize, pose: &DualQuaternion) -> f64 {
        self.log_potential(part, pose).exp()
    }

    /// Log-potential of the union of all part clouds, each part at its own pose.
    pub fn log_potential_union(&self, poses: &[DualQuaternion]) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        let cap = self.params.max_assoc_dist;
        for (template, pose) in self.templates.iter().zip(poses) {
            let tf = pose.to_transform();
            sum += template
                .iter()
                .map(|&q| self.index.nearest_distance(tf.apply(q)).min(cap))
                .sum::<f64>();
            n += template.len();
        }
        self.params.lambda_r * if n == 0 { cap } else { sum / n as f64 }
    }
}

/// Exponent of the joint-limit kernel for a child pose given its parent.
pub fn log_pairwise_potential(
    x_child: &DualQuaternion,
    x_parent: &DualQuaternion,
    edge: &Articulation,
    p: &PairwiseParams,
) -> f64 {
    let (dq_a, dq_b) = edge.limits_as_dq();
    let la = dq_mul(x_parent, &dq_a);
    let lb = dq_mul(x_parent, &dq_b);
    let a = dq_distance(x_child, &la);
    let b = dq_distance(x_child, &lb);
    let c = dq_distance(&la, &lb);
    let dp = a.pos + b.pos - c.pos;
    let dor = a.ori + b.ori - c.ori;
    -(dp * dp) / (2.0 * p.sigma_pos * p.sigma_pos) - (dor * dor) / (2.0 * p.sigma_ori * p.sigma_ori)
}

/// `ψ(X_child | X_parent)`: equals 1 when the child lies between the two limit poses.
pub fn pairwise_potential(
    x_child: &DualQuaternion,
    x_parent: &DualQuaternion,
    edge: &Articulation,
    p: &PairwiseParams,
) -> f64 {
    log_pairwise_potential(x_child, x_parent, edge, p).exp()
}

/// Limit poses of one parent hypothesis, ready for repeated kernel evaluations.
#[derive(Clone, Copy, Debug)]
pub struct LimitPoses {
    ta: Vec3,
    qa: Quat,
    tb: Vec3,
    qb: Quat,
}

/// Joint-limit kernel with the per-edge constants hoisted out.
#[derive(Clone, Copy, Debug)]
pub struct PairwiseKernel {
    dq_a: DualQuaternion,
    dq_b: DualQuaternion,
    c_pos: f64,
    c_ori: f64,
    inv_2var_pos: f64,
    inv_2var_ori: f64,
}

#[inline]
fn fast_angle(a: Quat, b: Quat) -> f64 {
    2.0 * a.dot(b).abs().min(1.0).acos()
}

impl PairwiseKernel {
    pub fn new(edge: &Articulation, p: &PairwiseParams) -> Self {
        let (dq_a, dq_b) = edge.limits_as_dq();
        // C is invariant to the parent pose, so it is computed once.
        let c = dq_distance(&dq_a, &dq_b);
        PairwiseKernel {
            dq_a,
            dq_b,
            c_pos: c.pos,
            c_ori: fast_angle(dq_a.real, dq_b.real),
            inv_2var_pos: 1.0 / (2.0 * p.sigma_pos * p.sigma_pos),
            inv_2var_ori: 1.0 / (2.0 * p.sigma_ori * p.sigma_ori),
        }
    }

    pub fn limits_at(&self, parent: &DualQuaternion) -> LimitPoses {
        let la = dq_mul(parent, &self.dq_a);
        let lb = dq_mul(parent, &self.dq_b);
        LimitPoses {
            ta: la.translation(),
            qa: la.real,
            tb: lb.translation(),
            qb: lb.real,
        }
    }

    /// Log-kernel for a child with translation `t` and rotation `q`.
    #[inline]
    pub fn log_eval(&self, limits: &LimitPoses, t: Vec3, q: Quat) -> f64 {
        let dp = t.distance(limits.ta) + t.distance(limits.tb) - self.c_pos;
        let dor = fast_angle(q, limits.qa) + fast_angle(q, limits.qb) - self.c_ori;
        -(dp * dp) * self.inv_2var_pos - (dor * dor) * self.inv_2var_ori
    }
}

/// Which end of the joint is being sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Toward {
    Child,
    Parent,
}

/// Samples the neighbor across a joint: `u ~ Uniform[lo, hi]`, relative pose
/// `origin ∘ displacement(u)`, composed onto `x_given`. Sampling toward the
/// parent composes the inverse relative pose.
pub fn pairwise_sample<R: Rng + ?Sized>(
    x_given: &DualQuaternion,
    edge: &Articulation,
    toward: Toward,
    rng: &mut R,
) -> DualQuaternion {
    let u = if edge.is_fixed() || edge.hi <= edge.lo {
        edge.lo
    } else {
        rng.gen_range(edge.lo..=edge.hi)
    };
    let rel = edge.relative(u);
    match toward {
        Toward::Child => dq_mul(x_given, &rel),
        Toward::Parent => dq_mul(x_given, &rel.inverse()),
    }
}
