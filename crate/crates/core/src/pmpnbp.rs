//! Pull message-passing nonparametric belief propagation.
//!
//! Messages are weighted pose samples `{(w, μ)}`; beliefs are unweighted
//! pose samples. A message `t → s` draws its poses from the *receiver's*
//! previous belief and only computes weights at the sender: the unary
//! likelihood of a pose for `t` sampled across the joint, times the
//! compatibility of `μ` with every other message arriving at `t`. Beliefs
//! pool the incoming messages, reweight by the receiver's unary, then
//! resample and diffuse.
//!
//! Each iteration computes every message from the previous iteration's
//! beliefs and messages, then every belief, so the order of work inside an
//! iteration does not matter. Every message and belief draws from its own
//! random stream derived from `(seed, iteration, edge or node)`.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ArticError, Result};
use crate::geometry::{DualQuaternion, Pose6D, Quat, Vec3};
use crate::model::{DirectedEdge, MrfGraph};
use crate::observation::Aabb;
use crate::potentials::{PairwiseKernel, PairwiseParams, Toward, UnaryModel, UnaryParams};
use crate::random::{self, DOMAIN_BELIEF, DOMAIN_MESSAGE, DOMAIN_PRIOR};

/// Default positional standard-deviation threshold for a belief to count as certain.
pub const CERTAINTY_THRESHOLD: f64 = 0.0025;

/// Message `from → to`: `M` weighted poses of the receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub poses: Vec<DualQuaternion>,
    pub weights: Vec<f64>,
}

impl Message {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub node: usize,
    pub samples: Vec<DualQuaternion>,
    /// Effective sample size of the pooled weights before resampling.
    pub ess: Option<f64>,
}

impl Belief {
    pub fn new(node: usize, samples: Vec<DualQuaternion>) -> Self {
        Belief {
            node,
            samples,
            ess: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// Uniform positions over `bounds` (default: the observation's bounding
    /// box padded by `workspace_padding`) with uniformly random orientations.
    UniformOverWorkspace {
        #[serde(default)]
        bounds: Option<Aabb>,
    },
    /// Poses drawn uniformly from a per-part list.
    Informed { poses: BTreeMap<String, Vec<Pose6D>> },
}

impl Default for Prior {
    fn default() -> Self {
        Prior::UniformOverWorkspace { bounds: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceParams {
    /// Samples per message, `M`.
    pub particles: usize,
    pub iterations: usize,
    /// Diffusion standard deviation on each translation axis, meters.
    pub diffusion_pos: f64,
    /// Diffusion standard deviation of the random-axis rotation angle, radians.
    pub diffusion_ori: f64,
    pub anneal: Anneal,
    pub unary: UnaryParams,
    pub pairwise: PairwiseParams,
    pub seed: u64,
    pub prior: Prior,
    /// Fractional padding of the observation bounds for the uniform prior.
    pub workspace_padding: f64,
    pub certainty_threshold: f64,
}

impl Default for InferenceParams {
    fn default() -> Self {
        InferenceParams {
            particles: 400,
            iterations: 100,
            diffusion_pos: 0.01,
            diffusion_ori: 0.05,
            anneal: Anneal::default(),
            unary: UnaryParams::default(),
            pairwise: PairwiseParams::default(),
            seed: 0,
            prior: Prior::default(),
            workspace_padding: 0.1,
            certainty_threshold: CERTAINTY_THRESHOLD,
        }
    }
}

impl InferenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(ArticError::InvalidArgument("particles must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(ArticError::InvalidArgument("iterations must be >= 1".into()));
        }
        for (name, v) in [
            ("diffusion_pos", self.diffusion_pos),
            ("diffusion_ori", self.diffusion_ori),
            ("workspace_padding", self.workspace_padding),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ArticError::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        self.anneal.validate()?;
        self.unary.validate()?;
        self.pairwise.validate()
    }

    /// Diffusion `(pos, ori)` used at iteration `n` (1-based).
    pub fn diffusion_at(&self, n: usize) -> (f64, f64) {
        let scale = self.anneal.diffusion_scale(n, self.iterations);
        (self.diffusion_pos * scale, self.diffusion_ori * scale)
    }
}

/// Optional schedule over the last part of a run: from iteration fraction
/// `start` on, diffusion shrinks linearly to `diffusion_final_scale` times its
/// value while the unary and pairwise log-potentials grow geometrically to
/// `unary_final_scale` and `pairwise_final_scale` times their values. The
/// defaults leave everything constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Anneal {
    pub start: f64,
    pub diffusion_final_scale: f64,
    pub unary_final_scale: f64,
    pub pairwise_final_scale: f64,
}

impl Default for Anneal {
    fn default() -> Self {
        Anneal {
            start: 0.0,
            diffusion_final_scale: 1.0,
            unary_final_scale: 1.0,
            pairwise_final_scale: 1.0,
        }
    }
}

impl Anneal {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.start) {
            return Err(ArticError::InvalidArgument(format!("anneal.start must lie in [0, 1], got {}", self.start)));
        }
        if !(self.diffusion_final_scale >= 0.0 && self.diffusion_final_scale.is_finite()) {
            return Err(ArticError::InvalidArgument("anneal.diffusion_final_scale must be >= 0".into()));
        }
        for (name, v) in [("unary_final_scale", self.unary_final_scale), ("pairwise_final_scale", self.pairwise_final_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ArticError::InvalidArgument(format!("anneal.{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Schedule position in [0, 1] of iteration `n` (1-based) out of `total`.
    pub fn progress(&self, n: usize, total: usize) -> f64 {
        if total <= 1 {
            return if self.start < 1.0 { 1.0 } else { 0.0 };
        }
        let t = n.saturating_sub(1) as f64 / (total - 1) as f64;
        if self.start >= 1.0 {
            return 0.0;
        }
        ((t - self.start) / (1.0 - self.start)).clamp(0.0, 1.0)
    }

    pub fn diffusion_scale(&self, n: usize, total: usize) -> f64 {
        1.0 + (self.diffusion_final_scale - 1.0) * self.progress(n, total)
    }

    pub fn unary_scale(&self, n: usize, total: usize) -> f64 {
        self.unary_final_scale.powf(self.progress(n, total))
    }

    pub fn pairwise_scale(&self, n: usize, total: usize) -> f64 {
        self.pairwise_final_scale.powf(self.progress(n, total))
    }
}

struct Scaled<'a, S: ?Sized> {
    inner: &'a S,
    factor: f64,
}

impl<S: UnaryScore + ?Sized> UnaryScore for Scaled<'_, S> {
    fn log_potential(&self, node: usize, pose: &DualQuaternion) -> f64 {
        self.factor * self.inner.log_potential(node, pose)
    }
}

/// Pointwise unary log-likelihood `ln φ_s(X_s, Y_s)`.
pub trait UnaryScore: Sync {
    fn log_potential(&self, node: usize, pose: &DualQuaternion) -> f64;
}

impl UnaryScore for UnaryModel {
    fn log_potential(&self, node: usize, pose: &DualQuaternion) -> f64 {
        UnaryModel::log_potential(self, node, pose)
    }
}

impl<F: Fn(usize, &DualQuaternion) -> f64 + Sync> UnaryScore for F {
    fn log_potential(&self, node: usize, pose: &DualQuaternion) -> f64 {
        self(node, pose)
    }
}

/// Unary scores of the current beliefs, computed once per iteration and
/// shared by the MLE and the belief reweighting.
struct ScoreCache<'a, S: UnaryScore + ?Sized> {
    inner: &'a S,
    scores: Vec<HashMap<[u64; 8], f64>>,
}

impl<'a, S: UnaryScore + ?Sized> ScoreCache<'a, S> {
    fn build(inner: &'a S, beliefs: &[Belief]) -> (Self, Vec<Vec<f64>>) {
        let per_node: Vec<Vec<f64>> = beliefs
            .iter()
            .map(|b| {
                b.samples
                    .par_iter()
                    .map(|pose| inner.log_potential(b.node, pose))
                    .collect()
            })
            .collect();
        let scores = beliefs
            .iter()
            .zip(&per_node)
            .map(|(b, s)| b.samples.iter().map(|p| p.bits()).zip(s.iter().copied()).collect())
            .collect();
        (ScoreCache { inner, scores }, per_node)
    }
}

impl<S: UnaryScore + ?Sized> UnaryScore for ScoreCache<'_, S> {
    fn log_potential(&self, node: usize, pose: &DualQuaternion) -> f64 {
        match self.scores.get(node).and_then(|m| m.get(&pose.bits())) {
            Some(v) => *v,
            None => self.inner.log_potential(node, pose),
        }
    }
}

#[derive(Debug, Error)]
#[error("degenerate message {from} -> {to}: {reason}")]
pub struct DegenerateMessage {
    pub from: usize,
    pub to: usize,
    pub reason: String,
    /// The same poses with uniform weights.
    pub fallback: Message,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights to linear weights summing to 1; `None` if all are zero.
fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
    let total: f64 = w.iter().sum();
    Some(w.into_iter().map(|x| x / total).collect())
}

/// Pull message update for `edge = t → s`.
///
/// `bel_prev` is the receiver's belief from the previous iteration and
/// `msgs_prev` holds the previous-iteration messages `u → t` for
/// `u ∈ ρ(t) \ s`; missing messages (first iteration) contribute a factor 1.
pub fn message_update<S, R>(
    edge: DirectedEdge,
    bel_prev: &Belief,
    msgs_prev: &[&Message],
    graph: &MrfGraph,
    unary: &S,
    params: &InferenceParams,
    rng: &mut R,
) -> std::result::Result<Message, DegenerateMessage>
where
    S: UnaryScore + ?Sized,
    R: Rng + ?Sized,
{
    let (t, s) = (edge.from, edge.to);
    let e = &graph.edges[edge.edge];
    let art = &e.articulation;
    let kernel = PairwiseKernel::new(art, &params.pairwise);
    let s_is_parent = e.parent == s;
    let toward = if s_is_parent { Toward::Child } else { Toward::Parent };
    let m = params.particles;

    // 1. M independent draws from bel_s^{n-1}.
    let poses: Vec<DualQuaternion> = (0..m)
        .map(|_| bel_prev.samples[rng.gen_range(0..bel_prev.samples.len())])
        .collect();

    // 2a-b. Sample X̂_t across the joint and score it against the observation.
    let mut log_w: Vec<f64> = poses
        .iter()
        .map(|mu| {
            let x_hat = crate::potentials::pairwise_sample(mu, art, toward, rng);
            unary.log_potential(t, &x_hat)
        })
        .collect();

    // 2c. W_u^(i) = Σ_j w_ut^(j) ψ(X_s = μ^(i), X_t = μ_ut^(j)), multiplied over u.
    let mut terms = vec![0.0; m.max(1)];
    for msg in msgs_prev {
        let ln_w: Vec<f64> = msg.weights.iter().map(|w| w.ln()).collect();
        terms.resize(msg.len(), 0.0);
        if s_is_parent {
            let t_poses: Vec<(Vec3, Quat)> = msg.poses.iter().map(|p| (p.translation(), p.real)).collect();
            for (i, mu) in poses.iter().enumerate() {
                let limits = kernel.limits_at(mu);
                for (j, (tj, qj)) in t_poses.iter().enumerate() {
                    terms[j] = ln_w[j] + kernel.log_eval(&limits, *tj, *qj);
                }
                log_w[i] += log_sum_exp(&terms);
            }
        } else {
            let limits: Vec<_> = msg.poses.iter().map(|p| kernel.limits_at(p)).collect();
            for (i, mu) in poses.iter().enumerate() {
                let (ti, qi) = (mu.translation(), mu.real);
                for (j, lim) in limits.iter().enumerate() {
                    terms[j] = ln_w[j] + kernel.log_eval(lim, ti, qi);
                }
                log_w[i] += log_sum_exp(&terms);
            }
        }
    }

    // 2d/3. Final weights, normalized once.
    match normalize_log_weights(&log_w) {
        Some(weights) => Ok(Message {
            from: t,
            to: s,
            poses,
            weights,
        }),
        None => Err(DegenerateMessage {
            from: t,
            to: s,
            reason: "all sample weights are zero".into(),
            fallback: Message {
                from: t,
                to: s,
                weights: vec![1.0 / m as f64; m],
                poses,
            },
        }),
    }
}

/// Systematic resampling: indices of `n` draws with a single uniform offset.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut u = rng.gen::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for _ in 0..n {
        while i + 1 < weights.len() && cum + weights[i] <= u {
            cum += weights[i];
            i += 1;
        }
        out.push(i);
        u += step;
    }
    out
}

/// Gaussian perturbation of translation and a random-axis rotation about the part origin.
pub fn diffuse<R: Rng + ?Sized>(pose: &DualQuaternion, sigma_pos: f64, sigma_ori: f64, rng: &mut R) -> DualQuaternion {
    if sigma_pos <= 0.0 && sigma_ori <= 0.0 {
        return *pose;
    }
    let mut t = pose.translation();
    if sigma_pos > 0.0 {
        let n = Normal::new(0.0, sigma_pos).expect("positive sigma");
        t = t + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    let q = Quat::random_perturbation(rng, sigma_ori) * pose.real;
    let q = q.scale(1.0 / q.norm());
    DualQuaternion::from_rotation_translation(q, t)
}

/// Belief update for node `s` from its incoming messages.
///
/// Each message is reweighted by `φ_s` and normalized, the messages are
/// pooled (`T = Σ M`), normalized again, systematically resampled and
/// diffused.
pub fn belief_update<S, R>(
    node: usize,
    msgs_in: &[&Message],
    unary: &S,
    diffusion: (f64, f64),
    rng: &mut R,
) -> Result<Belief>
where
    S: UnaryScore + ?Sized,
    R: Rng + ?Sized,
{
    if msgs_in.is_empty() {
        return Err(ArticError::InvalidArgument(format!("node {node} has no incoming messages")));
    }
    let total: usize = msgs_in.iter().map(|m| m.len()).sum();
    let mut pooled_poses = Vec::with_capacity(total);
    let mut pooled_w = Vec::with_capacity(total);
    let mut live = 0usize;
    for msg in msgs_in {
        let log_w: Vec<f64> = msg
            .poses
            .iter()
            .zip(&msg.weights)
            .map(|(p, w)| w.ln() + unary.log_potential(node, p))
            .collect();
        let normalized = normalize_log_weights(&log_w);
        if normalized.is_some() {
            live += 1;
        } else {
            warn!("message {} -> {} has zero weight after unary reweighting", msg.from, node);
        }
        pooled_w.extend(normalized.unwrap_or_else(|| vec![0.0; msg.len()]));
        pooled_poses.extend_from_slice(&msg.poses);
    }
    if live == 0 {
        return Err(ArticError::DegenerateWeights(format!(
            "all pooled weights are zero at node {node}"
        )));
    }
    let sum: f64 = pooled_w.iter().sum();
    pooled_w.iter_mut().for_each(|w| *w /= sum);
    let ess = 1.0 / pooled_w.iter().map(|w| w * w).sum::<f64>();

    let (sigma_pos, sigma_ori) = diffusion;
    let samples = systematic_resample(&pooled_w, total, rng)
        .into_iter()
        .map(|i| diffuse(&pooled_poses[i], sigma_pos, sigma_ori, rng))
        .collect();
    Ok(Belief {
        node,
        samples,
        ess: Some(ess),
    })
}

/// Index and pose of the belief sample with the highest unary score; ties
/// go to the lowest index.
pub fn mle_estimate<S: UnaryScore + ?Sized>(b: &Belief, unary: &S) -> Result<(usize, DualQuaternion)> {
    let scores: Vec<f64> = b.samples.iter().map(|p| unary.log_potential(b.node, p)).collect();
    mle_from_scores(b, &scores)
}

fn mle_from_scores(b: &Belief, scores: &[f64]) -> Result<(usize, DualQuaternion)> {
    if b.is_empty() {
        return Err(ArticError::InvalidArgument("empty belief".into()));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((best, b.samples[best]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefStats {
    pub mean_pos: Vec3,
    /// Population standard deviation per axis, meters.
    pub std_pos: Vec3,
    pub mean_orientation: Quat,
    /// Mean geodesic angle to `mean_orientation`, radians.
    pub mean_ori: f64,
    /// RMS geodesic angle to `mean_orientation`, radians.
    pub std_ori: f64,
    /// Every positional std below the threshold.
    pub certain: bool,
}

pub fn belief_stats(b: &Belief, threshold: f64) -> Result<BeliefStats> {
    if b.is_empty() {
        return Err(ArticError::InvalidArgument("empty belief".into()));
    }
    let n = b.len() as f64;
    let positions: Vec<Vec3> = b.samples.iter().map(|s| s.translation()).collect();
    let mean = positions.iter().fold(Vec3::ZERO, |a, p| a + *p) * (1.0 / n);
    let var = positions.iter().fold(Vec3::ZERO, |a, p| {
        let d = *p - mean;
        a + Vec3::new(d.x * d.x, d.y * d.y, d.z * d.z)
    }) * (1.0 / n);
    let std = Vec3::new(var.x.sqrt(), var.y.sqrt(), var.z.sqrt());

    let reference = b.samples[0].real.canonical();
    let sum = b.samples.iter().fold(Quat::ZERO, |acc, s| {
        let q = s.real;
        acc + if q.dot(reference) < 0.0 { -q } else { q }
    });
    let norm = sum.norm();
    let mean_q = if norm > 0.0 { sum.scale(1.0 / norm).canonical() } else { reference };
    let angles: Vec<f64> = b.samples.iter().map(|s| s.real.angle_to(mean_q)).collect();
    let mean_ori = angles.iter().sum::<f64>() / n;
    let std_ori = (angles.iter().map(|a| a * a).sum::<f64>() / n).sqrt();

    Ok(BeliefStats {
        mean_pos: mean,
        std_pos: std,
        mean_orientation: mean_q,
        mean_ori,
        std_ori,
        certain: std.x < threshold && std.y < threshold && std.z < threshold,
    })
}

/// Draws `count` poses for `node` from the prior.
pub fn sample_prior<R: Rng + ?Sized>(
    prior: &Prior,
    node_id: &str,
    workspace: &Aabb,
    count: usize,
    rng: &mut R,
) -> Result<Vec<DualQuaternion>> {
    match prior {
        Prior::UniformOverWorkspace { bounds } => {
            let b = bounds.unwrap_or(*workspace);
            Ok((0..count)
                .map(|_| DualQuaternion::from_rotation_translation(Quat::random(rng), b.sample(rng)))
                .collect())
        }
        Prior::Informed { poses } => {
            let list = poses
                .get(node_id)
                .filter(|l| !l.is_empty())
                .ok_or_else(|| ArticError::Config(format!("informed prior has no poses for `{node_id}`")))?;
            let dqs = list.iter().map(|p| p.to_dq()).collect::<Result<Vec<_>>>()?;
            Ok((0..count).map(|_| dqs[rng.gen_range(0..dqs.len())]).collect())
        }
    }
}

/// Per-iteration summary of every node.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub estimates: Vec<DualQuaternion>,
    pub stats: Vec<BeliefStats>,
    /// Degenerate message or belief events attributed to each node.
    pub degenerate_events: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct InferenceRun {
    /// Records for iterations `0..=iterations`; iteration 0 is the prior.
    pub records: Vec<IterationRecord>,
    pub final_beliefs: Vec<Belief>,
}

impl InferenceRun {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least the prior record")
    }
}

/// Mutable state of one inference run.
pub struct Engine<'a, S: UnaryScore + ?Sized> {
    graph: &'a MrfGraph,
    unary: &'a S,
    params: &'a InferenceParams,
    workspace: Aabb,
    iteration: usize,
    beliefs: Vec<Belief>,
    /// Messages of the last completed iteration, keyed by directed-edge id.
    messages: Vec<Option<Message>>,
    events: Vec<usize>,
}

impl<'a, S: UnaryScore + ?Sized> Engine<'a, S> {
    /// Initializes every belief from the prior (iteration 0).
    pub fn new(graph: &'a MrfGraph, unary: &'a S, workspace: Aabb, params: &'a InferenceParams) -> Result<Self> {
        params.validate()?;
        let beliefs = (0..graph.node_count())
            .map(|s| {
                let count = params.particles * graph.neighbors[s].len().max(1);
                let mut rng = random::stream(params.seed, &[DOMAIN_PRIOR, 0, s as u64]);
                sample_prior(&params.prior, &graph.nodes[s], &workspace, count, &mut rng).map(|p| Belief::new(s, p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            graph,
            unary,
            params,
            workspace,
            iteration: 0,
            beliefs,
            messages: vec![None; 2 * graph.edge_count()],
            events: vec![0; graph.node_count()],
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn message(&self, edge: &DirectedEdge) -> Option<&Message> {
        self.messages[edge.id(self.graph)].as_ref()
    }

    /// MLE estimates and statistics of the current beliefs.
    pub fn record(&self) -> IterationRecord {
        let (_, scores) = ScoreCache::build(self.unary, &self.beliefs);
        self.record_from_scores(&scores)
    }

    fn record_from_scores(&self, scores: &[Vec<f64>]) -> IterationRecord {
        IterationRecord {
            iteration: self.iteration,
            estimates: self
                .beliefs
                .iter()
                .zip(scores)
                .map(|(b, s)| mle_from_scores(b, s).expect("non-empty belief").1)
                .collect(),
            stats: self
                .beliefs
                .iter()
                .map(|b| belief_stats(b, self.params.certainty_threshold).expect("non-empty belief"))
                .collect(),
            degenerate_events: self.events.clone(),
        }
    }

    /// Runs one synchronous iteration; returns the record of the beliefs it started from.
    pub fn step(&mut self) -> IterationRecord {
        let order: Vec<usize> = (0..2 * self.graph.edge_count()).collect();
        self.step_with_order(&order)
    }

    /// Like [`Engine::step`], processing directed edges in the given order.
    pub fn step_with_order(&mut self, order: &[usize]) -> IterationRecord {
        let (cache, scores) = ScoreCache::build(self.unary, &self.beliefs);
        let record = self.record_from_scores(&scores);
        self.events.iter_mut().for_each(|e| *e = 0);

        let n = self.iteration + 1;
        let anneal = &self.params.anneal;
        let factor = anneal.unary_scale(n, self.params.iterations);
        let cache = Scaled { inner: &cache, factor };
        // ψ^β is the same kernel with both bandwidths divided by √β.
        let factor = anneal.pairwise_scale(n, self.params.iterations);
        let sharpened;
        let params = if factor == 1.0 {
            self.params
        } else {
            let mut p = self.params.clone();
            p.pairwise.sigma_pos /= factor.sqrt();
            p.pairwise.sigma_ori /= factor.sqrt();
            sharpened = p;
            &sharpened
        };
        let directed = self.graph.directed_edges();
        let graph = self.graph;
        let beliefs = &self.beliefs;
        let prev = &self.messages;

        let computed: Vec<(usize, Message, bool)> = order
            .par_iter()
            .map(|&id| {
                let edge = directed[id];
                let incoming: Vec<&Message> = graph.neighbors[edge.from]
                    .iter()
                    .filter(|nb| nb.node != edge.to)
                    .filter_map(|nb| {
                        let into_t = DirectedEdge {
                            from: nb.node,
                            to: edge.from,
                            edge: nb.edge,
                        };
                        prev[into_t.id(graph)].as_ref()
                    })
                    .collect();
                let mut rng = random::stream(params.seed, &[DOMAIN_MESSAGE, n as u64, id as u64]);
                match message_update(edge, &beliefs[edge.to], &incoming, graph, &cache, params, &mut rng) {
                    Ok(m) => (id, m, false),
                    Err(e) => {
                        warn!("iteration {n}: {e}; using uniform weights");
                        (id, e.fallback, true)
                    }
                }
            })
            .collect();

        let mut messages: Vec<Option<Message>> = vec![None; prev.len()];
        for (id, msg, degenerate) in computed {
            if degenerate {
                self.events[msg.to] += 1;
            }
            messages[id] = Some(msg);
        }

        let diffusion = params.diffusion_at(n);
        let workspace = self.workspace;
        let updated: Vec<(Belief, bool)> = (0..graph.node_count())
            .into_par_iter()
            .map(|s| {
                let own;
                let incoming: Vec<&Message> = if graph.neighbors[s].is_empty() {
                    own = Message {
                        from: s,
                        to: s,
                        weights: vec![1.0 / beliefs[s].len() as f64; beliefs[s].len()],
                        poses: beliefs[s].samples.clone(),
                    };
                    vec![&own]
                } else {
                    graph.neighbors[s]
                        .iter()
                        .filter_map(|nb| {
                            let e = DirectedEdge {
                                from: nb.node,
                                to: s,
                                edge: nb.edge,
                            };
                            messages[e.id(graph)].as_ref()
                        })
                        .collect()
                };
                let mut rng = random::stream(params.seed, &[DOMAIN_BELIEF, n as u64, s as u64]);
                match belief_update(s, &incoming, &cache, diffusion, &mut rng) {
                    Ok(b) => (b, false),
                    Err(e) => {
                        warn!("iteration {n}: {e}; resetting node {s} to the prior");
                        let count = incoming.iter().map(|m| m.len()).sum::<usize>().max(1);
                        let mut rng = random::stream(params.seed, &[DOMAIN_PRIOR, n as u64, s as u64]);
                        let samples = sample_prior(&params.prior, &graph.nodes[s], &workspace, count, &mut rng)
                            .expect("prior validated at construction");
                        (Belief::new(s, samples), true)
                    }
                }
            })
            .collect();

        for (b, degenerate) in updated {
            if degenerate {
                self.events[b.node] += 1;
            }
            let node = b.node;
            self.beliefs[node] = b;
        }
        self.messages = messages;
        self.iteration = n;
        record
    }

    pub fn into_beliefs(self) -> Vec<Belief> {
        self.beliefs
    }
}

/// Runs `params.iterations` synchronous iterations from the prior.
pub fn run_inference<S: UnaryScore + ?Sized>(
    graph: &MrfGraph,
    unary: &S,
    workspace: Aabb,
    params: &InferenceParams,
) -> Result<InferenceRun> {
    run_inference_with(graph, unary, workspace, params, |_, _| {})
}

/// [`run_inference`] with a callback invoked with every record and the beliefs it describes.
pub fn run_inference_with<S, F>(
    graph: &MrfGraph,
    unary: &S,
    workspace: Aabb,
    params: &InferenceParams,
    mut on_record: F,
) -> Result<InferenceRun>
where
    S: UnaryScore + ?Sized,
    F: FnMut(&IterationRecord, &[Belief]),
{
    let mut engine = Engine::new(graph, unary, workspace, params)?;
    let mut records = Vec::with_capacity(params.iterations + 1);
    for _ in 0..params.iterations {
        let snapshot = engine.beliefs.clone();
        let record = engine.step();
        on_record(&record, &snapshot);
        records.push(record);
    }
    let last = engine.record();
    on_record(&last, engine.beliefs());
    records.push(last);
    Ok(InferenceRun {
        records,
        final_beliefs: engine.into_beliefs(),
    })
}

/// Observation bounds padded by `padding` (fraction of each extent).
pub fn workspace_bounds(obs: &crate::observation::PointCloud, padding: f64) -> Result<Aabb> {
    obs.bounds()
        .map(|b| b.padded(padding))
        .ok_or_else(|| ArticError::EmptyObservation("observation has no points".into()))
}
