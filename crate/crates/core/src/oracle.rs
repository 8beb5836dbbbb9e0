//! Dense discretized belief propagation on 1-DOF chains.
//!
//! Every node's pose is restricted to a line: `X_s(v) = T(dir · v) ∘ base_s`,
//! where `base_s` is the node's pose with the root at its reference pose and
//! every joint at 0. Prismatic chains whose axes are all parallel satisfy this
//! exactly, with `v` the node's absolute offset along the shared axis.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ArticError, Result};
use crate::geometry::{dq_mul, DualQuaternion, Vec3};
use crate::model::{build_mrf, forward_kinematics_indexed, JointKind, KinematicModel, MrfGraph};
use crate::pmpnbp::UnaryScore;
use crate::potentials::{pairwise_potential, PairwiseParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 || !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(ArticError::InvalidArgument(format!(
                "grid needs lo < hi and at least 2 bins, got [{}, {}] with {}",
                self.lo, self.hi, self.bins
            )));
        }
        Ok(())
    }

    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.cell_width();
        (0..self.bins).map(|k| self.lo + (k as f64 + 0.5) * w).collect()
    }
}

/// The 1-D pose family of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFamily {
    pub base: DualQuaternion,
    pub dir: Vec3,
}

impl LineFamily {
    pub fn pose(&self, v: f64) -> DualQuaternion {
        dq_mul(&DualQuaternion::from_translation(self.dir * v), &self.base)
    }

    /// Offset along the line of the point closest to `p`.
    pub fn project(&self, p: Vec3) -> f64 {
        self.dir.dot(p - self.base.translation())
    }
}

/// Line families of a prismatic chain with parallel axes; the root moves along the shared axis.
pub fn chain_families(model: &KinematicModel, root_pose: &DualQuaternion) -> Result<Vec<LineFamily>> {
    let not_chain = |why: &str| ArticError::NotAChain(format!("oracle requires 1-DOF chain: {why}"));
    let mut children = vec![0usize; model.len()];
    for j in &model.joints {
        children[model.part_index(&j.parent).expect("validated model")] += 1;
    }
    if children.iter().any(|&c| c > 1) {
        return Err(not_chain("a part has more than one child"));
    }
    if model.joints.is_empty() {
        return Err(not_chain("the model has no joints"));
    }
    if model.joints.iter().any(|j| j.kind != JointKind::Prismatic) {
        return Err(not_chain("every joint must be prismatic"));
    }
    let base = forward_kinematics_indexed(model, &vec![0.0; model.joints.len()], root_pose);
    let world_axis = |j: usize| {
        let joint = &model.joints[j];
        let parent = &base[model.part_index(&joint.parent).expect("validated model")];
        let frame = dq_mul(parent, &joint.articulation().origin);
        frame.real.rotate(joint.axis)
    };
    let dir = world_axis(0);
    for j in 1..model.joints.len() {
        if world_axis(j).cross(dir).norm() > 1e-9 || world_axis(j).dot(dir) < 0.0 {
            return Err(not_chain("joint axes are not parallel"));
        }
    }
    Ok(base.into_iter().map(|b| LineFamily { base: b, dir }).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub nodes: Vec<String>,
    pub centers: Vec<Vec<f64>>,
    pub marginals: Vec<Vec<f64>>,
    /// The unary peaks at an end bin of the grid.
    pub boundary_warning: Vec<bool>,
}

impl GridResult {
    pub fn posterior_mean(&self, node: usize) -> f64 {
        self.centers[node].iter().zip(&self.marginals[node]).map(|(c, p)| c * p).sum()
    }

    pub fn argmax(&self, node: usize) -> usize {
        let m = &self.marginals[node];
        (0..m.len()).fold(0, |best, k| if m[k] > m[best] { k } else { best })
    }

    /// `node,bin_center,probability` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,bin_center,probability\n");
        for (s, id) in self.nodes.iter().enumerate() {
            for (c, p) in self.centers[s].iter().zip(&self.marginals[s]) {
                writeln!(out, "{id},{c:?},{p:?}").unwrap();
            }
        }
        out
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Synchronous sum-product on the grids for `sweeps` iterations.
pub fn grid_bp<S: UnaryScore + ?Sized>(
    graph: &MrfGraph,
    families: &[LineFamily],
    grids: &[GridSpec],
    unary: &S,
    pairwise: &PairwiseParams,
    sweeps: usize,
) -> Result<GridResult> {
    let n = graph.node_count();
    if families.len() != n || grids.len() != n {
        return Err(ArticError::InvalidArgument("one family and one grid per node required".into()));
    }
    for g in grids {
        g.validate()?;
    }
    pairwise.validate()?;
    let centers: Vec<Vec<f64>> = grids.iter().map(|g| g.centers()).collect();
    let poses: Vec<Vec<DualQuaternion>> = (0..n)
        .map(|s| centers[s].iter().map(|&v| families[s].pose(v)).collect())
        .collect();

    let mut boundary_warning = vec![false; n];
    let phi: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let logs: Vec<f64> = poses[s].iter().map(|p| unary.log_potential(s, p)).collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let best = (0..logs.len()).fold(0, |b, k| if logs[k] > logs[b] { k } else { b });
            if best == 0 || best == logs.len() - 1 {
                boundary_warning[s] = true;
                warn!("unary of `{}` peaks at a grid boundary; the grid may be too narrow", graph.nodes[s]);
            }
            logs.iter().map(|l| if max.is_finite() { (l - max).exp() } else { 1.0 }).collect()
        })
        .collect();

    // psi[e][j][k]: parent at bin j, child at bin k.
    let psi: Vec<Vec<Vec<f64>>> = graph
        .edges
        .iter()
        .map(|e| {
            poses[e.parent]
                .iter()
                .map(|xp| {
                    poses[e.child]
                        .iter()
                        .map(|xc| pairwise_potential(xc, xp, &e.articulation, pairwise))
                        .collect()
                })
                .collect()
        })
        .collect();

    let directed = graph.directed_edges();
    let mut msgs: Vec<Vec<f64>> = directed
        .iter()
        .map(|d| vec![1.0 / grids[d.to].bins as f64; grids[d.to].bins])
        .collect();

    for _ in 0..sweeps {
        let next: Vec<Vec<f64>> = directed
            .iter()
            .map(|d| {
                let (t, s) = (d.from, d.to);
                let mut pre = phi[t].clone();
                for nb in graph.neighbors[t].iter().filter(|nb| nb.node != s) {
                    let id = crate::model::DirectedEdge {
                        from: nb.node,
                        to: t,
                        edge: nb.edge,
                    }
                    .id(graph);
                    pre.iter_mut().zip(&msgs[id]).for_each(|(a, b)| *a *= b);
                }
                let table = &psi[d.edge];
                let t_is_parent = graph.edges[d.edge].parent == t;
                let mut out: Vec<f64> = (0..grids[s].bins)
                    .map(|k| {
                        pre.iter()
                            .enumerate()
                            .map(|(j, p)| p * if t_is_parent { table[j][k] } else { table[k][j] })
                            .sum()
                    })
                    .collect();
                normalize(&mut out);
                out
            })
            .collect();
        msgs = next;
    }

    let marginals = (0..n)
        .map(|s| {
            let mut b = phi[s].clone();
            for nb in &graph.neighbors[s] {
                let id = crate::model::DirectedEdge {
                    from: nb.node,
                    to: s,
                    edge: nb.edge,
                }
                .id(graph);
                b.iter_mut().zip(&msgs[id]).for_each(|(a, m)| *a *= m);
            }
            normalize(&mut b);
            b
        })
        .collect();

    Ok(GridResult {
        nodes: graph.nodes.clone(),
        centers,
        marginals,
        boundary_warning,
    })
}

/// [`grid_bp`] on a chain model, with enough sweeps to be exact.
pub fn grid_bp_chain<S: UnaryScore + ?Sized>(
    model: &KinematicModel,
    root_pose: &DualQuaternion,
    grids: &[GridSpec],
    unary: &S,
    pairwise: &PairwiseParams,
) -> Result<(GridResult, Vec<LineFamily>)> {
    let families = chain_families(model, root_pose)?;
    let graph = build_mrf(model);
    let r = grid_bp(&graph, &families, grids, unary, pairwise, graph.node_count())?;
    Ok((r, families))
}
