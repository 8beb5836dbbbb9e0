//! Experiment configuration and the commands behind the `artic` CLI.
//!
//! A config is one JSON file. Relative paths inside it resolve against the
//! directory holding the file; `--set a.b=v` edits the JSON before it is
//! deserialized, so every field can be overridden.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baseline::{run_filter, PfParams};
use crate::error::{ArticError, Result};
use crate::geometry::{DualQuaternion, Pose6D, Vec3};
use crate::metrics::{add_metric, aggregate_runs, model_points};
use crate::model::{build_mrf, forward_kinematics, KinematicModel, LimitMode};
use crate::observation::{render_scene, PointCloud, SceneConfig, SceneSpec};
use crate::oracle::{grid_bp_chain, GridResult, GridSpec};
use crate::pmpnbp::{run_inference_with, workspace_bounds, Belief, BeliefStats, InferenceParams, Prior};
use crate::potentials::UnaryModel;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_FILE_NOT_FOUND: i32 = 2;
pub const EXIT_NOT_A_CHAIN: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_EMPTY_OBSERVATION: i32 = 5;

/// Process exit code for an error.
pub fn exit_code(e: &ArticError) -> i32 {
    match e {
        ArticError::FileNotFound(_) => EXIT_FILE_NOT_FOUND,
        ArticError::NotAChain(_) => EXIT_NOT_A_CHAIN,
        ArticError::Config(_) | ArticError::Parse { .. } | ArticError::InvalidArgument(_) | ArticError::OutOfRange { .. } => {
            EXIT_CONFIG
        }
        ArticError::EmptyObservation(_) => EXIT_EMPTY_OBSERVATION,
        _ => EXIT_FAILURE,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pmpnbp,
    Pf,
    #[default]
    Both,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pmpnbp => "pmpnbp",
            Method::Pf => "pf",
            Method::Both => "both",
        }
    }

    fn includes(self, m: Method) -> bool {
        self == Method::Both || self == m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub bins: usize,
    /// Half-width of the root grid around the scene's root pose, meters.
    pub root_range: f64,
    /// Gap tolerance is max(`tolerance_cells` grid cells, `tolerance_min`).
    pub tolerance_cells: f64,
    pub tolerance_min: f64,
    /// Seeds that must agree on every node for the check to pass.
    pub min_passing: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            bins: 200,
            root_range: 0.1,
            tolerance_cells: 2.0,
            tolerance_min: 0.01,
            min_passing: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddFiles {
    pub estimate: PathBuf,
    pub ground_truth: PathBuf,
}

fn default_runs() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub inference: InferenceParams,
    #[serde(default)]
    pub pf: PfParams,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Belief snapshots every this many iterations; the final beliefs are always written.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub add: Option<AddFiles>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(ArticError::Config("runs must be >= 1".into()));
        }
        self.inference.validate().map_err(as_config)?;
        self.pf.validate().map_err(as_config)?;
        if self.validate.bins < 2 {
            return Err(ArticError::Config("validate.bins must be >= 2".into()));
        }
        Ok(())
    }
}

fn as_config(e: ArticError) -> ArticError {
    match e {
        ArticError::InvalidArgument(m) => ArticError::Config(m),
        other => other,
    }
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}

/// Sets the dotted `key` of a JSON object to `value`, parsed as JSON when possible.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ArticError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ArticError::Config(format!("override key `{key}` has an empty segment")));
        }
        let obj = match node {
            Value::Object(map) => map,
            _ => return Err(ArticError::Config(format!("override `{key}`: `{part}` is not inside an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one segment")
}

pub fn parse_config(text: &str, base_dir: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let mut raw: Value = serde_json::from_str(text).map_err(|e| ArticError::Config(format!("config is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut raw, o)?;
    }
    let config: ExperimentConfig = serde_json::from_value(raw).map_err(|e| ArticError::Config(e.to_string()))?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        base_dir: base_dir.to_path_buf(),
    })
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ArticError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base, overrides)
}

/// Model, rendered observation and ground truth of a config's scene.
pub struct Scene {
    pub model: KinematicModel,
    pub observation: PointCloud,
    /// Ground-truth poses indexed like `model.parts`.
    pub truth: Vec<DualQuaternion>,
    pub add_points: Vec<Vec<Vec3>>,
}

impl Scene {
    pub fn part_ids(&self) -> Vec<String> {
        self.model.parts.iter().map(|p| p.id.clone()).collect()
    }

    /// Per-part ADD of `est`, in part order.
    pub fn add_row(&self, est: &[DualQuaternion]) -> Result<Vec<f64>> {
        (0..self.model.len())
            .map(|i| add_metric(&est[i], &self.truth[i], &self.add_points[i]))
            .collect()
    }
}

pub fn build_scene(lc: &LoadedConfig) -> Result<Scene> {
    let model = KinematicModel::load(lc.resolve(&lc.config.model))?;
    let (observation, gt) = render_scene(&SceneSpec {
        model: &model,
        config: lc.config.scene.clone(),
    })?;
    let truth = model.parts.iter().map(|p| gt[&p.id]).collect();
    let add_points = model_points(&model)?;
    Ok(Scene {
        model,
        observation,
        truth,
        add_points,
    })
}

/// Everything one seed of one method produced.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub method: Method,
    pub run_id: usize,
    /// `add[iteration][part]`, iterations `0..=N`.
    pub add: Vec<Vec<f64>>,
    pub final_estimates: Vec<DualQuaternion>,
    /// Final belief statistics (PMPNBP only).
    pub final_stats: Option<Vec<BeliefStats>>,
    log: Vec<String>,
    snapshots: Vec<(usize, String)>,
}

impl RunTrace {
    pub fn final_add(&self) -> &[f64] {
        self.add.last().expect("at least the initial record")
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub part_ids: Vec<String>,
    pub traces: Vec<RunTrace>,
}

impl ExperimentOutput {
    pub fn method(&self, m: Method) -> impl Iterator<Item = &RunTrace> {
        self.traces.iter().filter(move |t| t.method == m)
    }
}

fn snapshot_csv(ids: &[String], beliefs: &[Belief]) -> String {
    let mut out = String::from("node,sample,x,y,z,qw,qx,qy,qz\n");
    for b in beliefs {
        for (i, s) in b.samples.iter().enumerate() {
            let p = s.to_pose();
            writeln!(out, "{},{i},{:?},{:?},{:?},{:?},{:?},{:?},{:?}", ids[b.node], p.x, p.y, p.z, p.qw, p.qx, p.qy, p.qz).unwrap();
        }
    }
    out
}

fn run_pmpnbp(lc: &LoadedConfig, scene: &Scene, unary: &UnaryModel, run_id: usize) -> Result<RunTrace> {
    let cfg = &lc.config;
    let ids = scene.part_ids();
    let graph = build_mrf(&scene.model);
    let workspace = workspace_bounds(&scene.observation, cfg.inference.workspace_padding)?;
    let mut params = cfg.inference.clone();
    params.seed = cfg.inference.seed.wrapping_add(run_id as u64);
    let last = params.iterations;
    let mut add = Vec::with_capacity(last + 1);
    let mut log = Vec::with_capacity(last + 1);
    let mut snapshots = Vec::new();
    let mut failure = None;
    let run = run_inference_with(&graph, unary, workspace, &params, |rec, beliefs| {
        let row = match scene.add_row(&rec.estimates) {
            Ok(r) => r,
            Err(e) => {
                failure.get_or_insert(e);
                return;
            }
        };
        for (i, id) in ids.iter().enumerate() {
            let st = &rec.stats[i];
            log.push(
                json!({
                    "iteration": rec.iteration,
                    "node": id,
                    "add": row[i],
                    "std_pos": st.std_pos.to_array(),
                    "std_ori": st.std_ori,
                    "certain": st.certain,
                    "degenerate_events": rec.degenerate_events[i],
                    "ess": beliefs[i].ess,
                })
                .to_string(),
            );
        }
        add.push(row);
        let n = rec.iteration;
        if n == last || (cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) {
            snapshots.push((n, snapshot_csv(&ids, beliefs)));
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let fin = run.final_record();
    Ok(RunTrace {
        method: Method::Pmpnbp,
        run_id,
        add,
        final_estimates: fin.estimates.clone(),
        final_stats: Some(fin.stats.clone()),
        log,
        snapshots,
    })
}

fn run_pf(lc: &LoadedConfig, scene: &Scene, unary: &UnaryModel, run_id: usize) -> Result<RunTrace> {
    let cfg = &lc.config;
    let ids = scene.part_ids();
    let workspace = workspace_bounds(&scene.observation, cfg.pf.workspace_padding)?;
    let seed = cfg.inference.seed.wrapping_add(run_id as u64);
    let mut add = Vec::with_capacity(cfg.pf.steps + 1);
    let mut log = Vec::with_capacity(cfg.pf.steps + 1);
    let mut estimates = Vec::new();
    let mut failure = None;
    run_filter(&scene.model, unary, &workspace, &cfg.pf, seed, |n, ps, degenerate| {
        estimates = ps.best().part_poses(&scene.model);
        match scene.add_row(&estimates) {
            Ok(row) => {
                for (id, a) in ids.iter().zip(&row) {
                    log.push(json!({"iteration": n, "node": id, "add": a, "degenerate": degenerate}).to_string());
                }
                add.push(row);
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunTrace {
        method: Method::Pf,
        run_id,
        add,
        final_estimates: estimates,
        final_stats: None,
        log,
        snapshots: Vec::new(),
    })
}

/// Runs the configured method(s) on every seed; seeds run in parallel.
pub fn run_experiment(lc: &LoadedConfig, scene: &Scene) -> Result<ExperimentOutput> {
    let cfg = &lc.config;
    let unary = UnaryModel::new(&scene.model, &scene.observation, cfg.inference.unary)?;
    let mut jobs = Vec::new();
    for m in [Method::Pmpnbp, Method::Pf] {
        if cfg.method.includes(m) {
            jobs.extend((0..cfg.runs).map(|r| (m, r)));
        }
    }
    let traces = jobs
        .into_par_iter()
        .map(|(m, r)| {
            info!("{} run {r} started", m.name());
            let t = match m {
                Method::Pf => run_pf(lc, scene, &unary, r),
                _ => run_pmpnbp(lc, scene, &unary, r),
            }?;
            info!("{} run {r} final ADD {:?}", m.name(), t.final_add());
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        part_ids: scene.part_ids(),
        traces,
    })
}

/// `run_id,iteration,part_id,add_m,method`, sorted by method, run, iteration and part.
pub fn results_csv(out: &ExperimentOutput) -> String {
    let mut rows: Vec<(&str, usize, usize, &str, f64)> = Vec::new();
    for t in &out.traces {
        for (it, row) in t.add.iter().enumerate() {
            for (p, v) in row.iter().enumerate() {
                rows.push((t.method.name(), t.run_id, it, &out.part_ids[p], *v));
            }
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let mut s = String::from("run_id,iteration,part_id,add_m,method\n");
    for (m, r, it, p, v) in rows {
        writeln!(s, "{r},{it},{p},{v:?},{m}").unwrap();
    }
    s
}

/// Label of the object-mean rows in the summary.
pub const MEAN_LABEL: &str = "_mean";

/// Per method and part: per-iteration median ADD over runs with its bootstrap interval.
pub fn summary_csv(out: &ExperimentOutput, bootstrap_seed: u64) -> Result<String> {
    let mut s = String::from("method,part_id,iteration,median,ci_lo,ci_hi\n");
    for m in [Method::Pf, Method::Pmpnbp] {
        let runs: Vec<&RunTrace> = out.method(m).collect();
        if runs.is_empty() {
            continue;
        }
        let mut columns: Vec<(String, Vec<Vec<f64>>)> = out
            .part_ids
            .iter()
            .enumerate()
            .map(|(p, id)| (id.clone(), runs.iter().map(|t| t.add.iter().map(|row| row[p]).collect()).collect()))
            .collect();
        let means = runs
            .iter()
            .map(|t| t.add.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect())
            .collect();
        columns.push((MEAN_LABEL.to_string(), means));
        columns.sort_by(|a, b| a.0.cmp(&b.0));
        for (id, traces) in columns {
            for row in aggregate_runs(&traces, bootstrap_seed)? {
                writeln!(s, "{},{id},{},{:?},{:?},{:?}", m.name(), row.iteration, row.median, row.ci_lo, row.ci_hi).unwrap();
            }
        }
    }
    Ok(s)
}

/// Final belief spread of every PMPNBP run.
pub fn certainty_csv(out: &ExperimentOutput) -> String {
    let mut s = String::from("run_id,part_id,std_x,std_y,std_z,std_ori,certain\n");
    let mut runs: Vec<&RunTrace> = out.method(Method::Pmpnbp).collect();
    runs.sort_by_key(|t| t.run_id);
    for t in runs {
        for (id, st) in out.part_ids.iter().zip(t.final_stats.iter().flatten()) {
            let p = st.std_pos;
            writeln!(s, "{},{id},{:?},{:?},{:?},{:?},{}", t.run_id, p.x, p.y, p.z, st.std_ori, st.certain).unwrap();
        }
    }
    s
}

/// Writes `contents` through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| ArticError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(|e| ArticError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| ArticError::io(path, e))
}

fn poses_json(ids: &[String], poses: &[DualQuaternion]) -> String {
    let map: BTreeMap<&str, Pose6D> = ids.iter().map(String::as_str).zip(poses.iter().map(DualQuaternion::to_pose)).collect();
    serde_json::to_string_pretty(&map).expect("poses serialize") + "\n"
}

/// Writes results, summary, per-run logs, final estimates and belief snapshots into `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path, bootstrap_seed: u64) -> Result<()> {
    write_atomic(&dir.join("results.csv"), &results_csv(out))?;
    write_atomic(&dir.join("summary.csv"), &summary_csv(out, bootstrap_seed)?)?;
    if out.method(Method::Pmpnbp).next().is_some() {
        write_atomic(&dir.join("certainty.csv"), &certainty_csv(out))?;
    }
    out.traces.par_iter().try_for_each(|t| {
        let stem = format!("{}_run{:03}", t.method.name(), t.run_id);
        write_atomic(&dir.join("logs").join(format!("{stem}.jsonl")), &(t.log.join("\n") + "\n"))?;
        write_atomic(&dir.join("estimates").join(format!("{stem}.json")), &poses_json(&out.part_ids, &t.final_estimates))?;
        for (n, csv) in &t.snapshots {
            write_atomic(&dir.join("snapshots").join(format!("{stem}_iter{n:04}.csv")), csv)?;
        }
        Ok(())
    })
}

/// `artic run`: returns the output directory.
pub fn cmd_run(lc: &LoadedConfig, out_dir: Option<&Path>) -> Result<PathBuf> {
    let scene = build_scene(lc)?;
    info!("observation has {} points", scene.observation.len());
    let out = run_experiment(lc, &scene)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| lc.output_dir());
    write_outputs(&out, &dir, lc.config.inference.seed)?;
    write_atomic(&dir.join("ground_truth.json"), &poses_json(&out.part_ids, &scene.truth))?;
    Ok(dir)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeGap {
    pub run_id: usize,
    pub node: String,
    pub grid_mean: f64,
    pub pmpnbp_mean: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub within: bool,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub grid: GridResult,
    pub gaps: Vec<NodeGap>,
    pub passing_runs: usize,
    pub runs: usize,
    pub min_passing: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.passing_runs >= self.min_passing
    }

    pub fn boundary_warning(&self) -> bool {
        self.grid.boundary_warning.iter().any(|&b| b)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("run_id,node,grid_mean,pmpnbp_mean,gap,tolerance,within,boundary_warning\n");
        for g in &self.gaps {
            let node = self.grid.nodes.iter().position(|n| n == &g.node).expect("node of this grid");
            writeln!(
                s,
                "{},{},{:?},{:?},{:?},{:?},{},{}",
                g.run_id, g.node, g.grid_mean, g.pmpnbp_mean, g.gap, g.tolerance, g.within, self.grid.boundary_warning[node]
            )
            .unwrap();
        }
        s
    }
}

/// Grid BP against PMPNBP on a 1-DOF chain; PMPNBP starts from poses along the grid lines.
pub fn validate(lc: &LoadedConfig) -> Result<ValidationReport> {
    let cfg = &lc.config;
    let v = &cfg.validate;
    let model = KinematicModel::load(lc.resolve(&cfg.model))?;
    let root = cfg.scene.root_pose.to_dq()?;
    // Fails early with the chain diagnostics before any rendering work.
    crate::oracle::chain_families(&model, &root)?;
    let (obs, _) = render_scene(&SceneSpec {
        model: &model,
        config: cfg.scene.clone(),
    })?;
    let unary = UnaryModel::new(&model, &obs, cfg.inference.unary)?;

    let extreme = |pick_hi: bool| -> Result<Vec<DualQuaternion>> {
        let q: BTreeMap<String, f64> = model
            .joints
            .iter()
            .map(|j| (j.child.clone(), if pick_hi { j.limit_hi } else { j.limit_lo }))
            .collect();
        let poses = forward_kinematics(&model, &q, &root, LimitMode::Strict)?;
        Ok(model.parts.iter().map(|p| poses[&p.id]).collect())
    };
    let families = crate::oracle::chain_families(&model, &root)?;
    let (lo, hi) = (extreme(false)?, extreme(true)?);
    let grids: Vec<GridSpec> = families
        .iter()
        .enumerate()
        .map(|(i, f)| GridSpec {
            lo: f.project(lo[i].translation()) - v.root_range,
            hi: f.project(hi[i].translation()) + v.root_range,
            bins: v.bins,
        })
        .collect();
    let (grid, families) = grid_bp_chain(&model, &root, &grids, &unary, &cfg.inference.pairwise)?;
    for (i, w) in grid.boundary_warning.iter().enumerate() {
        if *w {
            warn!("grid for `{}` peaks at a boundary bin; widen the grid", grid.nodes[i]);
        }
    }

    let prior_poses: BTreeMap<String, Vec<Pose6D>> = model
        .parts
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.clone(), grid.centers[i].iter().map(|&c| families[i].pose(c).to_pose()).collect()))
        .collect();
    let mut params = cfg.inference.clone();
    params.prior = Prior::Informed { poses: prior_poses };
    let graph = build_mrf(&model);
    let workspace = workspace_bounds(&obs, params.workspace_padding)?;

    let per_run = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let mut p = params.clone();
            p.seed = params.seed.wrapping_add(r as u64);
            let run = run_inference_with(&graph, &unary, workspace, &p, |_, _| {})?;
            let fin = run.final_record();
            Ok(families
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let grid_mean = grid.posterior_mean(i);
                    let pmpnbp_mean = f.project(fin.stats[i].mean_pos);
                    let gap = (grid_mean - pmpnbp_mean).abs();
                    let tolerance = (v.tolerance_cells * grids[i].cell_width()).max(v.tolerance_min);
                    NodeGap {
                        run_id: r,
                        node: grid.nodes[i].clone(),
                        grid_mean,
                        pmpnbp_mean,
                        gap,
                        tolerance,
                        within: gap <= tolerance,
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let passing_runs = per_run.iter().filter(|g| g.iter().all(|n| n.within)).count();
    Ok(ValidationReport {
        grid,
        gaps: per_run.into_iter().flatten().collect(),
        passing_runs,
        runs: cfg.runs,
        min_passing: v.min_passing,
    })
}

/// `artic validate`: writes the gap report and grid marginals into `dir`.
pub fn cmd_validate(lc: &LoadedConfig, out_dir: Option<&Path>) -> Result<ValidationReport> {
    let report = validate(lc)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| lc.output_dir());
    write_atomic(&dir.join("validate_report.csv"), &report.to_csv())?;
    write_atomic(&dir.join("grid_marginals.csv"), &report.grid.to_csv())?;
    Ok(report)
}

/// `artic fk`: part poses of the scene's joint configuration as JSON.
pub fn cmd_fk(lc: &LoadedConfig) -> Result<String> {
    let model = KinematicModel::load(lc.resolve(&lc.config.model))?;
    let root = lc.config.scene.root_pose.to_dq()?;
    let poses = forward_kinematics(&model, &lc.config.scene.joint_config, &root, LimitMode::Strict)?;
    let ids: Vec<String> = model.parts.iter().map(|p| p.id.clone()).collect();
    let ordered: Vec<DualQuaternion> = ids.iter().map(|id| poses[id]).collect();
    Ok(poses_json(&ids, &ordered))
}

/// `artic render`: writes `observation.xyz` and `ground_truth.json` into `dir`.
pub fn cmd_render(lc: &LoadedConfig, out_dir: Option<&Path>) -> Result<PathBuf> {
    let scene = build_scene(lc)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| lc.output_dir());
    write_atomic(&dir.join("observation.xyz"), &scene.observation.to_xyz())?;
    write_atomic(&dir.join("ground_truth.json"), &poses_json(&scene.part_ids(), &scene.truth))?;
    Ok(dir)
}

pub fn load_poses(path: &Path) -> Result<BTreeMap<String, DualQuaternion>> {
    let text = std::fs::read_to_string(path).map_err(|e| ArticError::io(path, e))?;
    let raw: BTreeMap<String, Pose6D> =
        serde_json::from_str(&text).map_err(|e| ArticError::parse(path.display().to_string(), e.to_string()))?;
    raw.into_iter().map(|(k, p)| Ok((k, p.to_dq()?))).collect()
}

/// `artic add`: one `part ADD` line per part followed by `mean ADD`.
pub fn cmd_add(lc: &LoadedConfig) -> Result<String> {
    let files = lc
        .config
        .add
        .as_ref()
        .ok_or_else(|| ArticError::Config("`add` section with `estimate` and `ground_truth` is required".into()))?;
    let model = KinematicModel::load(lc.resolve(&lc.config.model))?;
    let est = load_poses(&lc.resolve(&files.estimate))?;
    let gt = load_poses(&lc.resolve(&files.ground_truth))?;
    let points = model_points(&model)?;
    let mut out = String::new();
    let mut total = 0.0;
    for (i, part) in model.parts.iter().enumerate() {
        let find = |m: &BTreeMap<String, DualQuaternion>, which: &str| {
            m.get(&part.id)
                .copied()
                .ok_or_else(|| ArticError::Config(format!("{which} pose file has no pose for `{}`", part.id)))
        };
        let d = add_metric(&find(&est, "estimate")?, &find(&gt, "ground-truth")?, &points[i])?;
        total += d;
        writeln!(out, "{} {d:?}", part.id).unwrap();
    }
    writeln!(out, "mean {:?}", total / model.len() as f64).unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_edit_nested_keys() {
        let mut v = json!({"runs": 10, "inference": {"particles": 400}});
        apply_override(&mut v, "inference.particles=50").unwrap();
        apply_override(&mut v, "runs=1").unwrap();
        apply_override(&mut v, "method=pf").unwrap();
        apply_override(&mut v, "inference.anneal.start=0.5").unwrap();
        assert_eq!(v["inference"]["particles"], json!(50));
        assert_eq!(v["runs"], json!(1));
        assert_eq!(v["method"], json!("pf"));
        assert_eq!(v["inference"]["anneal"]["start"], json!(0.5));
        assert!(apply_override(&mut v, "runs").is_err());
        assert!(apply_override(&mut v, "runs.x=1").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
    }

    #[test]
    fn config_defaults_and_schema_errors() {
        let lc = parse_config(r#"{"model": "m.json"}"#, Path::new("/cfg"), &[]).unwrap();
        assert_eq!(lc.config.runs, 10);
        assert_eq!(lc.config.method, Method::Both);
        assert_eq!(lc.config.inference.particles, 400);
        assert_eq!(lc.config.inference.iterations, 100);
        assert_eq!(lc.resolve(Path::new("m.json")), PathBuf::from("/cfg/m.json"));
        assert_eq!(lc.output_dir(), PathBuf::from("/cfg/out"));

        let bad = [
            r#"{"model": "m.json", "bogus": 1}"#,
            r#"{"model": "m.json", "runs": 0}"#,
            r#"{"model": "m.json", "method": "gibbs"}"#,
            r#"{"runs": 1}"#,
            "not json",
        ];
        for text in bad {
            let e = parse_config(text, Path::new("."), &[]).unwrap_err();
            assert_eq!(exit_code(&e), EXIT_CONFIG, "{text}: {e}");
        }
        let e = parse_config(r#"{"model": "m.json"}"#, Path::new("."), &["inference.particles=0".into()]).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code(&ArticError::FileNotFound("x".into())),
            exit_code(&ArticError::NotAChain("x".into())),
            exit_code(&ArticError::Config("x".into())),
            exit_code(&ArticError::EmptyObservation("x".into())),
            exit_code(&ArticError::DegeneratePose),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 1]);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a").join("f.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn results_rows_are_sorted() {
        let trace = |method, run_id| RunTrace {
            method,
            run_id,
            add: vec![vec![0.5, 0.25], vec![0.125, 0.0625]],
            final_estimates: Vec::new(),
            final_stats: None,
            log: Vec::new(),
            snapshots: Vec::new(),
        };
        let out = ExperimentOutput {
            part_ids: vec!["b".into(), "a".into()],
            traces: vec![trace(Method::Pmpnbp, 1), trace(Method::Pf, 0), trace(Method::Pmpnbp, 0)],
        };
        let csv = results_csv(&out);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "run_id,iteration,part_id,add_m,method");
        assert_eq!(lines[1], "0,0,a,0.25,pf");
        assert_eq!(lines[2], "0,0,b,0.5,pf");
        assert_eq!(lines[5], "0,0,a,0.25,pmpnbp");
        assert_eq!(lines.len(), 1 + 3 * 4);
        let summary = summary_csv(&out, 0).unwrap();
        assert!(summary.lines().any(|l| l == "pmpnbp,_mean,1,0.09375,0.09375,0.09375"));
    }
}
