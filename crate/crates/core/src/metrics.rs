//! ADD metric and aggregation of per-run error traces.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{ArticError, Result};
use crate::geometry::{DualQuaternion, Vec3};
use crate::model::KinematicModel;
use crate::observation::sample_surface;
use crate::random::{self, DOMAIN_BOOTSTRAP, DOMAIN_PART_SAMPLING};

/// Surface density of the point sets used for ADD, points per m².
pub const ADD_DENSITY: f64 = 500.0;
const ADD_SEED: u64 = 0xadd0_5eed;

/// Mean distance between the model points moved by `est` and by `gt`.
pub fn add_metric(est: &DualQuaternion, gt: &DualQuaternion, model_points: &[Vec3]) -> Result<f64> {
    if model_points.is_empty() {
        return Err(ArticError::InvalidArgument("ADD needs a non-empty model point set".into()));
    }
    let (a, b) = (est.to_transform(), gt.to_transform());
    let sum: f64 = model_points.iter().map(|&p| a.apply(p).distance(b.apply(p))).sum();
    Ok(sum / model_points.len() as f64)
}

/// Per-part ADD point sets in the part frame, fixed for a given model.
pub fn model_points(model: &KinematicModel) -> Result<Vec<Vec<Vec3>>> {
    model
        .parts
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let seed = random::derive_seed(ADD_SEED, &[DOMAIN_PART_SAMPLING, i as u64]);
            sample_surface(&part.geometry, ADD_DENSITY, seed)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AddResult {
    pub per_part: BTreeMap<String, f64>,
    pub mean: f64,
}

/// ADD of every part; `est` and `gt` are indexed like `model.parts`.
pub fn add_all(
    model: &KinematicModel,
    points: &[Vec<Vec3>],
    est: &[DualQuaternion],
    gt: &[DualQuaternion],
) -> Result<AddResult> {
    if est.len() != model.len() || gt.len() != model.len() || points.len() != model.len() {
        return Err(ArticError::InvalidArgument("pose count does not match the part count".into()));
    }
    let mut per_part = BTreeMap::new();
    for (i, part) in model.parts.iter().enumerate() {
        per_part.insert(part.id.clone(), add_metric(&est[i], &gt[i], &points[i])?);
    }
    let mean = per_part.values().sum::<f64>() / per_part.len() as f64;
    Ok(AddResult { per_part, mean })
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub iteration: usize,
    pub median: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Per-iteration median over runs with a percentile-bootstrap 95% interval
/// of the median.
pub fn aggregate_runs(traces: &[Vec<f64>], bootstrap_seed: u64) -> Result<Vec<SummaryRow>> {
    let first = traces
        .first()
        .ok_or_else(|| ArticError::InvalidArgument("no traces to aggregate".into()))?;
    if traces.iter().any(|t| t.len() != first.len()) {
        return Err(ArticError::InvalidArgument("traces have different lengths".into()));
    }
    let runs = traces.len();
    let mut rng = random::stream(bootstrap_seed, &[DOMAIN_BOOTSTRAP]);
    let draws: Vec<Vec<usize>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..runs).map(|_| rng.gen_range(0..runs)).collect())
        .collect();
    Ok((0..first.len())
        .map(|it| {
            let column: Vec<f64> = traces.iter().map(|t| t[it]).collect();
            let mut medians: Vec<f64> = draws
                .iter()
                .map(|d| median(&d.iter().map(|&r| column[r]).collect::<Vec<_>>()))
                .collect();
            medians.sort_by(f64::total_cmp);
            SummaryRow {
                iteration: it,
                median: median(&column),
                ci_lo: quantile_sorted(&medians, 0.025),
                ci_hi: quantile_sorted(&medians, 0.975),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{dq_mul, Quat};

    fn random_dq(rng: &mut ChaCha8Rng) -> DualQuaternion {
        let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        DualQuaternion::from_rotation_translation(Quat::random(rng), t)
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)))
            .collect()
    }

    #[test]
    fn identical_poses_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = cloud(&mut rng, 100);
        let p = random_dq(&mut rng);
        assert_eq!(add_metric(&p, &p, &pts).unwrap(), 0.0);
        assert!(add_metric(&p, &p, &[]).is_err());
    }

    #[test]
    fn pure_translation_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = cloud(&mut rng, 200);
        let gt = random_dq(&mut rng);
        let est = dq_mul(&gt, &DualQuaternion::from_translation(Vec3::new(0.03, 0.0, 0.0)));
        assert!((add_metric(&est, &gt, &pts).unwrap() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn rotation_about_centroid_matches_pointwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = cloud(&mut rng, 300);
        let n = pts.len() as f64;
        let c = pts.iter().fold(Vec3::ZERO, |a, p| a + *p) * (1.0 / n);
        let centered: Vec<Vec3> = pts.iter().map(|p| *p - c).collect();
        let theta = 0.4;
        let axis = Vec3::new(1.0, 2.0, -0.5).normalized().unwrap();
        let gt = random_dq(&mut rng);
        let est = dq_mul(&gt, &DualQuaternion::from_rotation(Quat::from_axis_angle(axis, theta)));
        // Each point moves by 2 r sin(θ/2), r its distance from the axis.
        let brute = centered
            .iter()
            .map(|p| {
                let r = (*p - axis * p.dot(axis)).norm();
                2.0 * r * (theta / 2.0).sin()
            })
            .sum::<f64>()
            / n;
        assert!((add_metric(&est, &gt, &centered).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn model_points_are_fixed() {
        let m = crate::model::parse_model(
            r#"{"root": "a", "parts": [{"id": "a", "geometry": {"kind": "box", "w": 0.2, "h": 0.2, "d": 0.2}}]}"#,
        )
        .unwrap();
        let a = model_points(&m).unwrap();
        assert_eq!(a, model_points(&m).unwrap());
        assert_eq!(a[0].len(), 120);
    }

    #[test]
    fn quantiles_match_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn aggregate_examples() {
        let same = vec![vec![1.0, 0.5, 0.2]; 5];
        for row in aggregate_runs(&same, 0).unwrap() {
            assert_eq!(row.ci_lo, row.ci_hi);
            assert_eq!(row.median, same[0][row.iteration]);
        }
        let single = aggregate_runs(&[vec![3.0, 2.0]], 0).unwrap();
        assert_eq!(single.iter().map(|r| r.median).collect::<Vec<_>>(), vec![3.0, 2.0]);
        assert!(single.iter().all(|r| r.ci_lo == r.ci_hi));
        assert!(aggregate_runs(&[vec![1.0], vec![1.0, 2.0]], 0).is_err());
        assert!(aggregate_runs(&[], 0).is_err());
    }

    #[test]
    fn aggregate_matches_direct_quantiles() {
        // Run k has value k at iteration 0 and 10 - k at iteration 1.
        let traces: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, 10.0 - k as f64]).collect();
        let rows = aggregate_runs(&traces, 7).unwrap();
        assert_eq!(rows[0].median, 4.5);
        assert_eq!(rows[1].median, 5.5);

        // Independent bootstrap replay with the same stream.
        let mut rng = random::stream(7, &[DOMAIN_BOOTSTRAP]);
        let mut meds: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
            .map(|_| {
                let mut xs: Vec<f64> = (0..10).map(|_| rng.gen_range(0..10) as f64).collect();
                xs.sort_by(f64::total_cmp);
                (xs[4] + xs[5]) / 2.0
            })
            .collect();
        meds.sort_by(f64::total_cmp);
        let lo_pos = 0.025 * (BOOTSTRAP_RESAMPLES - 1) as f64;
        let expect_lo = meds[lo_pos.floor() as usize]
            + (lo_pos - lo_pos.floor()) * (meds[lo_pos.ceil() as usize] - meds[lo_pos.floor() as usize]);
        assert!((rows[0].ci_lo - expect_lo).abs() < 1e-12);
        assert!(rows[0].ci_lo <= rows[0].median && rows[0].median <= rows[0].ci_hi);
    }

    proptest! {
        #[test]
        fn add_triangle_and_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = cloud(&mut rng, 50);
            let (a, b, c, g) = (random_dq(&mut rng), random_dq(&mut rng), random_dq(&mut rng), random_dq(&mut rng));
            let ab = add_metric(&a, &b, &pts).unwrap();
            let bc = add_metric(&b, &c, &pts).unwrap();
            let ac = add_metric(&a, &c, &pts).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((ab - add_metric(&b, &a, &pts).unwrap()).abs() < 1e-12);
            let gab = add_metric(&dq_mul(&g, &a), &dq_mul(&g, &b), &pts).unwrap();
            prop_assert!((gab - ab).abs() < 1e-9);
        }
    }
}
