//! Accuracy metrics over gate decisions and gated/ungated comparisons.

mod bench;
pub mod presets;

pub use bench::{bench, BenchError, BenchReport};

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::GateDecision;
use crate::pose::{position_distance, rotation_error_degrees, Pose, PoseError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground truth for image {0:?}")]
    MissingGroundTruth(String),
    #[error("reports describe different runs: {0}")]
    SceneMismatch(String),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

/// Position (meters) and rotation (degrees) bounds of one accuracy tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub max_pos_m: f64,
    pub max_rot_deg: f64,
}

impl Tier {
    pub fn contains(&self, pos_m: f64, rot_deg: f64) -> bool {
        pos_m <= self.max_pos_m && rot_deg <= self.max_rot_deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTiers {
    pub high: Tier,
    pub medium: Tier,
    pub low: Tier,
}

impl Default for AccuracyTiers {
    fn default() -> Self {
        Self {
            high: Tier {
                max_pos_m: 0.25,
                max_rot_deg: 2.0,
            },
            medium: Tier {
                max_pos_m: 0.5,
                max_rot_deg: 5.0,
            },
            low: Tier {
                max_pos_m: 5.0,
                max_rot_deg: 10.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            p50: rank(&v, 0.5)?,
            p95: rank(&v, 0.95)?,
            max: *v.last()?,
        })
    }
}

/// Value at nearest rank `ceil(p * n)` (1-based) of sorted `v`.
fn rank(v: &[f64], p: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let k = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[k - 1])
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub predict: Option<Percentiles>,
    pub retrieve: Option<Percentiles>,
    pub extract: Option<Percentiles>,
    #[serde(rename = "match")]
    pub matching: Option<Percentiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scene: String,
    pub gated: bool,
    pub n_total: usize,
    pub n_keyframes: usize,
    pub keyframe_ratio: f64,
    /// Size of the population the error metrics are computed over.
    pub n_evaluated: usize,
    pub median_pos_m: Option<f64>,
    pub median_ori_deg: Option<f64>,
    pub pct_high: f64,
    pub pct_medium: f64,
    pub pct_low: f64,
    pub latency_us: StageLatency,
}

/// Per-image errors of a prediction: position in meters, rotation in degrees.
pub fn pose_errors(pred: &Pose, gt: &Pose) -> Result<(f64, f64), PoseError> {
    Ok((
        position_distance(pred, gt),
        rotation_error_degrees(pred, gt)?,
    ))
}

/// Aggregates decisions into an accuracy report. In gated mode the error
/// metrics cover keyframes only; otherwise every decision counts.
pub fn evaluate(
    scene: &str,
    decisions: &[GateDecision],
    ground_truth: &HashMap<String, Pose>,
    tiers: &AccuracyTiers,
    gated: bool,
) -> Result<EvalReport, EvalError> {
    let mut pos = Vec::new();
    let mut rot = Vec::new();
    let mut counts = [0usize; 3];
    for d in decisions {
        let gt = ground_truth
            .get(&d.image_id)
            .ok_or_else(|| EvalError::MissingGroundTruth(d.image_id.clone()))?;
        if gated && !d.verdict.is_keyframe() {
            continue;
        }
        let (p, r) = pose_errors(&d.predicted_pose, gt)?;
        for (c, tier) in counts.iter_mut().zip([tiers.high, tiers.medium, tiers.low]) {
            *c += usize::from(tier.contains(p, r));
        }
        pos.push(p);
        rot.push(r);
    }

    let n_total = decisions.len();
    let n_keyframes = decisions.iter().filter(|d| d.verdict.is_keyframe()).count();
    let n = pos.len();
    let pct = |c: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * c as f64 / n as f64
        }
    };
    let stage = |f: fn(&GateDecision) -> Option<u64>| {
        let v: Vec<f64> = decisions
            .iter()
            .filter_map(|d| f(d).map(|x| x as f64))
            .collect();
        Percentiles::of(&v)
    };

    Ok(EvalReport {
        scene: scene.to_string(),
        gated,
        n_total,
        n_keyframes,
        keyframe_ratio: if n_total == 0 {
            0.0
        } else {
            n_keyframes as f64 / n_total as f64
        },
        n_evaluated: n,
        median_pos_m: lower_median(&pos),
        median_ori_deg: lower_median(&rot),
        pct_high: pct(counts[0]),
        pct_medium: pct(counts[1]),
        pct_low: pct(counts[2]),
        latency_us: StageLatency {
            predict: stage(|d| d.timing.predict),
            retrieve: stage(|d| d.timing.retrieve),
            extract: stage(|d| d.timing.extract),
            matching: stage(|d| d.timing.matching),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub ungated: Option<f64>,
    pub gated: Option<f64>,
    /// `gated - ungated`.
    pub delta: Option<f64>,
    /// Relative improvement in percent: error reductions for error metrics,
    /// relative gains for percentages. `None` when the baseline is 0.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scene: String,
    pub n_total: usize,
    pub rows: Vec<DeltaRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "{:<16} {:>12} {:>12} {:>12} {:>12}\n",
            "metric", "ungated", "gated", "delta", "improv.%"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>12} {:>12} {:>12} {:>12}",
                r.metric,
                fmt(r.ungated),
                fmt(r.gated),
                fmt(r.delta),
                r.improvement_pct
                    .map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
            );
        }
        out
    }
}

/// Per-metric deltas between an ungated and a gated run over the same
/// query set.
pub fn compare_runs(ungated: &EvalReport, gated: &EvalReport) -> Result<Comparison, EvalError> {
    if ungated.scene != gated.scene {
        return Err(EvalError::SceneMismatch(format!(
            "scene {:?} vs {:?}",
            ungated.scene, gated.scene
        )));
    }
    if ungated.n_total != gated.n_total {
        return Err(EvalError::SceneMismatch(format!(
            "{} vs {} queries",
            ungated.n_total, gated.n_total
        )));
    }
    let row = |metric: &str, u: Option<f64>, g: Option<f64>, lower_is_better: bool| {
        let delta = u.zip(g).map(|(u, g)| g - u);
        let improvement_pct = u.zip(g).and_then(|(u, g)| {
            (u != 0.0).then(|| {
                if lower_is_better {
                    (u - g) / u * 100.0
                } else {
                    (g - u) / u * 100.0
                }
            })
        });
        DeltaRow {
            metric: metric.to_string(),
            ungated: u,
            gated: g,
            delta,
            improvement_pct,
        }
    };
    Ok(Comparison {
        scene: gated.scene.clone(),
        n_total: gated.n_total,
        rows: vec![
            row(
                "median_pos_m",
                ungated.median_pos_m,
                gated.median_pos_m,
                true,
            ),
            row(
                "median_ori_deg",
                ungated.median_ori_deg,
                gated.median_ori_deg,
                true,
            ),
            row(
                "pct_high",
                Some(ungated.pct_high),
                Some(gated.pct_high),
                false,
            ),
            row(
                "pct_medium",
                Some(ungated.pct_medium),
                Some(gated.pct_medium),
                false,
            ),
            row("pct_low", Some(ungated.pct_low), Some(gated.pct_low), false),
            row(
                "keyframe_ratio",
                Some(ungated.keyframe_ratio),
                Some(gated.keyframe_ratio),
                false,
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{StageTimings, Verdict};
    use crate::pose::quat_from_axis_angle;

    fn decision(id: &str, pred: Pose, keyframe: bool) -> GateDecision {
        GateDecision {
            image_id: id.into(),
            verdict: if keyframe {
                Verdict::Keyframe {
                    retrieved_image_id: "t".into(),
                    good_match_count: 10,
                }
            } else {
                Verdict::RejectedNoCandidate
            },
            predicted_pose: pred,
            timing: StageTimings {
                predict: Some(1),
                retrieve: Some(2),
                extract: None,
                matching: None,
            },
        }
    }

    #[test]
    fn exact_predictions() {
        let gt: HashMap<String, Pose> = (0..4)
            .map(|i| (format!("q{i}"), Pose::identity()))
            .collect();
        let ds: Vec<_> = (0..4)
            .map(|i| decision(&format!("q{i}"), Pose::identity(), i % 2 == 0))
            .collect();
        let r = evaluate("s", &ds, &gt, &AccuracyTiers::default(), false).unwrap();
        assert_eq!((r.median_pos_m, r.median_ori_deg), (Some(0.0), Some(0.0)));
        assert_eq!((r.pct_high, r.pct_medium, r.pct_low), (100.0, 100.0, 100.0));
        assert_eq!(r.keyframe_ratio, 0.5);
        assert_eq!(r.latency_us.extract, None);
        assert_eq!(r.latency_us.retrieve.unwrap().p50, 2.0);
    }

    #[test]
    fn tiers_require_both_bounds() {
        let gt: HashMap<String, Pose> = [("q".to_string(), Pose::identity())].into();
        let pred = Pose::new(
            [0.3, 0.0, 0.0],
            quat_from_axis_angle([0.0, 0.0, 1.0], 1f64.to_radians()),
        )
        .unwrap();
        let r = evaluate(
            "s",
            &[decision("q", pred, true)],
            &gt,
            &AccuracyTiers::default(),
            true,
        )
        .unwrap();
        assert_eq!((r.pct_high, r.pct_medium, r.pct_low), (0.0, 100.0, 100.0));
        assert!((r.median_pos_m.unwrap() - 0.3).abs() < 1e-12);
        assert!((r.median_ori_deg.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gated_population_is_keyframes_only() {
        let gt: HashMap<String, Pose> = [("a", 0.0), ("b", 3.0)]
            .iter()
            .map(|(id, _)| (id.to_string(), Pose::identity()))
            .collect();
        let ds = vec![
            decision(
                "a",
                Pose::new([0.1, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap(),
                true,
            ),
            decision(
                "b",
                Pose::new([3.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap(),
                false,
            ),
        ];
        let g = evaluate("s", &ds, &gt, &AccuracyTiers::default(), true).unwrap();
        let u = evaluate("s", &ds, &gt, &AccuracyTiers::default(), false).unwrap();
        assert_eq!((g.n_evaluated, u.n_evaluated), (1, 2));
        assert_eq!(g.median_pos_m, Some(0.1));
        // Lower median of {0.1, 3.0}.
        assert_eq!(u.median_pos_m, Some(0.1));
        assert_eq!(u.pct_high, 50.0);
    }

    #[test]
    fn missing_ground_truth() {
        let ds = vec![decision("x", Pose::identity(), true)];
        assert!(matches!(
            evaluate("s", &ds, &HashMap::new(), &AccuracyTiers::default(), true),
            Err(EvalError::MissingGroundTruth(id)) if id == "x"
        ));
    }

    #[test]
    fn empty_gated_population() {
        let gt: HashMap<String, Pose> = [("q".to_string(), Pose::identity())].into();
        let r = evaluate(
            "s",
            &[decision("q", Pose::identity(), false)],
            &gt,
            &AccuracyTiers::default(),
            true,
        )
        .unwrap();
        assert_eq!((r.n_evaluated, r.median_pos_m, r.pct_high), (0, None, 0.0));
    }

    #[test]
    fn lower_median_and_percentiles() {
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[5.0]), Some(5.0));
        assert_eq!(lower_median(&[]), None);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(
            Percentiles::of(&v),
            Some(Percentiles {
                p50: 50.0,
                p95: 95.0,
                max: 100.0
            })
        );
    }

    fn report(scene: &str, median: f64, high: f64) -> EvalReport {
        EvalReport {
            scene: scene.into(),
            gated: false,
            n_total: 10,
            n_keyframes: 5,
            keyframe_ratio: 0.5,
            n_evaluated: 10,
            median_pos_m: Some(median),
            median_ori_deg: Some(2.0),
            pct_high: high,
            pct_medium: 90.0,
            pct_low: 99.0,
            latency_us: StageLatency::default(),
        }
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let r = report("s", 0.2, 50.0);
        let c = compare_runs(&r, &r).unwrap();
        assert!(c.rows.iter().all(|row| row.delta == Some(0.0)));
        assert!(c.to_table().contains("median_pos_m"));
    }

    #[test]
    fn chess_reference_delta() {
        let c = compare_runs(&report("chess", 0.2, 67.9), &report("chess", 0.1, 78.8)).unwrap();
        let high = c.row("pct_high").unwrap();
        assert!((high.delta.unwrap() - 10.9).abs() < 1e-9);
        assert!((c.row("median_pos_m").unwrap().improvement_pct.unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_runs() {
        assert!(matches!(
            compare_runs(&report("a", 0.1, 1.0), &report("b", 0.1, 1.0)),
            Err(EvalError::SceneMismatch(_))
        ));
        let mut other = report("a", 0.1, 1.0);
        other.n_total = 3;
        assert!(compare_runs(&report("a", 0.1, 1.0), &other).is_err());
    }
}
