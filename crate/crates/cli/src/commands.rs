use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use posegate_core::db::{read_pose_file, DescriptorRef, PoseDatabase, PoseRecord};
use posegate_core::eval::{self, presets, AccuracyTiers, EvalReport};
use posegate_core::features::{
    cache_file_name, load_image, preprocess_image, write_descriptor_cache, CornerBriefDetector,
    FeatureDetector,
};
use posegate_core::gate::{
    gate_batch, gate_with, FilePredictor, GateConfig, GateQuery, OutlierModel, PosePredictor,
    PredictorSpec, QueryFeatures, SyntheticPredictor,
};
use posegate_core::pose::{DistanceConfig, Pose};
use posegate_core::synth::{generate_scene, generate_split, Aabb, SceneParams};
use posegate_core::tune::tune_gamma;
use posegate_core::MatcherConfig;
use serde::Serialize;

use crate::error::CliError;

pub struct GateOptions {
    pub db: PathBuf,
    pub pred: PredictorSpec,
    pub d_th: f64,
    pub gamma: u32,
    pub ratio: f64,
    pub sign_invariant: bool,
    pub query_descriptors: Option<PathBuf>,
}

impl GateOptions {
    fn config(&self) -> Result<GateConfig, CliError> {
        let mut cfg = GateConfig::new(self.d_th, self.gamma).with_ratio(self.ratio);
        cfg.distance.sign_invariant_orientation = self.sign_invariant;
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).map_err(CliError::config)?;
    match out {
        Some(path) => fs::write(path, json + "\n")
            .map_err(|e| CliError::config(format!("{}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn load_db(path: &Path) -> Result<(PoseDatabase, Option<PathBuf>), CliError> {
    Ok(PoseDatabase::load_manifest(path)?)
}

pub fn build_db(
    poses: &Path,
    descriptors: Option<&Path>,
    scene: Option<String>,
    out: &Path,
) -> Result<(), CliError> {
    let mut db = PoseDatabase::ingest_pose_file(poses)?;
    if let Some(scene) = scene {
        db.set_scene_name(scene);
    }
    let dir = match descriptors {
        Some(d) if !d.is_dir() => {
            return Err(CliError::missing(format!(
                "descriptor directory {} not found",
                d.display()
            )));
        }
        Some(d) => Some(
            fs::canonicalize(d).map_err(|e| CliError::missing(format!("{}: {e}", d.display())))?,
        ),
        None => None,
    };
    let attached = dir.as_deref().map_or(0, |d| db.attach_descriptor_dir(d));
    db.save_manifest(out, dir.as_deref())?;
    eprintln!(
        "scene {:?}: {} entries, {} with descriptors -> {}",
        db.scene_name(),
        db.len(),
        attached,
        out.display()
    );
    Ok(())
}

pub fn extract(images: &Path, poses: &Path, out: &Path) -> Result<(), CliError> {
    let records = read_pose_file(poses)?;
    fs::create_dir_all(out).map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    let detector = CornerBriefDetector::default();
    let mut total = 0;
    for rec in &records {
        let path = images.join(&rec.image_id);
        if !path.is_file() {
            return Err(CliError::missing(format!(
                "image {} not found",
                path.display()
            )));
        }
        let gray = preprocess_image(&load_image(&path)?)?;
        let set = detector.extract(&rec.image_id, &gray)?;
        total += set.len();
        write_descriptor_cache(out, &set)?;
    }
    eprintln!(
        "{} images, {} keypoints -> {}",
        records.len(),
        total,
        out.display()
    );
    Ok(())
}

fn read_anchor_file(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing(format!("{}: {e}", path.display())),
        _ => CliError::config(format!("{}: {e}", path.display())),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().next().unwrap_or(l).to_string())
        .collect())
}

pub fn tune(
    db: &Path,
    anchors: &Path,
    d_th: f64,
    ratio: f64,
    sign_invariant: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (db, _) = load_db(db)?;
    let anchors = read_anchor_file(anchors)?;
    let matcher = MatcherConfig::with_ratio(ratio);
    let cfg = DistanceConfig {
        sign_invariant_orientation: sign_invariant,
    };
    let report = tune_gamma(&db, &anchors, d_th, &matcher, cfg)?;

    let mut hist: Vec<(usize, usize)> = Vec::new();
    for c in report.match_distribution() {
        match hist.last_mut() {
            Some((v, n)) if *v == c => *n += 1,
            _ => hist.push((c, 1)),
        }
    }
    let mut table = format!(
        "{} anchors, {} far pairs\nmatches  pairs\n",
        anchors.len(),
        report.pairs.len()
    );
    for (v, n) in hist {
        let _ = writeln!(table, "{v:>7}  {n:>5}");
    }
    let _ = writeln!(
        table,
        "max matches {}; suggested gamma {}",
        report.max_matches, report.suggested_gamma
    );
    eprint!("{table}");
    write_json(&report, out)
}

fn pose_map(records: &[PoseRecord]) -> Result<HashMap<String, Pose>, CliError> {
    records
        .iter()
        .map(|r| {
            Pose::from_array(r.values)
                .map(|p| (r.image_id.clone(), p))
                .map_err(|e| CliError::config(format!("line {}: {e}", r.line)))
        })
        .collect()
}

/// Synthetic predictions need the queries' ground truth. Outliers land
/// anywhere in the box spanned by database and query positions; inliers are
/// confined to the box spanned by the database.
fn build_predictor(
    spec: &PredictorSpec,
    db: &PoseDatabase,
    queries: Option<&HashMap<String, Pose>>,
) -> Result<Box<dyn PosePredictor>, CliError> {
    match spec {
        PredictorSpec::File(path) => Ok(Box::new(FilePredictor::from_file(path)?)),
        PredictorSpec::Synthetic {
            sigma_pos_m,
            sigma_rot_deg,
            p_out,
            seed,
        } => {
            let gt = queries.ok_or_else(|| {
                CliError::config("synthetic predictors need --queries for ground truth")
            })?;
            let db_pos: Vec<[f64; 3]> = db.entries().iter().map(|e| e.pose.position()).collect();
            let q_pos: Vec<[f64; 3]> = gt.values().map(|p| p.position()).collect();
            let support =
                Aabb::enclosing(&db_pos).ok_or_else(|| CliError::missing("database is empty"))?;
            let outer = Aabb::enclosing(db_pos.iter().chain(&q_pos)).expect("non-empty");
            let p = SyntheticPredictor::new(
                gt.clone(),
                *sigma_pos_m,
                *sigma_rot_deg,
                *p_out,
                *seed,
                OutlierModel::UniformBox {
                    min: outer.min,
                    max: outer.max,
                },
            )
            .with_support_box(support.min, support.max);
            Ok(Box::new(p))
        }
    }
}

fn query_dir(opts: &GateOptions, db_dir: Option<PathBuf>) -> Result<PathBuf, CliError> {
    opts.query_descriptors
        .clone()
        .or(db_dir)
        .ok_or_else(|| CliError::missing("no query descriptor directory: pass --query-descriptors"))
}

pub fn gate_one(opts: &GateOptions, query: &str, queries: Option<&Path>) -> Result<(), CliError> {
    let cfg = opts.config()?;
    let (db, db_dir) = load_db(&opts.db)?;
    let gt = queries
        .map(|q| {
            read_pose_file(q)
                .map_err(CliError::from)
                .and_then(|r| pose_map(&r))
        })
        .transpose()?;
    let predictor = build_predictor(&opts.pred, &db, gt.as_ref())?;
    let dir = query_dir(opts, db_dir)?;
    let descriptors = DescriptorRef::cache_file(dir.join(cache_file_name(query)));
    let decision = gate_with(
        query,
        QueryFeatures::Deferred(&descriptors),
        &*predictor,
        &db,
        &cfg,
    )?;
    println!("{}", decision.to_json_line());
    Ok(())
}

#[derive(Serialize)]
struct EvaluateOutput {
    d_th: f64,
    gamma: u32,
    ratio: f64,
    gated: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ungated: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<eval::Comparison>,
}

fn report_lines(r: &EvalReport) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.3}"));
    format!(
        "{:<8} n={:<6} keyframes={:<6} ({:.1}%)  median {} m / {} deg  high/medium/low {:.1}/{:.1}/{:.1}\n",
        if r.gated { "gated" } else { "ungated" },
        r.n_evaluated,
        r.n_keyframes,
        100.0 * r.keyframe_ratio,
        f(r.median_pos_m),
        f(r.median_ori_deg),
        r.pct_high,
        r.pct_medium,
        r.pct_low
    )
}

pub fn evaluate(
    opts: &GateOptions,
    queries: &Path,
    ungated_baseline: bool,
    log: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = opts.config()?;
    let (db, db_dir) = load_db(&opts.db)?;
    let records = read_pose_file(queries)?;
    let gt = pose_map(&records)?;
    let predictor = build_predictor(&opts.pred, &db, Some(&gt))?;
    let dir = query_dir(opts, db_dir)?;
    let batch: Vec<GateQuery> = records
        .iter()
        .map(|r| {
            GateQuery::deferred(
                r.image_id.clone(),
                DescriptorRef::cache_file(dir.join(cache_file_name(&r.image_id))),
            )
        })
        .collect();
    let decisions = gate_batch(&batch, &*predictor, &db, &cfg)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    if let Some(path) = log {
        let lines: String = decisions.iter().map(|d| d.to_json_line() + "\n").collect();
        fs::write(path, lines).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    }

    let tiers = AccuracyTiers::default();
    let scene = db.scene_name();
    let gated = eval::evaluate(scene, &decisions, &gt, &tiers, true)?;
    let mut table = report_lines(&gated);
    let (ungated, comparison) = if ungated_baseline {
        let u = eval::evaluate(scene, &decisions, &gt, &tiers, false)?;
        let c = eval::compare_runs(&u, &gated)?;
        table.insert_str(0, &report_lines(&u));
        table.push('\n');
        table.push_str(&c.to_table());
        (Some(u), Some(c))
    } else {
        (None, None)
    };
    eprint!("{table}");
    write_json(
        &EvaluateOutput {
            d_th: cfg.d_th,
            gamma: cfg.gamma,
            ratio: cfg.matcher.ratio,
            gated,
            ungated,
            comparison,
        },
        out,
    )
}

#[derive(Serialize)]
struct SceneInfo {
    params: SceneParams,
    split_seed: u64,
    n_train: usize,
    n_test: usize,
    coverage_bias: f64,
    training_region: Aabb,
    outside_region: Aabb,
}

pub fn synth(
    seed: u64,
    landmarks: usize,
    train: usize,
    test: usize,
    bias: f64,
    anchors: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let params = SceneParams {
        seed,
        n_landmarks: landmarks,
        ..SceneParams::default()
    };
    let scene = generate_scene(&params)?;
    let split_seed = seed.wrapping_add(1);
    let split = generate_split(&scene, split_seed, train, test, bias)?;
    fs::create_dir_all(out).map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    let n_anchors = anchors.unwrap_or((train / 10).max(1));
    split.write_to_dir(out, n_anchors)?;
    let mut db = PoseDatabase::ingest_pose_file(&out.join("train.txt"))?;
    db.set_scene_name(format!("synthetic-{seed}"));
    db.save_manifest(&out.join("db.json"), Some(Path::new("descriptors")))?;
    write_json(
        &SceneInfo {
            params,
            split_seed,
            n_train: train,
            n_test: test,
            coverage_bias: bias,
            training_region: split.training_region,
            outside_region: split.outside_region,
        },
        Some(&out.join("scene.json")),
    )?;
    eprintln!(
        "{} landmarks, {} train, {} test ({} outside) -> {}",
        landmarks,
        train,
        test,
        split.test_outside.iter().filter(|o| **o).count(),
        out.display()
    );
    Ok(())
}

pub fn bench(db_size: usize, descriptors: usize, reps: usize, seed: u64) -> Result<(), CliError> {
    let r = eval::bench(db_size, descriptors, reps, seed)?;
    eprintln!("stage       p50 us    p95 us    max us");
    for (name, p) in [
        ("retrieval", &r.retrieval_us),
        ("matching", &r.matching_us),
        ("combined", &r.combined_us),
    ] {
        eprintln!("{name:<10}{:>9.1}{:>10.1}{:>10.1}", p.p50, p.p95, p.max);
    }
    write_json(&r, None)
}

pub fn presets() -> Result<(), CliError> {
    eprintln!(
        "{:<10} {:<9} {:<9} {:>5} {:>6} {:>6}",
        "dataset", "scene", "regressor", "d_th", "gamma", "ratio"
    );
    for p in presets::PRESETS {
        eprintln!(
            "{:<10} {:<9} {:<9} {:>5.2} {:>6} {:>6.1}",
            p.dataset, p.scene, p.regressor, p.d_th, p.gamma, p.ratio
        );
    }
    write_json(&presets::PRESETS, None)
}
