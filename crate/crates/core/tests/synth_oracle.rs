use std::collections::BTreeSet;

use posegate_core::db::{retrieve_image, RetrievalResult};
use posegate_core::features::{match_features, Descriptors, MatcherConfig};
use posegate_core::gate::{gate_batch, GateConfig, GateQuery, OutlierModel, SyntheticPredictor};
use posegate_core::pose::DistanceConfig;
use posegate_core::synth::{
    generate_scene, generate_split, horizontal_camera, jitter_pose, SceneParams,
};
use posegate_core::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn intersection(a: &[usize], b: &[usize]) -> usize {
    let a: BTreeSet<_> = a.iter().collect();
    b.iter().filter(|i| a.contains(i)).count()
}

#[test]
fn match_counts_equal_visible_set_intersections() {
    let scene = generate_scene(&SceneParams {
        seed: 3,
        ..SceneParams::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let b = scene.bounding_box;
    let mut nonzero = 0;
    let mut degenerate = 0;
    for i in 0..1000 {
        let p = std::array::from_fn(|k| rng.random_range(b.min[k]..b.max[k]));
        let a = horizontal_camera(
            p,
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(-0.2..0.2),
        );
        let other = if i % 2 == 0 {
            jitter_pose(&mut rng, &a, 1.5, 30.0)
        } else {
            let p = std::array::from_fn(|k| rng.random_range(b.min[k]..b.max[k]));
            horizontal_camera(p, rng.random_range(0.0..std::f64::consts::TAU), 0.0)
        };
        let fa = scene.render_frame("a", &a);
        let fb = scene.render_frame("b", &other);
        // The ratio test needs two train descriptors; below that nothing passes.
        let expected = if fb.visible_landmark_ids.len() < 2 {
            degenerate += 1;
            0
        } else {
            intersection(&fa.visible_landmark_ids, &fb.visible_landmark_ids)
        };
        let got = match_features(
            &fa.descriptor_set,
            &fb.descriptor_set,
            &MatcherConfig::default(),
        )
        .unwrap()
        .good_match_count;
        assert_eq!(got, expected, "pair {i}");
        nonzero += usize::from(expected > 0);
    }
    assert!(nonzero > 300, "only {nonzero} overlapping pairs");
    assert!(
        degenerate < 100,
        "{degenerate} pairs with a near-empty train frame"
    );
}

#[test]
fn visibility_rule_is_exact() {
    let scene = generate_scene(&SceneParams {
        seed: 8,
        n_landmarks: 400,
        ..SceneParams::default()
    })
    .unwrap();
    let pose = horizontal_camera([6.0, 5.0, 1.5], 0.4, 0.05);
    let f = scene.render_frame("f", &pose);
    let fwd = pose.forward();
    let expected: Vec<usize> = scene
        .landmarks
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let v: Vec<f64> = (0..3).map(|k| l.position[k] - pose.position()[k]).collect();
            let d = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = (0..3).map(|k| v[k] * fwd[k]).sum::<f64>() / d;
            d > 0.0
                && d <= scene.max_view_distance
                && cos.clamp(-1.0, 1.0).acos().to_degrees() <= 35.0
        })
        .map(|(i, _)| i)
        .collect();
    assert_eq!(f.visible_landmark_ids, expected);
    let Descriptors::Binary(bytes) = f.descriptor_set.descriptors() else {
        panic!("synthetic frames carry binary descriptors")
    };
    for (row, &i) in bytes.chunks(32).zip(&f.visible_landmark_ids) {
        assert_eq!(row, scene.landmarks[i].descriptor.as_slice());
    }
}

#[test]
fn coverage_bias_sets_no_candidate_rate() {
    let scene = generate_scene(&SceneParams::default()).unwrap();
    let split = generate_split(&scene, 21, 1000, 2000, 0.3).unwrap();
    let n_out = split.test_outside.iter().filter(|o| **o).count();
    assert_eq!(n_out, 600);

    let d_th = 1.0;
    let mut rejected = 0;
    for (frame, outside) in split.test_frames.iter().zip(&split.test_outside) {
        let r =
            retrieve_image(&split.db, &frame.true_pose, d_th, DistanceConfig::default()).unwrap();
        let none = r == RetrievalResult::NoCandidate;
        assert_eq!(none, *outside, "{}", frame.image_id);
        rejected += usize::from(none);
    }
    let rate = rejected as f64 / 2000.0;
    assert!((0.25..=0.35).contains(&rate), "rate {rate}");
}

#[test]
fn split_is_deterministic() {
    let scene = generate_scene(&SceneParams {
        n_landmarks: 200,
        ..SceneParams::default()
    })
    .unwrap();
    let a = generate_split(&scene, 5, 30, 30, 0.5).unwrap();
    let b = generate_split(&scene, 5, 30, 30, 0.5).unwrap();
    assert_eq!(a.test_frames, b.test_frames);
    assert_eq!(a.train_frames, b.train_frames);
    assert_eq!(a.test_outside, b.test_outside);
}

#[test]
fn dump_is_readable_by_the_database_layer() {
    let scene = generate_scene(&SceneParams {
        n_landmarks: 300,
        ..SceneParams::default()
    })
    .unwrap();
    let split = generate_split(&scene, 2, 40, 10, 0.3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    split.write_to_dir(dir.path(), 5).unwrap();
    let mut db =
        posegate_core::PoseDatabase::ingest_pose_file(&dir.path().join("train.txt")).unwrap();
    assert_eq!(
        db.attach_descriptor_dir(&dir.path().join("descriptors")),
        40
    );
    for (e, f) in db.entries().iter().zip(&split.train_frames) {
        assert_eq!(e.pose, f.true_pose);
        assert_eq!(*e.load_descriptors().unwrap(), f.descriptor_set);
    }
    let anchors = std::fs::read_to_string(dir.path().join("anchors.txt")).unwrap();
    assert_eq!(anchors.lines().count(), 5);
}

#[test]
fn batch_of_2000_over_1220_entries_equals_sequential() {
    let scene = generate_scene(&SceneParams {
        seed: 12,
        ..SceneParams::default()
    })
    .unwrap();
    let split = generate_split(&scene, 4, 1220, 2000, 0.3).unwrap();
    let pred = SyntheticPredictor::new(
        split.test_ground_truth(),
        0.05,
        2.0,
        0.2,
        1,
        OutlierModel::Displaced { distance_m: 3.0 },
    );
    let queries: Vec<GateQuery> = split
        .test_frames
        .iter()
        .map(|f| GateQuery::new(f.image_id.clone(), f.descriptor_set.clone()))
        .collect();
    let cfg = GateConfig::new(0.5, 20);
    let batch = gate_batch(&queries, &pred, &split.db, &cfg);
    assert_eq!(batch.len(), 2000);
    let mut kinds = [0usize; 3];
    for (q, r) in queries.iter().zip(batch) {
        let d = r.unwrap();
        let s = posegate_core::gate::gate(
            &q.image_id,
            &q.descriptors.get(&q.image_id).unwrap(),
            &pred,
            &split.db,
            &cfg,
        )
        .unwrap();
        assert_eq!(d.verdict, s.verdict);
        assert_eq!(d.predicted_pose, s.predicted_pose);
        kinds[match d.verdict {
            Verdict::Keyframe { .. } => 0,
            Verdict::RejectedNoCandidate => 1,
            Verdict::RejectedInsufficientMatches { .. } => 2,
        }] += 1;
    }
    assert!(kinds.iter().all(|k| *k > 0), "{kinds:?}");
}
