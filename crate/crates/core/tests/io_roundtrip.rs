use std::path::Path;
use std::time::Instant;

use posegate_core::db::{format_pose_text, parse_pose_text, read_pose_file, PoseDatabase};
use posegate_core::features::{
    cache_file_name, encode_descriptor_cache as encode, read_descriptor_cache,
    write_descriptor_cache, DescriptorSet, Descriptors,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn golden_real_cache() {
    let path = fixture("real_l2.pgdc");
    let set = read_descriptor_cache(&path, "seq-01/frame-000007.color.png").unwrap();
    let expected = DescriptorSet::new(
        "seq-01/frame-000007.color.png",
        vec![[0.0, 0.0], [12.5, 300.25], [379.5, 1.0]],
        4,
        Descriptors::Real(vec![
            0.0, 1.0, -2.5, 3.25, 0.125, -0.0, 1e-3, 65504.0, -1.5, 2.0, 0.5, -0.25,
        ]),
    )
    .unwrap();
    assert_eq!(set, expected);
    // Negative zero survives.
    let Descriptors::Real(v) = set.descriptors() else {
        panic!("kind")
    };
    assert!(v[5].is_sign_negative());
    assert_eq!(encode(&expected), std::fs::read(&path).unwrap());
}

#[test]
fn golden_binary_cache() {
    let path = fixture("binary.pgdc");
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(
        &bytes[..15],
        b"PGDC\x01\x00\x01\x02\x00\x00\x00\x04\x00\x00\x00"
    );
    let expected = DescriptorSet::new(
        "b",
        vec![[10.0, 20.0], [30.5, 40.75]],
        4,
        Descriptors::Binary(vec![0x00, 0xff, 0x5a, 0xa5, 0x01, 0x02, 0x04, 0x80]),
    )
    .unwrap();
    assert_eq!(read_descriptor_cache(&path, "b").unwrap(), expected);
    assert_eq!(encode(&expected), bytes);
}

#[test]
fn random_caches_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..50 {
        let n = rng.random_range(0..40);
        let dim = rng.random_range(1..70);
        let kps = (0..n)
            .map(|_| {
                [
                    rng.random_range(0.0..380.0f32),
                    rng.random_range(0.0..380.0f32),
                ]
            })
            .collect();
        let desc = if i % 2 == 0 {
            Descriptors::Real(
                (0..n * dim)
                    .map(|_| f32::from_bits(rng.random::<u32>() & 0xBF7F_FFFF))
                    .collect(),
            )
        } else {
            Descriptors::Binary((0..n * dim).map(|_| rng.random()).collect())
        };
        let set = DescriptorSet::new(format!("seq/{i}.png"), kps, dim, desc).unwrap();
        let path = write_descriptor_cache(dir.path(), &set).unwrap();
        assert_eq!(
            path.file_name().unwrap().to_str().unwrap(),
            cache_file_name(set.image_id())
        );
        let back = read_descriptor_cache(&path, set.image_id()).unwrap();
        // Clearing the top exponent bit above keeps every value finite.
        assert_eq!(encode(&back), encode(&set));
        assert_eq!(back, set);
    }
}

fn random_pose_text(rng: &mut ChaCha8Rng, n: usize) -> String {
    let rows: Vec<(String, [f64; 7])> = (0..n)
        .map(|i| {
            let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            let mut v = [0.0; 7];
            for slot in v.iter_mut().take(3) {
                *slot = rng.random_range(-50.0..50.0);
            }
            for k in 0..4 {
                v[3 + k] = q[k] / norm;
            }
            (format!("seq{}/frame{:05}.png", i % 8, i), v)
        })
        .collect();
    format_pose_text(rows.iter().map(|(id, v)| (id.as_str(), *v)))
}

#[test]
fn pose_file_bit_exact_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let text = random_pose_text(&mut rng, 300);
    let records = parse_pose_text(&text).unwrap();
    let db = PoseDatabase::from_records("s", &records).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("poses.txt");
    db.write_pose_file(&path).unwrap();
    let again = read_pose_file(&path).unwrap();
    assert_eq!(again.len(), records.len());
    for (a, b) in records.iter().zip(&again) {
        assert_eq!(a.image_id, b.image_id);
        assert_eq!(a.values.map(f64::to_bits), b.values.map(f64::to_bits));
    }
    let db2 = PoseDatabase::ingest_pose_file(&path).unwrap();
    for (a, b) in db.entries().iter().zip(db2.entries()) {
        assert_eq!(a.image_id, b.image_id);
        assert_eq!(
            a.pose.to_array().map(f64::to_bits),
            b.pose.to_array().map(f64::to_bits)
        );
    }
}

#[test]
fn manifest_round_trip_with_relative_descriptors() {
    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("desc");
    std::fs::create_dir(&desc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let text = random_pose_text(&mut rng, 20);
    let db = PoseDatabase::from_records("scene", &parse_pose_text(&text).unwrap()).unwrap();
    let first = &db.entries()[0];
    let set = DescriptorSet::new(
        first.image_id.clone(),
        vec![[1.0, 2.0]],
        2,
        Descriptors::Binary(vec![7, 9]),
    )
    .unwrap();
    write_descriptor_cache(&desc, &set).unwrap();

    let manifest = dir.path().join("db.json");
    db.save_manifest(&manifest, Some(Path::new("desc")))
        .unwrap();
    let (loaded, resolved) = PoseDatabase::load_manifest(&manifest).unwrap();
    assert_eq!(resolved.unwrap(), desc);
    assert_eq!(loaded.scene_name(), "scene");
    assert_eq!(loaded.len(), db.len());
    for (a, b) in db.entries().iter().zip(loaded.entries()) {
        assert_eq!(
            a.pose.to_array().map(f64::to_bits),
            b.pose.to_array().map(f64::to_bits)
        );
    }
    assert_eq!(*loaded.entries()[0].load_descriptors().unwrap(), set);
    assert!(loaded.entries()[1].load_descriptors().is_err());
}

#[test]
fn ingesting_1220_lines_is_fast() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let text = random_pose_text(&mut rng, 1220);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kings_train.txt");
    std::fs::write(&path, text).unwrap();

    let best = (0..5)
        .map(|_| {
            let t = Instant::now();
            let db = PoseDatabase::ingest_pose_file(&path).unwrap();
            assert_eq!(db.len(), 1220);
            t.elapsed()
        })
        .min()
        .unwrap();
    assert!(best.as_millis() < 50, "ingest took {best:?}");
}
