//! `PGDC` descriptor cache files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "PGDC"
//! version u16 = 1
//! kind    u8   0 = real-l2 (f32), 1 = binary-hamming (u8)
//! count   u32  N
//! dim     u32  D
//! N x (f32 x, f32 y)
//! N x D elements, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::{DescriptorKind, DescriptorSet, Descriptors, FeatureError};

pub const CACHE_MAGIC: &[u8; 4] = b"PGDC";
pub const CACHE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4;

/// File name used for an image's cache entry: `/` becomes `_`, plus `.pgdc`.
pub fn cache_file_name(image_id: &str) -> String {
    format!("{}.pgdc", image_id.replace('/', "_"))
}

pub fn encode(set: &DescriptorSet) -> Vec<u8> {
    let n = set.len();
    let elem = match set.kind() {
        DescriptorKind::RealL2 => 4,
        DescriptorKind::BinaryHamming => 1,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + n * 8 + n * set.dim() * elem);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.push(set.kind().code());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for [x, y] in set.keypoints() {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
    }
    match set.descriptors() {
        Descriptors::Real(values) => values
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Descriptors::Binary(bytes) => out.extend_from_slice(bytes),
    }
    out
}

pub fn decode(image_id: &str, bytes: &[u8], path: &Path) -> Result<DescriptorSet, FeatureError> {
    let bad = |reason: String| FeatureError::CacheFormat {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != CACHE_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CACHE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = DescriptorKind::from_code(bytes[6])
        .ok_or_else(|| bad(format!("unknown kind {}", bytes[6])))?;
    let n = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let elem = match kind {
        DescriptorKind::RealL2 => 4,
        DescriptorKind::BinaryHamming => 1,
    };
    let expected = n
        .checked_mul(8)
        .and_then(|kp| n.checked_mul(dim)?.checked_mul(elem)?.checked_add(kp))
        .and_then(|body| body.checked_add(HEADER_LEN))
        .ok_or_else(|| bad("size overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }

    let body = &bytes[HEADER_LEN..];
    let (kp_bytes, desc_bytes) = body.split_at(n * 8);
    let keypoints = kp_bytes
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    let descriptors = match kind {
        DescriptorKind::RealL2 => Descriptors::Real(
            desc_bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DescriptorKind::BinaryHamming => Descriptors::Binary(desc_bytes.to_vec()),
    };
    DescriptorSet::new(image_id, keypoints, dim, descriptors).map_err(|e| bad(e.to_string()))
}

/// Writes `set` to `dir/<cache_file_name>` and returns the path.
pub fn write_descriptor_cache(dir: &Path, set: &DescriptorSet) -> Result<PathBuf, FeatureError> {
    let path = dir.join(cache_file_name(set.image_id()));
    fs::write(&path, encode(set)).map_err(|source| FeatureError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Reads a cache file; the image id is supplied by the caller because the
/// file name mapping is lossy.
pub fn read_descriptor_cache(path: &Path, image_id: &str) -> Result<DescriptorSet, FeatureError> {
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(image_id, &bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_name_mapping() {
        assert_eq!(
            cache_file_name("seq1/frame00001.png"),
            "seq1_frame00001.png.pgdc"
        );
        assert_eq!(cache_file_name("plain"), "plain.pgdc");
    }

    #[test]
    fn header_layout() {
        let set = DescriptorSet::new(
            "x",
            vec![[1.5, 2.0]],
            2,
            Descriptors::Binary(vec![0xAB, 0xCD]),
        )
        .unwrap();
        let bytes = encode(&set);
        assert_eq!(
            bytes,
            [
                b'P', b'G', b'D', b'C', 1, 0, 1, 1, 0, 0, 0, 2, 0, 0, 0, // header
                0x00, 0x00, 0xC0, 0x3F, 0x00, 0x00, 0x00, 0x40, // 1.5f32, 2.0f32
                0xAB, 0xCD,
            ]
        );
    }

    #[test]
    fn rejects_corrupt_files() {
        let p = Path::new("mem");
        let set =
            DescriptorSet::new("x", vec![[1.0, 2.0]], 1, Descriptors::Real(vec![0.5])).unwrap();
        let good = encode(&set);
        assert!(decode("x", &good, p).is_ok());
        assert!(decode("x", &good[..good.len() - 1], p).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(decode("x", &magic, p).is_err());
        let mut version = good.clone();
        version[4] = 2;
        assert!(decode("x", &version, p).is_err());
        let mut kind = good.clone();
        kind[6] = 9;
        assert!(decode("x", &kind, p).is_err());
        let mut huge = good.clone();
        huge[7..11].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[11..15].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode("x", &huge, p).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(n in 0usize..20, dim in 1usize..40, binary: bool, seed: u64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let keypoints = (0..n).map(|_| [rng.random_range(0.0..380.0f32), rng.random_range(0.0..380.0f32)]).collect();
            let descriptors = if binary {
                Descriptors::Binary((0..n * dim).map(|_| rng.random()).collect())
            } else {
                Descriptors::Real((0..n * dim).map(|_| rng.random_range(-1e3f32..1e3)).collect())
            };
            let set = DescriptorSet::new("id", keypoints, dim, descriptors).unwrap();
            let back = decode("id", &encode(&set), Path::new("mem")).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
