use serde::{Deserialize, Serialize};

use super::{DescriptorSet, Descriptors, FeatureError};

/// Brute-force matcher settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Lowe ratio: a match is kept iff `nearest < ratio * second_nearest`.
    pub ratio: f64,
    /// Additionally require the train descriptor's own nearest query to be
    /// the matched query descriptor.
    pub cross_check: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            ratio: 0.7,
            cross_check: false,
        }
    }
}

impl MatcherConfig {
    pub fn with_ratio(ratio: f64) -> Self {
        Self {
            ratio,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.ratio > 0.0 && self.ratio <= 1.0 {
            Ok(())
        } else {
            Err(FeatureError::InvalidRatio(self.ratio))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub query_idx: usize,
    pub train_idx: usize,
    pub distance: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub good_match_count: usize,
    pub pairs: Vec<MatchPair>,
}

/// Nearest and second-nearest train rows for one query row. Distances are in
/// the metric's native scale (squared L2 or Hamming bit count).
#[derive(Clone, Copy)]
struct Neighbors {
    best: f32,
    best_idx: usize,
    second: f32,
}

/// Brute-force matching of `query` against `train` with Lowe's ratio test.
///
/// Ties reject (strict inequality), and with fewer than two train descriptors
/// nothing can pass because the second neighbour is undefined.
pub fn match_features(
    query: &DescriptorSet,
    train: &DescriptorSet,
    cfg: &MatcherConfig,
) -> Result<MatchReport, FeatureError> {
    cfg.validate()?;
    if query.kind() != train.kind() {
        return Err(FeatureError::KindMismatch {
            query: query.kind(),
            train: train.kind(),
        });
    }
    if query.is_empty() || train.len() < 2 {
        return Ok(MatchReport::default());
    }
    if query.dim() != train.dim() {
        return Err(FeatureError::DimMismatch {
            query: query.dim(),
            train: train.dim(),
        });
    }

    let dim = query.dim();
    let mut pairs = match (query.descriptors(), train.descriptors()) {
        (Descriptors::Real(q), Descriptors::Real(t)) => {
            ratio_pass(q, t, dim, cfg.ratio, l2_kernel(), |d| d.sqrt())
        }
        (Descriptors::Binary(q), Descriptors::Binary(t)) => {
            ratio_pass(q, t, dim, cfg.ratio, hamming, |d| d)
        }
        _ => unreachable!("kinds checked above"),
    };

    if cfg.cross_check && !pairs.is_empty() {
        let reverse = match (query.descriptors(), train.descriptors()) {
            (Descriptors::Real(q), Descriptors::Real(t)) => {
                nearest_query_per_train(q, t, dim, l2_kernel())
            }
            (Descriptors::Binary(q), Descriptors::Binary(t)) => {
                nearest_query_per_train(q, t, dim, hamming)
            }
            _ => unreachable!("kinds checked above"),
        };
        pairs.retain(|p| reverse[p.train_idx] == p.query_idx);
    }

    Ok(MatchReport {
        good_match_count: pairs.len(),
        pairs,
    })
}

fn ratio_pass<T, M: Fn(&[T], &[T]) -> f32>(
    query: &[T],
    train: &[T],
    dim: usize,
    ratio: f64,
    metric: M,
    to_distance: fn(f64) -> f64,
) -> Vec<MatchPair> {
    let mut pairs = Vec::new();
    for (query_idx, q) in query.chunks_exact(dim).enumerate() {
        let mut nn = Neighbors {
            best: f32::INFINITY,
            best_idx: 0,
            second: f32::INFINITY,
        };
        for (train_idx, t) in train.chunks_exact(dim).enumerate() {
            let d = metric(q, t);
            if d < nn.best {
                nn.second = nn.best;
                nn.best = d;
                nn.best_idx = train_idx;
            } else if d < nn.second {
                nn.second = d;
            }
        }
        let nearest = to_distance(nn.best as f64);
        let second = to_distance(nn.second as f64);
        if nearest < ratio * second {
            pairs.push(MatchPair {
                query_idx,
                train_idx: nn.best_idx,
                distance: nearest as f32,
            });
        }
    }
    pairs
}

fn nearest_query_per_train<T, M: Fn(&[T], &[T]) -> f32>(
    query: &[T],
    train: &[T],
    dim: usize,
    metric: M,
) -> Vec<usize> {
    train
        .chunks_exact(dim)
        .map(|t| {
            let mut best = f32::INFINITY;
            let mut best_idx = usize::MAX;
            for (i, q) in query.chunks_exact(dim).enumerate() {
                let d = metric(q, t);
                if d < best {
                    best = d;
                    best_idx = i;
                }
            }
            best_idx
        })
        .collect()
}

/// Picks the widest available squared-L2 kernel. All variants perform the
/// same per-lane operations in the same order, so results are identical.
fn l2_kernel() -> fn(&[f32], &[f32]) -> f32 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        return |a, b| {
            // SAFETY: AVX2 support was checked at runtime above.
            unsafe { sq_l2_avx2(a, b) }
        };
    }
    sq_l2
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn sq_l2_avx2(a: &[f32], b: &[f32]) -> f32 {
    sq_l2(a, b)
}

/// Squared Euclidean distance. Independent accumulators break the add
/// dependency chain and let the loop vectorize.
#[inline(always)]
fn sq_l2(a: &[f32], b: &[f32]) -> f32 {
    const LANES: usize = 8;
    let mut acc = [0.0f32; LANES];
    let (ca, ta) = a.as_chunks::<LANES>();
    let (cb, tb) = b.as_chunks::<LANES>();
    for (x, y) in ca.iter().zip(cb) {
        for i in 0..LANES {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ta.iter().zip(tb) {
        let d = x - y;
        tail += d * d;
    }
    acc.iter().sum::<f32>() + tail
}

#[inline]
fn hamming(a: &[u8], b: &[u8]) -> f32 {
    let mut bits = 0u32;
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x = u64::from_le_bytes(x.try_into().unwrap());
        let y = u64::from_le_bytes(y.try_into().unwrap());
        bits += (x ^ y).count_ones();
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        bits += (x ^ y).count_ones();
    }
    bits as f32
}
