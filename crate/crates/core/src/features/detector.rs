use std::path::PathBuf;

use image::GrayImage;

use super::{cache, DescriptorSet, Descriptors, FeatureError, CROP_SIZE};

/// Produces a [`DescriptorSet`] for a preprocessed 380x380 grayscale image.
///
/// Implementations must be deterministic: identical input, identical output.
pub trait FeatureDetector: Send + Sync {
    fn extract(&self, image_id: &str, image: &GrayImage) -> Result<DescriptorSet, FeatureError>;
}

/// Loads precomputed descriptors from a `PGDC` cache directory, ignoring pixels.
#[derive(Debug, Clone)]
pub struct CacheDetector {
    pub dir: PathBuf,
}

impl FeatureDetector for CacheDetector {
    fn extract(&self, image_id: &str, _image: &GrayImage) -> Result<DescriptorSet, FeatureError> {
        let path = self.dir.join(cache::cache_file_name(image_id));
        if !path.is_file() {
            return Err(FeatureError::MissingDescriptors(image_id.to_string()));
        }
        cache::read_descriptor_cache(&path, image_id)
    }
}

/// 256-bit descriptors.
pub const BRIEF_BYTES: usize = 32;
const BRIEF_BITS: usize = BRIEF_BYTES * 8;
const PATCH_RADIUS: i32 = 12;
const SMOOTH_RADIUS: i32 = 2;
const BORDER: i32 = PATCH_RADIUS + SMOOTH_RADIUS + 1;
const HARRIS_K: f32 = 0.04;
const WINDOW_RADIUS: i32 = 2;
const NMS_RADIUS: i32 = 3;

/// Point-pair offsets `(dx1, dy1, dx2, dy2)` inside the patch, fixed at
/// compile time from a constant seed.
const BRIEF_PATTERN: [[i8; 4]; BRIEF_BITS] = brief_pattern(0x9E37_79B9_7F4A_7C15);

const fn brief_pattern(seed: u64) -> [[i8; 4]; BRIEF_BITS] {
    let mut out = [[0i8; 4]; BRIEF_BITS];
    let mut state = seed;
    let span = (2 * PATCH_RADIUS + 1) as u64;
    let mut i = 0;
    while i < BRIEF_BITS {
        let mut j = 0;
        while j < 4 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            out[i][j] = ((state >> 32) % span) as i8 - PATCH_RADIUS as i8;
            j += 1;
        }
        i += 1;
    }
    out
}

/// Built-in detector: Harris corners with non-maximum suppression, described
/// by BRIEF-style intensity comparisons on a box-smoothed image.
#[derive(Debug, Clone)]
pub struct CornerBriefDetector {
    /// Minimum Harris response (intensities scaled to `[0, 1]`).
    pub threshold: f32,
    pub max_keypoints: usize,
}

impl Default for CornerBriefDetector {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            max_keypoints: 1000,
        }
    }
}

impl FeatureDetector for CornerBriefDetector {
    fn extract(&self, image_id: &str, image: &GrayImage) -> Result<DescriptorSet, FeatureError> {
        if image.dimensions() != (CROP_SIZE, CROP_SIZE) {
            return Err(FeatureError::DetectorFailure(format!(
                "expected {CROP_SIZE}x{CROP_SIZE} input, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let corners = self.detect(image);
        let smoothed = box_sums(image, SMOOTH_RADIUS);
        let w = image.width() as i32;

        let mut keypoints = Vec::with_capacity(corners.len());
        let mut bytes = Vec::with_capacity(corners.len() * BRIEF_BYTES);
        for (x, y) in corners {
            keypoints.push([x as f32, y as f32]);
            let mut desc = [0u8; BRIEF_BYTES];
            for (bit, [dx1, dy1, dx2, dy2]) in BRIEF_PATTERN.iter().enumerate() {
                let a = smoothed[((y + *dy1 as i32) * w + x + *dx1 as i32) as usize];
                let b = smoothed[((y + *dy2 as i32) * w + x + *dx2 as i32) as usize];
                if a < b {
                    desc[bit / 8] |= 1 << (bit % 8);
                }
            }
            bytes.extend_from_slice(&desc);
        }
        DescriptorSet::new(image_id, keypoints, BRIEF_BYTES, Descriptors::Binary(bytes))
    }
}

impl CornerBriefDetector {
    /// Corner locations in raster order.
    fn detect(&self, image: &GrayImage) -> Vec<(i32, i32)> {
        let (w, h) = (image.width() as i32, image.height() as i32);
        let px = |x: i32, y: i32| image.get_pixel(x as u32, y as u32).0[0] as f32 / 255.0;
        let idx = |x: i32, y: i32| (y * w + x) as usize;

        let mut ixx = vec![0.0f32; (w * h) as usize];
        let mut iyy = vec![0.0f32; (w * h) as usize];
        let mut ixy = vec![0.0f32; (w * h) as usize];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                    - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
                let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                    - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
                ixx[idx(x, y)] = gx * gx;
                iyy[idx(x, y)] = gy * gy;
                ixy[idx(x, y)] = gx * gy;
            }
        }

        let mut response = vec![f32::NEG_INFINITY; (w * h) as usize];
        let lo = BORDER - NMS_RADIUS;
        for y in lo..h - lo {
            for x in lo..w - lo {
                let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
                    for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
                        let i = idx(x + dx, y + dy);
                        sxx += ixx[i];
                        syy += iyy[i];
                        sxy += ixy[i];
                    }
                }
                let trace = sxx + syy;
                response[idx(x, y)] = sxx * syy - sxy * sxy - HARRIS_K * trace * trace;
            }
        }

        let mut corners: Vec<(i32, i32, f32)> = Vec::new();
        for y in BORDER..h - BORDER {
            'pixel: for x in BORDER..w - BORDER {
                let r = response[idx(x, y)];
                if r <= self.threshold {
                    continue;
                }
                // Strict maximum over earlier raster neighbours, weak over later
                // ones, so each plateau keeps exactly its first pixel.
                for dy in -NMS_RADIUS..=NMS_RADIUS {
                    for dx in -NMS_RADIUS..=NMS_RADIUS {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let other = response[idx(x + dx, y + dy)];
                        let earlier = dy < 0 || (dy == 0 && dx < 0);
                        if other > r || (earlier && other == r) {
                            continue 'pixel;
                        }
                    }
                }
                corners.push((x, y, r));
            }
        }

        if corners.len() > self.max_keypoints {
            corners.sort_by(|a, b| b.2.total_cmp(&a.2));
            corners.truncate(self.max_keypoints);
            corners.sort_by_key(|&(x, y, _)| (y, x));
        }
        corners.into_iter().map(|(x, y, _)| (x, y)).collect()
    }
}

/// Sum over a `(2r+1)^2` window for every pixel at least `r` from the border
/// (others are left at 0; they are never sampled).
fn box_sums(image: &GrayImage, r: i32) -> Vec<u32> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut integral = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += image.get_pixel(x as u32, y as u32).0[0] as u32;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let r = r as usize;
    let mut out = vec![0u32; w * h];
    for y in r..h - r {
        for x in r..w - r {
            let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
            out[y * w + x] = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
                - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0];
        }
    }
    out
}
