use std::path::Path;

use image::{DynamicImage, GrayImage};

use super::FeatureError;

/// Side of the intermediate square resize.
pub const RESIZE_SIZE: u32 = 384;
/// Side of the centered crop handed to feature extraction.
pub const CROP_SIZE: u32 = 380;
const CROP_OFFSET: u32 = (RESIZE_SIZE - CROP_SIZE) / 2;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

pub fn load_image(path: &Path) -> Result<DynamicImage, FeatureError> {
    image::open(path).map_err(|e| FeatureError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Bilinear resize to 384x384, center crop to 380x380, then grayscale.
///
/// Resampling uses pixel-center alignment with edge clamping. Color inputs are
/// resampled per channel before the luma conversion; gray inputs skip it.
pub fn preprocess_image(raw: &DynamicImage) -> Result<GrayImage, FeatureError> {
    let (width, height) = (raw.width(), raw.height());
    if width == 0 || height == 0 {
        return Err(FeatureError::Decode {
            path: Default::default(),
            reason: format!("degenerate image {width}x{height}"),
        });
    }

    let planes: Vec<Vec<f32>> = if raw.color().has_color() {
        let rgb = raw.to_rgb32f();
        (0..3)
            .map(|c| rgb.pixels().map(|p| p.0[c] * 255.0).collect())
            .collect()
    } else {
        vec![raw.to_luma32f().pixels().map(|p| p.0[0] * 255.0).collect()]
    };

    let xs = axis_samples(width);
    let ys = axis_samples(height);
    let w = width as usize;

    let mut out = GrayImage::new(CROP_SIZE, CROP_SIZE);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let sample = |plane: &[f32]| {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                top * (1.0 - fy) + bottom * fy
            };
            let value = if planes.len() == 3 {
                LUMA.iter()
                    .zip(&planes)
                    .map(|(k, p)| k * sample(p))
                    .sum::<f32>()
            } else {
                sample(&planes[0])
            };
            out.put_pixel(
                ox as u32,
                oy as u32,
                image::Luma([value.round().clamp(0.0, 255.0) as u8]),
            );
        }
    }
    Ok(out)
}

/// Source taps and weight for each output column/row that survives the crop.
fn axis_samples(src_len: u32) -> Vec<(usize, usize, f32)> {
    let scale = src_len as f64 / RESIZE_SIZE as f64;
    let last = src_len as usize - 1;
    (CROP_OFFSET..CROP_OFFSET + CROP_SIZE)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, last as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(last);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}
