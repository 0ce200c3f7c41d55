//! Training augmentation and evaluation preprocessing.
//!
//! Both transforms end in per-channel standardisation and return the
//! flattened model input rather than an `Image`, because standardised values
//! leave the `[0, 1]` pixel range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Image;
use crate::error::{Error, Result};

/// Padding (in pixels) for the random crop.
pub const CROP_PAD: usize = 4;
/// The eval transform resizes to `side + EVAL_MARGIN` then centre-crops.
pub const EVAL_MARGIN: usize = 4;

/// Per-channel standardisation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Default for NormStats {
    /// The ImageNet statistics used with ImageNet-pretrained backbones.
    fn default() -> Self {
        NormStats {
            mean: vec![0.485, 0.456, 0.406],
            std: vec![0.229, 0.224, 0.225],
        }
    }
}

impl NormStats {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.mean.len() != channels || self.std.len() != channels {
            return Err(Error::config(format!(
                "data.norm_mean/norm_std need {channels} entries, got {}/{}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::config("data.norm_std entries must be positive"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("data.norm_mean entries must be finite"));
        }
        Ok(())
    }

    fn normalize_into(&self, image: &Image, out: &mut Vec<f64>) {
        let c = image.channels();
        out.clear();
        out.extend(
            image
                .pixels()
                .iter()
                .enumerate()
                .map(|(i, p)| (p - self.mean[i % c]) / self.std[i % c]),
        );
    }
}

/// The random choices of one training augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentDraw {
    pub dy: usize,
    pub dx: usize,
    pub flip: bool,
}

impl AugmentDraw {
    /// Draws crop offsets in `[0, 2 * CROP_PAD]` then a flip with probability 0.5.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let dy = rng.random_range(0..=2 * CROP_PAD);
        let dx = rng.random_range(0..=2 * CROP_PAD);
        let flip = rng.random::<f64>() < 0.5;
        AugmentDraw { dy, dx, flip }
    }

    /// Pad-by-replication, crop back to the original size, optional
    /// horizontal flip.
    pub fn apply(&self, image: &Image) -> Image {
        let (h, w, c) = (image.height(), image.width(), image.channels());
        let mut pixels = Vec::with_capacity(image.pixels().len());
        for y in 0..h {
            for x in 0..w {
                let xs = if self.flip { w - 1 - x } else { x };
                let sy = (y + self.dy) as isize - CROP_PAD as isize;
                let sx = (xs + self.dx) as isize - CROP_PAD as isize;
                for ch in 0..c {
                    pixels.push(image.get_clamped(sy, sx, ch));
                }
            }
        }
        Image::new(image.shape(), pixels).expect("same shape")
    }
}

/// Random crop + flip + standardisation. All randomness comes from `rng`.
pub fn train_transform<R: Rng + ?Sized>(image: &Image, rng: &mut R, stats: &NormStats) -> Vec<f64> {
    let mut out = Vec::new();
    train_transform_into(image, rng, stats, &mut out);
    out
}

pub(crate) fn train_transform_into<R: Rng + ?Sized>(image: &Image, rng: &mut R, stats: &NormStats, out: &mut Vec<f64>) {
    let augmented = AugmentDraw::sample(rng).apply(image);
    stats.normalize_into(&augmented, out);
}

/// Bilinear resize with half-pixel centres and edge clamping.
fn resize_bilinear(image: &Image, out_h: usize, out_w: usize) -> Vec<f64> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for ch in 0..c {
                let top = image.get(y0, x0, ch) * (1.0 - tx) + image.get(y0, x1, ch) * tx;
                let bottom = image.get(y1, x0, ch) * (1.0 - tx) + image.get(y1, x1, ch) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    out
}

/// Geometric part of the eval transform: resize to `(H + 4, W + 4)`, then
/// centre-crop back to `H x W`.
pub fn eval_geometry(image: &Image) -> Image {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let (big_h, big_w) = (h + EVAL_MARGIN, w + EVAL_MARGIN);
    let resized = resize_bilinear(image, big_h, big_w);
    let (oy, ox) = (EVAL_MARGIN / 2, EVAL_MARGIN / 2);
    let mut pixels = Vec::with_capacity(h * w * c);
    for y in 0..h {
        let start = ((y + oy) * big_w + ox) * c;
        pixels.extend_from_slice(&resized[start..start + w * c]);
    }
    Image::new(image.shape(), pixels).expect("same shape")
}

/// Deterministic resize + centre crop + standardisation.
pub fn eval_transform(image: &Image, stats: &NormStats) -> Vec<f64> {
    let mut out = Vec::new();
    stats.normalize_into(&eval_geometry(image), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ImageShape;
    use crate::rng;

    fn ramp(w: usize) -> Image {
        let shape = ImageShape::new(2, w, 1);
        let pixels = (0..2 * w).map(|i| (i % w) as f64 / w as f64).collect();
        Image::new(shape, pixels).unwrap()
    }

    #[test]
    fn flip_reverses_columns() {
        // With zero net crop offset the flip is the only geometric change.
        let img = ramp(6);
        let mut seed = 0;
        let draw = loop {
            let mut r = rng::stream(seed, &[]);
            let d = AugmentDraw::sample(&mut r);
            if d.flip {
                break d;
            }
            seed += 1;
        };
        let centred = AugmentDraw { dy: CROP_PAD, dx: CROP_PAD, ..draw };
        let out = centred.apply(&img);
        for y in 0..2 {
            for x in 0..6 {
                assert_eq!(out.get(y, x, 0), img.get(y, 5 - x, 0));
            }
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(ImageShape::square(8, 3), 0.37);
        let stats = NormStats::default();
        for seed in 0..20 {
            let out = train_transform(&img, &mut rng::stream(seed, &[1]), &stats);
            for (i, v) in out.iter().enumerate() {
                let expected = (0.37 - stats.mean[i % 3]) / stats.std[i % 3];
                assert_eq!(*v, expected);
            }
        }
    }

    #[test]
    fn zero_images_normalise_to_minus_mean_over_std() {
        let img = Image::filled(ImageShape::square(4, 3), 0.0);
        let stats = NormStats::default();
        let mut r = rng::stream(5, &[]);
        for _ in 0..1_000 {
            let out = train_transform(&img, &mut r, &stats);
            for (i, v) in out.iter().enumerate() {
                let c = i % 3;
                assert!((v - (-stats.mean[c] / stats.std[c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_transform_is_deterministic_and_fixed_size() {
        let img = ramp(9);
        let stats = NormStats {
            mean: vec![0.5],
            std: vec![0.25],
        };
        let a = eval_transform(&img, &stats);
        assert_eq!(a, eval_transform(&img, &stats));
        assert_eq!(a.len(), img.pixels().len());
        assert_eq!(eval_geometry(&img).shape(), img.shape());
    }

    #[test]
    fn eval_geometry_is_idempotent_on_constant_images() {
        let img = Image::filled(ImageShape::square(16, 3), 0.8);
        let once = eval_geometry(&img);
        assert_eq!(eval_geometry(&once), once);
        assert_eq!(once, img);
    }

    #[test]
    fn centred_marker_survives_centre_crop() {
        // 32x32 with a 2x2 marker at rows/cols 15..=16. Resize to 36 maps
        // output index i to source (i + 2 + 0.5) * 32/36 - 0.5, which lands in
        // [15, 16] for i in {15, 16} and outside it for every other index.
        let shape = ImageShape::square(32, 1);
        let mut pixels = vec![0.0; 32 * 32];
        for y in 15..=16 {
            for x in 15..=16 {
                pixels[y * 32 + x] = 1.0;
            }
        }
        let out = eval_geometry(&Image::new(shape, pixels).unwrap());
        let src = |i: usize| (i as f64 + 2.5) * 32.0 / 36.0 - 0.5;
        let inside: Vec<usize> = (0..32).filter(|&i| (15.0..=16.0).contains(&src(i))).collect();
        assert_eq!(inside, vec![15, 16]);
        let peak = out.get(15, 15, 0);
        assert!(peak > 0.8);
        for y in 0..32 {
            for x in 0..32 {
                let v = out.get(y, x, 0);
                if inside.contains(&y) && inside.contains(&x) {
                    assert!((v - peak).abs() < 1e-12, "marker cell ({y},{x}) = {v}");
                } else {
                    assert!(v < peak, "({y},{x}) = {v} not below marker");
                }
            }
        }
    }
}
