use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape {
            height,
            width,
            channels,
        }
    }

    pub const fn square(side: usize, channels: usize) -> Self {
        Self::new(side, side, channels)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ImageShape {
    fn default() -> Self {
        ImageShape::square(32, 3)
    }
}

/// Height x width x channel image, interleaved (HWC), intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    shape: ImageShape,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn new(shape: ImageShape, mut pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != shape.len() || shape.is_empty() {
            return Err(Error::input(format!(
                "{} pixel values do not fit a {}x{}x{} image",
                pixels.len(),
                shape.height,
                shape.width,
                shape.channels
            )));
        }
        if pixels.iter().any(|p| p.is_nan()) {
            return Err(Error::Numeric("image contains NaN".into()));
        }
        clamp_unit(&mut pixels);
        Ok(Image { shape, pixels })
    }

    pub fn filled(shape: ImageShape, value: f64) -> Self {
        Image {
            shape,
            pixels: vec![value.clamp(0.0, 1.0); shape.len()],
        }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.width + x) * self.shape.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[self.index(y, x, c)]
    }

    /// Edge-replicating read: coordinates outside the image clamp to the border.
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize, c: usize) -> f64 {
        let y = y.clamp(0, self.shape.height as isize - 1) as usize;
        let x = x.clamp(0, self.shape.width as isize - 1) as usize;
        self.get(y, x, c)
    }

    /// Applies `f` to every pixel value, then clamps into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let mut pixels: Vec<f64> = self.pixels.iter().map(|&p| f(p)).collect();
        clamp_unit(&mut pixels);
        Image {
            shape: self.shape,
            pixels,
        }
    }

    /// Per-channel mean.
    pub fn channel_means(&self) -> Vec<f64> {
        let c = self.shape.channels;
        let mut sums = vec![0.0; c];
        for (i, p) in self.pixels.iter().enumerate() {
            sums[i % c] += p;
        }
        let n = (self.shape.height * self.shape.width) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Per-channel population standard deviation.
    pub fn channel_stds(&self) -> Vec<f64> {
        let c = self.shape.channels;
        let means = self.channel_means();
        let mut sq = vec![0.0; c];
        for (i, p) in self.pixels.iter().enumerate() {
            let d = p - means[i % c];
            sq[i % c] += d * d;
        }
        let n = (self.shape.height * self.shape.width) as f64;
        sq.into_iter().map(|s| (s / n).sqrt()).collect()
    }
}

pub(crate) fn clamp_unit(pixels: &mut [f64]) {
    for p in pixels {
        *p = p.clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_clamps_into_unit_range() {
        let img = Image::new(ImageShape::new(1, 2, 1), vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
        assert!(Image::new(ImageShape::new(1, 2, 1), vec![0.0]).is_err());
    }

    #[test]
    fn clamped_reads_replicate_edges() {
        let img = Image::new(ImageShape::new(2, 2, 1), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(img.get_clamped(-3, -1, 0), 0.1);
        assert_eq!(img.get_clamped(5, 1, 0), 0.4);
        assert_eq!(img.get_clamped(0, 9, 0), 0.2);
    }
}
