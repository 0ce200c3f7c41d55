//! Image corruptions at five severity levels, and the uniform sampler used
//! to bake the "corrupted" client datasets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{Image, ImageShape, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

pub const NUM_SEVERITIES: u8 = 5;
pub const TABLES_VERSION: &str = "v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ImpulseNoise,
    DefocusBlur,
    MotionBlur,
    Brightness,
    Darkness,
    Contrast,
    Fog,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 8] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::DefocusBlur,
        CorruptionKind::MotionBlur,
        CorruptionKind::Brightness,
        CorruptionKind::Darkness,
        CorruptionKind::Contrast,
        CorruptionKind::Fog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::DefocusBlur => "defocus_blur",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Darkness => "darkness",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Fog => "fog",
        }
    }

    fn parameter_name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "sigma",
            CorruptionKind::ImpulseNoise => "flip_fraction",
            CorruptionKind::DefocusBlur => "disc_radius_px",
            CorruptionKind::MotionBlur => "kernel_length_px",
            CorruptionKind::Brightness | CorruptionKind::Darkness => "delta",
            CorruptionKind::Contrast => "factor",
            CorruptionKind::Fog => "alpha",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input(format!("unknown corruption kind `{s}`")))
    }
}

/// A corruption kind at a severity in `1..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if !(1..=NUM_SEVERITIES).contains(&severity) {
            return Err(Error::input(format!("severity {severity} outside 1..=5")));
        }
        Ok(CorruptionSpec { kind, severity })
    }

    pub fn severity(&self) -> u8 {
        self.severity
    }
}

/// Severity -> parameter tables, one row per kind.
#[derive(Clone, Debug, PartialEq)]
pub struct SeverityTables {
    pub gaussian_sigma: [f64; 5],
    pub impulse_fraction: [f64; 5],
    pub defocus_radius: [f64; 5],
    pub motion_length: [f64; 5],
    pub brightness_delta: [f64; 5],
    pub contrast_factor: [f64; 5],
    pub fog_alpha: [f64; 5],
}

/// The release tables. Darkness uses the negated brightness row.
pub const RELEASE_TABLES: SeverityTables = SeverityTables {
    gaussian_sigma: [0.04, 0.06, 0.08, 0.10, 0.14],
    impulse_fraction: [0.01, 0.02, 0.03, 0.05, 0.07],
    defocus_radius: [1.0, 2.0, 3.0, 4.0, 5.0],
    motion_length: [3.0, 5.0, 7.0, 9.0, 11.0],
    brightness_delta: [0.1, 0.15, 0.2, 0.25, 0.3],
    contrast_factor: [0.75, 0.6, 0.5, 0.4, 0.3],
    fog_alpha: [0.1, 0.18, 0.26, 0.34, 0.42],
};

impl SeverityTables {
    /// Tables whose every entry leaves the image unchanged.
    pub fn identity() -> Self {
        SeverityTables {
            gaussian_sigma: [0.0; 5],
            impulse_fraction: [0.0; 5],
            defocus_radius: [0.0; 5],
            motion_length: [1.0; 5],
            brightness_delta: [0.0; 5],
            contrast_factor: [1.0; 5],
            fog_alpha: [0.0; 5],
        }
    }

    pub fn row(&self, kind: CorruptionKind) -> [f64; 5] {
        match kind {
            CorruptionKind::GaussianNoise => self.gaussian_sigma,
            CorruptionKind::ImpulseNoise => self.impulse_fraction,
            CorruptionKind::DefocusBlur => self.defocus_radius,
            CorruptionKind::MotionBlur => self.motion_length,
            CorruptionKind::Brightness => self.brightness_delta,
            CorruptionKind::Darkness => self.brightness_delta.map(|d| -d),
            CorruptionKind::Contrast => self.contrast_factor,
            CorruptionKind::Fog => self.fog_alpha,
        }
    }

    pub fn parameter(&self, spec: CorruptionSpec) -> f64 {
        self.row(spec.kind)[usize::from(spec.severity - 1)]
    }

    /// Tab-separated rendering, one row per kind. Values print in shortest
    /// round-trip form, so parsing them back yields the exact constants.
    pub fn render(&self) -> String {
        let mut out = format!("# fedstone corruption severity tables {TABLES_VERSION}\nkind\tparameter\ts1\ts2\ts3\ts4\ts5\n");
        for kind in CorruptionKind::ALL {
            out.push_str(kind.name());
            out.push('\t');
            out.push_str(kind.parameter_name());
            for v in self.row(kind) {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Applies `spec` with the release tables.
pub fn apply_corruption<R: Rng + ?Sized>(image: &Image, spec: CorruptionSpec, rng: &mut R) -> Image {
    apply_corruption_with(image, spec, &RELEASE_TABLES, rng)
}

pub fn apply_corruption_with<R: Rng + ?Sized>(
    image: &Image,
    spec: CorruptionSpec,
    tables: &SeverityTables,
    rng: &mut R,
) -> Image {
    let param = tables.parameter(spec);
    match spec.kind {
        CorruptionKind::GaussianNoise => gaussian_noise(image, param, rng),
        CorruptionKind::ImpulseNoise => impulse_noise(image, param, rng),
        CorruptionKind::DefocusBlur => defocus_blur(image, param),
        CorruptionKind::MotionBlur => motion_blur(image, param),
        CorruptionKind::Brightness | CorruptionKind::Darkness => {
            if param == 0.0 {
                image.clone()
            } else {
                image.map(|p| p + param)
            }
        }
        CorruptionKind::Contrast => contrast(image, param),
        CorruptionKind::Fog => {
            let fog_seed: u64 = rng.random();
            fog(image, param, fog_seed)
        }
    }
}

fn gaussian_noise<R: Rng + ?Sized>(image: &Image, sigma: f64, rng: &mut R) -> Image {
    if sigma == 0.0 {
        return image.clone();
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let pixels = image.pixels().iter().map(|&p| p + sigma * unit.sample(rng)).collect();
    Image::new(image.shape(), pixels).expect("same shape")
}

/// Each value independently becomes 0 or 1 (equal odds) with probability
/// `fraction`. Two uniforms are drawn per value regardless of the outcome, so
/// for a fixed stream the affected set grows monotonically with `fraction`.
fn impulse_noise<R: Rng + ?Sized>(image: &Image, fraction: f64, rng: &mut R) -> Image {
    if fraction == 0.0 {
        return image.clone();
    }
    let pixels = image
        .pixels()
        .iter()
        .map(|&p| {
            let hit: f64 = rng.random();
            let salt: f64 = rng.random();
            if hit < fraction {
                if salt < 0.5 {
                    0.0
                } else {
                    1.0
                }
            } else {
                p
            }
        })
        .collect();
    Image::new(image.shape(), pixels).expect("same shape")
}

/// Normalised convolution with a list of integer offsets, edges replicated.
fn convolve_offsets(image: &Image, offsets: &[(isize, isize)]) -> Image {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let weight = 1.0 / offsets.len() as f64;
    let mut pixels = Vec::with_capacity(image.pixels().len());
    for y in 0..h as isize {
        for x in 0..w as isize {
            for ch in 0..c {
                let sum: f64 = offsets.iter().map(|&(dy, dx)| image.get_clamped(y + dy, x + dx, ch)).sum();
                pixels.push(sum * weight);
            }
        }
    }
    Image::new(image.shape(), pixels).expect("same shape")
}

fn defocus_blur(image: &Image, radius: f64) -> Image {
    if radius < 1.0 {
        return image.clone();
    }
    let r = radius.floor() as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| ((dy * dy + dx * dx) as f64) <= radius * radius)
        .collect();
    convolve_offsets(image, &offsets)
}

fn motion_blur(image: &Image, length: f64) -> Image {
    if length < 2.0 {
        return image.clone();
    }
    let half = ((length.round() as isize) - 1) / 2;
    let offsets: Vec<(isize, isize)> = (-half..=half).map(|dx| (0, dx)).collect();
    convolve_offsets(image, &offsets)
}

fn contrast(image: &Image, factor: f64) -> Image {
    if factor == 1.0 {
        return image.clone();
    }
    let means = image.channel_means();
    let c = image.channels();
    let pixels = image
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - means[i % c]) * factor + means[i % c])
        .collect();
    Image::new(image.shape(), pixels).expect("same shape")
}

/// Diamond-square plasma on a `(2^k + 1)^2` grid, min-max scaled to `[0, 1]`.
/// Displacements shrink by `decay` per level, leaving mostly low frequencies.
pub fn plasma_fractal(side: usize, decay: f64, seed: u64) -> Vec<f64> {
    let n = side.max(2).next_power_of_two();
    let dim = n + 1;
    let mut rng = rng::stream(seed, &[purpose::FOG]);
    let mut map = vec![0.0f64; dim * dim];
    let at = |y: usize, x: usize| y * dim + x;
    let mut step = n;
    let mut wibble = 1.0;
    while step >= 2 {
        let half = step / 2;
        // Diamond step: centres of squares.
        for y in (half..n).step_by(step) {
            for x in (half..n).step_by(step) {
                let avg = (map[at(y - half, x - half)]
                    + map[at(y - half, x + half)]
                    + map[at(y + half, x - half)]
                    + map[at(y + half, x + half)])
                    / 4.0;
                map[at(y, x)] = avg + wibble * rng.random_range(-1.0..1.0);
            }
        }
        // Square step: edge midpoints.
        for y in (0..dim).step_by(half) {
            let start = if (y / half).is_multiple_of(2) { half } else { 0 };
            for x in (start..dim).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if y >= half {
                    sum += map[at(y - half, x)];
                    count += 1.0;
                }
                if y + half < dim {
                    sum += map[at(y + half, x)];
                    count += 1.0;
                }
                if x >= half {
                    sum += map[at(y, x - half)];
                    count += 1.0;
                }
                if x + half < dim {
                    sum += map[at(y, x + half)];
                    count += 1.0;
                }
                map[at(y, x)] = sum / count + wibble * rng.random_range(-1.0..1.0);
            }
        }
        step = half;
        wibble /= decay;
    }
    let (lo, hi) = map
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    map.iter().map(|v| (v - lo) / span).collect()
}

fn fog(image: &Image, alpha: f64, seed: u64) -> Image {
    if alpha == 0.0 {
        return image.clone();
    }
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let field = plasma_fractal(h.max(w), 3.0, seed);
    let dim = h.max(w).max(2).next_power_of_two() + 1;
    let mut pixels = Vec::with_capacity(image.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let f = field[y * dim + x];
            for ch in 0..c {
                pixels.push((1.0 - alpha) * image.get(y, x, ch) + alpha * f);
            }
        }
    }
    Image::new(image.shape(), pixels).expect("same shape")
}

/// Uniform over the eight kinds and, independently, over severities 1..=5.
pub fn sample_corruption<R: Rng + ?Sized>(rng: &mut R) -> CorruptionSpec {
    let kind = CorruptionKind::ALL[rng.random_range(0..CorruptionKind::ALL.len())];
    let severity = rng.random_range(1..=NUM_SEVERITIES);
    CorruptionSpec { kind, severity }
}

/// How a dataset gets corrupted.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionPlan {
    pub tables: SeverityTables,
    /// Pins every sample to one severity instead of sampling 1..=5.
    pub fixed_severity: Option<u8>,
}

impl Default for CorruptionPlan {
    fn default() -> Self {
        CorruptionPlan {
            tables: RELEASE_TABLES,
            fixed_severity: None,
        }
    }
}

/// Corrupts every sample with a freshly sampled spec from the release tables.
///
/// One base seed is drawn from `rng`; each sample then uses its own stream
/// derived from that seed and its id, so results do not depend on list order.
pub fn corrupt_dataset<R: Rng + ?Sized>(samples: Vec<LabeledSample>, rng: &mut R) -> Vec<LabeledSample> {
    let base: u64 = rng.random();
    corrupt_dataset_seeded(samples, base, &CorruptionPlan::default())
}

pub fn corrupt_dataset_seeded(samples: Vec<LabeledSample>, seed: u64, plan: &CorruptionPlan) -> Vec<LabeledSample> {
    samples
        .into_iter()
        .map(|mut s| {
            let [src, label, index] = s.id.stream_labels();
            let mut r = rng::stream(seed, &[purpose::CORRUPT, src, label, index]);
            let mut spec = sample_corruption(&mut r);
            if let Some(sev) = plan.fixed_severity {
                spec.severity = sev.clamp(1, NUM_SEVERITIES);
            }
            s.image = apply_corruption_with(&s.image, spec, &plan.tables, &mut r);
            s.corruption = Some(spec);
            s
        })
        .collect()
}

/// One panel per corruption kind at `severity`, laid out 2 rows x 4
/// columns with a 2-pixel white gutter.
pub fn contact_sheet<R: Rng + ?Sized>(image: &Image, severity: u8, rng: &mut R) -> Result<Image> {
    const ROWS: usize = 2;
    const COLS: usize = 4;
    const GUTTER: usize = 2;
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let sheet_shape = ImageShape::new(ROWS * h + (ROWS + 1) * GUTTER, COLS * w + (COLS + 1) * GUTTER, c);
    let mut pixels = vec![1.0; sheet_shape.len()];
    for (i, kind) in CorruptionKind::ALL.into_iter().enumerate() {
        let panel = apply_corruption(image, CorruptionSpec::new(kind, severity)?, rng);
        let (oy, ox) = (GUTTER + (i / COLS) * (h + GUTTER), GUTTER + (i % COLS) * (w + GUTTER));
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    pixels[((oy + y) * sheet_shape.width + ox + x) * c + ch] = panel.get(y, x, ch);
                }
            }
        }
    }
    Image::new(sheet_shape, pixels)
}
