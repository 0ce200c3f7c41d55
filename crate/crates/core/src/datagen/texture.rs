//! Procedural class textures for the synthetic "hospital" sources.
//!
//! Each class is a base colour plus a periodic pattern (grating, checker or
//! rings) at a class-specific frequency. Every sample jitters colour,
//! orientation, frequency, phase and amplitude, and adds pixel noise. Sources
//! use disjoint parameter tables so clients are not identically distributed.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{Image, ImageShape};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

pub const NUM_CLASSES: usize = 6;

/// Which synthetic data source a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    /// First hospital.
    A,
    /// Second hospital.
    B,
    /// Pre-training source task, disjoint from both hospitals.
    S,
}

impl Source {
    pub fn class_names(self) -> [&'static str; NUM_CLASSES] {
        match self {
            Source::A => ["WW", "STR", "CYS", "BRU", "CAR", "CAR2"],
            Source::B => ["WW", "WD", "UA", "STR", "BRU", "CYS"],
            Source::S => ["S0", "S1", "S2", "S3", "S4", "S5"],
        }
    }

    pub fn class_name(self, label: usize) -> Option<&'static str> {
        self.class_names().get(label).copied()
    }

    pub fn label_of(self, class_name: &str) -> Option<usize> {
        self.class_names().iter().position(|&n| n == class_name)
    }

    pub fn code(self) -> &'static str {
        match self {
            Source::A => "A",
            Source::B => "B",
            Source::S => "S",
        }
    }

    pub(crate) fn stream_label(self) -> u64 {
        match self {
            Source::A => 0xa,
            Source::B => 0xb,
            Source::S => 0x5,
        }
    }

    fn table(self) -> &'static [TextureParams; NUM_CLASSES] {
        match self {
            Source::A => &TABLE_A,
            Source::B => &TABLE_B,
            Source::S => &TABLE_S,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Source::A),
            "B" => Ok(Source::B),
            "S" => Ok(Source::S),
            other => Err(Error::input(format!("unknown source `{other}`"))),
        }
    }
}

/// Stable identity of a generated sample. Pixels are a pure function of the
/// id and the generation seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId {
    pub source: Source,
    pub label: u8,
    pub index: u32,
}

impl SampleId {
    pub fn class_name(&self) -> &'static str {
        self.source.class_name(self.label as usize).unwrap_or("?")
    }

    pub(crate) fn stream_labels(&self) -> [u64; 3] {
        [self.source.stream_label(), u64::from(self.label), u64::from(self.index)]
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{:06}", self.source, self.class_name(), self.index)
    }
}

impl FromStr for SampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('/');
        let (Some(src), Some(class), Some(idx), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(Error::input(format!("malformed sample id `{s}`")));
        };
        let source: Source = src.parse()?;
        let label = source
            .label_of(class)
            .ok_or_else(|| Error::input(format!("class `{class}` is not in source {source}")))?;
        let index = idx
            .parse()
            .map_err(|_| Error::input(format!("bad sample index in `{s}`")))?;
        Ok(SampleId {
            source,
            label: label as u8,
            index,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Pattern {
    Grating,
    Checker,
    Rings,
}

#[derive(Clone, Copy, Debug)]
struct TextureParams {
    base: [f64; 3],
    tint: [f64; 3],
    pattern: Pattern,
    /// Cycles per image width.
    frequency: f64,
    orientation: f64,
    amplitude: f64,
}

const fn tex(base: [f64; 3], tint: [f64; 3], pattern: Pattern, frequency: f64, orientation: f64, amplitude: f64) -> TextureParams {
    TextureParams {
        base,
        tint,
        pattern,
        frequency,
        orientation,
        amplitude,
    }
}

use Pattern::{Checker, Grating, Rings};

static TABLE_A: [TextureParams; NUM_CLASSES] = [
    tex([0.56, 0.44, 0.30], [1.0, 0.9, 0.7], Grating, 3.0, 0.3, 0.16),
    tex([0.46, 0.50, 0.40], [1.0, 0.9, 0.8], Grating, 7.0, 1.2, 0.16),
    tex([0.76, 0.68, 0.46], [0.9, 0.9, 0.8], Checker, 4.0, 0.0, 0.14),
    tex([0.64, 0.66, 0.60], [0.9, 1.0, 1.0], Checker, 6.5, 0.7, 0.14),
    tex([0.40, 0.30, 0.22], [1.0, 0.8, 0.6], Rings, 3.0, 0.0, 0.18),
    tex([0.30, 0.32, 0.36], [0.8, 0.8, 0.9], Rings, 5.5, 0.0, 0.18),
];

static TABLE_B: [TextureParams; NUM_CLASSES] = [
    tex([0.62, 0.38, 0.34], [1.0, 0.7, 0.7], Grating, 2.5, 2.0, 0.15),
    tex([0.80, 0.72, 0.62], [0.9, 0.9, 0.9], Checker, 5.0, 0.4, 0.12),
    tex([0.72, 0.54, 0.28], [1.0, 0.8, 0.5], Grating, 5.0, 0.8, 0.15),
    tex([0.58, 0.62, 0.44], [1.0, 0.9, 0.6], Rings, 4.0, 0.0, 0.17),
    tex([0.50, 0.46, 0.46], [0.8, 0.8, 0.9], Checker, 3.0, 1.1, 0.13),
    tex([0.64, 0.46, 0.60], [0.9, 0.8, 1.0], Grating, 6.0, 2.6, 0.15),
];

static TABLE_S: [TextureParams; NUM_CLASSES] = [
    tex([0.30, 0.50, 0.60], [0.6, 0.9, 1.0], Grating, 4.0, 0.0, 0.16),
    tex([0.36, 0.46, 0.62], [0.7, 0.9, 1.0], Grating, 8.0, 1.6, 0.16),
    tex([0.60, 0.60, 0.60], [1.0, 1.0, 1.0], Checker, 3.5, 0.2, 0.14),
    tex([0.50, 0.40, 0.62], [0.9, 0.7, 1.0], Checker, 6.0, 0.9, 0.14),
    tex([0.40, 0.60, 0.40], [0.7, 1.0, 0.7], Rings, 2.5, 0.0, 0.18),
    tex([0.70, 0.50, 0.50], [1.0, 0.8, 0.8], Rings, 6.0, 0.0, 0.18),
];

const COLOR_JITTER: f64 = 0.035;
const LUMA_JITTER: f64 = 0.03;
const PIXEL_NOISE: f64 = 0.03;

/// Renders one sample. Deterministic in `(id, seed, shape)`.
pub fn generate_sample(id: SampleId, seed: u64, shape: ImageShape) -> Result<Image> {
    let params = id
        .source
        .table()
        .get(id.label as usize)
        .ok_or_else(|| Error::input(format!("label {} out of range", id.label)))?;
    let labels = id.stream_labels();
    let mut rng = rng::stream(seed, &[purpose::GENERATE, labels[0], labels[1], labels[2]]);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let luma = LUMA_JITTER * unit.sample(&mut rng);
    let base: Vec<f64> = (0..shape.channels)
        .map(|c| params.base[c % 3] + luma + COLOR_JITTER * unit.sample(&mut rng))
        .collect();
    let orientation = params.orientation + 0.12 * unit.sample(&mut rng);
    let frequency = params.frequency * rng.random_range(0.9..1.1);
    let amplitude = params.amplitude * rng.random_range(0.8..1.2);
    let phase_u = rng.random_range(0.0..TAU);
    let phase_v = rng.random_range(0.0..TAU);
    let (h, w) = (shape.height as f64, shape.width as f64);
    let cy = h / 2.0 + rng.random_range(-0.25..0.25) * h;
    let cx = w / 2.0 + rng.random_range(-0.25..0.25) * w;

    let k = TAU * frequency / w;
    let (sin_t, cos_t) = orientation.sin_cos();
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("pixel noise");
    let mut pixels = Vec::with_capacity(shape.len());
    for y in 0..shape.height {
        for x in 0..shape.width {
            let u = x as f64 + 0.5 - cx;
            let v = y as f64 + 0.5 - cy;
            let along = u * cos_t + v * sin_t;
            let across = -u * sin_t + v * cos_t;
            let value = match params.pattern {
                Pattern::Grating => (k * along + phase_u).sin(),
                Pattern::Checker => 1.6 * (k * along + phase_u).sin() * (k * across + phase_v).sin(),
                Pattern::Rings => (k * (u * u + v * v).sqrt() + phase_u).sin(),
            };
            for (c, b) in base.iter().enumerate() {
                let p = b + amplitude * params.tint[c % 3] * value + noise.sample(&mut rng);
                pixels.push(p);
            }
        }
    }
    Image::new(shape, pixels)
}
