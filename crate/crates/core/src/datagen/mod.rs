//! Deterministic synthetic datasets, stratified splits and input transforms.

mod image;
pub mod manifest;
mod texture;
mod transform;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corruption::CorruptionSpec;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

pub use image::{Image, ImageShape};
pub use texture::{generate_sample, SampleId, Source, NUM_CLASSES};
pub use transform::{eval_geometry, eval_transform, train_transform, AugmentDraw, NormStats};
pub(crate) use transform::train_transform_into;

/// An image with its class label and, once corrupted, the corruption applied.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub id: SampleId,
    pub image: Image,
    pub label: usize,
    pub corruption: Option<CorruptionSpec>,
}

impl LabeledSample {
    pub fn class_name(&self) -> &'static str {
        self.id.class_name()
    }
}

/// Generates `num_per_class` samples for each class of `source`, class-major.
pub fn generate_dataset(source: Source, num_per_class: usize, seed: u64, shape: ImageShape) -> Result<Vec<LabeledSample>> {
    if num_per_class < 1 {
        return Err(Error::input("num_per_class must be >= 1"));
    }
    let index_limit = u32::try_from(num_per_class).map_err(|_| Error::input("num_per_class too large"))?;
    let mut samples = Vec::with_capacity(num_per_class * NUM_CLASSES);
    for label in 0..NUM_CLASSES {
        for index in 0..index_limit {
            let id = SampleId {
                source,
                label: label as u8,
                index,
            };
            samples.push(LabeledSample {
                id,
                image: generate_sample(id, seed, shape)?,
                label,
                corruption: None,
            });
        }
    }
    Ok(samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::input(format!("unknown split `{other}`"))),
        }
    }
}

/// Train / validation / test split of one source.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPartition {
    pub source: Source,
    pub seed: u64,
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl DatasetPartition {
    pub fn split(&self, split: Split) -> &[LabeledSample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<LabeledSample> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Groups samples by label with each group in canonical id order.
fn by_class(samples: Vec<LabeledSample>) -> BTreeMap<usize, Vec<LabeledSample>> {
    let mut groups: BTreeMap<usize, Vec<LabeledSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.label).or_default().push(s);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|s| s.id);
    }
    groups
}

fn single_source(samples: &[LabeledSample]) -> Result<Source> {
    let source = samples
        .first()
        .map(|s| s.id.source)
        .ok_or_else(|| Error::input("cannot partition an empty sample list"))?;
    if samples.iter().any(|s| s.id.source != source) {
        return Err(Error::input("partition input mixes sources"));
    }
    Ok(source)
}

fn check_unique_ids(samples: &[LabeledSample]) -> Result<()> {
    let mut ids: Vec<SampleId> = samples.iter().map(|s| s.id).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::input(format!("duplicate sample id {}", w[0])));
    }
    Ok(())
}

/// Stratified split: exactly `per_class_test` test samples per class, then
/// `round(validation_fraction * remainder)` validation samples per class.
///
/// Membership depends only on the sample ids and `seed`, never on input order.
pub fn partition_dataset(
    samples: Vec<LabeledSample>,
    per_class_test: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<DatasetPartition> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::input("validation_fraction must lie in [0, 1)"));
    }
    let source = single_source(&samples)?;
    check_unique_ids(&samples)?;
    let mut part = DatasetPartition {
        source,
        seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (label, mut group) in by_class(samples) {
        let name = source.class_name(label).unwrap_or("?");
        if group.len() <= per_class_test {
            return Err(Error::input(format!(
                "class {name} has {} samples; needs more than {per_class_test} to fill the test split and leave training data",
                group.len()
            )));
        }
        let mut rng = rng::stream(seed, &[purpose::PARTITION, source.stream_label(), label as u64]);
        group.shuffle(&mut rng);
        let remainder = group.len() - per_class_test;
        let n_val = (validation_fraction * remainder as f64).round() as usize;
        let mut rest = group.split_off(per_class_test);
        let train = rest.split_off(n_val);
        part.test.extend(group);
        part.validation.extend(rest);
        part.train.extend(train);
    }
    for split in Split::ALL {
        part.split_mut(split).sort_by_key(|s| s.id);
    }
    Ok(part)
}

/// Halves every split of `partition`, class-stratified, into a "good" and a
/// "corrupted" partition. With an odd class count the extra sample goes to
/// the good half. No corruption is applied here.
pub fn split_good_corrupted(partition: DatasetPartition, seed: u64) -> (DatasetPartition, DatasetPartition) {
    let DatasetPartition {
        source,
        seed: part_seed,
        train,
        validation,
        test,
    } = partition;
    let empty = || DatasetPartition {
        source,
        seed: part_seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let (mut good, mut bad) = (empty(), empty());
    for (split, samples) in [(Split::Train, train), (Split::Validation, validation), (Split::Test, test)] {
        for (label, mut group) in by_class(samples) {
            let mut rng = rng::stream(
                seed,
                &[purpose::SPLIT_HALVES, source.stream_label(), split as u64, label as u64],
            );
            group.shuffle(&mut rng);
            let keep = group.len().div_ceil(2);
            let second = group.split_off(keep);
            good.split_mut(split).extend(group);
            bad.split_mut(split).extend(second);
        }
        good.split_mut(split).sort_by_key(|s| s.id);
        bad.split_mut(split).sort_by_key(|s| s.id);
    }
    (good, bad)
}

/// Per-class counts of a sample list.
pub fn class_histogram(samples: &[LabeledSample]) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    for s in samples {
        h[s.label] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: ImageShape = ImageShape::square(8, 3);

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(Source::A, 3, 17, SMALL).unwrap();
        let b = generate_dataset(Source::A, 3, 17, SMALL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_changes_pixels_not_counts() {
        let a = generate_dataset(Source::B, 4, 17, SMALL).unwrap();
        let b = generate_dataset(Source::B, 4, 18, SMALL).unwrap();
        assert_eq!(class_histogram(&a), class_histogram(&b));
        assert_eq!(class_histogram(&a), [4; NUM_CLASSES]);
        assert!(a.iter().zip(&b).any(|(x, y)| x.image != y.image));
    }

    #[test]
    fn sources_differ() {
        let a = generate_dataset(Source::A, 2, 1, SMALL).unwrap();
        let b = generate_dataset(Source::B, 2, 1, SMALL).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.image != y.image));
    }

    #[test]
    fn zero_per_class_rejected() {
        assert!(matches!(generate_dataset(Source::A, 0, 1, SMALL), Err(Error::Input(_))));
    }

    #[test]
    fn all_pixels_in_unit_range() {
        for s in generate_dataset(Source::A, 5, 2, SMALL).unwrap() {
            assert!(s.image.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn sample_ids_parse_back() {
        let id = SampleId {
            source: Source::A,
            label: 5,
            index: 42,
        };
        assert_eq!(id.to_string(), "A/CAR2/000042");
        assert_eq!("A/CAR2/000042".parse::<SampleId>().unwrap(), id);
        assert!("B/CAR2/000001".parse::<SampleId>().is_err());
    }

    #[test]
    fn class_tables_are_bijective() {
        for source in [Source::A, Source::B, Source::S] {
            for (label, name) in source.class_names().iter().enumerate() {
                assert_eq!(source.label_of(name), Some(label));
            }
        }
    }

    #[test]
    fn partition_counts() {
        let samples = generate_dataset(Source::A, 40, 3, ImageShape::square(4, 3)).unwrap();
        let part = partition_dataset(samples, 10, 0.1, 9).unwrap();
        assert_eq!(class_histogram(&part.test), [10; 6]);
        assert_eq!(class_histogram(&part.validation), [3; 6]);
        assert_eq!(class_histogram(&part.train), [27; 6]);
    }

    #[test]
    fn zero_validation_fraction_gives_empty_validation() {
        let samples = generate_dataset(Source::B, 12, 3, ImageShape::square(4, 3)).unwrap();
        let part = partition_dataset(samples, 2, 0.0, 9).unwrap();
        assert!(part.validation.is_empty());
        assert_eq!(part.train.len(), 60);
    }

    #[test]
    fn insufficient_class_named_in_error() {
        let samples = generate_dataset(Source::A, 5, 3, ImageShape::square(4, 3)).unwrap();
        let err = partition_dataset(samples, 5, 0.1, 1).unwrap_err();
        assert!(err.to_string().contains("class WW"), "{err}");
    }

    #[test]
    fn odd_counts_favour_good_half() {
        let samples = generate_dataset(Source::A, 13, 3, ImageShape::square(4, 3)).unwrap();
        let part = partition_dataset(samples, 2, 0.0, 1).unwrap();
        let (good, bad) = split_good_corrupted(part, 4);
        assert_eq!(class_histogram(&good.train), [6; 6]);
        assert_eq!(class_histogram(&bad.train), [5; 6]);
        assert_eq!(class_histogram(&good.test), [1; 6]);
        assert_eq!(class_histogram(&bad.test), [1; 6]);
    }
}
