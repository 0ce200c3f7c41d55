//! Line-oriented dataset manifests.
//!
//! A header, a `# shape HxWxC` line, then one tab-separated record per
//! sample: `id source class_name split seed`, optionally followed by
//! `kind severity` once the sample is corrupted. Pixels are not stored; they
//! regenerate from `(seed, id, shape)`.

use std::fmt::Write as _;

use crate::corruption::{CorruptionKind, CorruptionSpec};
use crate::datagen::{generate_sample, DatasetPartition, ImageShape, LabeledSample, SampleId, Split};
use crate::error::{Error, Result};

pub const HEADER: &str = "# fedstone dataset manifest v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub id: SampleId,
    pub split: Split,
    pub seed: u64,
    pub corruption: Option<CorruptionSpec>,
}

impl ManifestRecord {
    pub fn from_sample(sample: &LabeledSample, split: Split, seed: u64) -> Self {
        ManifestRecord {
            id: sample.id,
            split,
            seed,
            corruption: sample.corruption,
        }
    }

    /// Regenerates the clean sample this record describes.
    pub fn regenerate(&self, shape: ImageShape) -> Result<LabeledSample> {
        Ok(LabeledSample {
            id: self.id,
            image: generate_sample(self.id, self.seed, shape)?,
            label: usize::from(self.id.label),
            corruption: None,
        })
    }
}

pub fn records_of(partition: &DatasetPartition, generation_seed: u64) -> Vec<ManifestRecord> {
    Split::ALL
        .iter()
        .flat_map(|&split| {
            partition
                .split(split)
                .iter()
                .map(move |s| ManifestRecord::from_sample(s, split, generation_seed))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub shape: ImageShape,
    pub records: Vec<ManifestRecord>,
}

pub fn render(shape: ImageShape, records: &[ManifestRecord]) -> String {
    let corrupted = records.iter().any(|r| r.corruption.is_some());
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(out, "# shape {}x{}x{}", shape.height, shape.width, shape.channels);
    out.push_str("# id\tsource\tclass_name\tsplit\tseed");
    if corrupted {
        out.push_str("\tkind\tseverity");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.id,
            r.id.source,
            r.id.class_name(),
            r.split.as_str(),
            r.seed
        );
        if let Some(spec) = r.corruption {
            let _ = write!(out, "\t{}\t{}", spec.kind, spec.severity());
        } else if corrupted {
            out.push_str("\tnone\t0");
        }
        out.push('\n');
    }
    out
}

fn parse_shape(line: Option<&str>) -> Result<ImageShape> {
    let bad = || Error::input("dataset manifest line 2 must be `# shape HxWxC`");
    let dims: Vec<usize> = line
        .and_then(|l| l.strip_prefix("# shape "))
        .ok_or_else(bad)?
        .split('x')
        .map(|d| d.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match dims[..] {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok(ImageShape::new(h, w, c)),
        _ => Err(bad()),
    }
}

pub fn parse(text: &str) -> Result<DatasetManifest> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::input("not a fedstone dataset manifest (bad header)"));
    }
    let shape = parse_shape(lines.next())?;
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::input(format!("manifest line {}: {what}", n + 3));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 && fields.len() != 7 {
            return Err(bad("expected 5 or 7 tab-separated fields"));
        }
        let id: SampleId = fields[0].parse()?;
        if fields[1] != id.source.code() || fields[2] != id.class_name() {
            return Err(bad("source/class columns disagree with the sample id"));
        }
        let split = Split::parse(fields[3])?;
        let seed = fields[4].parse().map_err(|_| bad("bad seed"))?;
        let corruption = if fields.len() == 7 && fields[5] != "none" {
            let kind: CorruptionKind = fields[5].parse()?;
            let severity = fields[6].parse().map_err(|_| bad("bad severity"))?;
            Some(CorruptionSpec::new(kind, severity)?)
        } else {
            None
        };
        records.push(ManifestRecord {
            id,
            split,
            seed,
            corruption,
        });
    }
    Ok(DatasetManifest { shape, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, partition_dataset, ImageShape, Source};

    #[test]
    fn render_parse_round_trip() {
        let samples = generate_dataset(Source::B, 6, 21, ImageShape::square(4, 3)).unwrap();
        let part = partition_dataset(samples, 2, 0.25, 3).unwrap();
        let mut records = records_of(&part, 21);
        records[0].corruption = Some(CorruptionSpec::new(CorruptionKind::Fog, 3).unwrap());
        let shape = ImageShape::square(4, 3);
        let text = render(shape, &records);
        assert!(text.lines().nth(3).unwrap().ends_with("\tfog\t3"));
        assert_eq!(parse(&text).unwrap(), DatasetManifest { shape, records });
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse("hello\n").is_err());
        assert!(parse(&format!("{HEADER}\n# shape 4x4\n")).is_err());
    }

    #[test]
    fn records_regenerate_their_pixels() {
        let shape = ImageShape::square(4, 3);
        let samples = generate_dataset(Source::A, 3, 9, shape).unwrap();
        let part = partition_dataset(samples.clone(), 1, 0.0, 3).unwrap();
        let parsed = parse(&render(shape, &records_of(&part, 9))).unwrap();
        for r in &parsed.records {
            let s = r.regenerate(parsed.shape).unwrap();
            assert!(samples.contains(&s));
        }
    }
}
