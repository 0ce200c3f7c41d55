use std::path::Path;

use fedstone_core::datagen::manifest::{records_of, render};
use fedstone_core::datagen::{DatasetPartition, Image};
use fedstone_core::manifest::FileRef;
use fedstone_core::orchestrator::sha256_hex;
use fedstone_core::tensor::checkpoint::write_atomic;
use fedstone_core::{Error, Result};

/// Writes `bytes` to `root/rel` and returns a reference for the manifest.
pub fn write_ref(root: &Path, rel: &str, bytes: &[u8]) -> Result<FileRef> {
    write_atomic(&root.join(rel), bytes)?;
    Ok(FileRef {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
    })
}

pub fn write_dataset_manifest(root: &Path, rel: &str, partition: &DatasetPartition, shape: fedstone_core::datagen::ImageShape) -> Result<FileRef> {
    let text = render(shape, &records_of(partition, partition.seed));
    write_ref(root, rel, text.as_bytes())
}

/// Encodes an image as 8-bit PNG, scaled up by `scale` with nearest
/// neighbour so small patches stay visible.
pub fn write_png(path: &Path, image: &Image, scale: u32) -> Result<()> {
    let (h, w, c) = (image.height() as u32, image.width() as u32, image.channels());
    let (out_w, out_h) = (w * scale, h * scale);
    let to_byte = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    let mut bytes = Vec::with_capacity((out_w * out_h) as usize * c);
    for y in 0..out_h {
        for x in 0..out_w {
            for ch in 0..c {
                bytes.push(to_byte(image.get((y / scale) as usize, (x / scale) as usize, ch)));
            }
        }
    }
    let color = match c {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        _ => return Err(Error::Input(format!("cannot write a {c}-channel image as PNG"))),
    };
    let mut encoded = Vec::new();
    image::ImageEncoder::write_image(
        image::codecs::png::PngEncoder::new(&mut encoded),
        &bytes,
        out_w,
        out_h,
        color,
    )
    .map_err(|e| Error::Format(format!("png encoding failed: {e}")))?;
    write_atomic(path, &encoded)
}
