use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::Sample;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR100_RECORD: usize = 2 + 3 * 32 * 32;

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Finds `name` or `name.gz` inside `dir`.
pub fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::Data(format!("missing dataset file {} (or .gz)", plain.display())))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn expect_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image/label file pair; pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<(Vec<Sample>, [usize; 3])> {
    let images = read_maybe_gz(images_path)?;
    let labels = read_maybe_gz(labels_path)?;

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            observed: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            observed: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let label_count = be_u32(&labels, 4, labels_path)? as usize;
    if label_count != count {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            count, label_count
        )));
    }
    let pixels = rows * cols;
    expect_len(&images, 16 + count * pixels, images_path)?;
    expect_len(&labels, 8 + count, labels_path)?;

    let samples = (0..count)
        .map(|i| Sample {
            pixels: images[16 + i * pixels..16 + (i + 1) * pixels]
                .iter()
                .map(|&b| b as f32 / 255.0)
                .collect(),
            label: labels[8 + i] as usize,
        })
        .collect();
    Ok((samples, [1, rows, cols]))
}

/// Parses a CIFAR-100 binary file: per record a coarse label byte, a fine
/// label byte and 3072 channel-major pixel bytes. Fine labels are kept.
pub fn load_cifar100_bin(path: &Path) -> Result<Vec<Sample>> {
    let bytes = read_maybe_gz(path)?;
    if bytes.is_empty() || bytes.len() % CIFAR100_RECORD != 0 {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected: bytes.len().div_ceil(CIFAR100_RECORD).max(1) * CIFAR100_RECORD,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(CIFAR100_RECORD)
        .map(|rec| Sample {
            label: rec[1] as usize,
            pixels: rec[2..].iter().map(|&b| b as f32 / 255.0).collect(),
        })
        .collect())
}
