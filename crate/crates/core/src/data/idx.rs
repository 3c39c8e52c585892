//! Big-endian IDX containers (the MNIST distribution format).
//!
//! Images: magic `0x00000803`, count, rows, cols, then `count·rows·cols`
//! unsigned bytes. Labels: magic `0x00000801`, count, then `count` bytes.
//! Either file may be gzip-compressed; this is detected from the `1f 8b`
//! prefix rather than the file name.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
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

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(header..header + len).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        detail: format!(
            "expected {} payload bytes, found {}",
            len,
            bytes.len().saturating_sub(header)
        ),
    })
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]` by `1/255`;
/// the class count is one past the largest label seen.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let images = read_bytes(images_path)?;
    check_magic(&images, IMAGES_MAGIC, images_path)?;
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let dim = rows * cols;
    let pixels = payload(&images, 16, count * dim, images_path)?;

    let labels = read_bytes(labels_path)?;
    check_magic(&labels, LABELS_MAGIC, labels_path)?;
    let label_count = be_u32(&labels, 4, labels_path)? as usize;
    let label_bytes = payload(&labels, 8, label_count, labels_path)?;

    if count != label_count {
        return Err(Error::CountMismatch {
            images: images_path.to_path_buf(),
            image_count: count,
            labels: labels_path.to_path_buf(),
            label_count,
        });
    }

    let inputs = Array2::from_shape_vec(
        (count, dim),
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
    .expect("payload length checked");
    let labels: Vec<usize> = label_bytes.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, class_count)
}

/// Serializes raw pixel bytes as an uncompressed IDX image file.
pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols, "pixel buffer size");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use flate2::write::GzEncoder;
    use flate2::Compression;

    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let pixels: Vec<u8> = (0..18u8).map(|i| i * 15).collect();
        let img = dir.join("img");
        let lbl = dir.join("lbl");
        fs::write(&img, encode_idx_images(2, 3, 3, &pixels)).unwrap();
        fs::write(&lbl, encode_idx_labels(&[3, 7])).unwrap();
        (img, lbl)
    }

    #[test]
    fn loads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 9);
        assert_eq!(ds.labels(), &[3, 7]);
        assert_eq!(ds.class_count(), 8);
        for (k, &v) in ds.inputs().iter().enumerate() {
            assert_eq!(v, (k as f64 * 15.0) / 255.0);
        }
    }

    #[test]
    fn gzip_input_is_detected_by_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        let gz = dir.path().join("img.plain-name");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&fs::read(&img).unwrap()).unwrap();
        fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx(&gz, &lbl).unwrap(), load_idx(&img, &lbl).unwrap());
    }

    #[test]
    fn swapped_files_are_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = fixture(dir.path());
        match load_idx(&img, &img) {
            Err(Error::BadMagic { path, found, expected }) => {
                assert_eq!(path, img);
                assert_eq!(found, IMAGES_MAGIC);
                assert_eq!(expected, LABELS_MAGIC);
            }
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_images_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        let bytes = fs::read(&img).unwrap();
        fs::write(&img, &bytes[..bytes.len() - 1]).unwrap();
        match load_idx(&img, &lbl) {
            Err(Error::Truncated { path, .. }) => assert_eq!(path, img),
            other => panic!("expected truncation, got {other:?}"),
        }
        fs::write(&img, &bytes[..6]).unwrap();
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Truncated { .. })));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = fixture(dir.path());
        fs::write(&lbl, encode_idx_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(
            load_idx(&img, &lbl),
            Err(Error::CountMismatch { image_count: 2, label_count: 3, .. })
        ));
    }
}
