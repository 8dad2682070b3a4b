//! IDX (MNIST-format) files: big-endian `u32` magic and dimensions followed by
//! raw `u8` payload.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        needed: offset + 4,
        actual: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("slice of length 4")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(header..header + len).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        needed: header + len,
        actual: bytes.len(),
    })
}

/// Images flattened row-major and scaled to `[0, 1]` by `/255`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = read(path)?;
    check_magic(&bytes, IMAGES_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = payload(&bytes, 16, count * rows * cols, path)?;
    Matrix::from_vec(
        count,
        rows * cols,
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read(path)?;
    check_magic(&bytes, LABELS_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    Ok(payload(&bytes, 8, count, path)?.to_vec())
}

/// Loads an image/label file pair. The class count is `max label + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let features = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if features.rows() != labels.len() {
        return Err(Error::CountMismatch {
            images: features.rows(),
            labels: labels.len(),
        });
    }
    let n_classes = labels.iter().map(|&l| usize::from(l) + 1).max().unwrap_or(0);
    Dataset::new(features, labels.into_iter().map(usize::from).collect(), n_classes)
}

pub fn write_idx_images(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> Result<()> {
    let path = path.as_ref();
    let per_image = rows * cols;
    if per_image == 0 || !pixels.len().is_multiple_of(per_image) {
        return Err(Error::InvalidArgument(format!(
            "{} pixels do not tile {rows}x{cols} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [
        IMAGES_MAGIC,
        (pixels.len() / per_image) as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_images(&img, 2, 2, &[0, 255, 0, 255]).unwrap();
        write_idx_labels(&lbl, &[3]).unwrap();
        let d = load_idx(&img, &lbl).unwrap();
        assert_eq!(d.features().as_slice(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.labels(), &[3]);
        assert_eq!(d.n_classes(), 4);
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_images(&img, 1, 2, &[1, 2, 3, 4]).unwrap();
        write_idx_labels(&lbl, &[0, 1, 2]).unwrap();
        assert!(matches!(
            load_idx(&img, &lbl),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_images(&img, 2, 2, &[0; 8]).unwrap();
        write_idx_labels(&lbl, &[0, 1]).unwrap();
        // Swapped roles.
        assert!(matches!(load_idx_images(&lbl), Err(Error::BadMagic { .. })));
        assert!(matches!(load_idx_labels(&img), Err(Error::BadMagic { .. })));

        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&img, &bytes).unwrap();
        assert!(matches!(load_idx_images(&img), Err(Error::Truncated { .. })));
        fs::write(&img, [0u8, 0, 8]).unwrap();
        assert!(matches!(load_idx_images(&img), Err(Error::Truncated { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_idx_labels("/nonexistent/labels-idx1-ubyte"),
            Err(Error::Io { .. })
        ));
    }
}
