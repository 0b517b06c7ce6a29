//! Reader and writer for the big-endian IDX container used by MNIST.

use std::fs;
use std::path::Path;

use super::LabeledImages;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn need(&self, n: usize) -> Result<()> {
        if self.bytes.len() < n {
            return Err(Error::IdxTruncated {
                path: self.path.to_path_buf(),
                needed: n,
                have: self.bytes.len(),
            });
        }
        Ok(())
    }

    fn u32_at(&self, offset: usize) -> Result<u32> {
        self.need(offset + 4)?;
        let b = &self.bytes[offset..offset + 4];
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&self, expected: u32) -> Result<()> {
        let found = self.u32_at(0)?;
        if found != expected {
            return Err(Error::IdxBadMagic {
                path: self.path.to_path_buf(),
                found,
                expected,
            });
        }
        Ok(())
    }
}

/// Decodes an image file into an `(n, rows * cols)` tensor scaled to [0, 1].
pub fn decode_images(path: &Path, bytes: &[u8]) -> Result<Tensor> {
    let r = Reader { path, bytes };
    r.magic(IMAGE_MAGIC)?;
    let n = r.u32_at(4)? as usize;
    let rows = r.u32_at(8)? as usize;
    let cols = r.u32_at(12)? as usize;
    let pixels = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::InvalidArgument(format!("{}: image extents overflow", path.display())))?;
    r.need(16 + pixels)?;
    let data = bytes[16..16 + pixels].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![n, rows * cols], data)
}

pub fn decode_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let r = Reader { path, bytes };
    r.magic(LABEL_MAGIC)?;
    let n = r.u32_at(4)? as usize;
    r.need(8 + n)?;
    Ok(bytes[8..8 + n].iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a paired image and label file.
pub fn parse_idx(images: &Path, labels: &Path) -> Result<LabeledImages> {
    let x = decode_images(images, &read(images)?)?;
    let y = decode_labels(labels, &read(labels)?)?;
    if x.shape()[0] != y.len() {
        return Err(Error::IdxCountMismatch {
            images: x.shape()[0],
            labels: y.len(),
        });
    }
    Ok(LabeledImages { images: x, labels: y })
}

/// Encodes `n` images of `rows x cols` bytes.
pub fn encode_images(pixels: &[u8], n: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols, "pixel count");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_two_images() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| (i * 7 % 256) as u8).collect();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        fs::write(&ip, encode_images(&pixels, 2, 28, 28)).unwrap();
        fs::write(&lp, encode_labels(&[3, 9])).unwrap();
        let set = parse_idx(&ip, &lp).unwrap();
        assert_eq!(set.images.shape(), &[2, 784]);
        assert_eq!(set.labels, vec![3, 9]);
        let back: Vec<u8> = set.images.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        assert_eq!(back, pixels);
    }

    #[test]
    fn error_paths() {
        let p = Path::new("x");
        let mut bad = encode_labels(&[1]);
        bad[3] = 0x02;
        let e = decode_labels(p, &bad).unwrap_err();
        assert!(e.to_string().contains("bad magic"));
        assert!(matches!(decode_images(p, &encode_labels(&[1])), Err(Error::IdxBadMagic { .. })));
        let img = encode_images(&[0; 8], 2, 2, 2);
        assert!(matches!(decode_images(p, &img[..img.len() - 1]), Err(Error::IdxTruncated { .. })));

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, &img).unwrap();
        fs::write(&lp, encode_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(parse_idx(&ip, &lp), Err(Error::IdxCountMismatch { images: 2, labels: 3 })));
        assert!(matches!(parse_idx(&dir.path().join("missing"), &lp), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn truncations_never_panic(cut in 0usize..60, n in 0usize..3) {
            let img = encode_images(&vec![5; n * 16], n, 4, 4);
            let lbl = encode_labels(&vec![1; n]);
            let cut_img = cut.min(img.len());
            let r = decode_images(Path::new("t"), &img[..cut_img]);
            prop_assert!(r.is_ok() == (cut_img == img.len()));
            let cut_lbl = cut.min(lbl.len());
            let r = decode_labels(Path::new("t"), &lbl[..cut_lbl]);
            prop_assert!(r.is_ok() == (cut_lbl == lbl.len()));
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_images(Path::new("f"), &bytes);
            let _ = decode_labels(Path::new("f"), &bytes);
        }
    }
}
