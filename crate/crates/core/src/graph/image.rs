//! IDX image/label files (the MNIST distribution format), optionally gzipped.

use std::borrow::Cow;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{read_bytes, Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
/// Upper bound on decompressed size, larger inputs are rejected.
const MAX_INFLATED: u64 = 1 << 30;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major then row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, k: usize) -> &[u8] {
        let sz = self.rows * self.cols;
        &self.pixels[k * sz..(k + 1) * sz]
    }
}

fn inflate(bytes: &[u8]) -> Result<Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .take(MAX_INFLATED + 1)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                what: "gzip stream",
                msg: e.to_string(),
            })?;
        if out.len() as u64 > MAX_INFLATED {
            return Err(Error::Format {
                what: "gzip stream",
                msg: "decompressed size exceeds 1 GiB".into(),
            });
        }
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

fn be_u32(data: &[u8], at: usize, what: &'static str) -> Result<u32> {
    data.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            what,
            msg: format!("truncated header at byte {at}"),
        })
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    const WHAT: &str = "IDX image file";
    let data = inflate(bytes)?;
    let magic = be_u32(&data, 0, WHAT)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format {
            what: WHAT,
            msg: format!("bad magic {magic:#010x}"),
        });
    }
    let count = be_u32(&data, 4, WHAT)? as usize;
    let rows = be_u32(&data, 8, WHAT)? as usize;
    let cols = be_u32(&data, 12, WHAT)? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| Error::Format {
            what: WHAT,
            msg: "dimensions overflow".into(),
        })?;
    let body = &data[16..];
    if body.len() != expected {
        return Err(Error::Format {
            what: WHAT,
            msg: format!("{} pixel bytes for {count} images of {rows}x{cols}", body.len()),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const WHAT: &str = "IDX label file";
    let data = inflate(bytes)?;
    let magic = be_u32(&data, 0, WHAT)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            what: WHAT,
            msg: format!("bad magic {magic:#010x}"),
        });
    }
    let count = be_u32(&data, 4, WHAT)? as usize;
    let body = &data[8..];
    if body.len() != count {
        return Err(Error::Format {
            what: WHAT,
            msg: format!("{} label bytes for {count} labels", body.len()),
        });
    }
    Ok(body.to_vec())
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    parse_idx_images(&read_bytes(path)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use std::io::Write;

    fn images_bytes() -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, 2, 2, 3] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend(0u8..12);
        b
    }

    #[test]
    fn parses_raw_and_gzip() {
        let raw = images_bytes();
        let imgs = parse_idx_images(&raw).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (2, 2, 3));
        assert_eq!(imgs.image(1), &[6, 7, 8, 9, 10, 11]);

        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        assert_eq!(parse_idx_images(&enc.finish().unwrap()).unwrap(), imgs);
    }

    #[test]
    fn labels() {
        let mut b = Vec::new();
        b.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend([7, 0, 9]);
        assert_eq!(parse_idx_labels(&b).unwrap(), vec![7, 0, 9]);
        b.pop();
        assert!(parse_idx_labels(&b).is_err());
    }

    #[test]
    fn rejects_malformed() {
        let mut raw = images_bytes();
        raw.pop();
        assert!(parse_idx_images(&raw).is_err());
        assert!(parse_idx_images(&[0, 0, 8]).is_err());
        assert!(parse_idx_images(&[0, 0, 8, 1, 0, 0, 0, 0]).is_err());
        let mut huge = Vec::new();
        for v in [IMAGES_MAGIC, u32::MAX, u32::MAX, u32::MAX] {
            huge.extend_from_slice(&v.to_be_bytes());
        }
        assert!(parse_idx_images(&huge).is_err());
        assert!(parse_idx_images(&[0x1f, 0x8b, 0, 1, 2]).is_err());
    }
}
