//! IDX container decoding (big-endian magic, big-endian u32 extents, raw bytes).

use crate::error::IdxError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(IdxError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8], IdxError> {
    let needed = header + len;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(IdxError::TrailingBytes {
            extra: bytes.len() - needed,
        });
    }
    Ok(&bytes[header..])
}

fn expect_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes an image file into `count * 784` row-major pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    expect_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let (rows, cols) = (be_u32(bytes, 8)?, be_u32(bytes, 12)?);
    if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
        return Err(IdxError::BadDimensions { rows, cols });
    }
    Ok(payload(bytes, 16, count * IMAGE_PIXELS)?.to_vec())
}

/// Decodes a label file; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    expect_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let labels = payload(bytes, 8, count)?.to_vec();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(IdxError::BadLabel { index, label });
    }
    Ok(labels)
}

pub fn encode_idx_images(pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len() % IMAGE_PIXELS, 0, "partial image");
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&((pixels.len() / IMAGE_PIXELS) as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
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
