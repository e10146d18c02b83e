//! Binary 8-bit portable graymaps.
//!
//! Files are `P5`, then width and height, then a max value of 255, each
//! separated by a single newline, followed by one byte per pixel in
//! row-major order. A value `v` in `[0, 1]` is stored as `round(255 v)`.

use std::path::Path;

use latent_rcps_core::ImageGrid;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encode channel `channel` of `image`.
pub fn encode(image: &ImageGrid, channel: usize) -> Vec<u8> {
    assert!(channel < image.channels(), "channel {channel} out of range");
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .skip(channel)
            .step_by(image.channels())
            .map(|&v| to_byte(v)),
    );
    out
}

pub fn write(path: &Path, image: &ImageGrid, channel: usize) -> Result<()> {
    let bytes = encode(image, channel);
    write_atomic(path, |w| w.write_all(&bytes))
}

/// Decode a file written by [`encode`] into a one-channel image.
pub fn decode(bytes: &[u8]) -> Option<ImageGrid> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let width: usize = fields[1].parse().ok()?;
    let height: usize = fields[2].parse().ok()?;
    let body = bytes.get(pos..)?;
    if body.len() != width * height {
        return None;
    }
    ImageGrid::new(
        height,
        width,
        1,
        body.iter().map(|&b| f32::from(b) / 255.0).collect(),
    )
    .ok()
}

pub fn read(path: &Path) -> Result<ImageGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).ok_or_else(|| Error::format(path, "not a binary 8-bit graymap"))
}
