use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{invalid, Result};

/// A point in the latent space: one real coordinate per semantic factor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("latent vector has non-finite entries");
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(alloc::vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LatentVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for LatentVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for LatentVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// An `height x width x channels` image stored row-major with interleaved
/// channels. Pixel values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return invalid("image dimensions must be positive");
        }
        if pixels.len() != height * width * channels {
            return invalid(alloc::format!(
                "expected {} pixels for {height}x{width}x{channels}, got {}",
                height * width * channels,
                pixels.len()
            ));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("pixel values must lie in [0, 1]");
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: alloc::vec![value; height * width * channels],
        }
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Single channel `channel` as its own image.
    pub fn channel(&self, channel: usize) -> ImageGrid {
        assert!(channel < self.channels, "channel index out of range");
        let pixels = self
            .pixels
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect();
        ImageGrid::from_raw(self.height, self.width, 1, pixels)
    }
}
