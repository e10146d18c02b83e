//! Corruption models `F` applied to clean renders.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;

use super::latent::ImageGrid;
use crate::error::{invalid, Result};

/// Downsampling factors used by the super-resolution task.
pub const DOWNSAMPLE_FACTORS: [usize; 5] = [1, 4, 8, 16, 32];

/// Mask thresholds for the easy / medium / hard inpainting levels.
pub const MASK_THRESHOLDS: [f64; 3] = [0.3, 0.6, 0.9];

/// The corruption applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionSpec {
    None,
    Downsample(usize),
    /// Expected fraction of masked pixels.
    Mask(f64),
}

impl CorruptionSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            CorruptionSpec::None => "none",
            CorruptionSpec::Downsample(_) => "downsample",
            CorruptionSpec::Mask(_) => "mask",
        }
    }

    /// The numeric parameter (factor or threshold); 0 for `None`.
    pub fn parameter(&self) -> f64 {
        match *self {
            CorruptionSpec::None => 0.0,
            CorruptionSpec::Downsample(f) => f as f64,
            CorruptionSpec::Mask(t) => t,
        }
    }

    /// Apply to a clean render, producing the encoder input `X = F(Y)`.
    pub fn apply<R: Rng + ?Sized>(&self, y: &ImageGrid, rng: &mut R) -> Result<ImageGrid> {
        match *self {
            CorruptionSpec::None => Ok(y.clone()),
            CorruptionSpec::Downsample(factor) => corrupt_downsample(y, factor),
            CorruptionSpec::Mask(threshold) => {
                corrupt_mask(y, threshold, rng).map(|m| m.with_mask_channel())
            }
        }
    }
}

/// How corruption levels are drawn when sampling a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum CorruptionPolicy {
    None,
    /// Uniform over the listed factors.
    Downsample(Vec<usize>),
    /// Uniform over the listed thresholds.
    Mask(Vec<f64>),
}

impl Default for CorruptionPolicy {
    fn default() -> Self {
        CorruptionPolicy::Downsample(DOWNSAMPLE_FACTORS.to_vec())
    }
}

impl CorruptionPolicy {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        match self {
            CorruptionPolicy::None => Ok(()),
            CorruptionPolicy::Downsample(factors) => {
                if factors.is_empty() {
                    return invalid("downsample policy needs at least one factor");
                }
                for &f in factors {
                    check_factor(f, height, width)?;
                }
                Ok(())
            }
            CorruptionPolicy::Mask(thresholds) => {
                if thresholds.is_empty() {
                    return invalid("mask policy needs at least one threshold");
                }
                for &t in thresholds {
                    check_threshold(t)?;
                }
                Ok(())
            }
        }
    }

    /// Number of channels in the encoder input for single-channel renders.
    pub fn input_channels(&self) -> usize {
        match self {
            CorruptionPolicy::Mask(_) => 2,
            _ => 1,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CorruptionSpec {
        match self {
            CorruptionPolicy::None => CorruptionSpec::None,
            CorruptionPolicy::Downsample(f) => {
                CorruptionSpec::Downsample(f[rng.random_range(0..f.len())])
            }
            CorruptionPolicy::Mask(t) => CorruptionSpec::Mask(t[rng.random_range(0..t.len())]),
        }
    }

    /// Compact text form, e.g. `downsample:1,4,8` or `mask:0.3,0.6`.
    pub fn to_text(&self) -> String {
        fn join<T: fmt::Display>(items: &[T]) -> String {
            items
                .iter()
                .map(|i| format!("{i}"))
                .collect::<Vec<_>>()
                .join(",")
        }
        match self {
            CorruptionPolicy::None => String::from("none"),
            CorruptionPolicy::Downsample(f) => format!("downsample:{}", join(f)),
            CorruptionPolicy::Mask(t) => format!("mask:{}", join(t)),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "none" {
            return Ok(CorruptionPolicy::None);
        }
        let Some((kind, list)) = text.split_once(':') else {
            return invalid(format!("unrecognized corruption policy `{text}`"));
        };
        let items = list.split(',').map(str::trim).filter(|s| !s.is_empty());
        match kind.trim() {
            "downsample" => items
                .map(|s| s.parse::<usize>().map_err(|_| ()))
                .collect::<core::result::Result<Vec<_>, _>>()
                .map(CorruptionPolicy::Downsample)
                .or_else(|_| invalid(format!("bad downsample factor list `{list}`"))),
            "mask" => items
                .map(|s| s.parse::<f64>().map_err(|_| ()))
                .collect::<core::result::Result<Vec<_>, _>>()
                .map(CorruptionPolicy::Mask)
                .or_else(|_| invalid(format!("bad mask threshold list `{list}`"))),
            other => invalid(format!("unknown corruption kind `{other}`")),
        }
    }
}

fn check_factor(factor: usize, height: usize, width: usize) -> Result<()> {
    if factor == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
        return invalid(format!(
            "downsample factor {factor} does not divide {height}x{width}"
        ));
    }
    Ok(())
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return invalid(format!("mask threshold {threshold} outside [0, 1]"));
    }
    Ok(())
}

/// Block-mean pooling by `factor` followed by nearest-neighbour upsampling
/// back to the original size. Each channel is pooled independently.
pub fn corrupt_downsample(y: &ImageGrid, factor: usize) -> Result<ImageGrid> {
    let (h, w, c) = (y.height(), y.width(), y.channels());
    check_factor(factor, h, w)?;
    if factor == 1 {
        return Ok(y.clone());
    }
    let src = y.pixels();
    let mut out = alloc::vec![0.0f32; src.len()];
    let block = (factor * factor) as f64;
    for by in (0..h).step_by(factor) {
        for bx in (0..w).step_by(factor) {
            for ch in 0..c {
                let mut sum = 0.0f64;
                for r in by..by + factor {
                    for col in bx..bx + factor {
                        sum += f64::from(src[(r * w + col) * c + ch]);
                    }
                }
                let mean = ((sum / block) as f32).clamp(0.0, 1.0);
                for r in by..by + factor {
                    for col in bx..bx + factor {
                        out[(r * w + col) * c + ch] = mean;
                    }
                }
            }
        }
    }
    Ok(ImageGrid::from_raw(h, w, c, out))
}

/// A masked image together with its binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedImage {
    pub image: ImageGrid,
    /// Single channel, 1.0 where the pixel was removed.
    pub mask: ImageGrid,
}

impl MaskedImage {
    /// Concatenate the mask as an extra trailing channel.
    pub fn with_mask_channel(self) -> ImageGrid {
        let c = self.image.channels();
        let mut pixels = Vec::with_capacity(self.image.len() + self.mask.len());
        for (px, &m) in self.image.pixels().chunks_exact(c).zip(self.mask.pixels()) {
            pixels.extend_from_slice(px);
            pixels.push(m);
        }
        ImageGrid::from_raw(self.image.height(), self.image.width(), c + 1, pixels)
    }

    pub fn masked_fraction(&self) -> f64 {
        let n = self.mask.pixels().iter().filter(|&&m| m > 0.5).count();
        n as f64 / self.mask.len() as f64
    }
}

/// Remove the pixels where a uniform noise field falls below `threshold`.
///
/// One uniform draw per pixel location (shared across channels), in row-major
/// order. Removed pixels are set to 0.
pub fn corrupt_mask<R: Rng + ?Sized>(
    y: &ImageGrid,
    threshold: f64,
    rng: &mut R,
) -> Result<MaskedImage> {
    check_threshold(threshold)?;
    let (h, w, c) = (y.height(), y.width(), y.channels());
    let mut pixels = y.pixels().to_vec();
    let mut mask = alloc::vec![0.0f32; h * w];
    for (p, m) in mask.iter_mut().enumerate() {
        let noise: f64 = rng.random();
        if noise < threshold {
            *m = 1.0;
            pixels[p * c..(p + 1) * c].fill(0.0);
        }
    }
    Ok(MaskedImage {
        image: ImageGrid::from_raw(h, w, c, pixels),
        mask: ImageGrid::from_raw(h, w, 1, mask),
    })
}
