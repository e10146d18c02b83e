use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Which latent dimensions are relevant (disentangled) factors.
///
/// The quantile loss and the coverage loss only look at relevant
/// dimensions; the point loss always uses all of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimMask(Vec<bool>);

impl DimMask {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return invalid("dimension mask must select at least one dimension");
        }
        Ok(Self(bits))
    }

    pub fn all(dim: usize) -> Self {
        assert!(dim > 0, "mask over zero dimensions");
        Self(alloc::vec![true; dim])
    }

    /// The first `relevant` of `dim` dimensions.
    pub fn leading(dim: usize, relevant: usize) -> Result<Self> {
        if relevant > dim {
            return invalid(alloc::format!(
                "{relevant} relevant dimensions requested out of {dim}"
            ));
        }
        Self::new((0..dim).map(|d| d < relevant).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn is_set(&self, d: usize) -> bool {
        self.0.get(d).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Indices of the relevant dimensions.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(d, _)| d)
    }
}
