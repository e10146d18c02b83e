//! Fully connected trunk with three linear heads.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::synth::{ImageGrid, LatentVector};

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Dense layer `y = W^T x + b` with `W` stored input-major
/// (`weights[i * outputs + j]` connects input `i` to output `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: alloc::vec![0.0; inputs * outputs],
            bias: alloc::vec![0.0; outputs],
        }
    }

    /// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(inputs as f64);
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: alloc::vec![0.0; outputs],
        }
    }

    pub fn from_parts(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return invalid("dense layer parts have inconsistent shapes");
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub(crate) fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        out.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.outputs)) {
            if *xi != 0.0 {
                axpy(*xi, row, out);
            }
        }
    }
}

/// Pixels rescaled from `[0, 1]` to `[-1, 1]`, the network's input range.
pub(crate) fn encoder_input(x: &ImageGrid) -> Vec<f64> {
    x.pixels()
        .iter()
        .map(|&p| 2.0 * f64::from(p) - 1.0)
        .collect()
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn leaky(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// Derivative of the leaky rectifier; the kink at 0 takes the right branch.
#[inline]
pub(crate) fn leaky_slope(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Point prediction and the two conditional-quantile estimates per dimension.
///
/// No ordering between the three is enforced here.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub point: LatentVector,
    pub q_lo: LatentVector,
    pub q_hi: LatentVector,
}

impl EncoderOutput {
    pub fn new(point: LatentVector, q_lo: LatentVector, q_hi: LatentVector) -> Result<Self> {
        if point.dim() != q_lo.dim() || point.dim() != q_hi.dim() {
            return invalid("encoder output heads disagree on dimension");
        }
        Ok(Self { point, q_lo, q_hi })
    }

    pub fn dim(&self) -> usize {
        self.point.dim()
    }
}

/// Shared trunk with point, lower-quantile and upper-quantile heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub trunk: Vec<Dense>,
    pub point: Dense,
    pub lower: Dense,
    pub upper: Dense,
}

/// Intermediate values kept for backpropagation.
pub(crate) struct Activations {
    /// Trunk input followed by each trunk layer's rectified output.
    pub post: Vec<Vec<f64>>,
    /// Each trunk layer's pre-activation.
    pub pre: Vec<Vec<f64>>,
    pub out: EncoderOutput,
}

impl EncoderParams {
    /// Randomly initialised encoder for `input_len` inputs and `dim` latents.
    pub fn init<R: Rng + ?Sized>(
        input_len: usize,
        hidden: &[usize],
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_widths(input_len, hidden, dim)?;
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = input_len;
        for &h in hidden {
            trunk.push(Dense::init(width, h, rng));
            width = h;
        }
        Ok(Self {
            trunk,
            point: Dense::init(width, dim, rng),
            lower: Dense::init(width, dim, rng),
            upper: Dense::init(width, dim, rng),
        })
    }

    /// All weights and biases zero.
    pub fn zeros(input_len: usize, hidden: &[usize], dim: usize) -> Result<Self> {
        Self::check_widths(input_len, hidden, dim)?;
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut width = input_len;
        for &h in hidden {
            trunk.push(Dense::zeros(width, h));
            width = h;
        }
        Ok(Self {
            trunk,
            point: Dense::zeros(width, dim),
            lower: Dense::zeros(width, dim),
            upper: Dense::zeros(width, dim),
        })
    }

    fn check_widths(input_len: usize, hidden: &[usize], dim: usize) -> Result<()> {
        if input_len == 0 || dim == 0 || hidden.contains(&0) {
            return invalid("layer widths must be positive");
        }
        Ok(())
    }

    /// Assemble from layers, checking that the shapes chain together.
    pub fn from_layers(
        trunk: Vec<Dense>,
        point: Dense,
        lower: Dense,
        upper: Dense,
    ) -> Result<Self> {
        let mut width = trunk.first().map_or(point.inputs, |l| l.inputs);
        for layer in &trunk {
            if layer.inputs != width {
                return invalid("trunk layer widths do not chain");
            }
            width = layer.outputs;
        }
        for head in [&point, &lower, &upper] {
            if head.inputs != width || head.outputs != point.outputs {
                return invalid("head shapes do not match the trunk");
            }
        }
        Ok(Self {
            trunk,
            point,
            lower,
            upper,
        })
    }

    pub fn input_len(&self) -> usize {
        self.trunk.first().map_or(self.point.inputs, |l| l.inputs)
    }

    pub fn dim(&self) -> usize {
        self.point.outputs
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.trunk.iter().map(|l| l.outputs).collect()
    }

    /// Named layers in canonical order: `trunk.0`, ..., `point`, `lower`, `upper`.
    pub fn layers(&self) -> Vec<(String, &Dense)> {
        let mut out: Vec<(String, &Dense)> = self
            .trunk
            .iter()
            .enumerate()
            .map(|(i, l)| (alloc::format!("trunk.{i}"), l))
            .collect();
        out.push((String::from("point"), &self.point));
        out.push((String::from("lower"), &self.lower));
        out.push((String::from("upper"), &self.upper));
        out
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain([&mut self.point, &mut self.lower, &mut self.upper])
    }

    fn layer_refs(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain([&self.point, &self.lower, &self.upper])
    }

    /// Parameter slices in canonical order (weights then bias, per layer).
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layer_refs()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Parameter `k` in the canonical flat order.
    pub fn param(&self, k: usize) -> f64 {
        let mut k = k;
        for s in self.slices() {
            if k < s.len() {
                return s[k];
            }
            k -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, k: usize, value: f64) {
        let mut k = k;
        for s in self.slices_mut() {
            if k < s.len() {
                s[k] = value;
                return;
            }
            k -= s.len();
        }
        panic!("parameter index out of range");
    }

    /// `self += a * other`; shapes must match.
    pub fn add_scaled(&mut self, a: f64, other: &EncoderParams) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            axpy(a, src, dst);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Zero-valued copy with the same shapes (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.scale(0.0);
        z
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Evaluate the encoder on an image.
    pub fn forward(&self, x: &ImageGrid) -> Result<EncoderOutput> {
        if x.len() != self.input_len() {
            return invalid(alloc::format!(
                "input has {} values, encoder expects {}",
                x.len(),
                self.input_len()
            ));
        }
        Ok(self.forward_cached(encoder_input(x)).out)
    }

    pub(crate) fn forward_cached(&self, input: Vec<f64>) -> Activations {
        let mut post = Vec::with_capacity(self.trunk.len() + 1);
        let mut pre = Vec::with_capacity(self.trunk.len());
        post.push(input);
        for layer in &self.trunk {
            let mut z = alloc::vec![0.0; layer.outputs];
            layer.forward_into(post.last().expect("trunk input"), &mut z);
            post.push(z.iter().map(|&v| leaky(v)).collect());
            pre.push(z);
        }
        let features = post.last().expect("features");
        let head = |layer: &Dense| {
            let mut o = alloc::vec![0.0; layer.outputs];
            layer.forward_into(features, &mut o);
            LatentVector(o)
        };
        let out = EncoderOutput {
            point: head(&self.point),
            q_lo: head(&self.lower),
            q_hi: head(&self.upper),
        };
        Activations { post, pre, out }
    }
}
