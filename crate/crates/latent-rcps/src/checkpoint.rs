//! Encoder checkpoints (`.lrck`) and loss traces.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      8 bytes  "LRCPSCK\0"
//! version    u32      1
//! input_len  u32
//! dim        u32
//! layers     u32      number of manifest entries
//! manifest   per layer: name length u32, name (UTF-8), inputs u32, outputs u32
//! weights    per layer in manifest order: inputs*outputs f32 weights
//!            (input-major), then outputs f32 biases
//! ```
//!
//! Manifest names are `trunk.0`, `trunk.1`, ..., `point`, `lower`, `upper`.
//! Parameters are stored at `f32` precision; [`save`] returns the
//! parameters exactly as a later [`load`] will see them.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use latent_rcps_core::encoder::{Dense, EncoderParams, EpochLoss};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fsutil::{len_u32, put_f32s, put_u32, write_atomic, Cursor};

pub const MAGIC: &[u8; 8] = b"LRCPSCK\0";
pub const VERSION: u32 = 1;

/// `params` rounded to the precision a checkpoint stores.
pub fn quantize(params: &EncoderParams) -> EncoderParams {
    let mut out = params.clone();
    for slice in out.slices_mut() {
        for v in slice.iter_mut() {
            *v = f64::from(*v as f32);
        }
    }
    out
}

pub fn save(path: &Path, params: &EncoderParams) -> Result<EncoderParams> {
    let layers = params.layers();
    write_atomic(path, |w| {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, len_u32(params.input_len())?)?;
        put_u32(w, len_u32(params.dim())?)?;
        put_u32(w, len_u32(layers.len())?)?;
        for (name, layer) in &layers {
            put_u32(w, len_u32(name.len())?)?;
            w.write_all(name.as_bytes())?;
            put_u32(w, len_u32(layer.inputs)?)?;
            put_u32(w, len_u32(layer.outputs)?)?;
        }
        for (_, layer) in &layers {
            put_f32s(w, layer.weights.iter().map(|&v| v as f32))?;
            put_f32s(w, layer.bias.iter().map(|&v| v as f32))?;
        }
        Ok(())
    })?;
    Ok(quantize(params))
}

pub fn load(path: &Path) -> Result<EncoderParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Cursor::new(BufReader::new(file), path);
    if r.bytes(8, "magic")? != MAGIC {
        return Err(Error::format(path, "not a checkpoint file (bad magic)"));
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let input_len = r.u32("header")? as usize;
    let dim = r.u32("header")? as usize;
    let count = r.u32("header")? as usize;
    if !(3..=64).contains(&count) {
        return Err(Error::format(path, "implausible layer count"));
    }
    let mut manifest = Vec::with_capacity(count);
    for i in 0..count {
        let len = r.u32("manifest")? as usize;
        if len > 64 {
            return Err(Error::format(path, "implausible layer name"));
        }
        let name = String::from_utf8(r.bytes(len, "manifest")?)
            .map_err(|_| Error::format(path, "layer name is not UTF-8"))?;
        let expected = match i {
            _ if i + 3 == count => "point".to_string(),
            _ if i + 2 == count => "lower".to_string(),
            _ if i + 1 == count => "upper".to_string(),
            _ => format!("trunk.{i}"),
        };
        if name != expected {
            return Err(Error::format(
                path,
                format!("manifest entry {i} is `{name}`, expected `{expected}`"),
            ));
        }
        let inputs = r.u32("manifest")? as usize;
        let outputs = r.u32("manifest")? as usize;
        if inputs.checked_mul(outputs).is_none_or(|p| p > 1 << 28) {
            return Err(Error::format(path, "implausible layer size"));
        }
        manifest.push((inputs, outputs));
    }
    let mut layers = Vec::with_capacity(count);
    for (inputs, outputs) in manifest {
        let weights = r
            .f32s(inputs * outputs, "weight block")?
            .into_iter()
            .map(f64::from)
            .collect();
        let bias = r
            .f32s(outputs, "weight block")?
            .into_iter()
            .map(f64::from)
            .collect();
        layers.push(
            Dense::from_parts(inputs, outputs, weights, bias)
                .map_err(|e| Error::format(path, e.to_string()))?,
        );
    }
    r.finish()?;
    let upper = layers.pop().expect("count >= 3");
    let lower = layers.pop().expect("count >= 3");
    let point = layers.pop().expect("count >= 3");
    let params = EncoderParams::from_layers(layers, point, lower, upper)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if params.input_len() != input_len || params.dim() != dim {
        return Err(Error::format(
            path,
            "manifest does not match the header shape",
        ));
    }
    if !params.is_finite() {
        return Err(Error::format(path, "non-finite weights"));
    }
    Ok(params)
}

#[derive(Serialize)]
struct TraceRow {
    epoch: usize,
    point_loss: f64,
    pinball_lo: f64,
    pinball_hi: f64,
    recon: f64,
}

/// `epoch,point_loss,pinball_lo,pinball_hi,recon`, one row per epoch.
pub fn write_loss_trace(path: &Path, trace: &[EpochLoss]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        if trace.is_empty() {
            csv.write_record(["epoch", "point_loss", "pinball_lo", "pinball_hi", "recon"])?;
        }
        for e in trace {
            csv.serialize(TraceRow {
                epoch: e.epoch,
                point_loss: e.terms.point,
                pinball_lo: e.terms.pinball_lo,
                pinball_hi: e.terms.pinball_hi,
                recon: e.terms.recon,
            })?;
        }
        csv.flush()
    })
}
