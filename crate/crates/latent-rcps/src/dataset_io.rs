//! Binary dataset files (`.lrds`) and their CSV sidecars.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 8 | magic `LRCPSDS\0` |
//! | 8 | 4 | format version, `u32` (currently 1) |
//! | 12 | 4 | split tag, `u32`: 0 train, 1 calibration, 2 validation, 3 pool |
//! | 16 | 4 | latent dimension `D` |
//! | 20 | 4 | image height `H` |
//! | 24 | 4 | image width `W` |
//! | 28 | 4 | input channels `C` (1, or 2 when a mask channel is appended) |
//! | 32 | 8 | sample count `n`, `u64` |
//! | 40 | 8 | master seed, `u64` |
//! | 48 | 4 | byte length `L` of the policy text |
//! | 52 | L | corruption policy as UTF-8, e.g. `downsample:1,4,8,16,32` |
//!
//! Three blocks follow the header:
//!
//! 1. `n` corruption records of 9 bytes: kind `u8` (0 none, 1 downsample,
//!    2 mask) then its parameter as `f64` (factor or threshold, 0 for none).
//! 2. `n * D` latents, `f32`, sample-major.
//! 3. `n * H * W * C` pixels, `f32` in `[0, 1]`, sample-major, then row-major
//!    with channels interleaved.
//!
//! The sidecar CSV has one row per sample: `index,kind,parameter`.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use latent_rcps_core::{CorruptionPolicy, CorruptionSpec, ImageGrid, LatentVector, Sample};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fsutil::{len_u32, put_f32s, put_u32, put_u64, write_atomic, Cursor};

pub const MAGIC: &[u8; 8] = b"LRCPSDS\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Calibration,
    Validation,
    Pool,
}

impl SplitTag {
    pub const ALL: [SplitTag; 4] = [
        SplitTag::Train,
        SplitTag::Calibration,
        SplitTag::Validation,
        SplitTag::Pool,
    ];

    pub fn code(self) -> u32 {
        match self {
            SplitTag::Train => 0,
            SplitTag::Calibration => 1,
            SplitTag::Validation => 2,
            SplitTag::Pool => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Calibration => "calibration",
            SplitTag::Validation => "validation",
            SplitTag::Pool => "pool",
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub split: SplitTag,
    pub dim: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n: usize,
    pub seed: u64,
    pub policy: String,
}

fn corruption_record(c: &CorruptionSpec) -> (u8, f64) {
    match *c {
        CorruptionSpec::None => (0, 0.0),
        CorruptionSpec::Downsample(f) => (1, f as f64),
        CorruptionSpec::Mask(t) => (2, t),
    }
}

fn corruption_from_record(kind: u8, param: f64) -> Option<CorruptionSpec> {
    match kind {
        0 => Some(CorruptionSpec::None),
        1 if param >= 1.0 && param.fract() == 0.0 => {
            Some(CorruptionSpec::Downsample(param as usize))
        }
        2 if (0.0..=1.0).contains(&param) => Some(CorruptionSpec::Mask(param)),
        _ => None,
    }
}

/// Write `samples` under `header` fields taken from the arguments.
///
/// Every sample must share the image shape and latent dimension.
pub fn write_dataset(
    path: &Path,
    split: SplitTag,
    seed: u64,
    policy: &CorruptionPolicy,
    samples: &[Sample],
) -> Result<DatasetHeader> {
    let Some(first) = samples.first() else {
        return Err(Error::format(path, "refusing to write an empty dataset"));
    };
    let header = DatasetHeader {
        split,
        dim: first.z.dim(),
        height: first.x.height(),
        width: first.x.width(),
        channels: first.x.channels(),
        n: samples.len(),
        seed,
        policy: policy.to_text(),
    };
    if samples
        .iter()
        .any(|s| s.z.dim() != header.dim || !s.x.same_shape(&first.x))
    {
        return Err(Error::format(path, "samples disagree on shape"));
    }
    write_atomic(path, |w| {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, split.code())?;
        for v in [header.dim, header.height, header.width, header.channels] {
            put_u32(w, len_u32(v)?)?;
        }
        put_u64(w, header.n as u64)?;
        put_u64(w, seed)?;
        put_u32(w, len_u32(header.policy.len())?)?;
        w.write_all(header.policy.as_bytes())?;
        for s in samples {
            let (kind, param) = corruption_record(&s.corruption);
            w.write_all(&[kind])?;
            w.write_all(&param.to_le_bytes())?;
        }
        for s in samples {
            put_f32s(w, s.z.iter().map(|&v| v as f32))?;
        }
        for s in samples {
            put_f32s(w, s.x.pixels().iter().copied())?;
        }
        Ok(())
    })?;
    Ok(header)
}

/// Read a dataset file, validating the header and every block.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Sample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Cursor::new(BufReader::new(file), path);
    if r.bytes(8, "magic")? != MAGIC {
        return Err(Error::format(path, "not a dataset file (bad magic)"));
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported dataset version {version}"),
        ));
    }
    let split = SplitTag::from_code(r.u32("header")?)
        .ok_or_else(|| Error::format(path, "unknown split tag"))?;
    let dim = r.u32("header")? as usize;
    let height = r.u32("header")? as usize;
    let width = r.u32("header")? as usize;
    let channels = r.u32("header")? as usize;
    let n = usize::try_from(r.u64("header")?)
        .map_err(|_| Error::format(path, "sample count overflows"))?;
    let seed = r.u64("header")?;
    let policy_len = r.u32("header")? as usize;
    if dim == 0
        || height == 0
        || width == 0
        || !(1..=2).contains(&channels)
        || n == 0
        || policy_len > 4096
    {
        return Err(Error::format(path, "implausible header fields"));
    }
    let pixels_per = height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(channels))
        .filter(|&p| p.checked_mul(n).is_some_and(|t| t <= 1 << 34))
        .ok_or_else(|| Error::format(path, "header sizes overflow"))?;
    let policy = String::from_utf8(r.bytes(policy_len, "policy text")?)
        .map_err(|_| Error::format(path, "policy text is not UTF-8"))?;
    CorruptionPolicy::parse(&policy).map_err(|e| Error::format(path, e.to_string()))?;
    let mut corruptions = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = r.u8("corruption records")?;
        let param = r.f64("corruption records")?;
        corruptions.push(
            corruption_from_record(kind, param)
                .ok_or_else(|| Error::format(path, "invalid corruption record"))?,
        );
    }
    let latents = r.f32s(n * dim, "latent block")?;
    let mut samples = Vec::with_capacity(n);
    for (i, corruption) in corruptions.into_iter().enumerate() {
        let z = LatentVector::new(
            latents[i * dim..(i + 1) * dim]
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
        )
        .map_err(|e| Error::format(path, format!("sample {i}: {e}")))?;
        let pixels = r.f32s(pixels_per, "pixel block")?;
        let x = ImageGrid::new(height, width, channels, pixels)
            .map_err(|e| Error::format(path, format!("sample {i}: {e}")))?;
        samples.push(Sample { x, z, corruption });
    }
    r.finish()?;
    Ok((
        DatasetHeader {
            split,
            dim,
            height,
            width,
            channels,
            n,
            seed,
            policy,
        },
        samples,
    ))
}

#[derive(Serialize)]
struct SidecarRow<'a> {
    index: usize,
    kind: &'a str,
    parameter: f64,
}

/// One row per sample: `index,kind,parameter`.
pub fn write_sidecar(path: &Path, samples: &[Sample]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for (index, s) in samples.iter().enumerate() {
            csv.serialize(SidecarRow {
                index,
                kind: s.corruption.kind(),
                parameter: s.corruption.parameter(),
            })?;
        }
        csv.flush()
    })
}
