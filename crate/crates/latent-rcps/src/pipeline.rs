//! The pipeline commands. Each reads its inputs from and writes its outputs
//! under the run directory of a [`RunConfig`]:
//!
//! ```text
//! <output.dir>/<experiment>-seed<seed>/
//!   config.toml              effective configuration
//!   data/                    {train,calibration,validation}.lrds + .csv, manifest.json
//!   model/                   encoder.lrck, loss_trace.csv, summary.json
//!   calibration/             curve.csv, summary.json
//!   evaluation/              summary.json, adaptivity*.csv
//!   coverage/                trials.csv, risk_histogram.csv, summary.json
//!   visualize/               *.pgm, manifest.csv, intervals.csv
//!   ablate/                  c<weight>/encoder.lrck, summary.csv
//! ```

use std::path::{Path, PathBuf};

use latent_rcps_core::encoder::{self, mean_point_error};
use latent_rcps_core::eval::{
    adaptivity_study, coverage_trials, empirical_risk, set_size, UNCALIBRATED_LAMBDA,
};
use latent_rcps_core::rcps::calibrate;
use latent_rcps_core::synth::{generate_samples, make_dataset, FACTOR_NAMES};
use latent_rcps_core::viz::{endpoint_panels, interval_rows};
use latent_rcps_core::{EncoderParams, Generator, Sample};
use serde::Serialize;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset_io::{read_dataset, write_dataset, write_sidecar, SplitTag};
use crate::error::{Error, Result};
use crate::fsutil::write_text;
use crate::pgm;
use crate::reports::{self, CalibrationSummary};

/// Recon weights compared by [`ablate`].
pub const ABLATION_WEIGHTS: [f64; 3] = [0.0, 1.0, 10.0];

/// Artifact locations for one run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.run_dir(),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn dataset(&self, split: SplitTag) -> PathBuf {
        self.root
            .join("data")
            .join(format!("{}.lrds", split.name()))
    }

    pub fn sidecar(&self, split: SplitTag) -> PathBuf {
        self.root.join("data").join(format!("{}.csv", split.name()))
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.model().join("encoder.lrck")
    }

    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration")
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation")
    }

    pub fn coverage(&self) -> PathBuf {
        self.root.join("coverage")
    }

    pub fn visualize(&self) -> PathBuf {
        self.root.join("visualize")
    }

    pub fn ablate(&self) -> PathBuf {
        self.root.join("ablate")
    }
}

fn start(cfg: &RunConfig) -> Result<RunPaths> {
    cfg.validate()?;
    let paths = RunPaths::new(cfg);
    write_text(&paths.config(), &cfg.to_toml())?;
    Ok(paths)
}

fn load_split(cfg: &RunConfig, paths: &RunPaths, split: SplitTag) -> Result<Vec<Sample>> {
    let path = paths.dataset(split);
    let (header, samples) = read_dataset(&path)?;
    let gen = cfg.generator()?;
    if header.split != split
        || header.dim != gen.dim
        || header.height != gen.height
        || header.width != gen.width
        || header.seed != cfg.seed
        || header.policy != cfg.policy()?.to_text()
    {
        return Err(Error::Config(format!(
            "{} was generated with a different configuration; rerun `generate`",
            path.display()
        )));
    }
    Ok(samples)
}

fn load_encoder(cfg: &RunConfig, path: &Path) -> Result<EncoderParams> {
    let params = checkpoint::load(path)?;
    let gen = cfg.generator()?;
    let input_len = gen.pixel_count() * cfg.policy()?.input_channels();
    if params.dim() != gen.dim || params.input_len() != input_len {
        return Err(Error::Config(format!(
            "{} does not match the configured shapes",
            path.display()
        )));
    }
    Ok(params)
}

fn load_lambda_hat(paths: &RunPaths) -> Result<f64> {
    let path = paths.calibration().join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: CalibrationSummary =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    summary.lambda_hat.ok_or(Error::Infeasible {
        alpha: summary.alpha,
    })
}

#[derive(Serialize)]
struct DataManifest<'a> {
    experiment: &'a str,
    seed: u64,
    policy: String,
    dim: usize,
    height: usize,
    width: usize,
    channels: usize,
    train: usize,
    calibration: usize,
    validation: usize,
}

/// Draw the dataset and write the three splits.
pub fn generate(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let gen = cfg.generator()?;
    let policy = cfg.policy()?;
    let split = make_dataset(&gen, cfg.data.n, &policy, cfg.seed)?;
    for (tag, samples) in [
        (SplitTag::Train, &split.train),
        (SplitTag::Calibration, &split.calibration),
        (SplitTag::Validation, &split.validation),
    ] {
        write_dataset(&paths.dataset(tag), tag, cfg.seed, &policy, samples)?;
        write_sidecar(&paths.sidecar(tag), samples)?;
    }
    reports::write_json(
        &paths.root.join("data").join("manifest.json"),
        &DataManifest {
            experiment: &cfg.experiment,
            seed: cfg.seed,
            policy: policy.to_text(),
            dim: gen.dim,
            height: gen.height,
            width: gen.width,
            channels: policy.input_channels(),
            train: split.train.len(),
            calibration: split.calibration.len(),
            validation: split.validation.len(),
        },
    )?;
    Ok(format!(
        "wrote {}/{}/{} train/calibration/validation samples to {}",
        split.train.len(),
        split.calibration.len(),
        split.validation.len(),
        paths.root.join("data").display()
    ))
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    num_params: usize,
    initial_point_error: f64,
    final_point_error: f64,
    first_epoch_loss: Option<f64>,
    last_epoch_loss: Option<f64>,
}

fn train_into(
    cfg: &RunConfig,
    recon_weight: f64,
    train: &[Sample],
    dir: &Path,
) -> Result<(EncoderParams, TrainSummary)> {
    let gen = cfg.generator()?;
    let mask = cfg.mask()?;
    let tc = encoder::TrainConfig {
        recon_weight,
        ..cfg.train_config()?
    };
    let init = encoder::initial_params(train[0].x.len(), gen.dim, &tc)?;
    let outcome = encoder::train_from(init.clone(), &gen, train, &mask, &tc)?;
    let params = checkpoint::save(&dir.join("encoder.lrck"), &outcome.params)?;
    checkpoint::write_loss_trace(&dir.join("loss_trace.csv"), &outcome.trace)?;
    let summary = TrainSummary {
        epochs: tc.epochs,
        num_params: params.num_params(),
        initial_point_error: mean_point_error(&init, &gen, train, &mask)?,
        final_point_error: mean_point_error(&params, &gen, train, &mask)?,
        first_epoch_loss: outcome.trace.first().map(|e| e.terms.total(recon_weight)),
        last_epoch_loss: outcome.trace.last().map(|e| e.terms.total(recon_weight)),
    };
    reports::write_json(&dir.join("summary.json"), &summary)?;
    Ok((params, summary))
}

/// Train the encoder on the training split.
pub fn train(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let data = load_split(cfg, &paths, SplitTag::Train)?;
    let (_, s) = train_into(cfg, cfg.train.recon_weight, &data, &paths.model())?;
    Ok(format!(
        "trained {} epochs; training point error {:.4} -> {:.4}; checkpoint {}",
        s.epochs,
        s.initial_point_error,
        s.final_point_error,
        paths.checkpoint().display()
    ))
}

/// Select the interval scale on the calibration split.
///
/// The curves and summary are written even when no grid point is feasible;
/// that case then returns [`Error::Infeasible`].
pub fn calibrate_cmd(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let params = load_encoder(cfg, &paths.checkpoint())?;
    let calib = load_split(cfg, &paths, SplitTag::Calibration)?;
    let result = calibrate(
        &params,
        &calib,
        &cfg.mask()?,
        &cfg.grid()?,
        &cfg.risk_spec()?,
        cfg.bound()?,
    )?;
    let summary = reports::write_calibration(&paths.calibration(), &result)?;
    match summary.lambda_hat {
        Some(l) => Ok(format!(
            "lambda_hat = {l} (calibration risk {:.4}, n = {})",
            summary.risk_at_lambda_hat.unwrap_or(f64::NAN),
            summary.n
        )),
        None => Err(Error::Infeasible {
            alpha: summary.alpha,
        }),
    }
}

#[derive(Serialize)]
struct EvaluationSummary {
    lambda_hat: f64,
    calibration_risk: f64,
    validation_risk: f64,
    validation_risk_uncalibrated: f64,
    validation_point_error: f64,
    validation_mean_set_size: f64,
    adaptivity_levels: Vec<String>,
    adaptivity_means: Vec<f64>,
    adaptivity_strictly_increasing: bool,
}

/// Risk on both held-out splits at the calibrated scale, plus the set-size
/// study across difficulty levels.
pub fn evaluate(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let params = load_encoder(cfg, &paths.checkpoint())?;
    let lambda_hat = load_lambda_hat(&paths)?;
    let gen = cfg.generator()?;
    let mask = cfg.mask()?;
    let calib = load_split(cfg, &paths, SplitTag::Calibration)?;
    let val = load_split(cfg, &paths, SplitTag::Validation)?;
    let sizes: Vec<f64> = val
        .iter()
        .map(|s| set_size(&params.forward(&s.x)?, lambda_hat, &mask))
        .collect::<Result<_, _>>()?;
    let levels = cfg.difficulty_levels()?;
    let study = adaptivity_study(
        &params,
        &gen,
        lambda_hat,
        &levels,
        cfg.adaptivity.per_level,
        &mask,
        cfg.seed,
    )?;
    let dir = paths.evaluation();
    reports::write_adaptivity(&dir, &study)?;
    let summary = EvaluationSummary {
        lambda_hat,
        calibration_risk: empirical_risk(&params, lambda_hat, &calib, &mask)?,
        validation_risk: empirical_risk(&params, lambda_hat, &val, &mask)?,
        validation_risk_uncalibrated: empirical_risk(&params, UNCALIBRATED_LAMBDA, &val, &mask)?,
        validation_point_error: mean_point_error(&params, &gen, &val, &mask)?,
        validation_mean_set_size: sizes.iter().sum::<f64>() / sizes.len() as f64,
        adaptivity_levels: study.levels.iter().map(|l| l.level.label.clone()).collect(),
        adaptivity_means: study.levels.iter().map(|l| l.mean).collect(),
        adaptivity_strictly_increasing: study.strictly_increasing(),
    };
    reports::write_json(&dir.join("summary.json"), &summary)?;
    Ok(format!(
        "validation risk {:.4} (uncalibrated {:.4}); mean set size by level {:?}",
        summary.validation_risk, summary.validation_risk_uncalibrated, summary.adaptivity_means
    ))
}

/// Repeated 50-50 calibrate/evaluate splits of a fresh sample pool.
pub fn coverage(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let params = load_encoder(cfg, &paths.checkpoint())?;
    let pool = generate_samples(
        &cfg.generator()?,
        &cfg.policy()?,
        cfg.seed,
        "coverage-pool",
        cfg.coverage.pool,
    )?;
    let report = coverage_trials(
        &params,
        &pool,
        &cfg.mask()?,
        &cfg.risk_spec()?,
        cfg.bound()?,
        &cfg.grid()?,
        cfg.coverage.trials,
        cfg.seed,
    )?;
    let s = reports::write_coverage(&paths.coverage(), &report)?;
    Ok(format!(
        "{} of {} trials exceed alpha = {} (mean risk before {:.4}, after {:.4})",
        s.violations, s.n_trials, s.alpha, s.mean_pre_risk, s.mean_post_risk
    ))
}

/// Endpoint renders for one validation sample.
pub fn visualize(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let params = load_encoder(cfg, &paths.checkpoint())?;
    let lambda_hat = load_lambda_hat(&paths)?;
    let val = load_split(cfg, &paths, SplitTag::Validation)?;
    let sample = &val[cfg.visualize.sample];
    let gen = cfg.generator()?;
    let mask = cfg.mask()?;
    let dims = cfg.visualize_dims()?;
    let written = write_panels(
        &paths.visualize(),
        &params,
        &gen,
        lambda_hat,
        sample,
        &dims,
        &mask,
    )?;
    Ok(format!(
        "wrote {written} images to {}",
        paths.visualize().display()
    ))
}

/// `file,role,dim,factor,value`
type ManifestRow = (
    String,
    &'static str,
    Option<usize>,
    Option<&'static str>,
    Option<f64>,
);

/// Write the input, point render and endpoint panels for `sample`; returns
/// the number of images written.
pub fn write_panels(
    dir: &Path,
    params: &EncoderParams,
    gen: &Generator,
    lambda_hat: f64,
    sample: &Sample,
    dims: &[usize],
    mask: &latent_rcps_core::DimMask,
) -> Result<usize> {
    let (out, panels) = endpoint_panels(params, gen, lambda_hat, &sample.x, dims, mask)?;
    let mut manifest: Vec<ManifestRow> = Vec::new();
    pgm::write(&dir.join("input.pgm"), &sample.x, 0)?;
    manifest.push(("input.pgm".into(), "input", None, None, None));
    if sample.x.channels() > 1 {
        pgm::write(&dir.join("input_mask.pgm"), &sample.x, 1)?;
        manifest.push(("input_mask.pgm".into(), "mask", None, None, None));
    }
    pgm::write(&dir.join("point.pgm"), &gen.render(&out.point)?, 0)?;
    manifest.push(("point.pgm".into(), "point", None, None, None));
    for p in &panels {
        let factor = FACTOR_NAMES.get(p.dim).copied().unwrap_or("nuisance");
        for (which, image, value) in [
            ("lower", &p.lower, p.lower_value),
            ("upper", &p.upper, p.upper_value),
        ] {
            let name = format!("dim{}_{which}.pgm", p.dim);
            pgm::write(&dir.join(&name), image, 0)?;
            manifest.push((name, which, Some(p.dim), Some(factor), Some(value)));
        }
    }
    let count = manifest.len();
    reports::write_csv(
        &dir.join("manifest.csv"),
        &["file", "role", "dim", "factor", "value"],
        manifest,
    )?;
    reports::write_interval_rows(
        &dir.join("intervals.csv"),
        &interval_rows(&out, lambda_hat, &sample.z, mask)?,
    )?;
    Ok(count)
}

/// Retrain with each weight in [`ABLATION_WEIGHTS`] and compare.
pub fn ablate(cfg: &RunConfig) -> Result<String> {
    let paths = start(cfg)?;
    let train = load_split(cfg, &paths, SplitTag::Train)?;
    let calib = load_split(cfg, &paths, SplitTag::Calibration)?;
    let val = load_split(cfg, &paths, SplitTag::Validation)?;
    let gen = cfg.generator()?;
    let mask = cfg.mask()?;
    let grid = cfg.grid()?;
    let mut rows = Vec::new();
    for c in ABLATION_WEIGHTS {
        let dir = paths.ablate().join(format!("c{c}"));
        let (params, _) = train_into(cfg, c, &train, &dir)?;
        let result = calibrate(
            &params,
            &calib,
            &mask,
            &grid,
            &cfg.risk_spec()?,
            cfg.bound()?,
        )?;
        reports::write_calibration(&dir, &result)?;
        let lambda = result.lambda_hat.unwrap_or(grid.max());
        let sizes: Vec<f64> = val
            .iter()
            .map(|s| set_size(&params.forward(&s.x)?, lambda, &mask))
            .collect::<Result<_, _>>()?;
        rows.push((
            c,
            result.lambda_hat,
            empirical_risk(&params, lambda, &val, &mask)?,
            mean_point_error(&params, &gen, &val, &mask)?,
            sizes.iter().sum::<f64>() / sizes.len() as f64,
        ));
    }
    let text = rows
        .iter()
        .map(|r| {
            format!(
                "c={}: lambda_hat {:?}, risk {:.4}, point error {:.4}, set size {:.4}",
                r.0, r.1, r.2, r.3, r.4
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    reports::write_csv(
        &paths.ablate().join("summary.csv"),
        &[
            "recon_weight",
            "lambda_hat",
            "validation_risk",
            "validation_point_error",
            "mean_set_size",
        ],
        rows,
    )?;
    Ok(text)
}
