//! CSV and JSON reports written by the pipeline.
//!
//! Histograms use fixed bin edges so plots can be rebuilt elsewhere: bin `k`
//! covers `[k * width, (k + 1) * width)` for `k < bins`, and a final overflow
//! row covers `[bins * width, inf)`. Set sizes use width 0.25 with 40 bins;
//! coverage risks use width 0.01 with 100 bins.

use std::io::Write;
use std::path::Path;

use latent_rcps_core::eval::{AdaptivityReport, CoverageTrialReport};
use latent_rcps_core::viz::IntervalRow;
use latent_rcps_core::CalibrationResult;
use serde::Serialize;

use crate::error::Result;
use crate::fsutil::{write_atomic, write_text};

pub const SET_SIZE_BIN_WIDTH: f64 = 0.25;
pub const SET_SIZE_BINS: usize = 40;
pub const RISK_BIN_WIDTH: f64 = 0.01;
pub const RISK_BINS: usize = 100;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report values serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_csv<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    write_atomic(path, |w: &mut dyn Write| {
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        csv.write_record(header)?;
        for row in rows {
            csv.serialize(row)?;
        }
        csv.flush()
    })
}

/// Counts per bin, overflow last.
pub fn histogram(values: impl IntoIterator<Item = f64>, width: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins + 1];
    for v in values {
        let k = (v / width).floor();
        let k = if k.is_finite() && k >= 0.0 {
            (k as usize).min(bins)
        } else {
            bins
        };
        counts[k] += 1;
    }
    counts
}

fn bin_edges(k: usize, width: f64, bins: usize) -> (f64, f64) {
    if k == bins {
        (bins as f64 * width, f64::INFINITY)
    } else {
        (k as f64 * width, (k + 1) as f64 * width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CalibrationSummary {
    /// `None` when calibration is infeasible.
    pub lambda_hat: Option<f64>,
    pub feasible: bool,
    pub alpha: f64,
    pub delta: f64,
    pub n: usize,
    pub bound_kind: String,
    pub grid_max: f64,
    pub grid_count: usize,
    /// Empirical calibration risk at `lambda_hat`.
    pub risk_at_lambda_hat: Option<f64>,
}

impl CalibrationSummary {
    pub fn from_result(r: &CalibrationResult) -> Self {
        let risk_at = r.lambda_hat.map(|l| {
            let k = r
                .grid
                .values()
                .iter()
                .position(|&g| g == l)
                .expect("lambda_hat lies on the grid");
            r.risk_curve[k]
        });
        Self {
            lambda_hat: r.lambda_hat,
            feasible: r.lambda_hat.is_some(),
            alpha: r.spec.alpha,
            delta: r.spec.delta,
            n: r.n,
            bound_kind: r.bound_kind.name().into(),
            grid_max: r.grid.max(),
            grid_count: r.grid.len(),
            risk_at_lambda_hat: risk_at,
        }
    }
}

/// `curve.csv` (`lambda,empirical_risk,ucb`) and `summary.json`.
pub fn write_calibration(dir: &Path, r: &CalibrationResult) -> Result<CalibrationSummary> {
    let rows = r
        .grid
        .values()
        .iter()
        .zip(&r.risk_curve)
        .zip(&r.ucb_curve)
        .map(|((&l, &risk), &u)| (l, risk, u));
    write_csv(
        &dir.join("curve.csv"),
        &["lambda", "empirical_risk", "ucb"],
        rows,
    )?;
    let summary = CalibrationSummary::from_result(r);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub n_trials: usize,
    pub n_calibration: usize,
    pub n_eval: usize,
    pub alpha: f64,
    pub delta: f64,
    pub bound_kind: String,
    /// Trials that were infeasible or whose post-calibration risk exceeds alpha.
    pub violations: usize,
    pub infeasible_trials: usize,
    pub mean_pre_risk: f64,
    pub mean_post_risk: f64,
}

/// `trials.csv`, `risk_histogram.csv` and `summary.json`.
pub fn write_coverage(dir: &Path, report: &CoverageTrialReport) -> Result<CoverageSummary> {
    let rows = report.rows.iter().map(|r| {
        (
            r.trial,
            r.lambda_hat,
            r.lambda_hat.is_some(),
            r.pre_risk,
            r.post_risk,
        )
    });
    write_csv(
        &dir.join("trials.csv"),
        &["trial", "lambda_hat", "feasible", "pre_risk", "post_risk"],
        rows,
    )?;
    let pre = histogram(
        report.rows.iter().map(|r| r.pre_risk),
        RISK_BIN_WIDTH,
        RISK_BINS,
    );
    let post = histogram(
        report.rows.iter().map(|r| r.post_risk),
        RISK_BIN_WIDTH,
        RISK_BINS,
    );
    let rows = (0..=RISK_BINS).map(|k| {
        let (lo, hi) = bin_edges(k, RISK_BIN_WIDTH, RISK_BINS);
        (lo, hi, pre[k], post[k])
    });
    write_csv(
        &dir.join("risk_histogram.csv"),
        &["bin_lo", "bin_hi", "pre_count", "post_count"],
        rows,
    )?;
    let summary = CoverageSummary {
        n_trials: report.n_trials(),
        n_calibration: report.n_calibration,
        n_eval: report.n_eval,
        alpha: report.spec.alpha,
        delta: report.spec.delta,
        bound_kind: report.bound_kind.name().into(),
        violations: report.violations(),
        infeasible_trials: report
            .rows
            .iter()
            .filter(|r| r.lambda_hat.is_none())
            .count(),
        mean_pre_risk: report.mean_pre_risk(),
        mean_post_risk: report.mean_post_risk(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `adaptivity.csv` (per sample), `adaptivity_levels.csv` and
/// `adaptivity_histogram.csv`.
pub fn write_adaptivity(dir: &Path, report: &AdaptivityReport) -> Result<()> {
    let rows = report.levels.iter().flat_map(|l| {
        l.sizes.iter().enumerate().map(move |(i, &s)| {
            (
                l.level.label.as_str(),
                l.level.corruption.kind(),
                l.level.corruption.parameter(),
                i,
                s,
            )
        })
    });
    write_csv(
        &dir.join("adaptivity.csv"),
        &["level", "kind", "parameter", "index", "set_size"],
        rows,
    )?;
    let rows = report.levels.iter().map(|l| {
        (
            l.level.label.as_str(),
            l.level.corruption.kind(),
            l.level.corruption.parameter(),
            l.sizes.len(),
            l.mean,
            l.median,
            l.q10,
            l.q90,
        )
    });
    write_csv(
        &dir.join("adaptivity_levels.csv"),
        &[
            "level",
            "kind",
            "parameter",
            "n",
            "mean",
            "median",
            "q10",
            "q90",
        ],
        rows,
    )?;
    let rows = report.levels.iter().flat_map(|l| {
        let counts = histogram(l.sizes.iter().copied(), SET_SIZE_BIN_WIDTH, SET_SIZE_BINS);
        counts.into_iter().enumerate().map(move |(k, c)| {
            let (lo, hi) = bin_edges(k, SET_SIZE_BIN_WIDTH, SET_SIZE_BINS);
            (l.level.label.as_str(), lo, hi, c)
        })
    });
    write_csv(
        &dir.join("adaptivity_histogram.csv"),
        &["level", "bin_lo", "bin_hi", "count"],
        rows,
    )
}

/// One row per relevant dimension:
/// `dim,point,q_lo,q_hi,q_cal_lo,q_cal_hi,z_true,covered`.
pub fn write_interval_rows(path: &Path, rows: &[IntervalRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        (
            r.dim, r.point, r.q_lo, r.q_hi, r.q_cal_lo, r.q_cal_hi, r.z_true, r.covered,
        )
    });
    write_csv(
        path,
        &[
            "dim", "point", "q_lo", "q_hi", "q_cal_lo", "q_cal_hi", "z_true", "covered",
        ],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges_and_overflow() {
        let counts = histogram(
            [0.0, 0.24, 0.25, 9.99, 10.0, 50.0, f64::NAN],
            SET_SIZE_BIN_WIDTH,
            SET_SIZE_BINS,
        );
        assert_eq!(counts.len(), SET_SIZE_BINS + 1);
        assert_eq!(counts[0], 2);
        assert_eq!(counts[1], 1);
        assert_eq!(counts[39], 1);
        assert_eq!(counts[40], 3);
        assert_eq!(bin_edges(40, 0.25, 40), (10.0, f64::INFINITY));
    }
}
