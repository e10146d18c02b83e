//! Risk-controlling calibration of the quantile intervals.

mod bounds;
mod calibrate;
mod interval;

pub use bounds::{hb_ucb, hoeffding_ucb, BoundKind, HB_TOLERANCE};
pub use calibrate::{
    calibrate, calibrate_predictions, risk_curve, risk_curve_from, select_index, select_lambda,
    ucb_curve, CalibrationResult, LambdaGrid, RiskSpec,
};
pub use interval::{
    calibrated_quantiles, coverage_loss, interval_at, mean_coverage_loss, predict, IntervalSet,
    Prediction,
};
