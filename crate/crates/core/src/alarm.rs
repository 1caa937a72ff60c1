//! Slope inference on log counts and the calibrated warning machinery.
//!
//! The window of recent log counts is summarized by a fitted slope with a
//! variance under one of two noise models: Gaussian residuals with exact
//! small-sample Student pivots, or Laplace residuals with least absolute
//! deviations and Gaussian asymptotics. Everything downstream (probability
//! of growth, needle positions, doubling-time alarms, interval estimates,
//! forecast trapezoids) reads off the pair (beta_hat, V).

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segfit;
use crate::series::{self, Day, LogSeries, ObservationSeries};
pub use crate::special::{norm_cdf, norm_quantile, student_cdf, student_quantile};

/// Noise model behind a slope estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeModel {
    GaussOls,
    LaplaceL1,
    CombinedGauss,
}

/// A fitted slope with enough context to build pivots and intervals.
///
/// `scale` is the residual sigma for `GaussOls` and the mean absolute
/// residual for `LaplaceL1`. Combined estimates carry synthetic
/// `scale = sqrt(V)`, `sxx = 1` so that `V = scale^2 / sxx` holds uniformly;
/// their `df` is the smallest input df and is informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub model: SlopeModel,
    pub beta_hat: f64,
    pub alpha_hat: f64,
    pub scale: f64,
    pub v: f64,
    pub n: usize,
    pub df: u32,
    pub x_bar: f64,
    pub sxx: f64,
}

impl SlopeEstimate {
    fn pivot_cdf(&self, x: f64) -> f64 {
        match self.model {
            SlopeModel::GaussOls => student_cdf(x, self.df),
            _ => norm_cdf(x),
        }
    }

    fn pivot_quantile(&self, p: f64) -> Result<f64> {
        match self.model {
            SlopeModel::GaussOls => student_quantile(p, self.df),
            _ => norm_quantile(p),
        }
    }
}

/// Least-squares slope fit with the unbiased residual variance (divisor
/// n - 2) and slope variance `V = sigma^2 / sxx`.
pub fn ols_fit(y: &LogSeries) -> Result<SlopeEstimate> {
    let pts: Vec<(f64, f64)> = y.points.iter().map(|&(d, z)| (d as f64, z)).collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, found: n });
    }
    let nf = n as f64;
    let x_bar = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let z_bar = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxz = 0.0;
    for &(x, z) in &pts {
        sxx += (x - x_bar) * (x - x_bar);
        sxz += (x - x_bar) * (z - z_bar);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateX);
    }
    let beta_hat = sxz / sxx;
    let alpha_hat = z_bar - beta_hat * x_bar;
    let mut ss_res = 0.0;
    for &(x, z) in &pts {
        let r = (z - z_bar) - beta_hat * (x - x_bar);
        ss_res += r * r;
    }
    let df = (n - 2) as u32;
    let sigma2 = ss_res / df as f64;
    Ok(SlopeEstimate {
        model: SlopeModel::GaussOls,
        beta_hat,
        alpha_hat,
        scale: sigma2.sqrt(),
        v: sigma2 / sxx,
        n,
        df,
        x_bar,
        sxx,
    })
}

/// Least-absolute-deviations slope fit. The Laplace scale is the mean
/// absolute residual and the slope variance is
/// `lambda^2 / (sum X^2 - (sum X)^2 / n)`, read through Gaussian asymptotics.
pub fn l1_fit(y: &LogSeries) -> Result<SlopeEstimate> {
    let pts: Vec<(f64, f64)> = y.points.iter().map(|&(d, z)| (d as f64, z)).collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, found: n });
    }
    let (beta_hat, alpha_hat, loss) = segfit::fit_line_l1(&pts)?;
    let nf = n as f64;
    let lambda_hat = loss / nf;
    let sum_x = pts.iter().map(|p| p.0).sum::<f64>();
    let sum_x2 = pts.iter().map(|p| p.0 * p.0).sum::<f64>();
    let denom = sum_x2 - sum_x * sum_x / nf;
    if denom == 0.0 {
        return Err(Error::DegenerateX);
    }
    Ok(SlopeEstimate {
        model: SlopeModel::LaplaceL1,
        beta_hat,
        alpha_hat,
        scale: lambda_hat,
        v: lambda_hat * lambda_hat / denom,
        n,
        df: (n - 2) as u32,
        x_bar: sum_x / nf,
        sxx: denom,
    })
}

/// Inverse-variance combination of slope estimates across series.
///
/// A single zero-variance input dominates and is returned as-is; more than
/// one zero-variance input is rejected.
pub fn combine(estimates: &[SlopeEstimate]) -> Result<SlopeEstimate> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("no estimates to combine"));
    }
    let zero_v: Vec<&SlopeEstimate> = estimates.iter().filter(|e| e.v == 0.0).collect();
    match zero_v.len() {
        0 => {}
        1 => return Ok(zero_v[0].clone()),
        k => {
            return Err(Error::InvalidParams(format!(
                "{k} estimates have zero variance; combination weights are undefined"
            )))
        }
    }
    let mut wsum = 0.0;
    let mut beta = 0.0;
    let mut alpha = 0.0;
    let mut x_bar = 0.0;
    for e in estimates {
        let w = 1.0 / e.v;
        wsum += w;
        beta += e.beta_hat * w;
        alpha += e.alpha_hat * w;
        x_bar += e.x_bar * w;
    }
    let v = 1.0 / wsum;
    Ok(SlopeEstimate {
        model: SlopeModel::CombinedGauss,
        beta_hat: beta / wsum,
        alpha_hat: alpha / wsum,
        scale: v.sqrt(),
        v,
        n: estimates.iter().map(|e| e.n).sum(),
        df: estimates.iter().map(|e| e.df).min().unwrap(),
        x_bar: x_bar / wsum,
        sxx: 1.0,
    })
}

/// Probability that the true slope is positive under the estimate's pivot.
/// Degenerate fits (V = 0) collapse to 0, 1/2, or 1 by the sign of the slope.
pub fn slope_positive_probability(est: &SlopeEstimate) -> f64 {
    if est.v == 0.0 {
        return if est.beta_hat > 0.0 {
            1.0
        } else if est.beta_hat < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    est.pivot_cdf(est.beta_hat / est.v.sqrt())
}

/// Doubling time `ln 2 / beta` in days. Zero slope maps to +inf; a negative
/// slope yields the (negative) halving time.
pub fn doubling_time(beta: f64) -> f64 {
    if beta == 0.0 {
        f64::INFINITY
    } else {
        std::f64::consts::LN_2 / beta
    }
}

/// Two-sided interval estimates for a Gaussian least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intervals {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    /// Prediction interval for the log count at the forecast day, if asked.
    pub forecast: Option<(f64, f64)>,
}

/// Student-t confidence intervals for intercept and slope at level
/// `1 - epsilon`, plus a prediction interval at `forecast_day` when given.
/// Only meaningful under the Gaussian model; other estimates are rejected.
pub fn confidence_intervals(
    est: &SlopeEstimate,
    epsilon: f64,
    forecast_day: Option<f64>,
) -> Result<Intervals> {
    if est.model != SlopeModel::GaussOls {
        return Err(Error::InvalidParams(
            "exact intervals need the Gaussian least-squares model".into(),
        ));
    }
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} out of (0,1)")));
    }
    let t = student_quantile(1.0 - epsilon / 2.0, est.df)?;
    let nf = est.n as f64;
    let beta_half = t * est.scale / est.sxx.sqrt();
    let alpha_half = t * est.scale * (1.0 / nf + est.x_bar * est.x_bar / est.sxx).sqrt();
    let forecast = match forecast_day {
        None => None,
        Some(xf) => {
            let center = est.alpha_hat + est.beta_hat * xf;
            let half = t
                * est.scale
                * (1.0 + 1.0 / nf + (xf - est.x_bar) * (xf - est.x_bar) / est.sxx).sqrt();
            Some((center - half, center + half))
        }
    };
    Ok(Intervals {
        alpha: (est.alpha_hat - alpha_half, est.alpha_hat + alpha_half),
        beta: (est.beta_hat - beta_half, est.beta_hat + beta_half),
        forecast,
    })
}

/// Forecast envelope anchored at `(t_last, z_anchor)`: per-day center and
/// bounds out to `t_last + horizon`. The half width grows affinely in the
/// lead time, so the region is a trapezoid on the log scale.
///
/// Under the Laplace model the residual variance is read as `2 lambda^2`.
pub fn trapezoid_domain(
    est: &SlopeEstimate,
    z_anchor: f64,
    t_last: f64,
    horizon: u32,
    epsilon: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} out of (0,1)")));
    }
    let q = est.pivot_quantile(1.0 - epsilon / 2.0)?;
    let sigma2 = match est.model {
        SlopeModel::GaussOls => est.scale * est.scale,
        _ => 2.0 * est.scale * est.scale,
    };
    let var_z_last =
        sigma2 * (1.0 / est.n as f64 + (t_last - est.x_bar) * (t_last - est.x_bar) / est.sxx);
    let spread = (sigma2 + var_z_last).sqrt();
    let v_sqrt = est.v.sqrt();
    let mut out = Vec::with_capacity(horizon as usize + 1);
    for k in 0..=horizon {
        let lead = k as f64;
        let center = est.beta_hat * lead + z_anchor;
        let half = (v_sqrt * lead + spread) * q;
        out.push((t_last + lead, center - half, center + half));
    }
    Ok(out)
}

/// Confidence sets for the doubling time, `(i1, i2)` with infinite endpoints
/// encoded as `f64::INFINITY`. `i1` guards against overstating growth speed,
/// `i2` against missing growth at least as fast as its lower endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaIntervals {
    pub i1: (f64, f64),
    pub i2: (f64, f64),
}

/// One-sided doubling-time intervals at confidence `1 - epsilon`.
pub fn delta_confidence(est: &SlopeEstimate, epsilon: f64) -> Result<DeltaIntervals> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} out of (0,1)")));
    }
    let q = est.pivot_quantile(1.0 - epsilon)?;
    let root_v = est.v.sqrt();
    let lo_rate = est.beta_hat - q * root_v;
    let hi_rate = est.beta_hat + q * root_v;
    let i1_hi = if lo_rate > 0.0 {
        std::f64::consts::LN_2 / lo_rate
    } else {
        f64::INFINITY
    };
    let i2_lo = if hi_rate > 0.0 {
        std::f64::consts::LN_2 / hi_rate
    } else {
        f64::INFINITY
    };
    Ok(DeltaIntervals {
        i1: (0.0, i1_hi),
        i2: (i2_lo, f64::INFINITY),
    })
}

/// Which error the doubling-time alarm is calibrated to avoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoublingAlarmMode {
    /// Trigger only when even the slow edge of the slope interval doubles
    /// faster than the threshold.
    FalsePositive,
    /// Trigger whenever the fast edge could double faster than the threshold.
    FalseNegative,
}

/// Calibrated threshold alarm: does the series double in fewer than `d` days,
/// judged at one-sided confidence `1 - epsilon`?
pub fn doubling_time_alarm(
    est: &SlopeEstimate,
    d: f64,
    epsilon: f64,
    mode: DoublingAlarmMode,
) -> Result<bool> {
    if d <= 0.0 {
        return Err(Error::InvalidParams(format!("threshold {d} days not positive")));
    }
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} out of (0,1)")));
    }
    let q = est.pivot_quantile(1.0 - epsilon)?;
    let threshold = std::f64::consts::LN_2 / d;
    let edge = match mode {
        DoublingAlarmMode::FalsePositive => est.beta_hat - q * est.v.sqrt(),
        DoublingAlarmMode::FalseNegative => est.beta_hat + q * est.v.sqrt(),
    };
    Ok(threshold < edge)
}

/// Thresholds and window for the graded alarm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlarmConfig {
    pub theta_warn: f64,
    pub theta_alarm: f64,
    pub window_days: i64,
    pub doubling_threshold_days: f64,
    pub epsilon: f64,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        Self {
            theta_warn: 0.25,
            theta_alarm: 0.75,
            window_days: 10,
            doubling_threshold_days: 14.0,
            epsilon: 0.05,
        }
    }
}

impl AlarmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.theta_warn && self.theta_warn < self.theta_alarm && self.theta_alarm < 1.0)
        {
            return Err(Error::InvalidParams(
                "need 0 < theta_warn < theta_alarm < 1".into(),
            ));
        }
        if self.window_days < 3 {
            return Err(Error::InvalidParams("window below 3 days".into()));
        }
        if self.doubling_threshold_days <= 0.0 {
            return Err(Error::InvalidParams("doubling threshold not positive".into()));
        }
        if !(0.0 < self.epsilon && self.epsilon < 1.0) {
            return Err(Error::InvalidParams("epsilon out of (0,1)".into()));
        }
        Ok(())
    }
}

/// Graded alarm level. Ordering matters: each level implies the ones below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmLevel {
    None,
    Warning,
    Alarm,
    Confirmed,
}

/// Grades the pair of growth probabilities. The early indicator series
/// drives warning and alarm; the later series only confirms.
pub fn alarm_level(p_adv: f64, p_disp: f64, cfg: &AlarmConfig) -> AlarmLevel {
    if p_adv >= cfg.theta_alarm && p_disp >= cfg.theta_alarm {
        AlarmLevel::Confirmed
    } else if p_adv >= cfg.theta_alarm {
        AlarmLevel::Alarm
    } else if p_adv >= cfg.theta_warn {
        AlarmLevel::Warning
    } else {
        AlarmLevel::None
    }
}

/// Per-series slice of a monitoring report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesAssessment {
    pub label: String,
    pub estimate: SlopeEstimate,
    pub p_plus: f64,
    pub doubling_days: f64,
    pub dropped_days: Vec<Day>,
    /// Slope exceeded by the true slope with probability theta_warn.
    pub needle_warn_slope: f64,
    /// Slope exceeded by the true slope with probability theta_alarm.
    pub needle_alarm_slope: f64,
}

/// Outcome of one monitoring evaluation at a given as-of day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmReport {
    pub epoch: NaiveDate,
    pub as_of_day: Day,
    pub window: (Day, Day),
    pub adv: SeriesAssessment,
    pub disp: SeriesAssessment,
    pub level: AlarmLevel,
    /// Odds-at-least-one-half reading of the doubling threshold on the early
    /// series: set when beta_adv >= ln2 / doubling_threshold_days.
    pub doubling_alarm: bool,
    /// Inverse-variance pooling of the two slopes, when both have V > 0.
    pub combined: Option<SlopeEstimate>,
    pub delta: Option<DeltaIntervals>,
}

fn assess(
    series: &ObservationSeries,
    cfg: &AlarmConfig,
    as_of: Day,
    model: SlopeModel,
) -> Result<SeriesAssessment> {
    let windowed = series::window(series, cfg.window_days, as_of).map_err(|e| match e {
        Error::WindowTooSparse { found, .. } => Error::InsufficientData(format!(
            "series '{}' has {found} points in the window ending {}",
            series.label(),
            series.date_of(as_of)
        )),
        other => other,
    })?;
    let (logs, dropped) = series::log_transform(&windowed).map_err(|e| match e {
        Error::AllCountsZero => Error::InsufficientData(format!(
            "series '{}' window is all zeros",
            series.label()
        )),
        other => other,
    })?;
    if logs.points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "series '{}' has {} positive days in the window; 3 needed",
            series.label(),
            logs.points.len()
        )));
    }
    let estimate = match model {
        SlopeModel::GaussOls => ols_fit(&logs)?,
        SlopeModel::LaplaceL1 => l1_fit(&logs)?,
        SlopeModel::CombinedGauss => {
            return Err(Error::InvalidParams(
                "combined model is derived, not fit directly".into(),
            ))
        }
    };
    let p_plus = slope_positive_probability(&estimate);
    let root_v = estimate.v.sqrt();
    let needle_warn_slope = estimate.beta_hat
        + root_v * estimate.pivot_quantile(1.0 - cfg.theta_warn)?;
    let needle_alarm_slope = estimate.beta_hat
        + root_v * estimate.pivot_quantile(1.0 - cfg.theta_alarm)?;
    Ok(SeriesAssessment {
        label: series.label().to_string(),
        doubling_days: doubling_time(estimate.beta_hat),
        p_plus,
        dropped_days: dropped,
        needle_warn_slope,
        needle_alarm_slope,
        estimate,
    })
}

/// Evaluates the graded alarm for an early indicator series and a later
/// confirmation series at one as-of day.
pub fn monitor(
    adv: &ObservationSeries,
    disp: &ObservationSeries,
    as_of: Day,
    cfg: &AlarmConfig,
    model: SlopeModel,
) -> Result<AlarmReport> {
    cfg.validate()?;
    if adv.epoch() != disp.epoch() {
        return Err(Error::EpochMismatch(adv.epoch(), disp.epoch()));
    }
    let adv_a = assess(adv, cfg, as_of, model)?;
    let disp_a = assess(disp, cfg, as_of, model)?;
    let level = alarm_level(adv_a.p_plus, disp_a.p_plus, cfg);
    let doubling_alarm =
        adv_a.estimate.beta_hat >= std::f64::consts::LN_2 / cfg.doubling_threshold_days;
    let (combined, delta) = if adv_a.estimate.v > 0.0 && disp_a.estimate.v > 0.0 {
        let pooled = combine(&[adv_a.estimate.clone(), disp_a.estimate.clone()])?;
        let delta = delta_confidence(&pooled, cfg.epsilon)?;
        (Some(pooled), Some(delta))
    } else {
        (None, None)
    };
    Ok(AlarmReport {
        epoch: adv.epoch(),
        as_of_day: as_of,
        window: (as_of - cfg.window_days + 1, as_of),
        adv: adv_a,
        disp: disp_a,
        level,
        doubling_alarm,
        combined,
        delta,
    })
}
