//! Synthetic count series with piecewise log-linear trends and Laplace
//! noise, seeded for reproducibility. Used by calibration tests and the
//! bundled example data.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::series::ObservationSeries;

/// Laplace draw by inverse CDF; `scale` is the usual diversity parameter.
pub fn laplace_sample(rng: &mut impl Rng, scale: f64) -> f64 {
    let mut u: f64 = rng.gen();
    while u == 0.0 {
        u = rng.gen();
    }
    let c = u - 0.5;
    -scale * c.signum() * (-2.0 * c.abs()).ln_1p()
}

/// Recipe for one synthetic series: a level followed by log-linear
/// segments, each `(length in days, slope per day)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub label: String,
    pub epoch: NaiveDate,
    pub start_day: i64,
    pub base_log: f64,
    pub segments: Vec<(u32, f64)>,
    pub noise_scale: f64,
    pub seed: u64,
}

/// Counts `round(exp(trend + noise))`, one point per day.
pub fn piecewise_exp_counts(spec: &SynthSpec) -> ObservationSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = spec.base_log;
    let mut day = spec.start_day;
    let mut points = Vec::new();
    for &(len, slope) in &spec.segments {
        for _ in 0..len {
            let noisy = z + laplace_sample(&mut rng, spec.noise_scale);
            points.push((day, noisy.exp().round().max(0.0) as u64));
            z += slope;
            day += 1;
        }
    }
    ObservationSeries::new(&spec.label, spec.epoch, points).expect("synthetic days are distinct")
}

fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

/// A fade-out that turns into renewed growth, as seen by an early indicator
/// and a confirmation stream that picks the turn up seven days later.
/// Growth doubles in about ten days, fast enough to demand attention.
pub fn resurgence_pair(seed: u64) -> (ObservationSeries, ObservationSeries) {
    let adv = piecewise_exp_counts(&SynthSpec {
        label: "advanced".into(),
        epoch: default_epoch(),
        start_day: 0,
        base_log: 6.5,
        segments: vec![(30, -0.04), (30, 0.07)],
        noise_scale: 0.08,
        seed,
    });
    let disp = piecewise_exp_counts(&SynthSpec {
        label: "displaced".into(),
        epoch: default_epoch(),
        start_day: 0,
        base_log: 5.8,
        segments: vec![(37, -0.04), (23, 0.07)],
        noise_scale: 0.10,
        seed: seed.wrapping_add(1),
    });
    (adv, disp)
}

/// A plain fade-out with no resurgence.
pub fn decaying_series(label: &str, seed: u64) -> ObservationSeries {
    piecewise_exp_counts(&SynthSpec {
        label: label.into(),
        epoch: default_epoch(),
        start_day: 0,
        base_log: 7.0,
        segments: vec![(60, -0.05)],
        noise_scale: 0.08,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let scale = 1.3;
        let mut sum = 0.0;
        let mut sum_abs = 0.0;
        for _ in 0..n {
            let x = laplace_sample(&mut rng, scale);
            sum += x;
            sum_abs += x.abs();
        }
        let mean = sum / n as f64;
        let mean_abs = sum_abs / n as f64;
        // mean 0, mean absolute deviation = scale
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((mean_abs - scale).abs() < 0.02, "mean abs {mean_abs}");
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let (a1, d1) = resurgence_pair(42);
        let (a2, d2) = resurgence_pair(42);
        assert_eq!(a1.to_csv(), a2.to_csv());
        assert_eq!(d1.to_csv(), d2.to_csv());
        let (a3, _) = resurgence_pair(43);
        assert_ne!(a1.to_csv(), a3.to_csv());
    }

    #[test]
    fn trend_shapes_come_through_the_noise() {
        let (adv, _) = resurgence_pair(42);
        let counts: Vec<u64> = adv.points().iter().map(|&(_, c)| c).collect();
        assert_eq!(counts.len(), 60);
        let head: f64 = counts[..5].iter().sum::<u64>() as f64 / 5.0;
        let trough: f64 = counts[27..33].iter().sum::<u64>() as f64 / 6.0;
        let tail: f64 = counts[55..].iter().sum::<u64>() as f64 / 5.0;
        assert!(trough < head, "decay phase: {head} -> {trough}");
        assert!(tail > 2.0 * trough, "resurgence: {trough} -> {tail}");

        let fading = decaying_series("fade", 9);
        let head: f64 = fading.points()[..5].iter().map(|&(_, c)| c as f64).sum::<f64>() / 5.0;
        let tail: f64 = fading.points()[55..].iter().map(|&(_, c)| c as f64).sum::<f64>() / 5.0;
        assert!(tail < 0.3 * head);
    }
}
