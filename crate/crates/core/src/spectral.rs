//! Growth-rate analysis of the linearized two-stage transport model.
//!
//! A cohort entering the latent stage produces secondary contaminations at
//! rate `mu * phi(a)` at lag `a`, where `phi` folds the latency-escape law
//! with the infectivity-weighted infectious survival. The Laplace transform
//! of `phi` is computed cell-exactly for hazards piecewise constant on the
//! age grid, so the growth rate solving `mu * G(lambda) = 1` matches the
//! closed form whenever one exists.

use crate::alarm::doubling_time;
use crate::error::{Error, Result};
use crate::pde::{exp_cell_weight, DensityState, ModelParams};

const ROOT_TOL: f64 = 1e-10;

/// Laplace transform of the generation kernel at `lambda`, excluding the
/// contamination rate factor. The value at 0 is the expected infectivity
/// integral per cohort member.
pub fn characteristic_function(params: &ModelParams, lambda: f64) -> f64 {
    let h = params.h;
    let m = params.m();
    // transform of the latency-escape law: per-cell hazard terms plus the
    // certain transition at the maximal age
    let factor_e = if m == 0 {
        1.0
    } else {
        let mut f_acc: f64 = 0.0;
        let mut sum = 0.0;
        for &k in &params.k_ei {
            if k > 0.0 {
                sum += k * (-f_acc).exp() * exp_cell_weight(lambda + k, h);
            }
            f_acc += (lambda + k) * h;
        }
        sum + (-f_acc).exp()
    };
    // infectivity-weighted infectious survival; removal at the maximal age
    // contributes nothing
    let mut f_acc: f64 = 0.0;
    let mut factor_i = 0.0;
    for j in 0..params.p() {
        let k = params.k_ir[j];
        if params.psi[j] > 0.0 {
            factor_i += params.psi[j] * (-f_acc).exp() * exp_cell_weight(lambda + k, h);
        }
        f_acc += (lambda + k) * h;
    }
    factor_e * factor_i
}

/// Expected number of secondary contaminations per cohort member and unit
/// contamination rate.
pub fn generation_integral(params: &ModelParams) -> f64 {
    characteristic_function(params, 0.0)
}

/// Growth rate, profiles, and bookkeeping of one spectral solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub lambda: f64,
    pub mu: f64,
    pub g_value: f64,
    /// Latent age profile at grid nodes 0..=m, normalized to 1 at age zero.
    /// Empty when the latent stage has zero span.
    pub e_profile: Vec<f64>,
    /// Infectious age profile at grid nodes 0..=p.
    pub i_profile: Vec<f64>,
    pub doubling_days: f64,
}

impl EigenSolution {
    /// Both stage profiles as one positive vector, for projective distances.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.e_profile.clone();
        v.extend_from_slice(&self.i_profile);
        v
    }

    /// Seeds a density state proportional to the eigenprofile, scaled so the
    /// infectious stage carries `i_mass`.
    pub fn to_state(&self, params: &ModelParams, i_mass: f64) -> Result<DensityState> {
        let p = params.p();
        let raw = params.h * self.i_profile[..p].iter().sum::<f64>();
        if raw <= 0.0 {
            return Err(Error::InvalidParams("eigenprofile carries no mass".into()));
        }
        let c = i_mass / raw;
        let mut st = DensityState::empty(params);
        for (slot, v) in st.e.iter_mut().zip(&self.e_profile) {
            *slot = c * v;
        }
        for (slot, v) in st.i.iter_mut().zip(&self.i_profile) {
            *slot = c * v;
        }
        Ok(st)
    }
}

/// Solves `mu * G(lambda) = 1` for the growth rate by bisection on the
/// decreasing transform, then reads off the stage eigenprofiles.
pub fn perron_eigenvalue(params: &ModelParams, mu: f64) -> Result<EigenSolution> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParams(format!("contamination rate {mu}")));
    }
    if params.psi.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidParams(
            "infectivity is identically zero; no growth rate to solve for".into(),
        ));
    }
    let f = |l: f64| mu * characteristic_function(params, l) - 1.0;
    let mut lo = -5.0;
    let mut hi = 5.0;
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::InvalidParams("characteristic function is NaN".into()));
    }
    let mut tries = 0;
    while flo <= 0.0 {
        hi = lo;
        fhi = flo;
        lo *= 2.0;
        flo = f(lo);
        tries += 1;
        if tries > 60 {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    while fhi >= 0.0 {
        lo = hi;
        hi *= 2.0;
        fhi = f(hi);
        tries += 1;
        if tries > 60 {
            return Err(Error::BracketFailure { lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = f(lambda).abs();
    if residual > ROOT_TOL {
        return Err(Error::NoConvergence { tol: ROOT_TOL, residual });
    }

    let h = params.h;
    let m = params.m();
    let mut e_profile = Vec::new();
    let mut factor_e = 1.0;
    if m > 0 {
        e_profile.reserve(m + 1);
        let mut f_acc: f64 = 0.0;
        let mut sum = 0.0;
        for &k in &params.k_ei {
            e_profile.push((-f_acc).exp());
            if k > 0.0 {
                sum += k * (-f_acc).exp() * exp_cell_weight(lambda + k, h);
            }
            f_acc += (lambda + k) * h;
        }
        e_profile.push((-f_acc).exp());
        factor_e = sum + (-f_acc).exp();
    }
    let p = params.p();
    let mut i_profile = Vec::with_capacity(p + 1);
    let mut f_acc: f64 = 0.0;
    for &k in &params.k_ir {
        i_profile.push(factor_e * (-f_acc).exp());
        f_acc += (lambda + k) * h;
    }
    i_profile.push(factor_e * (-f_acc).exp());

    Ok(EigenSolution {
        lambda,
        mu,
        g_value: characteristic_function(params, lambda),
        e_profile,
        i_profile,
        doubling_days: doubling_time(lambda),
    })
}

/// Projective (log-ratio oscillation) distance between positive vectors.
pub fn hilbert_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("projective distance of empty vectors"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (idx, (&a, &b)) in u.iter().zip(v).enumerate() {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::NonPositiveEntry(idx));
        }
        let r = (a / b).ln();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(hi - lo)
}

/// Total projective movement of a phase schedule: distance from the start
/// vector to the first profile, plus phase-to-phase profile distances. Half
/// of this budget bounds the gap between the true log trajectory and its
/// piecewise-linear shadow.
pub fn projective_path_budget(v0: &[f64], phase_profiles: &[Vec<f64>]) -> Result<f64> {
    let first = phase_profiles
        .first()
        .ok_or(Error::EmptyInput("no phase profiles"))?;
    let mut total = hilbert_distance(v0, first)?;
    for w in phase_profiles.windows(2) {
        total += hilbert_distance(&w[0], &w[1])?;
    }
    Ok(total)
}

/// How far apart two growth rates can push their eigenprofiles in the
/// projective metric: the rate gap times the total age span.
pub fn profile_shift_bound(params: &ModelParams, lambda_a: f64, lambda_b: f64) -> f64 {
    (lambda_a - lambda_b).abs() * (params.x_e_star + params.x_i_star)
}

/// Continuous piecewise-linear path through time: slope `slopes[k]` applies
/// between `switch_times[k-1]` and `switch_times[k]` (unbounded at the
/// ends), anchored at zero on the first sample.
pub fn piecewise_linear_path(ts: &[f64], switch_times: &[f64], slopes: &[f64]) -> Result<Vec<f64>> {
    if slopes.len() != switch_times.len() + 1 {
        return Err(Error::InvalidParams(
            "need one more slope than switch times".into(),
        ));
    }
    if switch_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("switch times must be increasing".into()));
    }
    let t0 = *ts.first().ok_or(Error::EmptyInput("no sample times"))?;
    let value = |t: f64| -> f64 {
        let mut acc = 0.0;
        for (k, &s) in slopes.iter().enumerate() {
            let a = if k == 0 { f64::NEG_INFINITY } else { switch_times[k - 1] };
            let b = if k == slopes.len() - 1 { f64::INFINITY } else { switch_times[k] };
            let lo = a.max(t0.min(t));
            let hi = b.min(t0.max(t));
            if hi > lo {
                acc += s * (hi - lo);
            }
        }
        if t >= t0 { acc } else { -acc }
    };
    Ok(ts.iter().map(|&t| value(t)).collect())
}

/// Best uniform alignment of a path to a reference shape: the optimal
/// additive shift is the midrange of the deviations, and the remaining
/// uniform gap is half their oscillation.
pub fn centered_sup_gap(y: &[f64], y_ref: &[f64]) -> Result<(f64, f64)> {
    if y.len() != y_ref.len() {
        return Err(Error::LengthMismatch(y.len(), y_ref.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("no samples to align"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&a, &b) in y.iter().zip(y_ref) {
        let d = a - b;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok((0.5 * (hi + lo), 0.5 * (hi - lo)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{simulate, MuProfile};
    use approx::assert_relative_eq;

    fn delay_model(h: f64) -> ModelParams {
        ModelParams::constant_rates(
            1e6, 3.0, 7.0, h, h, 0.0, 0.0, 1.0, MuProfile::Constant(1.0),
        )
        .unwrap()
    }

    fn closed_form_g(lambda: f64) -> f64 {
        if lambda == 0.0 {
            7.0
        } else {
            (-3.0 * lambda).exp() * (-(-7.0 * lambda).exp_m1()) / lambda
        }
    }

    #[test]
    fn transform_matches_closed_form_for_pure_delays() {
        let params = delay_model(0.05);
        assert_relative_eq!(generation_integral(&params), 7.0, epsilon = 1e-12);
        for lambda in [-0.5, -0.1, 0.05, 0.3, 1.0, 2.0] {
            assert_relative_eq!(
                characteristic_function(&params, lambda),
                closed_form_g(lambda),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn root_solves_the_characteristic_equation() {
        let params = delay_model(0.05);
        for mu in [2.0 / 7.0, 1.0 / 14.0, 0.5] {
            let sol = perron_eigenvalue(&params, mu).unwrap();
            assert!((mu * sol.g_value - 1.0).abs() <= 1e-10);
            assert_eq!(sol.lambda > 0.0, mu * 7.0 > 1.0);
        }
        let crit = perron_eigenvalue(&params, 1.0 / 7.0).unwrap();
        assert!(crit.lambda.abs() < 1e-8);
    }

    #[test]
    fn growth_rate_increases_with_contamination_rate() {
        let params = ModelParams::constant_rates(
            1e6, 3.0, 8.0, 0.05, 0.05, 0.2, 0.15, 1.0, MuProfile::Constant(1.0),
        )
        .unwrap();
        let a = perron_eigenvalue(&params, 0.2).unwrap().lambda;
        let b = perron_eigenvalue(&params, 0.35).unwrap().lambda;
        assert!(b > a);
    }

    #[test]
    fn bracket_expands_to_extreme_rates() {
        let params = delay_model(0.1);
        let fast = perron_eigenvalue(&params, 1e12).unwrap();
        assert!(fast.lambda > 5.0);
        let slow = perron_eigenvalue(&params, 1e-30).unwrap();
        assert!(slow.lambda < -5.0);
        assert!((fast.mu * fast.g_value - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn eigenprofile_reproduces_its_growth_rate_under_the_stepper() {
        let params = ModelParams::constant_rates(
            1e6, 3.0, 8.0, 0.05, 0.05, 0.2, 0.15, 1.0, MuProfile::Constant(0.25),
        )
        .unwrap();
        let sol = perron_eigenvalue(&params, 0.25).unwrap();
        let mut st = sol.to_state(&params, 100.0).unwrap();
        let recs = simulate(&params, &mut st, 30, &[], false).unwrap();
        let pts: Vec<(f64, f64)> = recs[10..=30]
            .iter()
            .map(|r| (r.day as f64, r.i_mass.ln()))
            .collect();
        let n = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        let slope = sxy / sxx;
        assert!(
            (slope - sol.lambda).abs() <= 0.02 * sol.lambda.abs(),
            "stepper slope {slope} vs spectral {}",
            sol.lambda
        );
    }

    #[test]
    fn projective_distance_properties() {
        let u = [1.0, 2.0, 3.0];
        let v = [2.0, 4.0, 6.0];
        assert_eq!(hilbert_distance(&u, &u).unwrap(), 0.0);
        // scale invariance
        assert_relative_eq!(hilbert_distance(&u, &v).unwrap(), 0.0, epsilon = 1e-15);
        let w = [1.0, 1.0, 9.0];
        let duv = hilbert_distance(&u, &w).unwrap();
        assert_relative_eq!(duv, hilbert_distance(&w, &u).unwrap(), epsilon = 1e-15);
        let z = [4.0, 0.5, 2.0];
        assert!(
            hilbert_distance(&u, &z).unwrap()
                <= hilbert_distance(&u, &w).unwrap() + hilbert_distance(&w, &z).unwrap() + 1e-12
        );
        assert!(hilbert_distance(&u, &[1.0, 2.0]).is_err());
        assert!(matches!(
            hilbert_distance(&u, &[1.0, 0.0, 3.0]),
            Err(Error::NonPositiveEntry(1))
        ));
    }

    #[test]
    fn nearby_rates_give_nearby_profiles() {
        let params = ModelParams::constant_rates(
            1e6, 3.0, 8.0, 0.05, 0.05, 0.25, 0.2, 1.0, MuProfile::Constant(1.0),
        )
        .unwrap();
        let a = perron_eigenvalue(&params, 0.25).unwrap();
        let b = perron_eigenvalue(&params, 0.29).unwrap();
        let d = hilbert_distance(&a.stacked(), &b.stacked()).unwrap();
        let bound = profile_shift_bound(&params, a.lambda, b.lambda);
        assert!(d <= bound * (1.0 + 1e-9) + 1e-12, "d {d} bound {bound}");
    }

    #[test]
    fn piecewise_path_integrates_slopes() {
        let ts: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let y = piecewise_linear_path(&ts, &[5.0], &[2.0, -1.0]).unwrap();
        assert_relative_eq!(y[0], 0.0);
        assert_relative_eq!(y[5], 10.0, epsilon = 1e-12);
        assert_relative_eq!(y[10], 5.0, epsilon = 1e-12);
        assert!(piecewise_linear_path(&ts, &[5.0], &[1.0]).is_err());
    }

    #[test]
    fn alignment_midrange_and_gap() {
        let y = [1.0, 3.0, 5.0];
        let r = [0.0, 4.0, 4.0];
        // deviations 1, -1, 1
        let (gamma, sup) = centered_sup_gap(&y, &r).unwrap();
        assert_relative_eq!(gamma, 0.0, epsilon = 1e-15);
        assert_relative_eq!(sup, 1.0, epsilon = 1e-15);
        let shifted: Vec<f64> = r.iter().map(|v| v + 2.5).collect();
        let (g2, s2) = centered_sup_gap(&shifted, &r).unwrap();
        assert_relative_eq!(g2, 2.5, epsilon = 1e-15);
        assert!(s2 < 1e-15);
    }

    #[test]
    fn scalar_switched_system_is_shadowed_exactly() {
        // one-dimensional phases: all profiles are projectively equal, the
        // budget vanishes, and the log path is exactly piecewise linear
        let budget = projective_path_budget(&[3.0], &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(budget, 0.0);
        let (l1, l2, t_switch) = (0.3, -0.2, 6.0);
        let dt = 0.25;
        let mut x: f64 = 3.0;
        let mut ts = vec![0.0];
        let mut y = vec![x.ln()];
        for step in 1..=48 {
            let t = step as f64 * dt;
            let l = if t <= t_switch { l1 } else { l2 };
            x *= (l * dt).exp();
            ts.push(t);
            y.push(x.ln());
        }
        let shadow = piecewise_linear_path(&ts, &[t_switch], &[l1, l2]).unwrap();
        let (_, sup) = centered_sup_gap(&y, &shadow).unwrap();
        assert!(sup <= budget / 2.0 + 1e-12);
    }
}
