//! Age-structured transport dynamics for a latent and an infectious stage.
//!
//! Individuals age along a characteristic at unit speed. The latent stage
//! lives on [0, x_e_star): escape hazard `k_ei(x)`, with certain transition
//! at the maximal age. The infectious stage lives on [0, x_i_star) with
//! removal hazard `k_ir(x)`, certain removal at the maximal age, and
//! age-dependent infectivity `psi(x)`. New latency inflow at age zero is
//! `(S/N) * mu(t) * integral psi * n_I`; the linear variant freezes S/N at 1.
//!
//! Discretization: uniform grid of step `h`, one extra slot at the maximal
//! age holding the parcel in transit across the boundary. The upwind shift
//! with `theta = dt/h` moves densities and applies the survival factor
//! exp(-k dt); at `dt = h` this is an exact shift along the characteristic.
//! Stage-transition inflows are read as fluxes from the pre-shift state with
//! the cell weight `1 - exp(-k h)`, which matches the quadrature used by the
//! spectral characteristic function, so a stationary profile of the
//! zero-hazard model is reproduced exactly.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Contamination-rate profile over calendar time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuProfile {
    Constant(f64),
    /// `values[k]` applies on [breaks[k-1], breaks[k]); `values[0]` before
    /// the first break, the last value from the last break onward.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
}

impl MuProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            MuProfile::Constant(v) => *v,
            MuProfile::PiecewiseConstant { breaks, values } => {
                let k = breaks.partition_point(|&b| b <= t);
                values[k]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MuProfile::Constant(v) => {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidParams(format!("mu {v} must be finite, >= 0")));
                }
            }
            MuProfile::PiecewiseConstant { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::InvalidParams(
                        "piecewise mu needs one more value than breaks".into(),
                    ));
                }
                if breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidParams("mu breaks must be increasing".into()));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidParams("mu values must be finite, >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Model description on a fixed age grid.
///
/// Hazards and infectivity are sampled at cell left edges: `k_ei[j]` is the
/// rate on age cell [j h, (j+1) h), and likewise for `k_ir` and `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub population: f64,
    pub x_e_star: f64,
    pub x_i_star: f64,
    pub h: f64,
    pub dt: f64,
    pub k_ei: Vec<f64>,
    pub k_ir: Vec<f64>,
    pub psi: Vec<f64>,
    pub mu: MuProfile,
}

/// Age span must be an integer number of grid cells.
fn cells(span: f64, h: f64) -> Result<usize> {
    let m = (span / h).round();
    if (m * h - span).abs() > 1e-9 * span.max(1.0) || m < 0.0 {
        return Err(Error::GridMismatch { span, h });
    }
    Ok(m as usize)
}

/// Integral of exp(-c r) over one cell of width h; h at c = 0.
pub(crate) fn exp_cell_weight(c: f64, h: f64) -> f64 {
    if c == 0.0 {
        h
    } else {
        -(-c * h).exp_m1() / c
    }
}

impl ModelParams {
    /// Builds from per-cell samples, checking lengths against the grid.
    #[allow(clippy::too_many_arguments)]
    pub fn from_samples(
        population: f64,
        x_e_star: f64,
        x_i_star: f64,
        h: f64,
        dt: f64,
        k_ei: Vec<f64>,
        k_ir: Vec<f64>,
        psi: Vec<f64>,
        mu: MuProfile,
    ) -> Result<Self> {
        if !(population.is_finite() && population > 0.0) {
            return Err(Error::InvalidParams(format!("population {population}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParams(format!("grid step {h}")));
        }
        if !(dt.is_finite() && dt > 0.0) || dt > h * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, h });
        }
        if x_e_star < 0.0 || x_i_star <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "age spans ({x_e_star}, {x_i_star}) need x_e_star >= 0, x_i_star > 0"
            )));
        }
        let m = cells(x_e_star, h)?;
        let p = cells(x_i_star, h)?;
        if p == 0 {
            return Err(Error::GridMismatch { span: x_i_star, h });
        }
        if k_ei.len() != m {
            return Err(Error::InvalidParams(format!(
                "k_ei has {} samples, grid has {m} cells",
                k_ei.len()
            )));
        }
        if k_ir.len() != p || psi.len() != p {
            return Err(Error::InvalidParams(format!(
                "k_ir/psi have {}/{} samples, grid has {p} cells",
                k_ir.len(),
                psi.len()
            )));
        }
        for v in k_ei.iter().chain(&k_ir).chain(&psi) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidParams(format!("rate sample {v}")));
            }
        }
        mu.validate()?;
        Ok(Self { population, x_e_star, x_i_star, h, dt, k_ei, k_ir, psi, mu })
    }

    /// Samples rate functions of age on the grid.
    #[allow(clippy::too_many_arguments)]
    pub fn from_rates(
        population: f64,
        x_e_star: f64,
        x_i_star: f64,
        h: f64,
        dt: f64,
        k_ei: impl Fn(f64) -> f64,
        k_ir: impl Fn(f64) -> f64,
        psi: impl Fn(f64) -> f64,
        mu: MuProfile,
    ) -> Result<Self> {
        let m = cells(x_e_star, h)?;
        let p = cells(x_i_star, h)?;
        let sample = |f: &dyn Fn(f64) -> f64, len: usize| -> Vec<f64> {
            (0..len).map(|j| f(j as f64 * h)).collect()
        };
        Self::from_samples(
            population,
            x_e_star,
            x_i_star,
            h,
            dt,
            sample(&k_ei, m),
            sample(&k_ir, p),
            sample(&psi, p),
            mu,
        )
    }

    /// Age-independent rates.
    #[allow(clippy::too_many_arguments)]
    pub fn constant_rates(
        population: f64,
        x_e_star: f64,
        x_i_star: f64,
        h: f64,
        dt: f64,
        k_ei: f64,
        k_ir: f64,
        psi: f64,
        mu: MuProfile,
    ) -> Result<Self> {
        Self::from_rates(
            population, x_e_star, x_i_star, h, dt,
            |_| k_ei, |_| k_ir, |_| psi, mu,
        )
    }

    /// Latent-stage grid cells.
    pub fn m(&self) -> usize {
        self.k_ei.len()
    }

    /// Infectious-stage grid cells.
    pub fn p(&self) -> usize {
        self.k_ir.len()
    }
}

/// Stage densities plus susceptible and removed masses at one time.
///
/// `e` and `i` hold densities at ages 0, h, ..., with one extra slot at the
/// maximal age for the parcel crossing the boundary; `e` is empty when the
/// latent stage has zero span. Stage masses integrate the density cells and
/// exclude the boundary slot, whose mass is credited on the next step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub e: Vec<f64>,
    pub i: Vec<f64>,
    pub s: f64,
    pub r: f64,
    pub t: f64,
}

impl DensityState {
    pub fn empty(params: &ModelParams) -> Self {
        let m = params.m();
        Self {
            e: if m == 0 { Vec::new() } else { vec![0.0; m + 1] },
            i: vec![0.0; params.p() + 1],
            s: params.population,
            r: 0.0,
            t: 0.0,
        }
    }

    /// Seeds the stages with uniform age profiles carrying the given masses.
    pub fn seeded(params: &ModelParams, e_mass: f64, i_mass: f64) -> Result<Self> {
        if e_mass < 0.0 || i_mass < 0.0 || e_mass + i_mass > params.population {
            return Err(Error::InvalidParams(format!(
                "seed masses ({e_mass}, {i_mass}) out of range"
            )));
        }
        let mut st = Self::empty(params);
        let m = params.m();
        if m == 0 && e_mass > 0.0 {
            return Err(Error::InvalidParams(
                "cannot seed a latent stage of zero span".into(),
            ));
        }
        if m > 0 {
            let d = e_mass / (m as f64 * params.h);
            st.e[..m].fill(d);
        }
        let p = params.p();
        let d = i_mass / (p as f64 * params.h);
        st.i[..p].fill(d);
        st.s = params.population - e_mass - i_mass;
        Ok(st)
    }

    pub fn mass_e(&self, params: &ModelParams) -> f64 {
        let m = params.m();
        if m == 0 {
            0.0
        } else {
            params.h * self.e[..m].iter().sum::<f64>()
        }
    }

    pub fn mass_i(&self, params: &ModelParams) -> f64 {
        params.h * self.i[..params.p()].iter().sum::<f64>()
    }

    pub fn total(&self, params: &ModelParams) -> f64 {
        self.s + self.mass_e(params) + self.mass_i(params) + self.r
    }
}

/// Infectivity-weighted integral of the infectious density, with the same
/// per-cell survival weights the spectral quadrature uses.
pub fn force_integral(params: &ModelParams, state: &DensityState) -> f64 {
    let mut phi = 0.0;
    for j in 0..params.p() {
        if params.psi[j] == 0.0 {
            continue;
        }
        phi += params.psi[j] * state.i[j] * exp_cell_weight(params.k_ir[j], params.h);
    }
    phi
}

/// Upwind shift toward higher age with survival decay. `a` has one more slot
/// than `k`; the last slot receives the parcel crossing the maximal age.
fn shift_decay(a: &mut [f64], k: &[f64], theta: f64, dt: f64) {
    let last = a.len() - 1;
    for j in (1..=last).rev() {
        let k_eff = if j == last {
            k[j - 1]
        } else {
            (1.0 - theta) * k[j] + theta * k[j - 1]
        };
        a[j] = ((1.0 - theta) * a[j] + theta * a[j - 1]) * (-k_eff * dt).exp();
    }
}

fn step_impl(params: &ModelParams, state: &mut DensityState, nonlinear: bool) {
    let h = params.h;
    let dt = params.dt;
    let theta = dt / h;
    let m = params.m();
    let p = params.p();
    let s_factor = if nonlinear { state.s / params.population } else { 1.0 };

    // stage-exit fluxes from the pre-shift state: per-cell transitions plus
    // the standing boundary parcel
    let mut i_inflow = 0.0;
    if m > 0 {
        for j in 0..m {
            i_inflow += state.e[j] * -(-params.k_ei[j] * h).exp_m1();
        }
        i_inflow += state.e[m];
    }
    let mut removal = 0.0;
    for j in 0..p {
        removal += state.i[j] * -(-params.k_ir[j] * h).exp_m1();
    }
    removal += state.i[p];

    let e_old0 = if m > 0 { state.e[0] } else { 0.0 };
    let i_old0 = state.i[0];
    if m > 0 {
        shift_decay(&mut state.e, &params.k_ei, theta, dt);
    }
    shift_decay(&mut state.i, &params.k_ir, theta, dt);

    if m > 0 {
        state.i[0] = (1.0 - theta) * i_old0 * (-params.k_ir[0] * dt).exp() + theta * i_inflow;
    }

    // contamination inflow from the post-shift infectious profile; with no
    // latent stage the age-zero cell is still pending, so it is skipped
    let mut phi = 0.0;
    for j in (if m == 0 { 1 } else { 0 })..p {
        if params.psi[j] == 0.0 {
            continue;
        }
        phi += params.psi[j] * state.i[j] * exp_cell_weight(params.k_ir[j], h);
    }
    let t_new = state.t + dt;
    let mut b = s_factor * params.mu.at(t_new) * phi;
    if nonlinear {
        b = b.min(state.s / dt);
        state.s -= dt * b;
    }
    if m > 0 {
        state.e[0] = (1.0 - theta) * e_old0 * (-params.k_ei[0] * dt).exp() + theta * b;
    } else {
        state.i[0] = (1.0 - theta) * i_old0 * (-params.k_ir[0] * dt).exp() + theta * b;
    }

    state.r += dt * removal;
    state.t = t_new;
}

/// One time step with the susceptible fraction frozen at 1.
pub fn step_linear(params: &ModelParams, state: &mut DensityState) {
    step_impl(params, state, false);
}

/// One time step with susceptible depletion; the inflow is capped so the
/// susceptible mass never goes negative.
pub fn step_nonlinear(params: &ModelParams, state: &mut DensityState) {
    step_impl(params, state, true);
}

/// A named linear read-out of the infectious density, sampled per age cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableKernel {
    pub name: String,
    pub weights: Vec<f64>,
}

impl ObservableKernel {
    pub fn from_fn(name: &str, params: &ModelParams, f: impl Fn(f64) -> f64) -> Self {
        Self {
            name: name.to_string(),
            weights: (0..params.p()).map(|j| f(j as f64 * params.h)).collect(),
        }
    }

    pub fn uniform(name: &str, params: &ModelParams) -> Self {
        Self::from_fn(name, params, |_| 1.0)
    }

    pub fn observe(&self, params: &ModelParams, state: &DensityState) -> f64 {
        params.h
            * self
                .weights
                .iter()
                .zip(&state.i[..params.p()])
                .map(|(w, n)| w * n)
                .sum::<f64>()
    }
}

/// One daily sample of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyRecord {
    pub day: i64,
    pub t: f64,
    pub s: f64,
    pub e_mass: f64,
    pub i_mass: f64,
    pub r: f64,
    pub total: f64,
    pub mu: f64,
    /// Contamination inflow per unit time at the sample instant.
    pub contamination_flux: f64,
    pub observables: Vec<f64>,
}

fn record(
    params: &ModelParams,
    state: &DensityState,
    day: i64,
    kernels: &[ObservableKernel],
    nonlinear: bool,
) -> DailyRecord {
    let s_factor = if nonlinear { state.s / params.population } else { 1.0 };
    let mu = params.mu.at(state.t);
    DailyRecord {
        day,
        t: state.t,
        s: state.s,
        e_mass: state.mass_e(params),
        i_mass: state.mass_i(params),
        r: state.r,
        total: state.total(params),
        mu,
        contamination_flux: s_factor * mu * force_integral(params, state),
        observables: kernels.iter().map(|k| k.observe(params, state)).collect(),
    }
}

/// Advances the state day by day, sampling each midnight including day 0.
/// The time step must divide one day.
pub fn simulate(
    params: &ModelParams,
    state: &mut DensityState,
    days: u32,
    kernels: &[ObservableKernel],
    nonlinear: bool,
) -> Result<Vec<DailyRecord>> {
    let steps_per_day = (1.0 / params.dt).round();
    if (steps_per_day * params.dt - 1.0).abs() > 1e-9 || steps_per_day < 1.0 {
        return Err(Error::InvalidParams(format!(
            "time step {} does not divide one day",
            params.dt
        )));
    }
    let steps_per_day = steps_per_day as u32;
    let mut out = Vec::with_capacity(days as usize + 1);
    out.push(record(params, state, 0, kernels, nonlinear));
    for day in 1..=days {
        for _ in 0..steps_per_day {
            step_impl(params, state, nonlinear);
        }
        out.push(record(params, state, day as i64, kernels, nonlinear));
    }
    Ok(out)
}

/// Compartmental counterpart with exponential stage durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeirOde {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub population: f64,
}

/// Classic four-compartment path by fourth-order Runge-Kutta, sampled at
/// every step. State order is [S, E, I, R].
pub fn seir_rk4(p: &SeirOde, y0: [f64; 4], t_end: f64, dt: f64) -> Vec<(f64, [f64; 4])> {
    let f = |y: [f64; 4]| -> [f64; 4] {
        let force = p.beta * y[0] * y[2] / p.population;
        [
            -force,
            force - p.sigma * y[1],
            p.sigma * y[1] - p.gamma * y[2],
            p.gamma * y[2],
        ]
    };
    let add = |a: [f64; 4], b: [f64; 4], c: f64| -> [f64; 4] {
        [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
    };
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0;
    let mut t = 0.0;
    out.push((t, y));
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(add(y, k1, dt / 2.0));
        let k3 = f(add(y, k2, dt / 2.0));
        let k4 = f(add(y, k3, dt));
        for c in 0..4 {
            y[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        t += dt;
        out.push((t, y));
    }
    out
}
