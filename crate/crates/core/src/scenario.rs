//! Declarative scenario descriptions, JSON-serializable, that build model
//! parameters, an initial state, and observation kernels.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{DensityState, ModelParams, MuProfile, ObservableKernel};

/// A nonnegative function of stage age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSpec {
    Constant(f64),
    /// Step function: `values[k]` on [edges[k-1], edges[k]); `values[0]`
    /// before the first edge, the last value beyond the last edge.
    Steps { edges: Vec<f64>, values: Vec<f64> },
    /// Affine ramp from age 0 to the stage's maximal age.
    Ramp { from: f64, to: f64 },
}

impl RateSpec {
    fn validate(&self) -> Result<()> {
        let check = |v: f64| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!("rate value {v}")));
            }
            Ok(())
        };
        match self {
            RateSpec::Constant(v) => check(*v),
            RateSpec::Steps { edges, values } => {
                if values.len() != edges.len() + 1 {
                    return Err(Error::InvalidParams(
                        "step rate needs one more value than edges".into(),
                    ));
                }
                if edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidParams("step edges must be increasing".into()));
                }
                values.iter().try_for_each(|&v| check(v))
            }
            RateSpec::Ramp { from, to } => {
                check(*from)?;
                check(*to)
            }
        }
    }

    pub fn sample(&self, x: f64, span: f64) -> f64 {
        match self {
            RateSpec::Constant(v) => *v,
            RateSpec::Steps { edges, values } => {
                let k = edges.partition_point(|&e| e <= x);
                values[k]
            }
            RateSpec::Ramp { from, to } => {
                if span == 0.0 {
                    *from
                } else {
                    from + (to - from) * (x / span)
                }
            }
        }
    }
}

/// Initial stage masses; everyone else starts susceptible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SeedSpec {
    pub e_mass: f64,
    pub i_mass: f64,
}

/// A named observation read-out over infectious age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: String,
    pub weight: RateSpec,
}

fn default_days() -> u32 {
    120
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

/// Complete simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Calendar date of simulation time zero.
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    pub population: f64,
    pub x_e_star: f64,
    pub x_i_star: f64,
    pub h: f64,
    /// Defaults to `h`, the exact-shift time step.
    #[serde(default)]
    pub dt: Option<f64>,
    pub k_ei: RateSpec,
    pub k_ir: RateSpec,
    pub psi: RateSpec,
    pub mu: MuProfile,
    #[serde(default)]
    pub seed: SeedSpec,
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    #[serde(default)]
    pub nonlinear: bool,
    #[serde(default = "default_days")]
    pub days: u32,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidParams(format!("scenario JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Materializes grid-sampled parameters, the seeded state, and kernels.
    pub fn build(&self) -> Result<(ModelParams, DensityState, Vec<ObservableKernel>)> {
        self.k_ei.validate()?;
        self.k_ir.validate()?;
        self.psi.validate()?;
        let params = ModelParams::from_rates(
            self.population,
            self.x_e_star,
            self.x_i_star,
            self.h,
            self.dt.unwrap_or(self.h),
            |x| self.k_ei.sample(x, self.x_e_star),
            |x| self.k_ir.sample(x, self.x_i_star),
            |x| self.psi.sample(x, self.x_i_star),
            self.mu.clone(),
        )?;
        let state = DensityState::seeded(&params, self.seed.e_mass, self.seed.i_mass)?;
        let kernels = self
            .kernels
            .iter()
            .map(|k| {
                k.weight.validate()?;
                Ok(ObservableKernel::from_fn(&k.name, &params, |x| {
                    k.weight.sample(x, self.x_i_star)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((params, state, kernels))
    }
}
