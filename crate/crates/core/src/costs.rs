//! Health and economic costs, their scaling and aggregation, and cumulative constraints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seirah::{SeirahParams, SeirahState};

pub const DAYS_PER_YEAR: f64 = 365.0;
const EUROS_PER_MILLION: f64 = 1e6;

/// Sampling range for a death-toll constraint (persons).
pub const DEATH_BOUND_RANGE: [f64; 2] = [1_000.0, 62_000.0];
/// Sampling range for an economic-loss constraint (€).
pub const ECO_BOUND_RANGE: [f64; 2] = [20e9, 160e9];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("removed compartment decreased from {prev} to {next}")]
    NegativeRemovedIncrement { prev: f64, next: f64 },
    #[error("mixing weight {0} outside [0, 1]")]
    InvalidBeta(f64),
    #[error("invalid economic parameters: {0}")]
    InvalidEcon(String),
}

/// Cobb-Douglas economy constants. Monetary magnitudes are in million €.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    /// Capital stock (million €), constant over the epidemic.
    #[serde(rename = "K0")]
    pub k0: f64,
    /// Employment rate.
    pub lambda_rate: f64,
    /// Pre-epidemic GDP (million €/year).
    #[serde(rename = "Y0")]
    pub y0: f64,
    #[serde(rename = "A_tech")]
    pub a_tech: f64,
    /// Partial unemployment during lockdown weeks.
    pub u_lockdown: f64,
    pub gamma_k: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            k0: 1_388_912.0,
            lambda_rate: 0.374,
            y0: 424_474.0,
            a_tech: 867.0,
            u_lockdown: 0.5,
            gamma_k: 0.37,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [
            ("lambda_rate", self.lambda_rate),
            ("u_lockdown", self.u_lockdown),
            ("gamma_k", self.gamma_k),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CostError::InvalidEcon(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, v) in [("K0", self.k0), ("Y0", self.y0), ("A_tech", self.a_tech)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CostError::InvalidEcon(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Unemployment level for a week with or without lockdown.
    pub fn unemployment(&self, lockdown: bool) -> f64 {
        if lockdown {
            self.u_lockdown
        } else {
            0.0
        }
    }
}

/// Normalizers applied before mixing: `health / health`, `eco / eco`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostScales {
    /// Deaths per unit of scaled health cost.
    pub health: f64,
    /// Euros per unit of scaled economic cost.
    pub eco: f64,
}

impl CostScales {
    /// 65k deaths and 1e9 €: the literal normalizers of the published mixing formula.
    pub const LITERAL: CostScales = CostScales {
        health: 65e3,
        eco: 1e9,
    };

    /// 65k deaths and 150e9 €, the approximate cost of a full year of lockdown.
    ///
    /// Both scaled costs then span roughly [0, 1] over an episode.
    pub const BALANCED: CostScales = CostScales {
        health: 65e3,
        eco: 150e9,
    };

    pub fn scale_health(&self, deaths: f64) -> f64 {
        deaths / self.health
    }

    pub fn scale_eco(&self, euros: f64) -> f64 {
        euros / self.eco
    }
}

impl Default for CostScales {
    fn default() -> Self {
        CostScales::BALANCED
    }
}

/// Convex weight between health (β = 0) and economic (β = 1) costs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MixingWeight(f64);

impl MixingWeight {
    pub fn new(beta: f64) -> Result<Self, CostError> {
        if (0.0..=1.0).contains(&beta) {
            Ok(MixingWeight(beta))
        } else {
            Err(CostError::InvalidBeta(beta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `(1 − β)·a + β·b`.
    pub fn mix(self, health: f64, eco: f64) -> f64 {
        (1.0 - self.0) * health + self.0 * eco
    }
}

impl TryFrom<f64> for MixingWeight {
    type Error = CostError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        MixingWeight::new(v)
    }
}

impl From<MixingWeight> for f64 {
    fn from(w: MixingWeight) -> f64 {
        w.0
    }
}

/// Upper bounds on cumulative costs; `None` means unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deaths: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_eco: Option<f64>,
}

impl ConstraintSpec {
    pub fn none() -> Self {
        ConstraintSpec::default()
    }

    pub fn is_empty(&self) -> bool {
        self.max_deaths.is_none() && self.max_eco.is_none()
    }
}

/// Per-constraint violation flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub health: bool,
    pub eco: bool,
}

impl Violations {
    pub fn as_costs(&self) -> [f64; 2] {
        [f64::from(u8::from(self.health)), f64::from(u8::from(self.eco))]
    }
}

/// Costs of one weekly transition plus the running totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostSnapshot {
    /// Deaths this step.
    pub health_step: f64,
    /// GDP loss this step (€).
    pub eco_step: f64,
    pub health_cum: f64,
    pub eco_cum: f64,
    /// Scaled, β-mixed step cost.
    pub aggregated: f64,
}

/// Deaths caused by one transition: `death_rate · ΔR`.
pub fn health_cost_step(
    prev: &SeirahState,
    next: &SeirahState,
    params: &SeirahParams,
) -> Result<f64, CostError> {
    let delta = next.r - prev.r;
    if delta < 0.0 {
        return Err(CostError::NegativeRemovedIncrement {
            prev: prev.r,
            next: next.r,
        });
    }
    Ok(params.death_rate * delta)
}

/// Employed population in millions: `(1 − u)·λ·(N − G)` with `G = I + H + deaths`.
pub fn workforce(state: &SeirahState, params: &SeirahParams, u: f64, econ: &EconParams) -> f64 {
    let unavailable = state.i + state.h + params.death_rate * state.r;
    (1.0 - u) * econ.lambda_rate * (params.n - unavailable) / 1e6
}

/// Cobb-Douglas output (million €/year) for `labor` million workers.
pub fn gdp(labor: f64, econ: &EconParams) -> f64 {
    econ.a_tech * econ.k0.powf(econ.gamma_k) * labor.max(0.0).powf(1.0 - econ.gamma_k)
}

/// GDP shortfall accrued over the given daily states (€).
///
/// Each day contributes `max(0, Y0 − F(L))/365` million €.
pub fn economic_cost_step(
    daily: &[SeirahState],
    params: &SeirahParams,
    lockdown: bool,
    econ: &EconParams,
) -> f64 {
    let u = econ.unemployment(lockdown);
    let millions: f64 = daily
        .iter()
        .map(|s| (econ.y0 - gdp(workforce(s, params, u, econ), econ)).max(0.0) / DAYS_PER_YEAR)
        .sum();
    millions * EUROS_PER_MILLION
}

/// `(1 − β)·health/scales.health + β·eco/scales.eco`.
pub fn aggregate(health_step: f64, eco_step: f64, beta: MixingWeight, scales: &CostScales) -> f64 {
    beta.mix(scales.scale_health(health_step), scales.scale_eco(eco_step))
}

/// Flags each cumulative cost that strictly exceeds its bound.
pub fn check_constraints(health_cum: f64, eco_cum: f64, spec: &ConstraintSpec) -> Violations {
    Violations {
        health: spec.max_deaths.is_some_and(|m| health_cum > m),
        eco: spec.max_eco.is_some_and(|m| eco_cum > m),
    }
}
