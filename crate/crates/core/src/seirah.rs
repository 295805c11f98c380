//! SEIRAH compartmental dynamics.
//!
//! Compartments: susceptible (S), exposed (E), ascertained infectious (I),
//! removed (R), non-ascertained infectious (A) and hospitalized (H). Deaths
//! are bookkeeping inside R (`death_rate · R`), so the system stays closed.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index order used by every `[f64; 6]` compartment array in this module.
pub const COMPARTMENTS: [&str; 6] = ["S", "E", "I", "R", "A", "H"];

/// Default RK4 step (days).
pub const DEFAULT_DT: f64 = 0.25;

/// Negative excursions below `-NEGATIVE_TOLERANCE · N` are reported as solver failures.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("compartment {compartment} went negative ({value}) at t = {t} days; step size too coarse")]
    NegativeCompartment {
        compartment: &'static str,
        value: f64,
        t: f64,
    },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid horizon {0} days")]
    InvalidHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirahParams {
    /// Transmission rate of ascertained cases before lockdown (per day).
    pub b0: f64,
    /// Ascertainment fraction.
    pub r: f64,
    /// Transmissibility of A relative to I.
    pub alpha: f64,
    /// Latent period (days).
    #[serde(rename = "De")]
    pub de: f64,
    /// Infectious period (days).
    #[serde(rename = "Di")]
    pub di: f64,
    /// Delay from I onset to hospitalization (days).
    #[serde(rename = "Dq")]
    pub dq: f64,
    /// Hospitalization period (days).
    #[serde(rename = "Dh")]
    pub dh: f64,
    /// Population size.
    #[serde(rename = "N")]
    pub n: f64,
    /// Log-scale transmission modifiers for the 1st, 2nd, 3rd and later lockdown weeks.
    pub lockdown_effects: [f64; 4],
    #[serde(default = "default_death_rate")]
    pub death_rate: f64,
}

fn default_death_rate() -> f64 {
    0.005
}

impl SeirahParams {
    /// Ile-de-France estimates used throughout the project.
    pub fn table1() -> Self {
        SeirahParams {
            b0: 2.23,
            r: 0.043,
            alpha: 0.55,
            de: 5.1,
            di: 2.3,
            dq: 0.36,
            dh: 30.0,
            n: 12_278_210.0,
            lockdown_effects: [-0.11, -0.50, -1.36, -1.46],
            death_rate: 0.005,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let durations = [("De", self.de), ("Di", self.di), ("Dq", self.dq), ("Dh", self.dh)];
        for (name, d) in durations {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} must be > 0, got {d}")));
            }
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(ModelError::InvalidParams(format!("r must be in [0,1], got {}", self.r)));
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            return Err(ModelError::InvalidParams(format!("N must be > 0, got {}", self.n)));
        }
        if !(self.b0 >= 0.0 && self.alpha >= 0.0) {
            return Err(ModelError::InvalidParams("b0 and alpha must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.death_rate) {
            return Err(ModelError::InvalidParams("death_rate must be in [0,1]".into()));
        }
        if self.lockdown_effects.windows(2).any(|w| w[1] > w[0]) {
            return Err(ModelError::InvalidParams(
                "lockdown_effects must be non-increasing".into(),
            ));
        }
        Ok(())
    }

    /// Transmission rate at a staircase level under the default five-level encoding.
    pub fn transmission_rate(&self, level: TransmissionLevel) -> f64 {
        Staircase::FiveLevels.transmission_rate(self, level)
    }
}

/// Initial compartment counts at epidemic onset. `S0` is derived as `N` minus the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCounts {
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
}

impl Default for InitialCounts {
    fn default() -> Self {
        InitialCounts {
            e0: 5004.0,
            i0: 16.0,
            r0: 0.0,
            a0: 356.0,
            h0: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeirahState {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "H")]
    pub h: f64,
    /// Elapsed simulation time since onset (days).
    pub t: f64,
}

impl SeirahState {
    pub fn from_counts(params: &SeirahParams, init: &InitialCounts) -> Self {
        SeirahState {
            s: params.n - init.e0 - init.i0 - init.r0 - init.a0 - init.h0,
            e: init.e0,
            i: init.i0,
            r: init.r0,
            a: init.a0,
            h: init.h0,
            t: 0.0,
        }
    }

    pub fn compartments(&self) -> [f64; 6] {
        [self.s, self.e, self.i, self.r, self.a, self.h]
    }

    fn with_compartments(c: [f64; 6], t: f64) -> Self {
        SeirahState {
            s: c[0],
            e: c[1],
            i: c[2],
            r: c[3],
            a: c[4],
            h: c[5],
            t,
        }
    }

    pub fn total(&self) -> f64 {
        self.compartments().iter().sum()
    }

    pub fn deaths(&self, params: &SeirahParams) -> f64 {
        params.death_rate * self.r
    }
}

/// Time derivatives `(dS, dE, dI, dR, dA, dH)` per day.
///
/// Every flow leaves one compartment and enters another, so the six rates sum to zero.
pub fn derivative(state: &SeirahState, params: &SeirahParams, b: f64) -> [f64; 6] {
    rates(&state.compartments(), params, b)
}

fn rates(c: &[f64; 6], p: &SeirahParams, b: f64) -> [f64; 6] {
    let [s, e, i, _r, a, h] = *c;
    let infection = b * s * (i + p.alpha * a) / p.n;
    let latent_exit = e / p.de;
    let ascertained = p.r * latent_exit;
    let unascertained = latent_exit - ascertained;
    let hospitalized = i / p.dq;
    let recovered_i = i / p.di;
    let recovered_a = a / p.di;
    let discharged = h / p.dh;
    [
        -infection,
        infection - latent_exit,
        ascertained - hospitalized - recovered_i,
        recovered_i + recovered_a + discharged,
        unascertained - recovered_a,
        hospitalized - discharged,
    ]
}

/// Classical fixed-step Runge-Kutta integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rk4 {
    pub dt: f64,
}

impl Default for Rk4 {
    fn default() -> Self {
        Rk4 { dt: DEFAULT_DT }
    }
}

impl Rk4 {
    pub fn new(dt: f64) -> Self {
        Rk4 { dt }
    }

    /// Advances `state` by `horizon` days at constant transmission rate `b`.
    ///
    /// The horizon is split into `ceil(horizon / dt)` equal steps, so whole-day
    /// horizons use exactly `dt` when it divides one day.
    pub fn integrate(
        &self,
        state: &SeirahState,
        params: &SeirahParams,
        b: f64,
        horizon: f64,
    ) -> Result<SeirahState, ModelError> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(ModelError::InvalidHorizon(horizon));
        }
        let steps = (horizon / self.dt - 1e-9).ceil().max(0.0) as usize;
        if steps == 0 {
            return Ok(*state);
        }
        let h = horizon / steps as f64;
        let floor = -NEGATIVE_TOLERANCE * params.n;
        let mut y = state.compartments();
        let mut t = state.t;
        for _ in 0..steps {
            y = rk4_step(&y, params, b, h);
            t += h;
            for (k, v) in y.iter_mut().enumerate() {
                if *v < 0.0 {
                    if *v < floor {
                        return Err(ModelError::NegativeCompartment {
                            compartment: COMPARTMENTS[k],
                            value: *v,
                            t,
                        });
                    }
                    *v = 0.0;
                }
            }
        }
        Ok(SeirahState::with_compartments(y, t))
    }
}

fn rk4_step(y: &[f64; 6], p: &SeirahParams, b: f64, h: f64) -> [f64; 6] {
    let shifted = |base: &[f64; 6], k: &[f64; 6], scale: f64| {
        let mut out = *base;
        for j in 0..6 {
            out[j] += scale * k[j];
        }
        out
    };
    let k1 = rates(y, p, b);
    let k2 = rates(&shifted(y, &k1, 0.5 * h), p, b);
    let k3 = rates(&shifted(y, &k2, 0.5 * h), p, b);
    let k4 = rates(&shifted(y, &k3, h), p, b);
    let mut out = *y;
    for j in 0..6 {
        out[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    out
}

/// Convenience wrapper around [`Rk4::integrate`] with the default step.
pub fn integrate(
    state: &SeirahState,
    params: &SeirahParams,
    b: f64,
    horizon: f64,
) -> Result<SeirahState, ModelError> {
    Rk4::default().integrate(state, params, b, horizon)
}

/// Builds the onset state and free-runs it (no lockdown) for `onset_delay` days.
pub fn initial_state(
    params: &SeirahParams,
    init: &InitialCounts,
    onset_delay: f64,
    solver: &Rk4,
) -> Result<SeirahState, ModelError> {
    let onset = SeirahState::from_counts(params, init);
    solver.integrate(&onset, params, params.b0, onset_delay)
}

/// Daily snapshots of an unmitigated epidemic, `days + 1` states including the start.
pub fn run_free(
    start: &SeirahState,
    params: &SeirahParams,
    days: usize,
    solver: &Rk4,
) -> Result<Vec<SeirahState>, ModelError> {
    let mut out = Vec::with_capacity(days + 1);
    out.push(*start);
    let mut s = *start;
    for _ in 0..days {
        s = solver.integrate(&s, params, params.b0, 1.0)?;
        out.push(s);
    }
    Ok(out)
}

/// Position on the lockdown staircase: 0 is no effect, higher is deeper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransmissionLevel(pub u8);

/// How staircase levels map to lockdown effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Staircase {
    /// Levels 0..=4: baseline plus one level per lockdown-effect modifier.
    #[default]
    FiveLevels,
    /// Levels 0..=3: baseline, first, second, then the "thereafter" effect (third-week effect unused).
    FourLevels,
}

impl Staircase {
    pub fn max_level(self) -> u8 {
        match self {
            Staircase::FiveLevels => 4,
            Staircase::FourLevels => 3,
        }
    }

    /// Log-scale effect applied at `level`; 0 at the baseline.
    pub fn effect(self, params: &SeirahParams, level: TransmissionLevel) -> f64 {
        let level = level.0.min(self.max_level()) as usize;
        match (self, level) {
            (_, 0) => 0.0,
            (Staircase::FiveLevels, l) => params.lockdown_effects[l - 1],
            (Staircase::FourLevels, 3) => params.lockdown_effects[3],
            (Staircase::FourLevels, l) => params.lockdown_effects[l - 1],
        }
    }

    /// `b = b0 · exp(effect(level))`.
    pub fn transmission_rate(self, params: &SeirahParams, level: TransmissionLevel) -> f64 {
        params.b0 * self.effect(params, level).exp()
    }

    /// One week of lockdown moves one level deeper, one week without moves one level back.
    pub fn update_level(self, level: TransmissionLevel, lockdown: bool) -> TransmissionLevel {
        if lockdown {
            TransmissionLevel((level.0 + 1).min(self.max_level()))
        } else {
            TransmissionLevel(level.0.saturating_sub(1))
        }
    }
}

/// Staircase update under the default five-level encoding.
pub fn update_level(level: TransmissionLevel, lockdown: bool) -> TransmissionLevel {
    Staircase::FiveLevels.update_level(level, lockdown)
}

/// Standard deviations for each sampled parameter. `N` and the death rate are not sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamStdevs {
    pub b0: f64,
    pub r: f64,
    pub alpha: f64,
    #[serde(rename = "De")]
    pub de: f64,
    #[serde(rename = "Di")]
    pub di: f64,
    #[serde(rename = "Dq")]
    pub dq: f64,
    #[serde(rename = "Dh")]
    pub dh: f64,
    pub lockdown_effects: [f64; 4],
}

impl ParamStdevs {
    pub fn zero() -> Self {
        ParamStdevs {
            b0: 0.0,
            r: 0.0,
            alpha: 0.0,
            de: 0.0,
            di: 0.0,
            dq: 0.0,
            dh: 0.0,
            lockdown_effects: [0.0; 4],
        }
    }

    /// Every stdev set to `fraction · |mean|`.
    pub fn relative(means: &SeirahParams, fraction: f64) -> Self {
        let f = |x: f64| fraction * x.abs();
        ParamStdevs {
            b0: f(means.b0),
            r: f(means.r),
            alpha: f(means.alpha),
            de: f(means.de),
            di: f(means.di),
            dq: f(means.dq),
            dh: f(means.dh),
            lockdown_effects: means.lockdown_effects.map(f),
        }
    }
}

/// Independent truncated normals around `means`, plus a uniform onset delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDistribution {
    pub means: SeirahParams,
    pub stdevs: ParamStdevs,
    /// Inclusive range of the delay between onset and the first decision (days).
    pub onset_delay_range: [f64; 2],
}

/// Sampled durations are floored at this fraction of their mean.
const MIN_DURATION_FRACTION: f64 = 0.01;

impl ModelDistribution {
    /// 10%-of-mean stdevs on every sampled parameter, delay uniform on [0, 21] days.
    pub fn standard(means: SeirahParams) -> Self {
        ModelDistribution {
            means,
            stdevs: ParamStdevs::relative(&means, 0.1),
            onset_delay_range: [0.0, 21.0],
        }
    }

    /// Point mass on `means` with no onset delay.
    pub fn degenerate(means: SeirahParams) -> Self {
        ModelDistribution {
            means,
            stdevs: ParamStdevs::zero(),
            onset_delay_range: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.means.validate()?;
        let s = &self.stdevs;
        let all = [s.b0, s.r, s.alpha, s.de, s.di, s.dq, s.dh]
            .into_iter()
            .chain(s.lockdown_effects);
        for v in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams("stdevs must be finite and >= 0".into()));
            }
        }
        let [lo, hi] = self.onset_delay_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "onset delay range [{lo}, {hi}] is invalid"
            )));
        }
        Ok(())
    }

    /// Draws one model instance and its onset delay.
    ///
    /// Values outside the validity domain are clamped onto it (durations floored
    /// at 1% of their mean, `r` into [0,1], effects to <= 0 and kept non-increasing).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (SeirahParams, f64) {
        let m = &self.means;
        let s = &self.stdevs;
        let mut draw = |mean: f64, sd: f64| {
            let z: f64 = rng.sample(StandardNormal);
            mean + sd * z
        };
        let duration = |x: f64, mean: f64| x.max(MIN_DURATION_FRACTION * mean);

        let b0 = draw(m.b0, s.b0).max(0.0);
        let r = draw(m.r, s.r).clamp(0.0, 1.0);
        let alpha = draw(m.alpha, s.alpha).max(0.0);
        let de = duration(draw(m.de, s.de), m.de);
        let di = duration(draw(m.di, s.di), m.di);
        let dq = duration(draw(m.dq, s.dq), m.dq);
        let dh = duration(draw(m.dh, s.dh), m.dh);
        let mut effects = [0.0; 4];
        let mut ceiling = 0.0_f64;
        for k in 0..4 {
            let v = draw(m.lockdown_effects[k], s.lockdown_effects[k]).min(ceiling);
            effects[k] = v;
            ceiling = v;
        }

        let [lo, hi] = self.onset_delay_range;
        let u: f64 = rng.random();
        let delay = lo + (hi - lo) * u;

        let params = SeirahParams {
            b0,
            r,
            alpha,
            de,
            di,
            dq,
            dh,
            n: m.n,
            lockdown_effects: effects,
            death_rate: m.death_rate,
        };
        (params, delay)
    }
}

/// Free function form of [`ModelDistribution::sample`].
pub fn sample_model<R: Rng + ?Sized>(dist: &ModelDistribution, rng: &mut R) -> (SeirahParams, f64) {
    dist.sample(rng)
}
