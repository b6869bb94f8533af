//! Logistic stay-in model, the absorbing opt-out state machine, factor
//! dynamics during an event, and synthetic ground-truth generation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{EnvFactors, EventConfig, ExogenousSeries, FACTOR_DIM, THETA_DIM};
use crate::error::{Error, Result};
use crate::thermal::ThermalModel;

/// Logistic parameter `theta = (alpha, beta)` acting on normalized factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorParams {
    pub theta: [f64; THETA_DIM],
}

impl BehaviorParams {
    pub fn new(theta: [f64; THETA_DIM]) -> Result<Self> {
        crate::error::ensure_finite(&theta, "behavior parameters")?;
        Ok(Self { theta })
    }

    #[inline]
    pub fn logit(&self, w_hat: &[f64; THETA_DIM]) -> f64 {
        self.theta.iter().zip(w_hat).map(|(a, b)| a * b).sum()
    }
}

/// `1 / (1 + exp(-x))`, split at zero so neither branch overflows.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(x)`, finite for any finite `x`.
#[inline]
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Stay-in probability for a normalized augmented factor vector.
#[inline]
pub fn stay_in_prob(theta: &BehaviorParams, w_hat: &[f64; THETA_DIM]) -> f64 {
    logistic(theta.logit(w_hat))
}

/// Affine factor normalization `(raw - offset) / scale`, shared by the
/// simulator and the learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorScaling {
    pub offset: [f64; FACTOR_DIM],
    pub scale: [f64; FACTOR_DIM],
}

impl Default for FactorScaling {
    /// Temperatures relative to 72 °F in units of 10 °F, discomfort per
    /// 100 °F²·h, credit per 10 units, price as is.
    fn default() -> Self {
        Self {
            offset: [72.0, 0.0, 0.0, 72.0, 0.0],
            scale: [10.0, 100.0, 10.0, 10.0, 1.0],
        }
    }
}

impl FactorScaling {
    pub fn validate(&self) -> Result<()> {
        crate::error::ensure_finite(&self.offset, "factor offsets")?;
        crate::error::ensure_finite(&self.scale, "factor scales")?;
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("factor scales must be positive".into()));
        }
        Ok(())
    }

    /// Normalized augmented vector `(1, w_norm)`.
    #[inline]
    pub fn augment(&self, w: &EnvFactors) -> [f64; THETA_DIM] {
        let raw = w.as_array();
        let mut out = [1.0; THETA_DIM];
        for k in 0..FACTOR_DIM {
            out[k + 1] = (raw[k] - self.offset[k]) / self.scale[k];
        }
        out
    }

    #[inline]
    pub fn normalize_one(&self, k: usize, raw: f64) -> f64 {
        (raw - self.offset[k]) / self.scale[k]
    }
}

/// Within-event participation status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptOutState {
    pub z: bool,
    pub opt_out_step: Option<usize>,
}

impl Default for OptOutState {
    fn default() -> Self {
        Self {
            z: true,
            opt_out_step: None,
        }
    }
}

/// Draws `z_t` given `z_{t-1}` and the stay-in probability; opting out is absorbing.
pub fn transition<R: Rng + ?Sized>(
    rng: &mut R,
    state: OptOutState,
    p: f64,
    step: usize,
) -> OptOutState {
    if !state.z {
        return state;
    }
    let stay = rng.random::<f64>() < p;
    if stay {
        state
    } else {
        OptOutState {
            z: false,
            opt_out_step: Some(step),
        }
    }
}

/// State carried by the factor recursion between steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    /// Last completed step (0 before the event).
    pub t: usize,
    pub s: f64,
    pub d: f64,
    /// `dt * sum |u_set - u|` so far (kWh).
    pub adjustment: f64,
}

impl FactorState {
    /// Event start: indoor temperature at the setpoint, nothing accumulated.
    pub fn initial(cfg: &EventConfig) -> Self {
        Self {
            t: 0,
            s: cfg.s_set,
            d: 0.0,
            adjustment: 0.0,
        }
    }
}

/// Advances the indoor temperature, discomfort and incentive by one step and
/// returns the new state with the raw factors at the new step.
pub fn step_factors(
    state: &FactorState,
    u: f64,
    u_set: f64,
    cfg: &EventConfig,
    exo: &ExogenousSeries,
    model: &ThermalModel,
) -> (FactorState, EnvFactors) {
    let t = state.t + 1;
    let s = model.step(state.s, exo.outdoor(t - 1), u);
    let excess = cfg.comfort.excess(s, cfg.s_set);
    let d = state.d + cfg.dt * excess * excess;
    let adjustment = state.adjustment + cfg.dt * (u_set - u).abs();
    let next = FactorState {
        t,
        s,
        d,
        adjustment,
    };
    let w = EnvFactors {
        s,
        d,
        r: cfg.incentive(t, adjustment),
        s_out: exo.outdoor(t),
        price: exo.price_at(t),
    };
    (next, w)
}

/// A box of raw factor values used as an acceptance scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBox {
    pub lo: [f64; FACTOR_DIM],
    pub hi: [f64; FACTOR_DIM],
}

/// Ranges for ground-truth parameters and the scenarios they must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub scaling: FactorScaling,
    /// Uniform range of the intercept.
    pub alpha: (f64, f64),
    /// Uniform ranges of the indoor-temperature, discomfort and incentive weights.
    pub beta_s: (f64, f64),
    pub beta_d: (f64, f64),
    pub beta_r: (f64, f64),
    /// Standard deviation of the (zero-mean) outdoor-temperature and price weights.
    pub beta_out_sd: f64,
    pub beta_price_sd: f64,
    /// Conditions under which a customer should almost surely stay in.
    pub comfortable: FactorBox,
    pub p_comfortable_min: f64,
    /// Conditions under which a customer should almost surely leave.
    pub stressed: FactorBox,
    pub p_stressed_max: f64,
    pub max_draws: usize,
}

impl BehaviorProfile {
    /// Scenario boxes derived from an event configuration: the comfortable box
    /// holds the setpoint with no adjustment; the stressed box sits at
    /// `stress_temp` after a linear ramp up to it over the whole event.
    pub fn for_event(cfg: &EventConfig, outdoor: (f64, f64), stress_temp: f64) -> Self {
        let horizon = cfg.steps as f64;
        let credit_lo = cfg.r0 + cfg.r1 * cfg.u_max;
        let credit_hi = cfg.r0 + cfg.r1 * cfg.u_max * horizon;
        let comfortable = FactorBox {
            lo: [cfg.s_set, 0.0, credit_lo, outdoor.0, 0.0],
            hi: [cfg.s_set, 0.0, credit_hi, outdoor.1, 1.0],
        };
        let gap = stress_temp - cfg.s_set;
        let ramp_d: f64 = (1..=cfg.steps)
            .map(|k| {
                let e = gap * k as f64 / horizon;
                cfg.dt * e * e
            })
            .sum();
        let max_adjust = cfg.dt * horizon * cfg.u_max;
        let stressed = FactorBox {
            lo: [stress_temp, ramp_d, credit_hi, outdoor.0, 0.0],
            hi: [
                stress_temp,
                ramp_d,
                credit_hi + cfg.r2 * max_adjust,
                outdoor.1,
                1.0,
            ],
        };
        Self {
            scaling: FactorScaling::default(),
            alpha: (5.0, 9.0),
            beta_s: (-5.0, -1.0),
            beta_d: (-2.0, 0.0),
            beta_r: (0.0, 1.0),
            beta_out_sd: 0.1,
            beta_price_sd: 0.1,
            comfortable,
            p_comfortable_min: 0.995,
            stressed,
            p_stressed_max: 0.05,
            max_draws: 100_000,
        }
    }

    /// Smallest and largest logit of `theta` over a factor box.
    pub fn logit_range(&self, theta: &BehaviorParams, b: &FactorBox) -> (f64, f64) {
        let mut lo = theta.theta[0];
        let mut hi = theta.theta[0];
        for k in 0..FACTOR_DIM {
            let w = theta.theta[k + 1];
            let a = w * self.scaling.normalize_one(k, b.lo[k]);
            let c = w * self.scaling.normalize_one(k, b.hi[k]);
            lo += a.min(c);
            hi += a.max(c);
        }
        (lo, hi)
    }

    /// Both probability anchors and the sign constraints hold.
    pub fn accepts(&self, theta: &BehaviorParams) -> bool {
        let t = &theta.theta;
        if t[1] > 0.0 || t[2] > 0.0 || t[3] < 0.0 {
            return false;
        }
        let (comfort_lo, _) = self.logit_range(theta, &self.comfortable);
        let (_, stress_hi) = self.logit_range(theta, &self.stressed);
        logistic(comfort_lo) >= self.p_comfortable_min && logistic(stress_hi) <= self.p_stressed_max
    }
}

/// Rejection-samples a ground-truth parameter that satisfies the profile.
pub fn gen_ground_truth<R: Rng + ?Sized>(
    rng: &mut R,
    profile: &BehaviorProfile,
) -> Result<BehaviorParams> {
    profile.scaling.validate()?;
    let out =
        Normal::new(0.0, profile.beta_out_sd.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let price = Normal::new(0.0, profile.beta_price_sd.max(0.0))
        .map_err(|e| Error::Config(e.to_string()))?;
    let uniform = |rng: &mut R, (a, b): (f64, f64)| if a < b { rng.random_range(a..b) } else { a };
    for _ in 0..profile.max_draws {
        let theta = BehaviorParams {
            theta: [
                uniform(rng, profile.alpha),
                uniform(rng, profile.beta_s),
                uniform(rng, profile.beta_d),
                uniform(rng, profile.beta_r),
                out.sample(rng),
                price.sample(rng),
            ],
        };
        if profile.accepts(&theta) {
            return Ok(theta);
        }
    }
    Err(Error::GenerationBudget(profile.max_draws))
}
