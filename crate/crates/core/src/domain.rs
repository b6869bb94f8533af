//! Shared value types: event configuration, environmental factors, exogenous
//! series and trajectories, plus the feasibility predicate for AC power plans.
//!
//! Time convention: a state indexed `t` is the value at the end of interval
//! `[t-1, t]`, and the control `u_t` acts over that same interval. Steps run
//! `1..=T`; index 0 is the pre-event operating point.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Number of environmental factors.
pub const FACTOR_DIM: usize = 5;
/// Length of the augmented factor vector and of the behavior parameter.
pub const THETA_DIM: usize = FACTOR_DIM + 1;

/// Absolute slack accepted by [`check_feasible`] on box and rate constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Minimize expected AC energy.
    Soc1,
    /// Track an aggregate power target.
    Soc2,
}

/// Which side of the setpoint causes discomfort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComfortSide {
    #[default]
    Cooling,
    Heating,
}

impl ComfortSide {
    /// Positive part of the comfort violation.
    #[inline]
    pub fn excess(self, s: f64, s_set: f64) -> f64 {
        match self {
            ComfortSide::Cooling => (s - s_set).max(0.0),
            ComfortSide::Heating => (s_set - s).max(0.0),
        }
    }

    /// Derivative of [`excess`](Self::excess) with respect to `s`.
    #[inline]
    pub fn excess_slope(self, s: f64, s_set: f64) -> f64 {
        match self {
            ComfortSide::Cooling if s > s_set => 1.0,
            ComfortSide::Heating if s < s_set => -1.0,
            _ => 0.0,
        }
    }
}

/// Parameters of one DR event as seen by one customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    /// Number of control steps `T`.
    pub steps: usize,
    /// Step length in hours.
    pub dt: f64,
    /// Rated AC power (kW).
    pub u_max: f64,
    /// Drift limit between consecutive steps (kW).
    pub du_max: f64,
    /// Customer setpoint (°F).
    pub s_set: f64,
    /// Opt-out penalty coefficient.
    pub rho: f64,
    /// Base participation credit.
    pub r0: f64,
    /// Stay-in bonus per kW of capacity per step.
    pub r1: f64,
    /// Reimbursement per kWh of load adjustment.
    pub r2: f64,
    pub mode: Mode,
    /// Aggregate tracking target in kW, one entry per step (SOC-2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    /// Power at step 0. Defaults to the baseline power of step 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_init: Option<f64>,
    pub comfort: ComfortSide,
}

impl Default for EventConfig {
    /// Three-hour event at 15-minute resolution with a 2 kW / 1 kW-per-step unit.
    fn default() -> Self {
        Self {
            steps: 12,
            dt: 0.25,
            u_max: 2.0,
            du_max: 1.0,
            s_set: 72.0,
            rho: 0.5,
            r0: 1.0,
            r1: 0.1,
            r2: 1.0,
            mode: Mode::Soc1,
            target: None,
            u_init: None,
            comfort: ComfortSide::Cooling,
        }
    }
}

impl EventConfig {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.dt,
            self.u_max,
            self.du_max,
            self.s_set,
            self.rho,
            self.r0,
            self.r1,
            self.r2,
        ];
        ensure_finite(&scalars, "event configuration")?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.u_max <= 0.0 || self.du_max <= 0.0 {
            return Err(Error::Config("u_max and du_max must be positive".into()));
        }
        if self.r0 < 0.0 || self.r1 < 0.0 || self.r2 < 0.0 {
            return Err(Error::Config(
                "incentive coefficients must be non-negative".into(),
            ));
        }
        if self.rho < 0.0 {
            return Err(Error::Config("rho must be non-negative".into()));
        }
        if let Some(u0) = self.u_init {
            if !u0.is_finite() || u0 < 0.0 || u0 > self.u_max {
                return Err(Error::Config(format!(
                    "u_init {u0} outside [0, {}]",
                    self.u_max
                )));
            }
        }
        match (&self.mode, &self.target) {
            (Mode::Soc2, None) => Err(Error::Config("SOC-2 requires a target trajectory".into())),
            (Mode::Soc2, Some(l)) if l.len() != self.steps => Err(Error::Length {
                what: "target",
                expected: self.steps,
                actual: l.len(),
            }),
            (_, Some(l)) => ensure_finite(l, "target"),
            _ => Ok(()),
        }
    }

    /// Incentive credit at absolute step `t` given the accumulated adjustment
    /// `dt * sum |u_set - u|` (kWh).
    #[inline]
    pub fn incentive(&self, t: usize, adjustment_kwh: f64) -> f64 {
        self.r0 + self.r1 * self.u_max * t as f64 + self.r2 * adjustment_kwh
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("event config serializes")
    }
}

/// The five environmental factors at one step, in raw physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvFactors {
    /// Indoor temperature (°F).
    pub s: f64,
    /// Accumulated thermal discomfort (°F²·h).
    pub d: f64,
    /// Incentive credit.
    pub r: f64,
    /// Outdoor temperature (°F).
    pub s_out: f64,
    /// Normalized electricity price in `[0, 1]`.
    pub price: f64,
}

impl EnvFactors {
    /// Factor order is fixed: `(s, d, r, s_out, price)`.
    pub fn as_array(&self) -> [f64; FACTOR_DIM] {
        [self.s, self.d, self.r, self.s_out, self.price]
    }

    /// `(1, s, d, r, s_out, price)`.
    pub fn augmented(&self) -> [f64; THETA_DIM] {
        [1.0, self.s, self.d, self.r, self.s_out, self.price]
    }

    pub fn from_array(a: [f64; FACTOR_DIM]) -> Self {
        Self {
            s: a[0],
            d: a[1],
            r: a[2],
            s_out: a[3],
            price: a[4],
        }
    }
}

pub fn assemble_env_factors(s: f64, d: f64, r: f64, s_out: f64, price: f64) -> Result<EnvFactors> {
    ensure_finite(&[s, d, r, s_out, price], "environmental factors")?;
    if d < 0.0 {
        return Err(Error::Config(format!(
            "discomfort must be non-negative, got {d}"
        )));
    }
    if !(0.0..=1.0).contains(&price) {
        return Err(Error::Config(format!(
            "price must lie in [0, 1], got {price}"
        )));
    }
    Ok(EnvFactors {
        s,
        d,
        r,
        s_out,
        price,
    })
}

/// Outdoor temperature (steps `0..=T`) and price (steps `1..=T`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSeries {
    pub s_out: Vec<f64>,
    pub price: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExogenousRow {
    step: usize,
    outdoor_f: f64,
    price: Option<f64>,
}

impl ExogenousSeries {
    pub fn steps(&self) -> usize {
        self.price.len()
    }

    /// Outdoor temperature at absolute step `t`.
    #[inline]
    pub fn outdoor(&self, t: usize) -> f64 {
        self.s_out[t]
    }

    /// Price at absolute step `t >= 1`.
    #[inline]
    pub fn price_at(&self, t: usize) -> f64 {
        self.price[t - 1]
    }

    pub fn validate(&self, cfg: &EventConfig) -> Result<()> {
        if self.s_out.len() != cfg.steps + 1 {
            return Err(Error::Length {
                what: "outdoor temperature series",
                expected: cfg.steps + 1,
                actual: self.s_out.len(),
            });
        }
        if self.price.len() != cfg.steps {
            return Err(Error::Length {
                what: "price series",
                expected: cfg.steps,
                actual: self.price.len(),
            });
        }
        ensure_finite(&self.s_out, "outdoor temperature")?;
        ensure_finite(&self.price, "price")?;
        if self.price.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("prices must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// CSV with header `step,outdoor_f,price`; the step-0 row leaves price empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (step, &outdoor_f) in self.s_out.iter().enumerate() {
            let price = if step == 0 {
                None
            } else {
                Some(self.price[step - 1])
            };
            wtr.serialize(ExogenousRow {
                step,
                outdoor_f,
                price,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut s_out = Vec::new();
        let mut price = Vec::new();
        for (i, row) in rdr.deserialize::<ExogenousRow>().enumerate() {
            let row = row?;
            if row.step != i {
                return Err(Error::Config(format!(
                    "exogenous rows out of order at step {}",
                    row.step
                )));
            }
            s_out.push(row.outdoor_f);
            if i > 0 {
                price.push(
                    row.price
                        .ok_or_else(|| Error::Config(format!("missing price at step {i}")))?,
                );
            }
        }
        if s_out.len() < 2 {
            return Err(Error::Config(
                "exogenous series needs at least steps 0 and 1".into(),
            ));
        }
        Ok(Self { s_out, price })
    }
}

/// A planned power schedule and, for SOC-2, the local tracking target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn power(u: Vec<f64>) -> Self {
        Self { u, l: None }
    }

    pub fn tracking(u: Vec<f64>, l: Vec<f64>) -> Self {
        Self { u, l: Some(l) }
    }
}

/// Box and drift limits for one customer, anchored at the power applied just
/// before the first planned step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLimits {
    pub u_max: f64,
    pub du_max: f64,
    pub u_prev: f64,
}

impl PowerLimits {
    pub fn new(cfg: &EventConfig, u_prev: f64) -> Self {
        Self {
            u_max: cfg.u_max,
            du_max: cfg.du_max,
            u_prev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// `u_t` outside `[0, u_max]`.
    Box { step: usize, value: f64 },
    /// `|u_t - u_{t-1}| > du_max`.
    Rate { step: usize, change: f64 },
    /// Negative local tracking target.
    NegativeTarget { step: usize, value: f64 },
}

/// Outcome of [`check_feasible`]; steps are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Feasible,
    Violated(Violation),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Checks box and drift limits on `traj.u` and non-negativity of `traj.l`,
/// reporting the first violation in step order.
pub fn check_feasible(
    traj: &Trajectory,
    limits: &PowerLimits,
    horizon: usize,
) -> Result<Feasibility> {
    if traj.u.len() != horizon {
        return Err(Error::Length {
            what: "trajectory",
            expected: horizon,
            actual: traj.u.len(),
        });
    }
    if let Some(l) = &traj.l {
        if l.len() != horizon {
            return Err(Error::Length {
                what: "tracking trajectory",
                expected: horizon,
                actual: l.len(),
            });
        }
    }
    ensure_finite(&traj.u, "trajectory")?;
    let mut prev = limits.u_prev;
    for (i, &u) in traj.u.iter().enumerate() {
        if u < -FEASIBILITY_TOL || u > limits.u_max + FEASIBILITY_TOL {
            return Ok(Feasibility::Violated(Violation::Box {
                step: i + 1,
                value: u,
            }));
        }
        let change = u - prev;
        if change.abs() > limits.du_max + FEASIBILITY_TOL {
            return Ok(Feasibility::Violated(Violation::Rate {
                step: i + 1,
                change,
            }));
        }
        prev = u;
    }
    if let Some(l) = &traj.l {
        if let Some((i, &v)) = l.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Ok(Feasibility::Violated(Violation::NegativeTarget {
                step: i + 1,
                value: v,
            }));
        }
    }
    Ok(Feasibility::Feasible)
}
