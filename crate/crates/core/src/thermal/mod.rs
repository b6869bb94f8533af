//! Indoor thermal dynamics: linear and GP one-step models, metering history,
//! and the setpoint-holding baseline power.

mod gp;
mod history;
mod linear;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gp::{fit_gp, GpConfig, GpHyper, GpThermal, NoiseSpec, GP_INPUT_DIM};
pub use history::{MeteringHistory, MeteringRow};
pub use linear::{fit_linear, LinearThermal};

use crate::error::{Error, Result};

/// A fitted one-step model `s_t = f(s_{t-1}, s_out_{t-1}, u_t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThermalModel {
    Linear(LinearThermal),
    Gp(Box<GpThermal>),
}

/// Partial derivatives of one model step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepJacobian {
    pub ds_prev: f64,
    pub ds_out: f64,
    pub du: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePower {
    pub u: f64,
    /// The unconstrained solution lay outside `[0, u_max]` (or no root was bracketed).
    pub clamped: bool,
}

impl From<LinearThermal> for ThermalModel {
    fn from(m: LinearThermal) -> Self {
        ThermalModel::Linear(m)
    }
}

impl From<GpThermal> for ThermalModel {
    fn from(m: GpThermal) -> Self {
        ThermalModel::Gp(Box::new(m))
    }
}

impl ThermalModel {
    /// Point prediction of the next indoor temperature.
    #[inline]
    pub fn step(&self, s_prev: f64, s_out_prev: f64, u: f64) -> f64 {
        match self {
            ThermalModel::Linear(m) => m.step(s_prev, s_out_prev, u),
            ThermalModel::Gp(m) => m.mean_at(&[s_prev, s_out_prev, u]),
        }
    }

    pub fn step_with_jacobian(&self, s_prev: f64, s_out_prev: f64, u: f64) -> (f64, StepJacobian) {
        match self {
            ThermalModel::Linear(m) => (
                m.step(s_prev, s_out_prev, u),
                StepJacobian {
                    ds_prev: 1.0 - m.kappa,
                    ds_out: m.kappa,
                    du: m.eta,
                },
            ),
            ThermalModel::Gp(m) => {
                let (v, g) = m.mean_with_grad(&[s_prev, s_out_prev, u]);
                (
                    v,
                    StepJacobian {
                        ds_prev: g[0],
                        ds_out: g[1],
                        du: g[2],
                    },
                )
            }
        }
    }

    /// Prediction with its variance (zero for the linear model).
    pub fn predict(&self, s_prev: f64, s_out_prev: f64, u: f64) -> Result<(f64, f64)> {
        crate::error::ensure_finite(&[s_prev, s_out_prev, u], "thermal query")?;
        Ok(match self {
            ThermalModel::Linear(m) => (m.step(s_prev, s_out_prev, u), 0.0),
            ThermalModel::Gp(m) => m.predict(&[s_prev, s_out_prev, u]),
        })
    }

    /// Power that keeps the indoor temperature at `s_set` for one step.
    pub fn baseline_power(&self, s_set: f64, s_out: f64, u_max: f64) -> BaselinePower {
        match self {
            ThermalModel::Linear(m) => {
                let u = m.holding_power(s_set, s_out);
                clamp_flagged(u, u_max)
            }
            ThermalModel::Gp(m) => {
                let h = |u: f64| m.mean_at(&[s_set, s_out, u]) - s_set;
                bracketed_root(h, u_max)
            }
        }
    }
}

fn clamp_flagged(u: f64, u_max: f64) -> BaselinePower {
    if u < 0.0 {
        BaselinePower {
            u: 0.0,
            clamped: true,
        }
    } else if u > u_max {
        BaselinePower {
            u: u_max,
            clamped: true,
        }
    } else {
        BaselinePower { u, clamped: false }
    }
}

fn bracketed_root(h: impl Fn(f64) -> f64, u_max: f64) -> BaselinePower {
    let (mut a, mut b) = (0.0, u_max);
    let (mut fa, fb) = (h(a), h(b));
    if fa == 0.0 {
        return BaselinePower {
            u: a,
            clamped: false,
        };
    }
    if fb == 0.0 {
        return BaselinePower {
            u: b,
            clamped: false,
        };
    }
    if fa.signum() == fb.signum() {
        let u = if fa.abs() <= fb.abs() { a } else { b };
        return BaselinePower { u, clamped: true };
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = h(mid);
        if fm == 0.0 || b - a <= 1e-13 {
            return BaselinePower {
                u: mid,
                clamped: false,
            };
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    BaselinePower {
        u: 0.5 * (a + b),
        clamped: false,
    }
}

/// On-disk form written by `fit-thermal`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalModelFile {
    #[serde(flatten)]
    pub model: ThermalModel,
    /// SHA-256 of the training history CSV.
    pub training_digest: String,
    pub step_seconds: i64,
    pub training_rows: usize,
}

impl ThermalModelFile {
    pub fn new(model: ThermalModel, hist: &MeteringHistory) -> Self {
        Self {
            model,
            training_digest: hist.digest(),
            step_seconds: hist.step_seconds,
            training_rows: hist.len(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(Error::from)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
