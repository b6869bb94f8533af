use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MeteringHistory;
use crate::error::{Error, Result};

/// `s_t = s_{t-1} + kappa (s_out_{t-1} - s_{t-1}) + eta u_t`.
///
/// `kappa` is per step, so a model is tied to the step length it was fitted at.
/// Negative `eta` means cooling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearThermal {
    pub kappa: f64,
    pub eta: f64,
}

impl LinearThermal {
    pub fn new(kappa: f64, eta: f64) -> Result<Self> {
        if !(kappa.is_finite() && eta.is_finite()) {
            return Err(Error::NonFinite("linear thermal coefficients"));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::Config(format!(
                "kappa must lie in (0, 1), got {kappa}"
            )));
        }
        if eta == 0.0 {
            return Err(Error::Config("eta must be non-zero".into()));
        }
        Ok(Self { kappa, eta })
    }

    #[inline]
    pub fn step(&self, s_prev: f64, s_out_prev: f64, u: f64) -> f64 {
        s_prev + self.kappa * (s_out_prev - s_prev) + self.eta * u
    }

    /// Power that holds `s_set` against `s_out`, before clamping.
    #[inline]
    pub fn holding_power(&self, s_set: f64, s_out: f64) -> f64 {
        -self.kappa * (s_out - s_set) / self.eta
    }
}

/// Least-squares fit of the one-step-ahead model on consecutive rows.
pub fn fit_linear(hist: &MeteringHistory) -> Result<LinearThermal> {
    if hist.len() < 3 {
        return Err(Error::Fit(format!(
            "linear fit needs at least 3 rows, got {}",
            hist.len()
        )));
    }
    let n = hist.len() - 1;
    let mut a = DMatrix::zeros(n, 2);
    let mut b = DVector::zeros(n);
    for (i, (x, s_next)) in hist.transitions().enumerate() {
        a[(i, 0)] = x[1] - x[0];
        a[(i, 1)] = x[2];
        b[i] = s_next - x[0];
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-10 {
        return Err(Error::Fit("regressors are rank deficient".into()));
    }
    let coef = svd.solve(&b, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    LinearThermal::new(coef[0], coef[1]).map_err(|e| Error::Fit(e.to_string()))
}
