//! Synthetic metering data standing in for real smart-plug histories.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::thermal::{LinearThermal, MeteringHistory, MeteringRow};

/// Seconds per row of generated histories (15 minutes).
pub const HISTORY_STEP_SECONDS: i64 = 900;

/// Simulates the linear model under a noisy thermostat that chases a
/// wandering setpoint, with diurnal outdoor temperature, and adds Gaussian
/// noise to the recorded indoor temperature.
pub fn gen_synthetic_history<R: Rng + ?Sized>(
    rng: &mut R,
    truth: &LinearThermal,
    steps: usize,
    noise_sd: f64,
    u_max: f64,
) -> Result<MeteringHistory> {
    if steps < 10 {
        return Err(Error::Config(format!(
            "history needs at least 10 steps, got {steps}"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) || !(u_max > 0.0) {
        return Err(Error::Config(
            "noise must be non-negative and u_max positive".into(),
        ));
    }
    let obs_noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let jitter = Normal::new(0.0, 0.3).expect("valid");
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let outdoor_at = |i: usize, rng: &mut R| {
        let hour = i as f64 * HISTORY_STEP_SECONDS as f64 / 3600.0;
        90.0 + 6.0 * (std::f64::consts::TAU * hour / 24.0 + phase).sin() + jitter.sample(rng)
    };

    let mut s = 72.0;
    let mut setpoint = 72.0;
    let mut out = outdoor_at(0, rng);
    let mut rows = vec![MeteringRow {
        indoor_f: s + obs_noise.sample(rng),
        outdoor_f: out,
        ac_kw: 0.0,
    }];
    for i in 1..steps {
        if rng.random::<f64>() < 0.05 {
            setpoint = rng.random_range(70.0..78.0);
        }
        let hold = truth.holding_power(setpoint, out)
            + (s - setpoint) * truth.kappa.max(0.05) / truth.eta.abs();
        let u = (hold + rng.random_range(-0.4..0.4)).clamp(0.0, u_max);
        s = truth.step(s, out, u);
        out = outdoor_at(i, rng);
        rows.push(MeteringRow {
            indoor_f: s + obs_noise.sample(rng),
            outdoor_f: out,
            ac_kw: u,
        });
    }
    MeteringHistory::new(0, HISTORY_STEP_SECONDS, rows)
}
