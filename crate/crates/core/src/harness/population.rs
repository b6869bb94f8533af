//! Synthetic customer populations: thermal coefficients and ground-truth
//! behavior parameters.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{gen_ground_truth, BehaviorParams, BehaviorProfile};
use crate::domain::{EventConfig, THETA_DIM};
use crate::error::{Error, Result};
use crate::online::Customer;
use crate::rng::{stream, Purpose};
use crate::thermal::LinearThermal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub n: usize,
    /// Uniform range of the per-step ambient coupling.
    pub kappa: (f64, f64),
    /// Uniform range of the power gain (negative for cooling).
    pub eta: (f64, f64),
    /// Outdoor temperatures the behavior anchors must hold over.
    pub outdoor: (f64, f64),
    /// Indoor temperature at which customers should almost surely leave.
    pub stress_temp: f64,
    /// Event parameters the behavior anchors are evaluated under.
    pub event: EventConfig,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n: 20,
            kappa: (0.08, 0.12),
            eta: (-1.6, -1.2),
            outdoor: (85.0, 100.0),
            stress_temp: 90.0,
            event: EventConfig::default(),
        }
    }
}

impl PopulationConfig {
    pub fn profile(&self) -> BehaviorProfile {
        BehaviorProfile::for_event(&self.event, self.outdoor, self.stress_temp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerSpec {
    pub id: usize,
    pub thermal: LinearThermal,
    pub theta_star: [f64; THETA_DIM],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub seed: u64,
    pub profile: BehaviorProfile,
    pub customers: Vec<CustomerSpec>,
}

fn uniform<R: Rng>(rng: &mut R, (a, b): (f64, f64)) -> f64 {
    if a < b {
        rng.random_range(a..b)
    } else {
        a
    }
}

/// Draws `cfg.n` customers; customer `i` uses its own seeded stream.
pub fn gen_customers(seed: u64, cfg: &PopulationConfig) -> Result<Population> {
    if cfg.n == 0 {
        return Err(Error::Config(
            "population needs at least one customer".into(),
        ));
    }
    let profile = cfg.profile();
    let customers = (0..cfg.n)
        .map(|id| {
            let mut rng = stream(seed, 0, id as u64, Purpose::Population);
            let thermal =
                LinearThermal::new(uniform(&mut rng, cfg.kappa), uniform(&mut rng, cfg.eta))?;
            let theta = gen_ground_truth(&mut rng, &profile)?;
            Ok(CustomerSpec {
                id,
                thermal,
                theta_star: theta.theta,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Population {
        seed,
        profile,
        customers,
    })
}

impl Population {
    pub fn customers(&self) -> Vec<Customer> {
        self.customers
            .iter()
            .map(|c| Customer {
                id: c.id,
                thermal: Arc::new(c.thermal.into()),
                theta_star: BehaviorParams {
                    theta: c.theta_star,
                },
            })
            .collect()
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            customers: self.customers.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
