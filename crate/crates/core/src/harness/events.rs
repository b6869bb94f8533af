//! Per-event configuration and exogenous conditions, derived from the master
//! seed and the event index alone.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{EventConfig, ExogenousSeries, Mode};
use crate::error::{Error, Result};
use crate::online::{Customer, EventSpec};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventGenerator {
    /// Template for every event; `target` is filled in for SOC-2.
    pub base: EventConfig,
    /// Range of the event's mean outdoor temperature (°F).
    pub outdoor_mean: (f64, f64),
    /// Amplitude of the within-event outdoor drift (°F).
    pub outdoor_swing: f64,
    /// Per-customer share of the aggregate target (kW); `L_t = N * Unif(lo, hi)`.
    pub target_share: (f64, f64),
}

impl Default for EventGenerator {
    fn default() -> Self {
        Self {
            base: EventConfig::default(),
            outdoor_mean: (88.0, 96.0),
            outdoor_swing: 2.0,
            target_share: (0.9, 1.1),
        }
    }
}

impl EventGenerator {
    pub fn exogenous(&self, master: u64, event: u64) -> ExogenousSeries {
        let steps = self.base.steps;
        let mut rng = stream(master, event, u64::MAX, Purpose::Exogenous);
        let (lo, hi) = self.outdoor_mean;
        let mean = if lo < hi {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let s_out = (0..=steps)
            .map(|t| {
                let x = t as f64 / steps.max(1) as f64;
                mean + self.outdoor_swing * (std::f64::consts::PI * x + phase).sin()
            })
            .collect();
        let price = (0..steps).map(|_| rng.random::<f64>()).collect();
        ExogenousSeries { s_out, price }
    }

    pub fn config(&self, master: u64, event: u64, n_customers: usize) -> Result<EventConfig> {
        let mut cfg = self.base.clone();
        if cfg.mode == Mode::Soc2 {
            let mut rng = stream(master, event, u64::MAX, Purpose::Target);
            let (lo, hi) = self.target_share;
            if !(0.0..=hi).contains(&lo) {
                return Err(Error::Config(format!(
                    "invalid target share range {lo}..{hi}"
                )));
            }
            let n = n_customers as f64;
            cfg.target = Some(
                (0..cfg.steps)
                    .map(|_| {
                        n * if lo < hi {
                            rng.random_range(lo..hi)
                        } else {
                            lo
                        }
                    })
                    .collect(),
            );
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self, master: u64, event: u64, customers: &[Customer]) -> Result<EventSpec> {
        Ok(EventSpec {
            cfg: Arc::new(self.config(master, event, customers.len())?),
            exo: Arc::new(self.exogenous(master, event)),
            master_seed: master,
            event,
        })
    }
}
