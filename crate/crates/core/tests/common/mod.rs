//! Random small planning instances shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use dr_optout::behavior::{BehaviorParams, FactorScaling};
use dr_optout::domain::{EventConfig, ExogenousSeries};
use dr_optout::objective::PlanContext;
use dr_optout::thermal::{LinearThermal, ThermalModel};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Parameters that keep stay-in probabilities in a non-trivial range.
pub fn random_theta<R: Rng>(rng: &mut R) -> [f64; 6] {
    let n = Normal::new(0.0, 0.1).unwrap();
    [
        rng.random_range(1.0..6.0),
        rng.random_range(-4.0..-0.5),
        rng.random_range(-2.0..0.0),
        rng.random_range(0.0..1.0),
        n.sample(rng),
        n.sample(rng),
    ]
}

pub fn random_exo<R: Rng>(rng: &mut R, steps: usize) -> ExogenousSeries {
    let mean = rng.random_range(86.0..98.0);
    ExogenousSeries {
        s_out: (0..=steps)
            .map(|_| mean + rng.random_range(-1.0..1.0))
            .collect(),
        price: (0..steps).map(|_| rng.random::<f64>()).collect(),
    }
}

pub fn random_thermal<R: Rng>(rng: &mut R) -> ThermalModel {
    LinearThermal::new(rng.random_range(0.08..0.12), rng.random_range(-1.6..-1.2))
        .unwrap()
        .into()
}

pub fn context(
    theta: [f64; 6],
    thermal: ThermalModel,
    cfg: EventConfig,
    exo: ExogenousSeries,
) -> PlanContext {
    PlanContext::event_start(
        BehaviorParams { theta },
        FactorScaling::default(),
        Arc::new(thermal),
        Arc::new(cfg),
        Arc::new(exo),
    )
    .unwrap()
}

pub fn random_context<R: Rng>(rng: &mut R, steps: usize) -> PlanContext {
    let cfg = EventConfig {
        steps,
        rho: rng.random_range(0.0..2.0),
        ..EventConfig::default()
    };
    let theta = random_theta(rng);
    let thermal = random_thermal(rng);
    let exo = random_exo(rng, steps);
    context(theta, thermal, cfg, exo)
}

/// A feasible plan drawn as a random walk inside the limits.
pub fn random_plan<R: Rng>(rng: &mut R, ctx: &PlanContext) -> Vec<f64> {
    let lim = ctx.limits();
    let mut prev = lim.u_prev;
    (0..ctx.horizon())
        .map(|_| {
            let lo = (prev - lim.du_max).max(0.0);
            let hi = (prev + lim.du_max).min(lim.u_max);
            prev = rng.random_range(lo..=hi);
            prev
        })
        .collect()
}

/// A plan strictly inside the box and drift limits.
pub fn interior_plan<R: Rng>(rng: &mut R, ctx: &PlanContext) -> Vec<f64> {
    let lim = ctx.limits();
    let margin = 0.05;
    let mut prev = lim.u_prev.clamp(margin, lim.u_max - margin);
    (0..ctx.horizon())
        .map(|_| {
            let lo = (prev - 0.8 * lim.du_max).max(margin);
            let hi = (prev + 0.8 * lim.du_max).min(lim.u_max - margin);
            prev = rng.random_range(lo..=hi);
            prev
        })
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

/// Exhaustive search over feasible two-step plans: a 21 x 21 grid over the
/// feasible set, then a few zoomed 21 x 21 grids around the incumbent.
pub fn grid_oracle_t2(ctx: &PlanContext, f: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(ctx.horizon(), 2);
    let lim = ctx.limits();
    let range1 = (
        (lim.u_prev - lim.du_max).max(0.0),
        (lim.u_prev + lim.du_max).min(lim.u_max),
    );
    let mut window = (range1, (0.0, lim.u_max));
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for round in 0..5 {
        let ((a1, b1), (a2, b2)) = window;
        for u1 in linspace(a1, b1, 21) {
            let lo = (u1 - lim.du_max).max(0.0).max(a2);
            let hi = (u1 + lim.du_max).min(lim.u_max).min(b2);
            if lo > hi {
                continue;
            }
            for u2 in linspace(lo, hi, 21) {
                let v = f(&[u1, u2]);
                if v < best.0 {
                    best = (v, [u1, u2]);
                }
            }
        }
        let w = 2.0 * (range1.1 - range1.0).max(lim.u_max) / 20f64.powi(round + 1);
        let [c1, c2] = best.1;
        window = (
            ((c1 - w).max(range1.0), (c1 + w).min(range1.1)),
            ((c2 - w).max(0.0), (c2 + w).min(lim.u_max)),
        );
    }
    best.0
}

/// Local tracking objective minimized over `l >= 0` in closed form for a fixed plan.
pub fn soc2_profile(ctx: &PlanContext, u: &[f64], lambda: &[f64]) -> f64 {
    use dr_optout::objective::{evaluate, rollout_unchecked, Objective};
    let ro = rollout_unchecked(ctx, u);
    let dt = ctx.cfg.dt;
    let l: Vec<f64> = (0..u.len())
        .map(|k| (ctx.u_set[k] + ro.q(k) * (u[k] - ctx.u_set[k]) - lambda[k] / (2.0 * dt)).max(0.0))
        .collect();
    evaluate(ctx, u, Objective::Soc2 { l: &l, lambda }, None, None)
}
