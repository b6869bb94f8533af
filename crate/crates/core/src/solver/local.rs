//! Multi-start projected-gradient solves of the local SOC-1 and SOC-2 problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pg::{minimize, PgSettings};
use super::projection::project_in_place;
use crate::domain::Trajectory;
use crate::error::{Error, Result};
use crate::objective::{evaluate, Objective, PlanContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub pg: PgSettings,
    /// Total number of starts, including the baseline and zero plans.
    pub starts: usize,
    pub seed: u64,
    /// Starts for repeated solves of the same problem under new prices,
    /// beginning from the previous solution. Zero keeps the full set.
    pub resolve_starts: usize,
    /// Iteration cap for those repeated solves. Zero keeps `pg.max_iters`.
    pub resolve_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            pg: PgSettings::default(),
            starts: 5,
            seed: 0x5eed,
            resolve_starts: 0,
            resolve_max_iters: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.pg;
        if self.starts == 0 || s.max_iters == 0 || s.max_backtracks == 0 || s.stall_patience == 0 {
            return Err(Error::Config("solver counts must be positive".into()));
        }
        if !(s.armijo_c > 0.0 && s.armijo_c < 1.0 && s.backtrack > 0.0 && s.backtrack < 1.0) {
            return Err(Error::Config(
                "line-search constants must lie in (0, 1)".into(),
            ));
        }
        if !(s.stall_tol > 0.0 && s.step_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn with_starts(&self, starts: usize) -> Self {
        Self {
            starts,
            ..self.clone()
        }
    }
}

/// Where the winning start came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Baseline,
    Zero,
    Warm,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub traj: Trajectory,
    pub value: f64,
    pub start_index: usize,
    pub start_kind: StartKind,
    pub iterations: usize,
    /// Every start ended in a failed line search.
    pub warning: bool,
}

fn start_points(
    ctx: &PlanContext,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Vec<(StartKind, Vec<f64>)> {
    let h = ctx.horizon();
    let lim = ctx.limits();
    let mut starts = vec![
        (StartKind::Baseline, ctx.u_set.clone()),
        (StartKind::Zero, vec![0.0; h]),
    ];
    if let Some(w) = warm.filter(|w| w.len() == h) {
        starts.push((StartKind::Warm, w.to_vec()));
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ (ctx.start.t as u64).wrapping_mul(0x9E37_79B9));
    while starts.len() < cfg.starts.max(2) {
        let u = (0..h).map(|_| rng.random_range(0.0..=lim.u_max)).collect();
        starts.push((StartKind::Random, u));
    }
    starts.truncate(cfg.starts.max(1));
    for (_, u) in starts.iter_mut() {
        project_in_place(u, &lim);
    }
    starts
}

fn pick_best(
    results: Vec<(StartKind, super::pg::PgOutcome)>,
    split: Option<usize>,
) -> LocalSolution {
    let warning = results.iter().all(|(_, o)| o.line_search_failed);
    let mut best = 0;
    for (i, (_, o)) in results.iter().enumerate() {
        if o.value < results[best].1.value {
            best = i;
        }
    }
    let (kind, out) = results.into_iter().nth(best).expect("at least one start");
    let traj = match split {
        None => Trajectory::power(out.x),
        Some(h) => Trajectory::tracking(out.x[..h].to_vec(), out.x[h..].to_vec()),
    };
    LocalSolution {
        traj,
        value: out.value,
        start_index: best,
        start_kind: kind,
        iterations: out.iterations,
        warning,
    }
}

/// Minimizes the expected-energy objective over feasible power plans.
pub fn solve_local_soc1(
    ctx: &PlanContext,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> LocalSolution {
    let lim = ctx.limits();
    let results = start_points(ctx, cfg, warm)
        .into_iter()
        .map(|(kind, x0)| {
            let out = minimize(
                &x0,
                |u, g| evaluate(ctx, u, Objective::Soc1, Some(g), None),
                |u: &mut [f64]| project_in_place(u, &lim),
                &cfg.pg,
            );
            (kind, out)
        })
        .collect();
    pick_best(results, None)
}

/// Minimizer of the local objective over `l >= 0` for fixed `u`.
pub fn best_tracking(ctx: &PlanContext, u: &[f64], lambda: &[f64]) -> Vec<f64> {
    let q = crate::objective::rollout_unchecked(ctx, u).log_q;
    let dt = ctx.cfg.dt;
    (0..u.len())
        .map(|k| {
            let us = ctx.u_set[k];
            (us + q[k].exp() * (u[k] - us) - lambda[k] / (2.0 * dt)).max(0.0)
        })
        .collect()
}

/// Joint minimization over `(u, l)` of the local tracking objective with dual prices.
pub fn solve_local_soc2(
    ctx: &PlanContext,
    lambda: &[f64],
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<LocalSolution> {
    let h = ctx.horizon();
    if lambda.len() != h {
        return Err(Error::Length {
            what: "dual prices",
            expected: h,
            actual: lambda.len(),
        });
    }
    crate::error::ensure_finite(lambda, "dual prices")?;
    Ok(solve_soc2_from(
        ctx,
        lambda,
        cfg,
        start_points(ctx, cfg, warm),
    ))
}

/// Re-solves the tracking problem under new prices from a previous plan,
/// using `cfg.resolve_starts` starts with the previous plan first.
pub fn resolve_local_soc2(
    ctx: &PlanContext,
    lambda: &[f64],
    cfg: &SolverConfig,
    previous: &[f64],
) -> Result<LocalSolution> {
    if cfg.resolve_starts == 0 {
        return solve_local_soc2(ctx, lambda, cfg, Some(previous));
    }
    let h = ctx.horizon();
    if lambda.len() != h || previous.len() != h {
        return Err(Error::Length {
            what: "dual prices",
            expected: h,
            actual: lambda.len().min(previous.len()),
        });
    }
    crate::error::ensure_finite(lambda, "dual prices")?;
    let mut starts = vec![(StartKind::Warm, previous.to_vec())];
    starts.extend(start_points(ctx, cfg, None));
    starts.truncate(cfg.resolve_starts);
    let lim = ctx.limits();
    for (_, u) in starts.iter_mut() {
        project_in_place(u, &lim);
    }
    let mut cfg = cfg.clone();
    if cfg.resolve_max_iters > 0 {
        cfg.pg.max_iters = cfg.resolve_max_iters;
    }
    Ok(solve_soc2_from(ctx, lambda, &cfg, starts))
}

fn solve_soc2_from(
    ctx: &PlanContext,
    lambda: &[f64],
    cfg: &SolverConfig,
    starts: Vec<(StartKind, Vec<f64>)>,
) -> LocalSolution {
    let h = ctx.horizon();
    let lim = ctx.limits();
    let results = starts
        .into_iter()
        .map(|(kind, u0)| {
            let mut x0 = u0.clone();
            x0.extend(best_tracking(ctx, &u0, lambda));
            let out = minimize(
                &x0,
                |x, g| {
                    let (u, l) = x.split_at(h);
                    let (gu, gl) = g.split_at_mut(h);
                    evaluate(ctx, u, Objective::Soc2 { l, lambda }, Some(gu), Some(gl))
                },
                |x: &mut [f64]| {
                    let (u, l) = x.split_at_mut(h);
                    project_in_place(u, &lim);
                    l.iter_mut().for_each(|v| *v = v.max(0.0));
                },
                &cfg.pg,
            );
            (kind, out)
        })
        .collect();
    pick_best(results, Some(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{BehaviorParams, FactorScaling};
    use crate::domain::{check_feasible, EventConfig, ExogenousSeries};
    use crate::thermal::{LinearThermal, ThermalModel};
    use std::sync::Arc;

    fn ctx(theta: [f64; 6], steps: usize, rho: f64) -> PlanContext {
        let cfg = EventConfig {
            steps,
            rho,
            ..EventConfig::default()
        };
        let exo = ExogenousSeries {
            s_out: vec![92.0; steps + 1],
            price: vec![0.5; steps],
        };
        let model: ThermalModel = LinearThermal::new(0.1, -1.4).unwrap().into();
        PlanContext::event_start(
            BehaviorParams { theta },
            FactorScaling::default(),
            Arc::new(model),
            Arc::new(cfg),
            Arc::new(exo),
        )
        .unwrap()
    }

    #[test]
    fn no_risk_means_minimum_power() {
        // Intercept 40 keeps p at 1 to machine precision wherever u goes.
        let c = ctx([40.0, 0.0, 0.0, 0.0, 0.0, 0.0], 6, 0.0);
        let sol = solve_local_soc1(&c, &SolverConfig::default(), None);
        let mut lower = c.u_prev;
        for &u in &sol.traj.u {
            lower = (lower - 1.0).max(0.0);
            assert!((u - lower).abs() < 1e-6, "{:?}", sol.traj.u);
        }
    }

    #[test]
    fn huge_penalty_runs_at_full_cooling() {
        // Staying in only depends on comfort here, so cooler is always better.
        let c = ctx([3.0, -8.0, -1.0, 0.0, 0.0, 0.0], 6, 1e6);
        let sol = solve_local_soc1(&c, &SolverConfig::default(), None);
        let mut upper = c.u_prev;
        for (u, us) in sol.traj.u.iter().zip(&c.u_set) {
            upper = (upper + 1.0).min(2.0);
            assert!(
                *u >= *us - 1e-9 && (u - upper).abs() < 1e-4,
                "{:?} vs {:?}",
                sol.traj.u,
                c.u_set
            );
        }
    }

    #[test]
    fn solutions_are_feasible_and_deterministic() {
        let c = ctx([6.0, -3.0, -1.0, 0.5, 0.0, 0.0], 8, 0.5);
        let a = solve_local_soc1(&c, &SolverConfig::default(), None);
        let b = solve_local_soc1(&c, &SolverConfig::default(), None);
        assert_eq!(a, b);
        assert!(check_feasible(&a.traj, &c.limits(), 8)
            .unwrap()
            .is_feasible());
        let lambda = vec![0.1; 8];
        let s2 = solve_local_soc2(&c, &lambda, &SolverConfig::default(), None).unwrap();
        assert!(check_feasible(&s2.traj, &c.limits(), 8)
            .unwrap()
            .is_feasible());
    }

    #[test]
    fn tracking_follows_power_without_prices() {
        let c = ctx([40.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1, 0.3);
        let sol = solve_local_soc2(&c, &[0.0], &SolverConfig::default(), None).unwrap();
        let l = sol.traj.l.as_ref().unwrap();
        assert!((l[0] - sol.traj.u[0]).abs() < 1e-6);
        assert!((sol.value + 0.3).abs() < 1e-9);
    }

    #[test]
    fn high_price_drives_tracking_to_zero() {
        let c = ctx([6.0, -3.0, -1.0, 0.5, 0.0, 0.0], 4, 0.5);
        let sol = solve_local_soc2(&c, &[1e3; 4], &SolverConfig::default(), None).unwrap();
        assert!(sol.traj.l.unwrap().iter().all(|&v| v == 0.0));
    }
}
