//! Known-parameter oracle plans, expected-cost evaluation under the true
//! parameters, per-event regret, and setpoint-raise baselines.

use serde::{Deserialize, Serialize};

use crate::behavior::FactorScaling;
use crate::domain::{Mode, Trajectory};
use crate::error::{Error, Result};
use crate::objective::{
    evaluate, expected_energy_reduction, rollout_unchecked, Objective, PlanContext,
};
use crate::online::{Customer, EventSpec};
use crate::solver::{minimize, project_feasible, project_in_place, solve_local_soc1, SolverConfig};
use crate::thermal::ThermalModel;

/// Planning context for a whole event under the customer's true parameters.
pub fn truth_context(
    customer: &Customer,
    spec: &EventSpec,
    scaling: FactorScaling,
) -> Result<PlanContext> {
    PlanContext::event_start(
        customer.theta_star,
        scaling,
        customer.thermal.clone(),
        spec.cfg.clone(),
        spec.exo.clone(),
    )
}

/// Splits `target` across customers to minimize `sum_i (l_i - c_i)^2` with
/// `l_i >= 0` and `sum_i l_i = target`, i.e. a Euclidean projection onto a
/// scaled simplex. A negative target yields all zeros.
pub fn allocate(c: &[f64], target: f64) -> Vec<f64> {
    if c.is_empty() {
        return Vec::new();
    }
    if target <= 0.0 {
        return vec![0.0; c.len()];
    }
    let mut sorted = c.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let candidate = (cum - target) / (k + 1) as f64;
        if k + 1 == sorted.len() || sorted[k + 1] <= candidate {
            shift = candidate;
            break;
        }
    }
    c.iter().map(|v| (v - shift).max(0.0)).collect()
}

/// Tracking targets minimizing the coupled objective for fixed plans: per
/// step, the projection of each customer's expected power onto the targets
/// that sum to `L_t`.
fn optimal_tracking(ctxs: &[PlanContext], plans: &[&[f64]], target: &[f64]) -> Vec<Vec<f64>> {
    let steps = target.len();
    let centers: Vec<Vec<f64>> = ctxs
        .iter()
        .zip(plans)
        .map(|(ctx, u)| {
            let ro = rollout_unchecked(ctx, u);
            (0..steps)
                .map(|k| ctx.u_set[k] + ro.q(k) * (u[k] - ctx.u_set[k]))
                .collect()
        })
        .collect();
    let mut l = vec![vec![0.0; steps]; ctxs.len()];
    for t in 0..steps {
        let c: Vec<f64> = centers.iter().map(|row| row[t]).collect();
        for (i, v) in allocate(&c, target[t]).into_iter().enumerate() {
            l[i][t] = v;
        }
    }
    l
}

/// Coupled tracking objective with optimal targets; with `grad`, also its
/// gradient in the plans (the targets are a strictly convex inner
/// minimization, so their sensitivity drops out).
fn coupled_value(
    ctxs: &[PlanContext],
    plans: &[&[f64]],
    target: &[f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let l = optimal_tracking(ctxs, plans, target);
    let zero = vec![0.0; target.len()];
    let h = target.len();
    let mut grad = grad;
    let mut total = 0.0;
    for (i, ((ctx, u), l)) in ctxs.iter().zip(plans).zip(&l).enumerate() {
        let g = grad.as_deref_mut().map(|g| &mut g[i * h..(i + 1) * h]);
        total += evaluate(ctx, u, Objective::Soc2 { l, lambda: &zero }, g, None);
    }
    total
}

fn contexts(
    customers: &[Customer],
    spec: &EventSpec,
    scaling: FactorScaling,
) -> Result<Vec<PlanContext>> {
    customers
        .iter()
        .map(|c| truth_context(c, spec, scaling))
        .collect()
}

/// Expected cost of full-event plans under the true parameters.
///
/// SOC-1 sums the per-customer expected-energy objectives. SOC-2 sums the
/// per-customer tracking objectives with the local targets chosen optimally
/// for the given plans, so the value does not depend on how far a price
/// iteration converged.
pub fn expected_cost(
    customers: &[Customer],
    spec: &EventSpec,
    scaling: FactorScaling,
    plans: &[Vec<f64>],
) -> Result<f64> {
    if plans.len() != customers.len() {
        return Err(Error::Length {
            what: "plans",
            expected: customers.len(),
            actual: plans.len(),
        });
    }
    let ctxs = contexts(customers, spec, scaling)?;
    match spec.cfg.mode {
        Mode::Soc1 => Ok(ctxs
            .iter()
            .zip(plans)
            .map(|(ctx, u)| evaluate(ctx, u, Objective::Soc1, None, None))
            .sum()),
        Mode::Soc2 => {
            let target = spec
                .cfg
                .target
                .as_ref()
                .ok_or_else(|| Error::Config("SOC-2 requires a target".into()))?;
            let views: Vec<&[f64]> = plans.iter().map(|p| p.as_slice()).collect();
            Ok(coupled_value(&ctxs, &views, target, None))
        }
    }
}

/// Joint projected-gradient descent on the coupled tracking objective over
/// all customers' plans at once.
fn refine_coupled(
    ctxs: &[PlanContext],
    target: &[f64],
    start: &[Vec<f64>],
    pg: &crate::solver::PgSettings,
) -> (Vec<Vec<f64>>, f64) {
    let h = target.len();
    let x0: Vec<f64> = start.iter().flatten().copied().collect();
    let limits: Vec<_> = ctxs.iter().map(|c| c.limits()).collect();
    let out = minimize(
        &x0,
        |x, g| {
            let views: Vec<&[f64]> = x.chunks(h).collect();
            coupled_value(ctxs, &views, target, Some(g))
        },
        |x: &mut [f64]| {
            for (block, lim) in x.chunks_mut(h).zip(&limits) {
                project_in_place(block, lim);
            }
        },
        pg,
    );
    (out.x.chunks(h).map(|c| c.to_vec()).collect(), out.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub plans: Vec<Vec<f64>>,
    pub value: f64,
    pub warnings: usize,
}

/// Full-event plans under the true parameters.
///
/// SOC-1 solves each customer with twice the online start count. SOC-2
/// descends the coupled objective jointly from the baseline plans and from
/// an even split of the target, keeping the better result.
pub fn oracle_control(
    customers: &[Customer],
    spec: &EventSpec,
    scaling: FactorScaling,
    solver: &SolverConfig,
) -> Result<OracleResult> {
    let ctxs = contexts(customers, spec, scaling)?;
    let (plans, warnings) = match spec.cfg.mode {
        Mode::Soc1 => {
            use rayon::prelude::*;
            let solver = solver.with_starts(solver.starts * 2);
            let sols: Vec<_> = ctxs
                .par_iter()
                .map(|ctx| solve_local_soc1(ctx, &solver, None))
                .collect();
            let warnings = sols.iter().filter(|s| s.warning).count();
            (
                sols.into_iter().map(|s| s.traj.u).collect::<Vec<_>>(),
                warnings,
            )
        }
        Mode::Soc2 => {
            let target = spec
                .cfg
                .target
                .clone()
                .ok_or_else(|| Error::Config("SOC-2 requires a target".into()))?;
            let n = ctxs.len().max(1) as f64;
            let baseline: Vec<Vec<f64>> = ctxs.iter().map(|c| c.u_set.clone()).collect();
            let split: Vec<Vec<f64>> = ctxs
                .iter()
                .map(|c| {
                    let mut u: Vec<f64> = target.iter().map(|l| l / n).collect();
                    project_in_place(&mut u, &c.limits());
                    u
                })
                .collect();
            let mut best: Option<(Vec<Vec<f64>>, f64)> = None;
            for start in [baseline, split] {
                let (plans, value) = refine_coupled(&ctxs, &target, &start, &solver.pg);
                if best.as_ref().is_none_or(|(_, v)| value < *v) {
                    best = Some((plans, value));
                }
            }
            (best.expect("two starts").0, 0)
        }
    };
    let value = expected_cost(customers, spec, scaling, &plans)?;
    Ok(OracleResult {
        plans,
        value,
        warnings,
    })
}

/// Sum of expected load reductions (kWh) under the true parameters.
pub fn expected_reduction(
    customers: &[Customer],
    spec: &EventSpec,
    scaling: FactorScaling,
    plans: &[Vec<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for (c, u) in customers.iter().zip(plans) {
        total += expected_energy_reduction(&truth_context(c, spec, scaling)?, u);
    }
    Ok(total)
}

/// Plan that holds `s_set + delta_f` instead of `s_set`, made feasible.
pub fn baseline_setpoint_raise(
    delta_f: f64,
    spec: &EventSpec,
    thermal: &ThermalModel,
) -> Result<Trajectory> {
    if !(delta_f >= 0.0 && delta_f.is_finite()) {
        return Err(Error::Config(format!(
            "setpoint raise must be non-negative, got {delta_f}"
        )));
    }
    let cfg = &*spec.cfg;
    let raw: Vec<f64> = (1..=cfg.steps)
        .map(|t| {
            thermal
                .baseline_power(cfg.s_set + delta_f, spec.exo.outdoor(t - 1), cfg.u_max)
                .u
        })
        .collect();
    let u0 = cfg.u_init.unwrap_or_else(|| {
        thermal
            .baseline_power(cfg.s_set, spec.exo.outdoor(0), cfg.u_max)
            .u
    });
    let lim = crate::domain::PowerLimits::new(cfg, u0);
    Ok(Trajectory::power(project_feasible(&raw, &lim)))
}

/// One row of the campaign record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub event: usize,
    pub regret: f64,
    pub cumulative: f64,
    pub online_value: f64,
    pub oracle_value: f64,
    pub optouts: usize,
    /// Expected load reduction of the online plans (kWh).
    pub energy_kwh: f64,
    /// Expected load reduction of each setpoint-raise baseline (kWh), by raise.
    pub baseline_energy_kwh: Vec<(f64, f64)>,
    /// Regret below the negative tolerance: the oracle plan was not optimal.
    pub flagged: bool,
    pub solver_warnings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Negative regret beyond this is flagged as a solver artifact.
pub const NEGATIVE_REGRET_TOL: f64 = 1e-3;

pub fn regret(online_value: f64, oracle_value: f64, previous_cumulative: f64) -> (f64, f64, bool) {
    let r = online_value - oracle_value;
    (r, previous_cumulative + r, r < -NEGATIVE_REGRET_TOL)
}
