//! One DR event under Thompson sampling: per step, sample parameters, re-plan
//! the remaining horizon, apply the first action, observe the customer, and
//! update the belief.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::belief::{digest_f64, sample_params, variational_update, Belief};
use crate::behavior::{
    stay_in_prob, step_factors, transition, BehaviorParams, FactorScaling, FactorState, OptOutState,
};
use crate::domain::{EventConfig, ExogenousSeries, Mode, THETA_DIM};
use crate::error::{Error, Result};
use crate::objective::{baseline_series, PlanContext};
use crate::rng::{stream, Purpose};
use crate::solver::{run_dual_gradient, solve_local_soc1, DualSettings, LocalAgent, SolverConfig};
use crate::thermal::ThermalModel;

/// A simulated customer: its thermal model and true behavior.
#[derive(Debug, Clone)]
pub struct Customer {
    pub id: usize,
    pub thermal: Arc<ThermalModel>,
    pub theta_star: BehaviorParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineSettings {
    pub solver: SolverConfig,
    pub dual: DualSettings,
    pub scaling: FactorScaling,
    /// Carry dual prices from one step to the next (shifted by one step).
    pub warm_dual: bool,
}

/// Event inputs shared by every customer.
#[derive(Debug, Clone)]
pub struct EventSpec {
    pub cfg: Arc<EventConfig>,
    pub exo: Arc<ExogenousSeries>,
    pub master_seed: u64,
    pub event: u64,
}

/// One line of the event transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub event: u64,
    pub customer: usize,
    pub step: usize,
    /// Digest of the parameter draw; absent once the customer has opted out.
    pub theta_digest: Option<String>,
    pub u: f64,
    pub z: bool,
    pub belief_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerOutcome {
    pub id: usize,
    /// Power applied at each step.
    pub applied_u: Vec<f64>,
    pub u_set: Vec<f64>,
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<bool>,
    pub opt_out_step: Option<usize>,
    /// Applied power while participating, then the remainder of the last plan.
    pub u_online: Vec<f64>,
    pub updates: usize,
    pub solver_warnings: usize,
    pub covariance_repairs: usize,
    /// `dt * sum u_hat + rho (1 - z_T)` on the realized path.
    pub realized_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualStepSummary {
    pub step: usize,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventResult {
    pub customers: Vec<CustomerOutcome>,
    pub transcript: Vec<TranscriptRecord>,
    pub dual: Vec<DualStepSummary>,
}

impl EventResult {
    pub fn optouts(&self) -> usize {
        self.customers
            .iter()
            .filter(|c| c.opt_out_step.is_some())
            .count()
    }
}

struct Run<'a> {
    customer: &'a Customer,
    belief: Belief,
    fs: FactorState,
    z: OptOutState,
    u_prev: f64,
    u_set: Vec<f64>,
    thompson: ChaCha8Rng,
    behavior: ChaCha8Rng,
    last_plan: Option<Vec<f64>>,
    out: CustomerOutcome,
    transcript: Vec<TranscriptRecord>,
}

impl<'a> Run<'a> {
    fn new(customer: &'a Customer, belief: Belief, spec: &EventSpec) -> Self {
        let cfg = &*spec.cfg;
        let u_set = baseline_series(&customer.thermal, cfg, &spec.exo);
        let u_prev = cfg.u_init.unwrap_or(u_set[0]);
        let id = customer.id as u64;
        Self {
            customer,
            belief,
            fs: FactorState::initial(cfg),
            z: OptOutState::default(),
            u_prev,
            u_set: u_set.clone(),
            thompson: stream(spec.master_seed, spec.event, id, Purpose::Thompson),
            behavior: stream(spec.master_seed, spec.event, id, Purpose::Behavior),
            last_plan: None,
            out: CustomerOutcome {
                id: customer.id,
                applied_u: Vec::with_capacity(cfg.steps),
                u_set,
                s: Vec::new(),
                d: Vec::new(),
                r: Vec::new(),
                z: Vec::new(),
                opt_out_step: None,
                u_online: Vec::new(),
                updates: 0,
                solver_warnings: 0,
                covariance_repairs: 0,
                realized_cost: 0.0,
            },
            transcript: Vec::new(),
        }
    }

    /// Draws a parameter and builds the planning context for the next step.
    fn plan_context(
        &mut self,
        spec: &EventSpec,
        settings: &OnlineSettings,
    ) -> Result<(PlanContext, String)> {
        let draw = sample_params(&mut self.thompson, &self.belief)?;
        let digest = digest_f64(&draw);
        let theta = BehaviorParams::new(
            draw.try_into()
                .map_err(|_| Error::Config("belief dimension".into()))?,
        )?;
        let ctx = PlanContext::new(
            theta,
            settings.scaling,
            self.customer.thermal.clone(),
            spec.cfg.clone(),
            spec.exo.clone(),
            self.fs,
            self.u_prev,
        )?;
        Ok((ctx, digest))
    }

    fn warm_start(&self) -> Option<Vec<f64>> {
        self.last_plan.as_ref().filter(|p| p.len() > 1).map(|p| {
            let mut w = p[1..].to_vec();
            w.push(*p.last().unwrap());
            w
        })
    }

    /// Applies the first action of `plan` (or baseline power once out),
    /// simulates the customer's response, and learns from it.
    fn advance(
        &mut self,
        spec: &EventSpec,
        settings: &OnlineSettings,
        plan: Option<(Vec<f64>, String)>,
    ) -> Result<()> {
        let cfg = &*spec.cfg;
        let t = self.fs.t + 1;
        let us = self.u_set[t - 1];
        let participating = self.z.z;
        let (u, theta_digest) = match (&plan, participating) {
            (Some((p, d)), true) => (p[0], Some(d.clone())),
            _ => (us, None),
        };
        let (next, w) = step_factors(&self.fs, u, us, cfg, &spec.exo, &self.customer.thermal);
        self.fs = next;
        if participating {
            let w_hat = settings.scaling.augment(&w);
            let p = stay_in_prob(&self.customer.theta_star, &w_hat);
            self.z = transition(&mut self.behavior, self.z, p, t);
            let upd = variational_update(&self.belief, &w_hat, self.z.z)?;
            self.out.covariance_repairs += upd.repaired as usize;
            self.belief = upd.belief;
            self.out.updates += 1;
            let plan = plan.expect("participating customers are planned").0;
            if !self.z.z {
                self.out.opt_out_step = Some(t);
                self.out.u_online.extend_from_slice(&plan);
            } else {
                self.out.u_online.push(u);
            }
            self.last_plan = Some(plan);
        }
        self.u_prev = u;
        self.out.applied_u.push(u);
        self.out.s.push(w.s);
        self.out.d.push(w.d);
        self.out.r.push(w.r);
        self.out.z.push(self.z.z);
        self.out.realized_cost += cfg.dt * u;
        self.transcript.push(TranscriptRecord {
            event: spec.event,
            customer: self.customer.id,
            step: t,
            theta_digest,
            u,
            z: self.z.z,
            belief_digest: self.belief.digest(),
        });
        if t == cfg.steps && !self.z.z {
            self.out.realized_cost += cfg.rho;
        }
        Ok(())
    }
}

fn check_inputs(customers: &[Customer], beliefs: &[Belief], spec: &EventSpec) -> Result<()> {
    spec.cfg.validate()?;
    spec.exo.validate(&spec.cfg)?;
    if customers.len() != beliefs.len() {
        return Err(Error::Length {
            what: "beliefs",
            expected: customers.len(),
            actual: beliefs.len(),
        });
    }
    if let Some(b) = beliefs.iter().find(|b| b.dim() != THETA_DIM) {
        return Err(Error::Length {
            what: "belief dimension",
            expected: THETA_DIM,
            actual: b.dim(),
        });
    }
    Ok(())
}

/// Runs one event for every customer and returns the outcomes together with
/// the updated beliefs.
pub fn run_dr_event(
    customers: &[Customer],
    beliefs: &[Belief],
    spec: &EventSpec,
    settings: &OnlineSettings,
) -> Result<(EventResult, Vec<Belief>)> {
    check_inputs(customers, beliefs, spec)?;
    match spec.cfg.mode {
        Mode::Soc1 => run_soc1(customers, beliefs, spec, settings),
        Mode::Soc2 => run_soc2(customers, beliefs, spec, settings),
    }
}

fn finish(runs: Vec<Run<'_>>, dual: Vec<DualStepSummary>) -> (EventResult, Vec<Belief>) {
    let mut customers = Vec::with_capacity(runs.len());
    let mut transcript = Vec::new();
    let mut beliefs = Vec::with_capacity(runs.len());
    for mut r in runs {
        if r.out.opt_out_step.is_none() {
            r.out.u_online = r.out.applied_u.clone();
        }
        customers.push(r.out);
        transcript.append(&mut r.transcript);
        beliefs.push(r.belief);
    }
    transcript.sort_by_key(|t| (t.step, t.customer));
    (
        EventResult {
            customers,
            transcript,
            dual,
        },
        beliefs,
    )
}

fn run_soc1(
    customers: &[Customer],
    beliefs: &[Belief],
    spec: &EventSpec,
    settings: &OnlineSettings,
) -> Result<(EventResult, Vec<Belief>)> {
    let runs: Vec<Run<'_>> = customers
        .par_iter()
        .zip(beliefs.par_iter())
        .map(|(c, b)| -> Result<Run<'_>> {
            let mut run = Run::new(c, b.clone(), spec);
            for _ in 0..spec.cfg.steps {
                let plan = if run.z.z {
                    let (ctx, digest) = run.plan_context(spec, settings)?;
                    let warm = run.warm_start();
                    let sol = solve_local_soc1(&ctx, &settings.solver, warm.as_deref());
                    run.out.solver_warnings += sol.warning as usize;
                    Some((sol.traj.u, digest))
                } else {
                    None
                };
                run.advance(spec, settings, plan)?;
            }
            Ok(run)
        })
        .collect::<Result<_>>()?;
    Ok(finish(runs, Vec::new()))
}

fn run_soc2(
    customers: &[Customer],
    beliefs: &[Belief],
    spec: &EventSpec,
    settings: &OnlineSettings,
) -> Result<(EventResult, Vec<Belief>)> {
    let cfg = &*spec.cfg;
    let target = cfg
        .target
        .as_ref()
        .ok_or_else(|| Error::Config("SOC-2 requires a target".into()))?;
    let mut runs: Vec<Run<'_>> = customers
        .iter()
        .zip(beliefs)
        .map(|(c, b)| Run::new(c, b.clone(), spec))
        .collect();
    let mut dual_log = Vec::new();
    let mut lambda: Option<Vec<f64>> = None;
    for t in 1..=cfg.steps {
        // Opted-out customers draw baseline power; the rest share what is left.
        let mut remaining: Vec<f64> = target[t - 1..].to_vec();
        for r in runs.iter().filter(|r| !r.z.z) {
            for (k, v) in remaining.iter_mut().enumerate() {
                *v -= r.u_set[t - 1 + k];
            }
        }
        let mut agents = Vec::new();
        let mut digests = Vec::new();
        for (i, r) in runs.iter_mut().enumerate().filter(|(_, r)| r.z.z) {
            let (ctx, digest) = r.plan_context(spec, settings)?;
            agents.push(LocalAgent::new(
                i,
                ctx,
                settings.solver.clone(),
                r.warm_start(),
            ));
            digests.push(digest);
        }
        let mut plans: Vec<Option<(Vec<f64>, String)>> = vec![None; runs.len()];
        if !agents.is_empty() {
            let lambda0 = lambda
                .as_ref()
                .filter(|_| settings.warm_dual)
                .map(|l| l[1..].to_vec());
            let outcome =
                run_dual_gradient(&mut agents, &remaining, &settings.dual, lambda0.as_deref())?;
            let rel = outcome
                .relative_residuals(&remaining)
                .last()
                .copied()
                .unwrap_or(f64::NAN);
            dual_log.push(DualStepSummary {
                step: t,
                iterations: outcome.state.k,
                relative_residual: rel,
                converged: outcome.converged,
                failure: outcome.failure.clone(),
            });
            lambda = Some(outcome.state.lambda.clone());
            for (a, digest) in agents.into_iter().zip(digests) {
                // Without a commit (agent failure) the last local solution still executes.
                let sol = a.committed().or(a.last()).cloned();
                let Some(sol) = sol else {
                    return Err(Error::Agent {
                        agent: a.id,
                        reason: "no local solution".into(),
                    });
                };
                runs[a.id].out.solver_warnings += sol.warning as usize;
                plans[a.id] = Some((sol.traj.u, digest));
            }
        }
        for (r, plan) in runs.iter_mut().zip(plans) {
            r.advance(spec, settings, plan)?;
        }
    }
    Ok(finish(runs, dual_log))
}
