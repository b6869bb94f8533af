//! Expected-cost objectives of the local control problems with the opt-out
//! randomness integrated out, their exact gradients, and a Monte-Carlo oracle
//! that estimates the same expectations by simulating opt-out paths.
//!
//! Both objectives share the shape `sum_k [A_k + B_k Q_k] - rho Q_H`, where
//! `Q_k` is the probability of still participating before planned step `k`
//! (`Q_0 = 1`). `Q` is accumulated in the log domain.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{
    log_logistic, logistic, step_factors, transition, BehaviorParams, FactorScaling, FactorState,
    OptOutState,
};
use crate::domain::{
    check_feasible, EventConfig, ExogenousSeries, Feasibility, Mode, PowerLimits, Trajectory,
};
use crate::error::{ensure_finite, Error, Result};
use crate::thermal::ThermalModel;

/// Baseline power for every step `1..=T` of an event.
pub fn baseline_series(model: &ThermalModel, cfg: &EventConfig, exo: &ExogenousSeries) -> Vec<f64> {
    (1..=cfg.steps)
        .map(|t| {
            model
                .baseline_power(cfg.s_set, exo.outdoor(t - 1), cfg.u_max)
                .u
        })
        .collect()
}

/// Everything a planner needs to score plans over the remaining horizon.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub theta: BehaviorParams,
    pub scaling: FactorScaling,
    pub thermal: Arc<ThermalModel>,
    pub cfg: Arc<EventConfig>,
    pub exo: Arc<ExogenousSeries>,
    /// State after the last completed step.
    pub start: FactorState,
    /// Power applied at the last completed step.
    pub u_prev: f64,
    /// Baseline power for the remaining steps.
    pub u_set: Vec<f64>,
}

impl PlanContext {
    pub fn new(
        theta: BehaviorParams,
        scaling: FactorScaling,
        thermal: Arc<ThermalModel>,
        cfg: Arc<EventConfig>,
        exo: Arc<ExogenousSeries>,
        start: FactorState,
        u_prev: f64,
    ) -> Result<Self> {
        ensure_finite(
            &[start.s, start.d, start.adjustment, u_prev],
            "plan start state",
        )?;
        ensure_finite(&theta.theta, "behavior parameters")?;
        if start.t >= cfg.steps {
            return Err(Error::Config(format!(
                "no steps remain after step {}",
                start.t
            )));
        }
        exo.validate(&cfg)?;
        let u_set = baseline_series(&thermal, &cfg, &exo)[start.t..].to_vec();
        Ok(Self {
            theta,
            scaling,
            thermal,
            cfg,
            exo,
            start,
            u_prev,
            u_set,
        })
    }

    /// Context for a whole event from its pre-event state.
    pub fn event_start(
        theta: BehaviorParams,
        scaling: FactorScaling,
        thermal: Arc<ThermalModel>,
        cfg: Arc<EventConfig>,
        exo: Arc<ExogenousSeries>,
    ) -> Result<Self> {
        exo.validate(&cfg)?;
        let u0 = cfg
            .u_init
            .unwrap_or_else(|| baseline_series(&thermal, &cfg, &exo)[0]);
        Self::new(
            theta,
            scaling,
            thermal,
            cfg.clone(),
            exo,
            FactorState::initial(&cfg),
            u0,
        )
    }

    pub fn horizon(&self) -> usize {
        self.u_set.len()
    }

    pub fn limits(&self) -> PowerLimits {
        PowerLimits::new(&self.cfg, self.u_prev)
    }

    pub fn with_theta(&self, theta: BehaviorParams) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }
}

/// State sequences induced by a plan over the remaining horizon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    /// `ln Q_k` for `k = 0..=H`.
    pub log_q: Vec<f64>,
}

impl Rollout {
    pub fn q(&self, k: usize) -> f64 {
        self.log_q[k].exp()
    }

    /// Probability of still participating at the end of the horizon.
    pub fn final_stay(&self) -> f64 {
        self.q(self.log_q.len() - 1)
    }
}

fn check_plan(ctx: &PlanContext, traj: &Trajectory) -> Result<()> {
    match check_feasible(traj, &ctx.limits(), ctx.horizon())? {
        Feasibility::Feasible => Ok(()),
        Feasibility::Violated(v) => Err(Error::Infeasible(format!("{v:?}"))),
    }
}

/// Forward recursion; rejects infeasible plans.
pub fn rollout(ctx: &PlanContext, traj: &Trajectory) -> Result<Rollout> {
    check_plan(ctx, traj)?;
    Ok(forward(ctx, &traj.u).0)
}

/// Forward recursion without the feasibility check.
pub fn rollout_unchecked(ctx: &PlanContext, u: &[f64]) -> Rollout {
    forward(ctx, u).0
}

/// Derivatives kept from the forward pass for the reverse sweep.
#[derive(Default)]
struct Tape {
    ds_prev: Vec<f64>,
    ds_u: Vec<f64>,
    excess: Vec<f64>,
    excess_slope: Vec<f64>,
}

/// Buffers reused across evaluations on the same thread.
#[derive(Default)]
struct Work {
    ro: Rollout,
    tape: Tape,
    q: Vec<f64>,
    q_adj: Vec<f64>,
    du_direct: Vec<f64>,
}

thread_local! {
    static WORK: std::cell::RefCell<Work> = std::cell::RefCell::new(Work::default());
}

fn forward(ctx: &PlanContext, u: &[f64]) -> (Rollout, Tape) {
    let mut ro = Rollout::default();
    let mut tape = Tape::default();
    forward_into(ctx, u, &mut ro, &mut tape);
    (ro, tape)
}

fn forward_into(ctx: &PlanContext, u: &[f64], ro: &mut Rollout, tape: &mut Tape) {
    let h = u.len();
    let cfg = &*ctx.cfg;
    for v in [&mut ro.s, &mut ro.d, &mut ro.r, &mut ro.p, &mut ro.log_q] {
        v.clear();
        v.reserve(h + 1);
    }
    for v in [
        &mut tape.ds_prev,
        &mut tape.ds_u,
        &mut tape.excess,
        &mut tape.excess_slope,
    ] {
        v.clear();
        v.reserve(h);
    }
    let mut s = ctx.start.s;
    let mut d = ctx.start.d;
    let mut a = ctx.start.adjustment;
    let mut log_q = 0.0;
    ro.log_q.push(0.0);
    for k in 0..h {
        let t = ctx.start.t + k + 1;
        let (s_next, jac) = ctx
            .thermal
            .step_with_jacobian(s, ctx.exo.outdoor(t - 1), u[k]);
        s = s_next;
        let e = cfg.comfort.excess(s, cfg.s_set);
        d += cfg.dt * e * e;
        a += cfg.dt * (ctx.u_set[k] - u[k]).abs();
        let r = cfg.incentive(t, a);
        let w = crate::domain::EnvFactors {
            s,
            d,
            r,
            s_out: ctx.exo.outdoor(t),
            price: ctx.exo.price_at(t),
        };
        let logit = ctx.theta.logit(&ctx.scaling.augment(&w));
        log_q += log_logistic(logit);
        ro.s.push(s);
        ro.d.push(d);
        ro.r.push(r);
        ro.p.push(logistic(logit));
        ro.log_q.push(log_q);
        tape.ds_prev.push(jac.ds_prev);
        tape.ds_u.push(jac.du);
        tape.excess.push(e);
        tape.excess_slope
            .push(cfg.comfort.excess_slope(s, cfg.s_set));
    }
}

/// Which local objective to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Soc1,
    /// Local tracking objective with dual prices for the remaining steps.
    Soc2 {
        l: &'a [f64],
        lambda: &'a [f64],
    },
}

/// Value and, optionally, gradients with respect to `u` and `l`.
///
/// Inputs are not checked for feasibility; the solver calls this on projected
/// iterates.
pub fn evaluate(
    ctx: &PlanContext,
    u: &[f64],
    obj: Objective<'_>,
    grad_u: Option<&mut [f64]>,
    grad_l: Option<&mut [f64]>,
) -> f64 {
    WORK.with(|w| {
        let mut w = w.borrow_mut();
        let Work {
            ro,
            tape,
            q,
            q_adj,
            du_direct,
        } = &mut *w;
        evaluate_with(ctx, u, obj, grad_u, grad_l, ro, tape, q, q_adj, du_direct)
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_with(
    ctx: &PlanContext,
    u: &[f64],
    obj: Objective<'_>,
    grad_u: Option<&mut [f64]>,
    grad_l: Option<&mut [f64]>,
    ro: &mut Rollout,
    tape: &mut Tape,
    q: &mut Vec<f64>,
    q_adj: &mut Vec<f64>,
    du_direct: &mut Vec<f64>,
) -> f64 {
    let h = u.len();
    let dt = ctx.cfg.dt;
    let rho = ctx.cfg.rho;
    forward_into(ctx, u, ro, tape);
    q.clear();
    q.extend(ro.log_q.iter().map(|v| v.exp()));
    q_adj.clear();
    q_adj.resize(h + 1, 0.0);
    du_direct.clear();
    du_direct.resize(h, 0.0);

    let mut value = -rho * q[h];
    // Adjoint of ln Q_k, and direct derivative of each step term in u.
    q_adj[h] = -rho * q[h];
    match obj {
        Objective::Soc1 => {
            for k in 0..h {
                let b = dt * (u[k] - ctx.u_set[k]);
                value += b * q[k];
                q_adj[k] = b * q[k];
                du_direct[k] = dt * q[k];
            }
        }
        Objective::Soc2 { l, lambda } => {
            for k in 0..h {
                let us = ctx.u_set[k];
                let gap = us - l[k];
                let dev = u[k] - us;
                let a = dt * gap * gap + lambda[k] * l[k];
                let b = dt * (2.0 * gap * dev + dev * dev);
                value += a + b * q[k];
                q_adj[k] = b * q[k];
                du_direct[k] = 2.0 * dt * (u[k] - l[k]) * q[k];
            }
            if let Some(gl) = grad_l {
                for k in 0..h {
                    let us = ctx.u_set[k];
                    gl[k] = -2.0 * dt * (us - l[k]) + lambda[k] - 2.0 * dt * (u[k] - us) * q[k];
                }
            }
        }
    }

    let Some(gu) = grad_u else { return value };

    let th = &ctx.theta.theta;
    let sc = &ctx.scaling.scale;
    let w_s = th[1] / sc[0];
    let w_d = th[2] / sc[1];
    let w_r = th[3] / sc[2] * ctx.cfg.r2;

    // Backward sum of ln Q adjoints: ln p_k feeds every ln Q_m with m > k.
    let mut g_tail = q_adj[h];
    let mut s_bar_next = 0.0; // adjoint of s_{k+1} times ds_{k+1}/ds_k
    let mut d_bar = 0.0;
    let mut a_bar = 0.0;
    for k in (0..h).rev() {
        let logit_bar = g_tail * (1.0 - ro.p[k]);
        d_bar += logit_bar * w_d;
        a_bar += logit_bar * w_r;
        let s_bar =
            logit_bar * w_s + d_bar * dt * 2.0 * tape.excess[k] * tape.excess_slope[k] + s_bar_next;
        let diff = ctx.u_set[k] - u[k];
        let abs_slope = if diff > 0.0 {
            -1.0
        } else if diff < 0.0 {
            1.0
        } else {
            0.0
        };
        gu[k] = du_direct[k] + s_bar * tape.ds_u[k] + a_bar * dt * abs_slope;
        s_bar_next = s_bar * tape.ds_prev[k];
        g_tail += q_adj[k];
    }
    value
}

/// Expected energy objective relative to baseline, minus the stay-in bonus.
pub fn soc1_value(ctx: &PlanContext, traj: &Trajectory) -> Result<f64> {
    check_plan(ctx, traj)?;
    Ok(evaluate(ctx, &traj.u, Objective::Soc1, None, None))
}

/// Local tracking objective including the dual term `sum lambda_k l_k`.
pub fn soc2_local_value(ctx: &PlanContext, traj: &Trajectory, lambda: &[f64]) -> Result<f64> {
    let l = tracking_of(ctx, traj, lambda)?;
    Ok(evaluate(
        ctx,
        &traj.u,
        Objective::Soc2 { l, lambda },
        None,
        None,
    ))
}

fn tracking_of<'a>(ctx: &PlanContext, traj: &'a Trajectory, lambda: &[f64]) -> Result<&'a [f64]> {
    check_plan(ctx, traj)?;
    let l = traj
        .l
        .as_deref()
        .ok_or_else(|| Error::Config("SOC-2 needs a tracking trajectory".into()))?;
    if lambda.len() != ctx.horizon() {
        return Err(Error::Length {
            what: "dual prices",
            expected: ctx.horizon(),
            actual: lambda.len(),
        });
    }
    ensure_finite(l, "tracking trajectory")?;
    ensure_finite(lambda, "dual prices")?;
    Ok(l)
}

/// Gradient of the objective with respect to `u` and, for SOC-2, `l`.
pub fn gradient(
    ctx: &PlanContext,
    traj: &Trajectory,
    lambda: Option<&[f64]>,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let h = ctx.horizon();
    let mut gu = vec![0.0; h];
    match lambda {
        None => {
            check_plan(ctx, traj)?;
            evaluate(ctx, &traj.u, Objective::Soc1, Some(&mut gu), None);
            Ok((gu, None))
        }
        Some(lambda) => {
            let l = tracking_of(ctx, traj, lambda)?;
            let mut gl = vec![0.0; h];
            evaluate(
                ctx,
                &traj.u,
                Objective::Soc2 { l, lambda },
                Some(&mut gu),
                Some(&mut gl),
            );
            Ok((gu, Some(gl)))
        }
    }
}

/// Expected `dt * sum (u_set - u_hat)`: the load reduction actually delivered
/// once opt-outs return the AC to baseline.
pub fn expected_energy_reduction(ctx: &PlanContext, u: &[f64]) -> f64 {
    let (ro, _) = forward(ctx, u);
    (0..u.len())
        .map(|k| ctx.cfg.dt * (ctx.u_set[k] - u[k]) * ro.q(k))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte-Carlo estimate of the path cost before the expectation is taken:
/// SOC-1 scores `dt * sum u_hat + rho (1 - z_H)`, SOC-2 scores
/// `dt * sum (u_hat - l)^2 + rho (1 - z_H)`, where `u_hat` follows the plan
/// while the customer participates and the baseline afterwards.
pub fn mc_oracle<R: Rng + ?Sized>(
    rng: &mut R,
    ctx: &PlanContext,
    traj: &Trajectory,
    n: usize,
    mode: Mode,
) -> Result<McEstimate> {
    check_plan(ctx, traj)?;
    if n < 2 {
        return Err(Error::Config(
            "Monte-Carlo oracle needs at least 2 samples".into(),
        ));
    }
    let l = match mode {
        Mode::Soc1 => None,
        Mode::Soc2 => Some(
            traj.l
                .as_deref()
                .ok_or_else(|| Error::Config("SOC-2 needs a tracking trajectory".into()))?,
        ),
    };
    let cfg = &*ctx.cfg;
    let h = ctx.horizon();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let mut fs = ctx.start;
        let mut z = OptOutState::default();
        let mut cost = 0.0;
        for k in 0..h {
            let u_hat = if z.z { traj.u[k] } else { ctx.u_set[k] };
            cost += match l {
                None => cfg.dt * u_hat,
                Some(l) => cfg.dt * (u_hat - l[k]).powi(2),
            };
            if z.z {
                let (next, w) = step_factors(&fs, u_hat, ctx.u_set[k], cfg, &ctx.exo, &ctx.thermal);
                fs = next;
                let p = logistic(ctx.theta.logit(&ctx.scaling.augment(&w)));
                z = transition(rng, z, p, fs.t);
            }
        }
        if !z.z {
            cost += cfg.rho;
        }
        sum += cost;
        sum_sq += cost * cost;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_err: (var / nf).sqrt(),
    })
}
