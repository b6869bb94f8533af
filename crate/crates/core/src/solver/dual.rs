//! Price coordination for the aggregate tracking problem: the coordinator
//! broadcasts dual prices, agents solve their local problems concurrently, and
//! the prices move along the tracking residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::local::{resolve_local_soc2, solve_local_soc2, LocalSolution, SolverConfig};
use crate::error::{Error, Result};
use crate::objective::PlanContext;

/// Reply to a local solve request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub agent_id: usize,
    pub l: Vec<f64>,
    pub value: f64,
}

/// One participant of the coordination, reachable in-process or over a stream.
pub trait AgentEndpoint: Send {
    fn agent_id(&self) -> usize;
    /// Solves the local problem at dual iteration `k` for the given prices.
    fn solve_local(&mut self, k: usize, lambda: &[f64]) -> Result<LocalResult>;
    /// Adopts the most recent local solution as the plan to execute.
    fn commit(&mut self) -> Result<()>;
}

impl AgentEndpoint for Box<dyn AgentEndpoint> {
    fn agent_id(&self) -> usize {
        (**self).agent_id()
    }
    fn solve_local(&mut self, k: usize, lambda: &[f64]) -> Result<LocalResult> {
        (**self).solve_local(k, lambda)
    }
    fn commit(&mut self) -> Result<()> {
        (**self).commit()
    }
}

/// `gamma_k = scale * max(base / sqrt(k), floor)` for `k = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSchedule {
    pub base: f64,
    pub floor: f64,
    pub scale: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            base: 5e-4,
            floor: 1e-4,
            scale: 1.0,
        }
    }
}

impl StepSchedule {
    pub fn gamma(&self, k: usize) -> f64 {
        self.scale * (self.base / (k.max(1) as f64).sqrt()).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualSettings {
    pub schedule: StepSchedule,
    /// Stop once `||lambda^{k+1} - lambda^k|| <= eps`.
    pub eps: f64,
    pub k_max: usize,
}

impl Default for DualSettings {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            eps: 1e-6,
            k_max: 100,
        }
    }
}

/// Coordinator state and history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub k: usize,
    /// `||sum_i l_i - L||` at each iteration's prices.
    pub residuals: Vec<f64>,
    /// Aggregate tracking trajectory from the last completed iteration.
    pub l_sum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualOutcome {
    pub state: DualState,
    pub converged: bool,
    /// Set when an agent failed; the history covers completed iterations only.
    pub failure: Option<String>,
}

impl DualOutcome {
    pub fn relative_residuals(&self, target: &[f64]) -> Vec<f64> {
        let norm = target
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        self.state.residuals.iter().map(|r| r / norm).collect()
    }
}

/// Runs price iterations from `lambda0` (zero when absent), then commits
/// every agent if no agent failed.
pub fn run_dual_gradient<A: AgentEndpoint>(
    agents: &mut [A],
    target: &[f64],
    settings: &DualSettings,
    lambda0: Option<&[f64]>,
) -> Result<DualOutcome> {
    if agents.is_empty() {
        return Err(Error::Config(
            "dual coordination needs at least one agent".into(),
        ));
    }
    if target.is_empty() {
        return Err(Error::Config("empty tracking target".into()));
    }
    crate::error::ensure_finite(target, "tracking target")?;
    let h = target.len();
    let mut lambda = match lambda0 {
        Some(l) if l.len() == h => l.to_vec(),
        Some(l) => {
            return Err(Error::Length {
                what: "initial prices",
                expected: h,
                actual: l.len(),
            })
        }
        None => vec![0.0; h],
    };
    let mut state = DualState {
        lambda: lambda.clone(),
        k: 0,
        residuals: Vec::new(),
        l_sum: vec![0.0; h],
    };
    let mut converged = false;

    for k in 1..=settings.k_max {
        let replies: Vec<Result<LocalResult>> = agents
            .par_iter_mut()
            .map(|a| a.solve_local(k, &lambda))
            .collect();
        let mut l_sum = vec![0.0; h];
        for (a, reply) in agents.iter().zip(replies) {
            let reply = match reply {
                Ok(r) => r,
                Err(e) => {
                    let failure = format!("agent {} at iteration {k}: {e}", a.agent_id());
                    return Ok(DualOutcome {
                        state,
                        converged: false,
                        failure: Some(failure),
                    });
                }
            };
            if reply.l.len() != h || reply.agent_id != a.agent_id() {
                let failure = format!(
                    "agent {} sent a malformed reply at iteration {k}",
                    a.agent_id()
                );
                return Ok(DualOutcome {
                    state,
                    converged: false,
                    failure: Some(failure),
                });
            }
            for (s, v) in l_sum.iter_mut().zip(&reply.l) {
                *s += v;
            }
        }
        let gamma = settings.schedule.gamma(k);
        let mut step_sq = 0.0;
        let mut res_sq = 0.0;
        for t in 0..h {
            let r = l_sum[t] - target[t];
            res_sq += r * r;
            let delta = gamma * r;
            step_sq += delta * delta;
            lambda[t] += delta;
        }
        state.k = k;
        state.residuals.push(res_sq.sqrt());
        state.l_sum = l_sum;
        state.lambda.clone_from(&lambda);
        if step_sq.sqrt() <= settings.eps {
            converged = true;
            break;
        }
    }
    for a in agents.iter_mut() {
        if let Err(e) = a.commit() {
            let failure = format!("agent {} failed to commit: {e}", a.agent_id());
            return Ok(DualOutcome {
                state,
                converged,
                failure: Some(failure),
            });
        }
    }
    Ok(DualOutcome {
        state,
        converged,
        failure: None,
    })
}

/// In-process agent that solves its local problem with the projected-gradient solver.
#[derive(Debug, Clone)]
pub struct LocalAgent {
    pub id: usize,
    pub ctx: PlanContext,
    pub solver: SolverConfig,
    last: Option<LocalSolution>,
    committed: Option<LocalSolution>,
    warm: Option<Vec<f64>>,
}

impl LocalAgent {
    pub fn new(id: usize, ctx: PlanContext, solver: SolverConfig, warm: Option<Vec<f64>>) -> Self {
        Self {
            id,
            ctx,
            solver,
            last: None,
            committed: None,
            warm,
        }
    }

    pub fn committed(&self) -> Option<&LocalSolution> {
        self.committed.as_ref()
    }

    pub fn last(&self) -> Option<&LocalSolution> {
        self.last.as_ref()
    }
}

impl AgentEndpoint for LocalAgent {
    fn agent_id(&self) -> usize {
        self.id
    }

    fn solve_local(&mut self, _k: usize, lambda: &[f64]) -> Result<LocalResult> {
        let sol = match &self.last {
            Some(prev) => resolve_local_soc2(&self.ctx, lambda, &self.solver, &prev.traj.u)?,
            None => solve_local_soc2(&self.ctx, lambda, &self.solver, self.warm.as_deref())?,
        };
        let reply = LocalResult {
            agent_id: self.id,
            l: sol.traj.l.clone().expect("tracking solution carries l"),
            value: sol.value,
        };
        self.last = Some(sol);
        Ok(reply)
    }

    fn commit(&mut self) -> Result<()> {
        self.committed = Some(self.last.clone().ok_or(Error::Agent {
            agent: self.id,
            reason: "commit before any solve".into(),
        })?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Agent with a closed-form local problem `min (l - c)^2 + lambda l`, `l >= 0`.
    struct Quadratic {
        id: usize,
        c: Vec<f64>,
        fail_at: Option<usize>,
        committed: bool,
    }

    impl AgentEndpoint for Quadratic {
        fn agent_id(&self) -> usize {
            self.id
        }
        fn solve_local(&mut self, k: usize, lambda: &[f64]) -> Result<LocalResult> {
            if self.fail_at == Some(k) {
                return Err(Error::Agent {
                    agent: self.id,
                    reason: "no response".into(),
                });
            }
            let l: Vec<f64> = self
                .c
                .iter()
                .zip(lambda)
                .map(|(c, lam)| (c - lam / 2.0).max(0.0))
                .collect();
            Ok(LocalResult {
                agent_id: self.id,
                l,
                value: 0.0,
            })
        }
        fn commit(&mut self) -> Result<()> {
            self.committed = true;
            Ok(())
        }
    }

    fn agents(n: usize, fail_at: Option<usize>) -> Vec<Quadratic> {
        (0..n)
            .map(|id| Quadratic {
                id,
                c: vec![1.0, 2.0],
                fail_at,
                committed: false,
            })
            .collect()
    }

    #[test]
    fn schedule_values() {
        let s = StepSchedule::default();
        assert!((s.gamma(1) - 5e-4).abs() < 1e-18);
        assert!((s.gamma(4) - 2.5e-4).abs() < 1e-18);
        assert_eq!(s.gamma(100), 1e-4);
    }

    #[test]
    fn infinite_eps_stops_after_one_iteration() {
        let mut a = agents(3, None);
        let settings = DualSettings {
            eps: f64::INFINITY,
            ..DualSettings::default()
        };
        let out = run_dual_gradient(&mut a, &[2.0, 2.0], &settings, None).unwrap();
        assert_eq!(out.state.k, 1);
        assert_eq!(out.state.residuals.len(), 1);
        assert!(out.converged && a.iter().all(|x| x.committed));
    }

    #[test]
    fn single_agent_tracks_target() {
        let mut a = agents(1, None);
        let settings = DualSettings {
            schedule: StepSchedule {
                base: 1.0,
                floor: 0.5,
                scale: 1.0,
            },
            eps: 1e-12,
            k_max: 500,
        };
        let out = run_dual_gradient(&mut a, &[0.5, 1.5], &settings, None).unwrap();
        assert!(out.converged);
        assert!(*out.state.residuals.last().unwrap() < 1e-9);
    }

    #[test]
    fn failure_keeps_partial_history() {
        let mut a = agents(2, Some(3));
        let out = run_dual_gradient(&mut a, &[1.0, 1.0], &DualSettings::default(), None).unwrap();
        assert_eq!(out.state.residuals.len(), 2);
        assert!(out.failure.is_some());
        assert!(a.iter().all(|x| !x.committed));
    }
}
