//! Sequential DR events with beliefs carried across events, scored against
//! the known-parameter oracle.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::events::EventGenerator;
use super::population::{gen_customers, Population, PopulationConfig};
use super::regret::{
    baseline_setpoint_raise, expected_cost, expected_reduction, oracle_control, regret,
    RegretRecord,
};
use super::report::write_summary;
use crate::domain::{Mode, THETA_DIM};
use crate::error::{Error, Result};
use crate::online::{run_dr_event, Belief, Customer, EventResult, EventSpec, OnlineSettings};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    /// Number of DR events `M`.
    pub events: usize,
    pub seed: u64,
    /// Overrides the mode of `generator.base`.
    pub mode: Mode,
    /// Population to draw when no population file is given.
    pub population: PopulationConfig,
    pub population_file: Option<PathBuf>,
    pub generator: EventGenerator,
    pub online: OnlineSettings,
    pub prior_mean: [f64; THETA_DIM],
    pub prior_var: f64,
    /// Setpoint raises (°F) of the comparison baselines.
    pub baselines: Vec<f64>,
}

/// Opt-out penalty that keeps the median known-parameter optimum's final
/// stay-in probability at or above one half on the default population; see
/// `calibrate_rho`.
pub const DEFAULT_RHO: f64 = 1.0;

impl Default for CampaignConfig {
    fn default() -> Self {
        let mut generator = EventGenerator::default();
        generator.base.rho = DEFAULT_RHO;
        Self {
            events: 200,
            seed: 0,
            mode: Mode::Soc1,
            population: PopulationConfig {
                event: generator.base.clone(),
                ..Default::default()
            },
            population_file: None,
            generator,
            online: OnlineSettings::default(),
            prior_mean: [2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            prior_var: 4.0,
            baselines: vec![3.0, 5.0],
        }
    }
}

impl CampaignConfig {
    /// Tracking-mode desk campaign: fifty customers and cheaper price
    /// iterations (larger steps, warm prices, warm local re-solves).
    pub fn soc2_default() -> Self {
        let mut cc = Self {
            mode: Mode::Soc2,
            ..Self::default()
        };
        cc.population.n = 50;
        cc.generator.base.mode = Mode::Soc2;
        cc.population.event.mode = Mode::Soc2;
        cc.online.dual.schedule.scale = 10.0;
        cc.online.dual.k_max = 20;
        cc.online.dual.eps = 1e-4;
        cc.online.warm_dual = true;
        cc.online.solver.resolve_starts = 1;
        cc.online.solver.resolve_max_iters = 30;
        cc
    }

    pub fn validate(&self) -> Result<()> {
        if self.events == 0 {
            return Err(Error::Config("a campaign needs at least one event".into()));
        }
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return Err(Error::Config("prior variance must be positive".into()));
        }
        if self.baselines.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::Config(
                "baseline setpoint raises must be non-negative".into(),
            ));
        }
        self.online.solver.validate()?;
        let mut base = self.generator.base.clone();
        base.mode = self.mode;
        if self.mode == Mode::Soc2 && base.target.is_none() {
            base.target = Some(vec![1.0; base.steps]);
        }
        base.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cc: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cc.validate()?;
        Ok(cc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Event generator with the campaign mode applied.
    pub fn event_generator(&self) -> EventGenerator {
        let mut g = self.generator.clone();
        g.base.mode = self.mode;
        g
    }

    pub fn prior(&self) -> Result<Belief> {
        Belief::isotropic(&self.prior_mean, self.prior_var)
    }

    /// The population file if one is configured, otherwise a fresh draw.
    pub fn load_population(&self) -> Result<Population> {
        match &self.population_file {
            Some(p) => Population::load(p),
            None => gen_customers(self.seed, &self.population),
        }
    }
}

/// Plans and scores one event; the online run, its oracle, and baselines.
pub struct ScoredEvent {
    pub result: EventResult,
    pub record: RegretRecord,
}

/// Runs one event and scores it. `beliefs` is advanced in place.
pub fn score_event(
    customers: &[Customer],
    beliefs: &mut Vec<Belief>,
    spec: &EventSpec,
    cc: &CampaignConfig,
    previous_cumulative: f64,
) -> Result<ScoredEvent> {
    let scaling = cc.online.scaling;
    let (result, next) = run_dr_event(customers, beliefs, spec, &cc.online)?;
    let online_plans: Vec<Vec<f64>> = result
        .customers
        .iter()
        .map(|c| c.u_online.clone())
        .collect();
    let online_value = expected_cost(customers, spec, scaling, &online_plans)?;
    let oracle = oracle_control(customers, spec, scaling, &cc.online.solver)?;
    let (r, cumulative, flagged) = regret(online_value, oracle.value, previous_cumulative);
    let energy_kwh = expected_reduction(customers, spec, scaling, &online_plans)?;
    let baseline_energy_kwh = cc
        .baselines
        .iter()
        .map(|&delta| {
            let plans = customers
                .iter()
                .map(|c| baseline_setpoint_raise(delta, spec, &c.thermal).map(|t| t.u))
                .collect::<Result<Vec<_>>>()?;
            Ok((delta, expected_reduction(customers, spec, scaling, &plans)?))
        })
        .collect::<Result<_>>()?;
    *beliefs = next;
    let solver_warnings = result
        .customers
        .iter()
        .map(|c| c.solver_warnings)
        .sum::<usize>()
        + oracle.warnings;
    let record = RegretRecord {
        event: spec.event as usize,
        regret: r,
        cumulative,
        online_value,
        oracle_value: oracle.value,
        optouts: result.optouts(),
        energy_kwh,
        baseline_energy_kwh,
        flagged,
        solver_warnings,
        failure: None,
    };
    Ok(ScoredEvent { result, record })
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub records: Vec<RegretRecord>,
    pub beliefs: Vec<Belief>,
}

impl CampaignResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failure.is_some()).count()
    }
}

struct Outputs {
    records: BufWriter<File>,
    transcript: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            records: BufWriter::new(File::create(dir.join(RECORDS_FILE))?),
            transcript: BufWriter::new(File::create(dir.join(TRANSCRIPT_FILE))?),
        })
    }

    fn append(&mut self, record: &RegretRecord, result: Option<&EventResult>) -> Result<()> {
        serde_json::to_writer(&mut self.records, record)?;
        self.records.write_all(b"\n")?;
        self.records.flush()?;
        if let Some(res) = result {
            for t in &res.transcript {
                serde_json::to_writer(&mut self.transcript, t)?;
                self.transcript.write_all(b"\n")?;
            }
            self.transcript.flush()?;
        }
        Ok(())
    }
}

/// Runs `cc.events` events in order. A failed event is recorded with its
/// error, leaves the beliefs untouched, and the campaign moves on. With
/// `out`, records and transcripts are appended as events finish and the
/// summary CSV is written at the end.
pub fn run_campaign(
    cc: &CampaignConfig,
    population: &Population,
    out: Option<&Path>,
) -> Result<CampaignResult> {
    cc.validate()?;
    let customers = population.customers();
    let generator = cc.event_generator();
    let prior = cc.prior()?;
    let mut beliefs = vec![prior; customers.len()];
    let mut outputs = out.map(Outputs::create).transpose()?;
    let mut records = Vec::with_capacity(cc.events);
    let mut cumulative = 0.0;
    for m in 1..=cc.events {
        let scored = generator
            .spec(cc.seed, m as u64, &customers)
            .and_then(|spec| score_event(&customers, &mut beliefs, &spec, cc, cumulative));
        let (record, result) = match scored {
            Ok(s) => (s.record, Some(s.result)),
            Err(e) => (
                RegretRecord {
                    event: m,
                    regret: 0.0,
                    cumulative,
                    online_value: 0.0,
                    oracle_value: 0.0,
                    optouts: 0,
                    energy_kwh: 0.0,
                    baseline_energy_kwh: Vec::new(),
                    flagged: false,
                    solver_warnings: 0,
                    failure: Some(e.to_string()),
                },
                None,
            ),
        };
        cumulative = record.cumulative;
        if let Some(o) = outputs.as_mut() {
            o.append(&record, result.as_ref())?;
        }
        records.push(record);
    }
    if let Some(dir) = out {
        write_summary(&records, File::create(dir.join(SUMMARY_FILE))?)?;
    }
    Ok(CampaignResult { records, beliefs })
}

/// Median over customers and events of the final stay-in probability of
/// the known-parameter optimum, for each opt-out penalty in `grid`.
pub fn final_stay_medians(
    cc: &CampaignConfig,
    population: &Population,
    events: &[u64],
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    use crate::objective::rollout_unchecked;
    use crate::solver::solve_local_soc1;

    let customers = population.customers();
    let solver = cc.online.solver.with_starts(cc.online.solver.starts * 2);
    grid.iter()
        .map(|&rho| {
            let mut g = cc.event_generator();
            g.base.mode = Mode::Soc1;
            g.base.rho = rho;
            let mut stays = Vec::new();
            for &e in events {
                let spec = g.spec(cc.seed, e, &customers)?;
                for c in &customers {
                    let ctx = super::regret::truth_context(c, &spec, cc.online.scaling)?;
                    let sol = solve_local_soc1(&ctx, &solver, None);
                    stays.push(rollout_unchecked(&ctx, &sol.traj.u).final_stay());
                }
            }
            stays.sort_by(f64::total_cmp);
            let n = stays.len();
            let median = if n % 2 == 1 {
                stays[n / 2]
            } else {
                0.5 * (stays[n / 2 - 1] + stays[n / 2])
            };
            Ok((rho, median))
        })
        .collect()
}

/// Smallest penalty on `grid` (ascending) whose median final stay-in
/// probability is at least one half.
pub fn calibrate_rho(
    cc: &CampaignConfig,
    population: &Population,
    events: &[u64],
    grid: &[f64],
) -> Result<f64> {
    for (rho, median) in final_stay_medians(cc, population, events, grid)? {
        if median >= 0.5 {
            return Ok(rho);
        }
    }
    Err(Error::Config(
        "no penalty on the grid keeps the median stay-in probability at one half".into(),
    ))
}
