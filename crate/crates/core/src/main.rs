use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dr_optout::harness::{
    gen_customers, gen_synthetic_history, read_records, run_campaign, score_event, write_summary,
    CampaignConfig, PopulationConfig, RECORDS_FILE, SUMMARY_FILE, TRANSCRIPT_FILE,
};
use dr_optout::rng::{stream, Purpose};
use dr_optout::thermal::{
    fit_gp, fit_linear, GpConfig, LinearThermal, MeteringHistory, ThermalModel, ThermalModelFile,
};

#[derive(Parser)]
#[command(
    name = "dr-optout",
    version,
    about = "Demand-response control with learned opt-out behavior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Linear,
    Gp,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a thermal model to a metering history; writes the model file.
    FitThermal {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "linear")]
        model: ModelKind,
        #[arg(long)]
        history: PathBuf,
    },
    /// Draw a customer population; writes a JSON population file.
    GenCustomers {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured population size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Simulate a metering history; writes a CSV file.
    GenHistory {
        #[command(flatten)]
        common: Common,
    },
    /// Run and score one event from the prior; writes records, transcript and summary.
    RunEvent {
        #[command(flatten)]
        common: Common,
        /// Event index.
        #[arg(long, default_value_t = 1)]
        event: u64,
    },
    /// Run a full campaign; writes records, transcript and summary.
    Campaign {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured number of events.
        #[arg(long)]
        events: Option<usize>,
    },
    /// Rebuild the summary CSV from a record log.
    RegretReport {
        #[command(flatten)]
        common: Common,
        /// Record log; defaults to the one in the output directory.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct HistoryConfig {
    kappa: f64,
    eta: f64,
    steps: usize,
    noise_sd: f64,
    u_max: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            eta: -1.4,
            steps: 480,
            noise_sd: 0.05,
            u_max: 2.0,
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn campaign_config(common: &Common) -> Result<CampaignConfig> {
    let mut cc = match &common.config {
        Some(p) => CampaignConfig::load(p)?,
        None => CampaignConfig::default(),
    };
    cc.seed = common.seed;
    Ok(cc)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::FitThermal {
            common,
            model,
            history,
        } => {
            let file = std::fs::File::open(&history)
                .with_context(|| format!("opening {}", history.display()))?;
            let hist = MeteringHistory::read_csv(file)?;
            let fitted: ThermalModel = match model {
                ModelKind::Linear => fit_linear(&hist)?.into(),
                ModelKind::Gp => {
                    let mut cfg: GpConfig = read_toml(common.config.as_deref())?;
                    cfg.seed = common.seed;
                    fit_gp(&hist, &cfg)?.into()
                }
            };
            ThermalModelFile::new(fitted, &hist).save(&common.out)?;
        }
        Command::GenCustomers { common, n } => {
            let mut cfg: PopulationConfig = read_toml(common.config.as_deref())?;
            if let Some(n) = n {
                cfg.n = n;
            }
            gen_customers(common.seed, &cfg)?.save(&common.out)?;
        }
        Command::GenHistory { common } => {
            let cfg: HistoryConfig = read_toml(common.config.as_deref())?;
            let truth = LinearThermal::new(cfg.kappa, cfg.eta)?;
            let mut rng = stream(common.seed, 0, 0, Purpose::History);
            let hist = gen_synthetic_history(&mut rng, &truth, cfg.steps, cfg.noise_sd, cfg.u_max)?;
            hist.write_csv(std::fs::File::create(&common.out)?)?;
        }
        Command::RunEvent { common, event } => {
            let cc = campaign_config(&common)?;
            cc.validate()?;
            let population = cc.load_population()?;
            let customers = population.customers();
            let spec = cc.event_generator().spec(cc.seed, event, &customers)?;
            let mut beliefs = vec![cc.prior()?; customers.len()];
            let scored = score_event(&customers, &mut beliefs, &spec, &cc, 0.0)?;
            std::fs::create_dir_all(&common.out)?;
            let mut rec = serde_json::to_string(&scored.record)?;
            rec.push('\n');
            std::fs::write(common.out.join(RECORDS_FILE), rec)?;
            let mut tr = String::new();
            for t in &scored.result.transcript {
                tr.push_str(&serde_json::to_string(t)?);
                tr.push('\n');
            }
            std::fs::write(common.out.join(TRANSCRIPT_FILE), tr)?;
            write_summary(
                &[scored.record],
                std::fs::File::create(common.out.join(SUMMARY_FILE))?,
            )?;
        }
        Command::Campaign { common, events } => {
            let mut cc = campaign_config(&common)?;
            if let Some(m) = events {
                cc.events = m;
            }
            let population = cc.load_population()?;
            let result = run_campaign(&cc, &population, Some(&common.out))?;
            let failed = result.failures();
            if failed > 0 {
                eprintln!("{failed} of {} events failed", result.records.len());
                return Ok(false);
            }
        }
        Command::RegretReport { common, records } => {
            let src = records.unwrap_or_else(|| common.out.join(RECORDS_FILE));
            let recs = read_records(
                std::fs::File::open(&src).with_context(|| format!("opening {}", src.display()))?,
            )?;
            let dest = if common.out.is_dir() {
                common.out.join(SUMMARY_FILE)
            } else {
                common.out.clone()
            };
            write_summary(&recs, std::fs::File::create(&dest)?)?;
            if recs.iter().any(|r| r.failure.is_some()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
