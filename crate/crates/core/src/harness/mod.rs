//! Campaign orchestration: populations, event generation, the known-parameter
//! oracle, regret bookkeeping, and summaries.

pub mod campaign;
pub mod events;
pub mod history;
pub mod population;
pub mod regret;
pub mod report;

pub use campaign::{
    calibrate_rho, final_stay_medians, run_campaign, score_event, CampaignConfig, CampaignResult,
    ScoredEvent, DEFAULT_RHO, RECORDS_FILE, SUMMARY_FILE, TRANSCRIPT_FILE,
};
pub use events::EventGenerator;
pub use history::{gen_synthetic_history, HISTORY_STEP_SECONDS};
pub use population::{gen_customers, CustomerSpec, Population, PopulationConfig};
pub use regret::{
    allocate, baseline_setpoint_raise, expected_cost, expected_reduction, oracle_control, regret,
    truth_context, OracleResult, RegretRecord, NEGATIVE_REGRET_TOL,
};
pub use report::{read_records, write_summary, SUMMARY_HEADER};
