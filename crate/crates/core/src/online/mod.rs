//! Thompson-sampling control loop with variational posterior updates.

mod belief;
mod event;

pub use belief::{
    digest_f64, jj_lambda, sample_params, variational_update, variational_update_with, Belief,
    UpdateOutcome, VARIATIONAL_PASSES,
};
pub use event::{
    run_dr_event, Customer, CustomerOutcome, DualStepSummary, EventResult, EventSpec,
    OnlineSettings, TranscriptRecord,
};
