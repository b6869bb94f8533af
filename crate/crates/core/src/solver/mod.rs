//! Local trajectory optimization and dual coordination.

pub mod dual;
pub mod local;
pub mod pg;
pub mod projection;
pub mod wire;

pub use dual::{
    run_dual_gradient, AgentEndpoint, DualOutcome, DualSettings, DualState, LocalAgent,
    LocalResult, StepSchedule,
};
pub use local::{
    best_tracking, resolve_local_soc2, solve_local_soc1, solve_local_soc2, LocalSolution,
    SolverConfig, StartKind,
};
pub use pg::{minimize, PgOutcome, PgSettings};
pub use projection::{project_dykstra_in_place, project_feasible, project_in_place};
pub use wire::{serve_agent, Message, StreamAgent};
