//! Fix-effect tables, non-monotonicity and entanglement detectors,
//! component-state reports and cost estimates.

mod compare;
mod cost;
mod entangle;
mod nonmono;
mod report;
mod state;

pub use compare::{compare_states, pair_records, signed_percent, FixEffectReport, StateComparison};
pub use cost::{estimate_cost, CostPlan, CostRow, Money};
pub use entangle::{detect_entanglement, Interaction, InteractionKind, InteractionReport, SubsetDelta};
pub use nonmono::{detect_nonmonotonic, Drop, NonMonotonicReport, PartitionDrift};
pub use report::{render_report, AnalysisData, Report, ReportSpec, SubsetRun};
pub use state::{
    component_state_report, curated_from_runs, ComponentStateReport, CuratedLists, DetectorState, ListState,
    PruneState, RerankState,
};
