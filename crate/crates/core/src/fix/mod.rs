//! Component fixes: microtask generation, integration of crowd answers, and
//! fix workflows that re-execute the pipeline after each fix.

mod annotator;
mod integrate;
mod spec;
mod tasks;
mod workflow;

pub use annotator::{perturb, Annotator, AnnotatorSource, EndorseMachine, GroundTruth, SimulatedAnnotator};
pub use integrate::{
    integrate_caption_prune_fix, integrate_rerank_fix, integrate_wordlist_fix, merge_sublist, CaptionJudgments,
    RerankVote, WordlistVotes,
};
pub use spec::{
    FixDetails, FixKind, FixParams, FixResult, FixSpec, FixWorkflow, PatternBlocklist, DEFAULT_FLUENCY_THRESHOLD,
    DEFAULT_MAX_PICKS, DEFAULT_TOP_K,
};
pub use tasks::{generate_microtasks, instance_image, TaskBatch};
pub use workflow::{execute_workflow, FixRound, RoundOutcome, RunContext, RunRef, WorkflowRun};
