//! Component pipelines as acyclic dataflow graphs with output overrides.

mod definition;
mod exec;
mod graph;
mod value;

pub use definition::{PipelineDefinition, WorkflowDef};
pub use exec::{
    ExecutionTrace, Executor, ExecutorRegistry, Instance, OverrideSet, Pipeline, TraceError, TraceStep,
};
pub use graph::{ComponentSpec, Edge, PipelineGraph, Port, PortRef, SystemInput, ValidationReport, Violation};
pub use value::{CaptionList, DataValue, PartTag, RankedCaption, Record, ScoredWord, ScoredWordList, ValueKind};

use crate::error::Result;

/// Lists every structural violation of `graph`.
pub fn validate_graph(graph: &PipelineGraph) -> ValidationReport {
    graph.validate()
}

/// Producer-before-consumer order with lexicographic tie-breaking.
pub fn topological_order(graph: &PipelineGraph) -> Result<Vec<String>> {
    graph.topological_order()
}
