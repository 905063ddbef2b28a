use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{PipelineGraph, PortRef};
use super::value::{DataValue, Record};
use crate::error::{Error, Result};

/// A deterministic function from an input record to an output record.
///
/// Purity is a contract the executor author upholds; the engine does not
/// enforce it, but repeated execution must yield identical traces.
pub trait Executor: Send + Sync {
    fn execute(&self, inputs: &Record) -> Result<Record, String>;
}

impl<F> Executor for F
where
    F: Fn(&Record) -> Result<Record, String> + Send + Sync,
{
    fn execute(&self, inputs: &Record) -> Result<Record, String> {
        self(inputs)
    }
}

#[derive(Clone, Default)]
pub struct ExecutorRegistry {
    executors: BTreeMap<String, Arc<dyn Executor>>,
}

impl fmt::Debug for ExecutorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.executors.keys()).finish()
    }
}

impl ExecutorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, executor: impl Executor + 'static) -> &mut Self {
        self.executors.insert(name.into(), Arc::new(executor));
        self
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Executor>> {
        self.executors.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.executors.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub input: Record,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<String>>,
}

/// Replacement values for component output ports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<OverrideEntry>", into = "Vec<OverrideEntry>")]
pub struct OverrideSet(BTreeMap<PortRef, DataValue>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OverrideEntry {
    port: PortRef,
    value: DataValue,
}

impl From<Vec<OverrideEntry>> for OverrideSet {
    fn from(entries: Vec<OverrideEntry>) -> Self {
        Self(entries.into_iter().map(|e| (e.port, e.value)).collect())
    }
}

impl From<OverrideSet> for Vec<OverrideEntry> {
    fn from(set: OverrideSet) -> Self {
        set.0
            .into_iter()
            .map(|(port, value)| OverrideEntry { port, value })
            .collect()
    }
}

impl OverrideSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, port: PortRef, value: DataValue) {
        self.0.insert(port, value);
    }

    pub fn get(&self, port: &PortRef) -> Option<&DataValue> {
        self.0.get(port)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PortRef, &DataValue)> {
        self.0.iter()
    }

    /// Checks that every key names an existing output port and that each
    /// value has that port's kind.
    pub fn check(&self, graph: &PipelineGraph) -> Result<()> {
        for (port, value) in &self.0 {
            let kind = graph
                .output_kind(port)
                .ok_or_else(|| Error::InvalidValue(format!("override targets unknown port `{port}`")))?;
            if kind != value.kind() {
                return Err(Error::InvalidValue(format!(
                    "override for `{port}` is {} but the port carries {kind}",
                    value.kind()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub component: String,
    pub inputs: Record,
    /// Outputs as seen downstream (overrides applied).
    pub outputs: Record,
    pub overridden: bool,
    /// The executor's own outputs, kept when an override replaced them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_outputs: Option<Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceError {
    pub component: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub instance_id: String,
    pub input: Record,
    pub steps: Vec<TraceStep>,
    pub output: Option<DataValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TraceError>,
}

impl ExecutionTrace {
    pub fn step(&self, component: &str) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.component == component)
    }

    pub fn value(&self, port: &PortRef) -> Option<&DataValue> {
        self.step(&port.component)?.outputs.get(&port.port)
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.output.is_some()
    }

    /// Overrides that pin `component`'s outputs to the values in this trace.
    pub fn overrides_for(&self, component: &str) -> OverrideSet {
        let mut set = OverrideSet::new();
        if let Some(step) = self.step(component) {
            for (port, value) in &step.outputs {
                set.insert(PortRef::new(component, port.clone()), value.clone());
            }
        }
        set
    }
}

/// A validated graph bound to its executors, ready to run instances.
#[derive(Clone)]
pub struct Pipeline {
    graph: PipelineGraph,
    order: Vec<usize>,
    executors: Vec<Arc<dyn Executor>>,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("graph", &self.graph)
            .field("order", &self.order)
            .finish()
    }
}

impl Pipeline {
    pub fn new(graph: PipelineGraph, registry: &ExecutorRegistry) -> Result<Self> {
        let report = graph.validate();
        if !report.is_valid() {
            let lines: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidGraph(lines.join("; ")));
        }
        let order = graph
            .topological_order()?
            .iter()
            .map(|id| graph.components.iter().position(|c| &c.id == id).expect("known id"))
            .collect();
        let executors = graph
            .components
            .iter()
            .map(|c| {
                registry
                    .get(&c.executor)
                    .ok_or_else(|| Error::UnknownExecutor(c.executor.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            graph,
            order,
            executors,
        })
    }

    pub fn graph(&self) -> &PipelineGraph {
        &self.graph
    }

    pub fn order(&self) -> Vec<&str> {
        self.order
            .iter()
            .map(|&i| self.graph.components[i].id.as_str())
            .collect()
    }

    /// Position of `component` in the execution order.
    pub fn position(&self, component: &str) -> Option<usize> {
        self.order
            .iter()
            .position(|&i| self.graph.components[i].id == component)
    }

    /// Whether `descendant` reads, directly or transitively, from `ancestor`.
    pub fn is_descendant(&self, ancestor: &str, descendant: &str) -> bool {
        let mut frontier = vec![ancestor];
        let mut seen = std::collections::BTreeSet::new();
        while let Some(c) = frontier.pop() {
            for e in self.graph.edges.iter().filter(|e| e.from.component == c) {
                let next = e.to.component.as_str();
                if next == descendant {
                    return true;
                }
                if seen.insert(next) {
                    frontier.push(next);
                }
            }
        }
        false
    }

    /// Runs every component in topological order. Overridden ports still run
    /// their executor; its output is kept in `machine_outputs` while the
    /// override flows downstream. An executor failure truncates the trace.
    pub fn execute(&self, instance: &Instance, overrides: &OverrideSet) -> Result<ExecutionTrace> {
        overrides.check(&self.graph)?;
        for input in &self.graph.system_inputs {
            if !instance.input.contains_key(&input.name) {
                return Err(Error::MissingSystemInput {
                    instance: instance.id.clone(),
                    input: input.name.clone(),
                });
            }
        }

        let mut routed: BTreeMap<PortRef, DataValue> = BTreeMap::new();
        for input in &self.graph.system_inputs {
            for target in &input.to {
                routed.insert(target.clone(), instance.input[&input.name].clone());
            }
        }

        let mut trace = ExecutionTrace {
            instance_id: instance.id.clone(),
            input: instance.input.clone(),
            steps: Vec::with_capacity(self.order.len()),
            output: None,
            error: None,
        };

        for &idx in &self.order {
            let spec = &self.graph.components[idx];
            let inputs: Record = spec
                .inputs
                .iter()
                .map(|p| {
                    let value = routed
                        .get(&PortRef::new(spec.id.clone(), p.name.clone()))
                        .cloned()
                        .expect("validated graph routes every input");
                    (p.name.clone(), value)
                })
                .collect();

            let produced = match self.executors[idx].execute(&inputs) {
                Ok(out) => check_outputs(spec, out),
                Err(message) => Err(message),
            };
            let machine = match produced {
                Ok(out) => out,
                Err(message) => {
                    trace.error = Some(TraceError {
                        component: spec.id.clone(),
                        message,
                    });
                    return Ok(trace);
                }
            };

            let mut outputs = machine.clone();
            let mut overridden = false;
            for port in &spec.outputs {
                let key = PortRef::new(spec.id.clone(), port.name.clone());
                if let Some(value) = overrides.get(&key) {
                    outputs.insert(port.name.clone(), value.clone());
                    overridden = true;
                }
            }

            for edge in self.graph.edges.iter().filter(|e| e.from.component == spec.id) {
                routed.insert(edge.to.clone(), outputs[&edge.from.port].clone());
            }
            trace.steps.push(TraceStep {
                component: spec.id.clone(),
                inputs,
                outputs,
                overridden,
                machine_outputs: overridden.then_some(machine),
            });
        }

        trace.output = trace.value(&self.graph.system_output).cloned();
        Ok(trace)
    }
}

fn check_outputs(spec: &super::graph::ComponentSpec, mut out: Record) -> Result<Record, String> {
    for port in &spec.outputs {
        match out.get(&port.name) {
            None => return Err(format!("executor did not produce output `{}`", port.name)),
            Some(v) if v.kind() != port.kind => {
                return Err(format!(
                    "output `{}` is {} but the port declares {}",
                    port.name,
                    v.kind(),
                    port.kind
                ))
            }
            Some(_) => {}
        }
    }
    out.retain(|k, _| spec.output(k).is_some());
    Ok(out)
}
