use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::value::ValueKind;
use crate::error::{Error, Result};

/// `component.port` address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PortRef {
    pub component: String,
    pub port: String,
}

impl PortRef {
    pub fn new(component: impl Into<String>, port: impl Into<String>) -> Self {
        Self {
            component: component.into(),
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

impl FromStr for PortRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('.') {
            Some((c, p)) if !c.is_empty() && !p.is_empty() => Ok(PortRef::new(c, p)),
            _ => Err(Error::Parse(format!("`{s}` is not a component.port reference"))),
        }
    }
}

impl TryFrom<String> for PortRef {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PortRef> for String {
    fn from(p: PortRef) -> Self {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub kind: ValueKind,
}

impl Port {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub id: String,
    /// Registered name of the executor bound to this component.
    pub executor: String,
    #[serde(default)]
    pub inputs: Vec<Port>,
    #[serde(default)]
    pub outputs: Vec<Port>,
}

impl ComponentSpec {
    pub fn input(&self, name: &str) -> Option<&Port> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&Port> {
        self.outputs.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: PortRef,
    pub to: PortRef,
}

/// A named value supplied by each instance and routed to consumer ports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemInput {
    pub name: String,
    pub kind: ValueKind,
    pub to: Vec<PortRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineGraph {
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub system_inputs: Vec<SystemInput>,
    pub system_output: PortRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateComponent { component: String },
    DuplicatePort { component: String, port: String },
    UnknownPort { port: PortRef },
    Cycle { components: Vec<String> },
    DanglingInput { port: PortRef },
    MultipleProducers { port: PortRef, producers: usize },
    KindMismatch { from: PortRef, to: PortRef, produced: ValueKind, expected: ValueKind },
    UnknownSystemOutput { port: PortRef },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateComponent { component } => {
                write!(f, "duplicate component `{component}`")
            }
            Violation::DuplicatePort { component, port } => {
                write!(f, "component `{component}` declares port `{port}` twice")
            }
            Violation::UnknownPort { port } => write!(f, "edge references unknown port `{port}`"),
            Violation::Cycle { components } => write!(f, "cycle: {}", components.join(" -> ")),
            Violation::DanglingInput { port } => write!(f, "input `{port}` has no producer"),
            Violation::MultipleProducers { port, producers } => {
                write!(f, "input `{port}` has {producers} producers")
            }
            Violation::KindMismatch {
                from,
                to,
                produced,
                expected,
            } => write!(f, "`{from}` produces {produced} but `{to}` expects {expected}"),
            Violation::UnknownSystemOutput { port } => {
                write!(f, "system output `{port}` is not a component output")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl PipelineGraph {
    pub fn component(&self, id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn output_kind(&self, port: &PortRef) -> Option<ValueKind> {
        self.component(&port.component)?
            .output(&port.port)
            .map(|p| p.kind)
    }

    /// Component-level dependency sets: `deps[c]` holds every producer `c`
    /// reads from. Edges touching unknown components are ignored.
    fn dependencies(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut deps: BTreeMap<&str, BTreeSet<&str>> = self
            .components
            .iter()
            .map(|c| (c.id.as_str(), BTreeSet::new()))
            .collect();
        for edge in &self.edges {
            if !deps.contains_key(edge.from.component.as_str()) {
                continue;
            }
            if let Some(set) = deps.get_mut(edge.to.component.as_str()) {
                set.insert(edge.from.component.as_str());
            }
        }
        deps
    }

    /// Lists every violation; an empty report means the graph is executable.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let mut ids = BTreeSet::new();
        for c in &self.components {
            if !ids.insert(c.id.as_str()) {
                violations.push(Violation::DuplicateComponent {
                    component: c.id.clone(),
                });
            }
            let mut names = BTreeSet::new();
            for p in c.inputs.iter().chain(&c.outputs) {
                if !names.insert(p.name.as_str()) {
                    violations.push(Violation::DuplicatePort {
                        component: c.id.clone(),
                        port: p.name.clone(),
                    });
                }
            }
        }

        let mut producers: BTreeMap<PortRef, usize> = BTreeMap::new();
        for edge in &self.edges {
            let produced = self.output_kind(&edge.from);
            let expected = self
                .component(&edge.to.component)
                .and_then(|c| c.input(&edge.to.port))
                .map(|p| p.kind);
            if produced.is_none() {
                violations.push(Violation::UnknownPort {
                    port: edge.from.clone(),
                });
            }
            if expected.is_none() {
                violations.push(Violation::UnknownPort {
                    port: edge.to.clone(),
                });
            }
            if let (Some(produced), Some(expected)) = (produced, expected) {
                if produced != expected {
                    violations.push(Violation::KindMismatch {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        produced,
                        expected,
                    });
                }
                *producers.entry(edge.to.clone()).or_default() += 1;
            }
        }
        for input in &self.system_inputs {
            for target in &input.to {
                match self
                    .component(&target.component)
                    .and_then(|c| c.input(&target.port))
                {
                    None => violations.push(Violation::UnknownPort {
                        port: target.clone(),
                    }),
                    Some(port) => {
                        if port.kind != input.kind {
                            violations.push(Violation::KindMismatch {
                                from: PortRef::new("system", input.name.clone()),
                                to: target.clone(),
                                produced: input.kind,
                                expected: port.kind,
                            });
                        }
                        *producers.entry(target.clone()).or_default() += 1;
                    }
                }
            }
        }
        for c in &self.components {
            for p in &c.inputs {
                let port = PortRef::new(c.id.clone(), p.name.clone());
                match producers.get(&port).copied().unwrap_or(0) {
                    0 => violations.push(Violation::DanglingInput { port }),
                    1 => {}
                    n => violations.push(Violation::MultipleProducers { port, producers: n }),
                }
            }
        }

        if let Err(Error::Cycle(components)) = self.topological_order() {
            violations.push(Violation::Cycle { components });
        }

        if self.output_kind(&self.system_output).is_none() {
            violations.push(Violation::UnknownSystemOutput {
                port: self.system_output.clone(),
            });
        }

        ValidationReport { violations }
    }

    /// Kahn's algorithm with a lexicographically ordered ready set, so ties
    /// resolve by component id.
    pub fn topological_order(&self) -> Result<Vec<String>> {
        let deps = self.dependencies();
        let mut remaining: BTreeMap<&str, usize> =
            deps.iter().map(|(c, d)| (*c, d.len())).collect();
        let mut consumers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (consumer, producers) in &deps {
            for producer in producers {
                consumers.entry(producer).or_default().push(consumer);
            }
        }

        let mut ready: BTreeSet<&str> = remaining
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(c, _)| *c)
            .collect();
        let mut order = Vec::with_capacity(deps.len());
        while let Some(next) = ready.pop_first() {
            order.push(next.to_string());
            remaining.remove(next);
            for consumer in consumers.get(next).into_iter().flatten() {
                if let Some(n) = remaining.get_mut(consumer) {
                    *n -= 1;
                    if *n == 0 {
                        ready.insert(consumer);
                    }
                }
            }
        }

        if remaining.is_empty() {
            Ok(order)
        } else {
            Err(Error::Cycle(find_cycle(&deps, &remaining)))
        }
    }
}

/// Walks producer links inside the unresolved set until a component repeats.
/// Every unresolved component has at least one unresolved producer, so the
/// walk always closes a cycle.
fn find_cycle(deps: &BTreeMap<&str, BTreeSet<&str>>, stuck: &BTreeMap<&str, usize>) -> Vec<String> {
    let Some(start) = stuck.keys().next().copied() else {
        return Vec::new();
    };
    let mut path: Vec<&str> = vec![start];
    let mut current = start;
    loop {
        let next = deps[current]
            .iter()
            .find(|p| stuck.contains_key(*p))
            .copied()
            .expect("unresolved component without unresolved producer");
        if let Some(pos) = path.iter().position(|c| *c == next) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| s.to_string()).collect();
            cycle.push(cycle[0].clone());
            return cycle;
        }
        path.push(next);
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn component(id: &str, inputs: &[(&str, ValueKind)], outputs: &[(&str, ValueKind)]) -> ComponentSpec {
        ComponentSpec {
            id: id.into(),
            executor: id.into(),
            inputs: inputs.iter().map(|(n, k)| Port::new(*n, *k)).collect(),
            outputs: outputs.iter().map(|(n, k)| Port::new(*n, *k)).collect(),
        }
    }

    fn edge(from: &str, to: &str) -> Edge {
        Edge {
            from: from.parse().unwrap(),
            to: to.parse().unwrap(),
        }
    }

    pub(crate) fn captioning_chain() -> PipelineGraph {
        use ValueKind::*;
        PipelineGraph {
            components: vec![
                component("detector", &[("image", ImageRef)], &[("words", ScoredWordList)]),
                component("language_model", &[("words", ScoredWordList)], &[("captions", CaptionList)]),
                component(
                    "reranker",
                    &[("captions", CaptionList), ("words", ScoredWordList)],
                    &[("ranked", CaptionList)],
                ),
            ],
            edges: vec![
                edge("detector.words", "language_model.words"),
                edge("language_model.captions", "reranker.captions"),
                edge("detector.words", "reranker.words"),
            ],
            system_inputs: vec![SystemInput {
                name: "image".into(),
                kind: ImageRef,
                to: vec!["detector.image".parse().unwrap()],
            }],
            system_output: "reranker.ranked".parse().unwrap(),
        }
    }

    #[test]
    fn captioning_chain_is_valid() {
        let g = captioning_chain();
        assert!(g.validate().is_valid(), "{:?}", g.validate());
        assert_eq!(
            g.topological_order().unwrap(),
            vec!["detector", "language_model", "reranker"]
        );
    }

    #[test]
    fn self_edge_is_a_cycle() {
        use ValueKind::*;
        let g = PipelineGraph {
            components: vec![component("a", &[("x", Scalar)], &[("y", Scalar)])],
            edges: vec![edge("a.y", "a.x")],
            system_inputs: vec![],
            system_output: "a.y".parse().unwrap(),
        };
        let report = g.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Cycle { components } if components == &["a", "a"])));
        assert!(matches!(g.topological_order(), Err(Error::Cycle(c)) if c == vec!["a", "a"]));
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let mut g = captioning_chain();
        g.edges[0] = edge("language_model.captions", "language_model.words");
        g.edges.push(edge("language_model.captions", "reranker.words"));
        g.edges.remove(2);
        let report = g.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::KindMismatch { expected: ValueKind::ScoredWordList, produced: ValueKind::CaptionList, .. })));
    }

    #[test]
    fn dangling_and_multi_producer_inputs() {
        let mut g = captioning_chain();
        g.edges.remove(0);
        let report = g.validate();
        assert_eq!(
            report.violations,
            vec![Violation::DanglingInput {
                port: "language_model.words".parse().unwrap()
            }]
        );

        let mut g = captioning_chain();
        g.system_inputs[0].to.push("reranker.words".parse().unwrap());
        assert!(g.validate().violations.iter().any(|v| matches!(
            v,
            Violation::MultipleProducers { producers: 2, .. }
        )));
    }

    #[test]
    fn diamond_ties_break_lexicographically() {
        use ValueKind::*;
        let g = PipelineGraph {
            components: vec![
                component("D", &[("l", Scalar), ("r", Scalar)], &[("out", Scalar)]),
                component("C", &[("in", Scalar)], &[("out", Scalar)]),
                component("B", &[("in", Scalar)], &[("out", Scalar)]),
                component("A", &[], &[("out", Scalar)]),
            ],
            edges: vec![
                edge("A.out", "B.in"),
                edge("A.out", "C.in"),
                edge("B.out", "D.l"),
                edge("C.out", "D.r"),
            ],
            system_inputs: vec![],
            system_output: "D.out".parse().unwrap(),
        };
        assert!(g.validate().is_valid());
        assert_eq!(g.topological_order().unwrap(), vec!["A", "B", "C", "D"]);
    }

    #[test]
    fn port_ref_parsing() {
        assert_eq!(
            "reranker.ranked".parse::<PortRef>().unwrap(),
            PortRef::new("reranker", "ranked")
        );
        assert!("reranker".parse::<PortRef>().is_err());
        assert!(".x".parse::<PortRef>().is_err());
    }
}
