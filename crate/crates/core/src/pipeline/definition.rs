use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::PipelineGraph;
use crate::error::{Error, Result};
use crate::fix::{FixSpec, FixWorkflow};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowDef {
    pub id: String,
    pub fixes: Vec<String>,
}

/// The declarative pipeline file: graph, fix catalogue and named workflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDefinition {
    pub name: String,
    #[serde(flatten)]
    pub graph: PipelineGraph,
    #[serde(default)]
    pub fixes: Vec<FixSpec>,
    #[serde(default)]
    pub workflows: Vec<WorkflowDef>,
}

impl PipelineDefinition {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn fix(&self, id: &str) -> Result<&FixSpec> {
        self.fixes
            .iter()
            .find(|f| f.id == id)
            .ok_or_else(|| Error::InvalidWorkflow(format!("unknown fix `{id}`")))
    }

    /// Resolves a named workflow to its ordered fix specifications.
    pub fn workflow(&self, id: &str) -> Result<FixWorkflow> {
        let def = self
            .workflows
            .iter()
            .find(|w| w.id == id)
            .ok_or_else(|| Error::InvalidWorkflow(format!("unknown workflow `{id}`")))?;
        let fixes = def
            .fixes
            .iter()
            .map(|f| self.fix(f).cloned())
            .collect::<Result<_>>()?;
        Ok(FixWorkflow {
            id: def.id.clone(),
            fixes,
        })
    }

    /// Graph violations plus fix/port compatibility problems, as text.
    pub fn check(&self) -> Vec<String> {
        let mut problems: Vec<String> = self
            .graph
            .validate()
            .violations
            .iter()
            .map(ToString::to_string)
            .collect();
        for fix in &self.fixes {
            if let Err(e) = fix.check(&self.graph) {
                problems.push(e.to_string());
            }
        }
        for wf in &self.workflows {
            match self.workflow(&wf.id) {
                Ok(workflow) => {
                    if let Err(e) = workflow.check_order(&self.graph) {
                        problems.push(e.to_string());
                    }
                }
                Err(e) => problems.push(e.to_string()),
            }
        }
        problems
    }
}
