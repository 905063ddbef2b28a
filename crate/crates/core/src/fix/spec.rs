use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crowd::{TaskKind, DEFAULT_EVALUATION_RESPONSES, DEFAULT_FIX_RESPONSES};
use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::pipeline::{DataValue, PartTag, PipelineGraph, PortRef, ValueKind};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MAX_PICKS: usize = 3;
/// Captions whose mean fluency rating falls below this are pruned.
pub const DEFAULT_FLUENCY_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixKind {
    WordlistAddRemoveObjects,
    WordlistAddRemoveActivities,
    CaptionCommonsensePrune,
    CaptionFluencyPrune,
    RerankTopK,
}

impl FixKind {
    pub fn task_kind(self) -> TaskKind {
        match self {
            FixKind::WordlistAddRemoveObjects => TaskKind::WordlistAddRemoveObjects,
            FixKind::WordlistAddRemoveActivities => TaskKind::WordlistAddRemoveActivities,
            FixKind::CaptionCommonsensePrune => TaskKind::CaptionCommonsensePrune,
            FixKind::CaptionFluencyPrune => TaskKind::CaptionFluencyPrune,
            FixKind::RerankTopK => TaskKind::RerankTopK,
        }
    }

    pub fn target_kind(self) -> ValueKind {
        match self {
            FixKind::WordlistAddRemoveObjects | FixKind::WordlistAddRemoveActivities => ValueKind::ScoredWordList,
            _ => ValueKind::CaptionList,
        }
    }

    /// Word category a word-list fix works on.
    pub fn part_tag(self) -> Option<PartTag> {
        match self {
            FixKind::WordlistAddRemoveObjects => Some(PartTag::Object),
            FixKind::WordlistAddRemoveActivities => Some(PartTag::Activity),
            _ => None,
        }
    }
}

impl fmt::Display for FixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.task_kind().as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses_per_task: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// Ranked list whose Top-K selects the captions judged by prune fixes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<PortRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluency_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_picks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_add: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_remove: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixSpec {
    pub id: String,
    pub target: PortRef,
    pub kind: FixKind,
    #[serde(default)]
    pub params: FixParams,
}

impl FixSpec {
    pub fn new(id: impl Into<String>, target: PortRef, kind: FixKind) -> Self {
        Self {
            id: id.into(),
            target,
            kind,
            params: FixParams::default(),
        }
    }

    pub fn responses_per_task(&self) -> u32 {
        self.params.responses_per_task.unwrap_or(match self.kind {
            FixKind::RerankTopK => DEFAULT_EVALUATION_RESPONSES,
            _ => DEFAULT_FIX_RESPONSES,
        })
    }

    pub fn top_k(&self) -> usize {
        self.params.top_k.unwrap_or(DEFAULT_TOP_K)
    }

    pub fn scope(&self) -> &PortRef {
        self.params.scope.as_ref().unwrap_or(&self.target)
    }

    pub fn fluency_threshold(&self) -> f64 {
        self.params.fluency_threshold.unwrap_or(DEFAULT_FLUENCY_THRESHOLD)
    }

    pub fn max_picks(&self) -> usize {
        self.params.max_picks.unwrap_or(DEFAULT_MAX_PICKS)
    }

    pub fn allow_add(&self) -> bool {
        self.params.allow_add.unwrap_or(true)
    }

    pub fn allow_remove(&self) -> bool {
        self.params.allow_remove.unwrap_or(true)
    }

    /// The target (and scope) ports exist and carry the kind this fix edits.
    pub fn check(&self, graph: &PipelineGraph) -> Result<()> {
        let kind = graph
            .output_kind(&self.target)
            .ok_or_else(|| Error::InvalidFix(format!("fix `{}` targets unknown port `{}`", self.id, self.target)))?;
        if kind != self.kind.target_kind() {
            return Err(Error::InvalidFix(format!(
                "fix `{}` ({}) needs a {} port but `{}` carries {kind}",
                self.id,
                self.kind,
                self.kind.target_kind(),
                self.target
            )));
        }
        if let Some(scope) = &self.params.scope {
            if graph.output_kind(scope) != Some(ValueKind::CaptionList) {
                return Err(Error::InvalidFix(format!(
                    "fix `{}` scope `{scope}` is not a caption list",
                    self.id
                )));
            }
        }
        if self.responses_per_task() == 0 {
            return Err(Error::InvalidFix(format!("fix `{}` needs at least one response per task", self.id)));
        }
        if self.top_k() == 0 {
            return Err(Error::InvalidFix(format!("fix `{}` has top_k = 0", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixWorkflow {
    pub id: String,
    pub fixes: Vec<FixSpec>,
}

impl FixWorkflow {
    pub fn new(id: impl Into<String>, fixes: Vec<FixSpec>) -> Self {
        Self { id: id.into(), fixes }
    }

    pub fn empty(id: impl Into<String>) -> Self {
        Self::new(id, Vec::new())
    }

    /// Fix targets must follow the execution order: earlier components first.
    pub fn check_order(&self, graph: &PipelineGraph) -> Result<()> {
        let order = graph.topological_order()?;
        let mut last = 0usize;
        for fix in &self.fixes {
            fix.check(graph)?;
            let pos = order
                .iter()
                .position(|c| *c == fix.target.component)
                .expect("checked target");
            if pos < last {
                return Err(Error::InvalidWorkflow(format!(
                    "workflow `{}`: fix `{}` on `{}` follows a fix on a later component",
                    self.id, fix.id, fix.target.component
                )));
            }
            last = pos;
        }
        let mut ids = BTreeSet::new();
        if let Some(dup) = self.fixes.iter().find(|f| !ids.insert(f.id.as_str())) {
            return Err(Error::InvalidWorkflow(format!(
                "workflow `{}` repeats fix `{}`",
                self.id, dup.id
            )));
        }
        Ok(())
    }
}

/// Problematic caption segments, stored as lowercase token sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternBlocklist {
    segments: BTreeSet<String>,
}

impl PatternBlocklist {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a segment; returns false if it normalises to nothing or is known.
    pub fn insert(&mut self, segment: &str) -> bool {
        let tokens = tokenize(segment);
        if tokens.is_empty() {
            return false;
        }
        self.segments.insert(tokens.join(" "))
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(String::as_str)
    }

    /// First segment occurring in `caption` as a contiguous, case-insensitive
    /// token subsequence.
    pub fn matching(&self, caption: &str) -> Option<&str> {
        let tokens = tokenize(caption);
        self.segments
            .iter()
            .find(|seg| {
                let pattern: Vec<&str> = seg.split(' ').collect();
                tokens
                    .windows(pattern.len())
                    .any(|w| w.iter().map(String::as_str).eq(pattern.iter().copied()))
            })
            .map(String::as_str)
    }
}

impl<S: AsRef<str>> FromIterator<S> for PatternBlocklist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut list = Self::new();
        for s in iter {
            list.insert(s.as_ref());
        }
        list
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FixDetails {
    Wordlist {
        removed: Vec<String>,
        added: Vec<String>,
    },
    Prune {
        /// Captions shown to workers (Top-K of the scope list).
        judged: Vec<String>,
        /// Judged captions removed by worker judgments.
        pruned_judged: Vec<String>,
        /// Captions removed only because they match the blocklist.
        pruned_by_blocklist: Vec<String>,
        /// Rank-1 caption of the scope list when the tasks were built.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        top1: Option<String>,
        top1_pruned: bool,
        harvested: Vec<String>,
    },
    Rerank {
        winner_rank: Option<u32>,
        original_best_picks: usize,
        none_fits_votes: usize,
        responses: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixResult {
    pub fix_id: String,
    pub corrected: DataValue,
    /// Agreement fraction per decision unit.
    pub agreement: BTreeMap<String, f64>,
    pub unrecoverable: bool,
    pub changed: bool,
    pub details: FixDetails,
}
