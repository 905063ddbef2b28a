use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::crowd::TaskKind;
use crate::evaluation::percent;
use crate::fix::{FixDetails, RoundOutcome, WorkflowRun};
use crate::pipeline::{DataValue, ExecutionTrace, PartTag, PortRef};

/// Reference word sets per category for one instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuratedLists {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activities: Option<BTreeSet<String>>,
}

impl CuratedLists {
    pub fn get(&self, tag: PartTag) -> Option<&BTreeSet<String>> {
        match tag {
            PartTag::Object => self.objects.as_ref(),
            PartTag::Activity => self.activities.as_ref(),
            PartTag::Other => None,
        }
    }
}

/// Corrected word lists from the word-list fixes of `runs`, used as the
/// curated reference.
pub fn curated_from_runs<'a>(runs: impl IntoIterator<Item = &'a WorkflowRun>) -> BTreeMap<String, CuratedLists> {
    let mut out: BTreeMap<String, CuratedLists> = BTreeMap::new();
    for run in runs {
        for round in &run.rounds {
            let Some(result) = round.outcome.result() else { continue };
            let Some(list) = result.corrected.as_word_list() else { continue };
            let Some(kind) = round.tasks.first().map(|t| t.kind) else { continue };
            let entry = out.entry(run.run.instance_id.clone()).or_default();
            let words = |tag| list.with_tag(tag).map(|w| w.word.clone()).collect();
            match kind {
                TaskKind::WordlistAddRemoveObjects => entry.objects = Some(words(PartTag::Object)),
                TaskKind::WordlistAddRemoveActivities => entry.activities = Some(words(PartTag::Activity)),
                _ => {}
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ListState {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorState {
    pub category: PartTag,
    pub instances: usize,
    pub before: ListState,
    pub after: ListState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneState {
    /// `caption-commonsense-prune`, `caption-fluency-prune`, or `combined`.
    pub fix: String,
    pub instances: usize,
    pub judged: usize,
    pub pruned: usize,
    pub pct_top_k: f64,
    pub top1_pruned: usize,
    pub pct_top1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankState {
    pub instances: usize,
    pub pct_changed: f64,
    pub pct_original_never_picked: f64,
    pub pct_none_fits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStateReport {
    pub detector: Vec<DetectorState>,
    pub pruning: Vec<PruneState>,
    pub reranker: Option<RerankState>,
    /// Instances without curated lists.
    pub skipped: Vec<String>,
}

#[derive(Default)]
struct Counts {
    hits: usize,
    machine: usize,
    curated: usize,
    lists: usize,
}

impl Counts {
    fn add(&mut self, words: &BTreeSet<String>, curated: &BTreeSet<String>) {
        self.hits += words.intersection(curated).count();
        self.machine += words.len();
        self.curated += curated.len();
        self.lists += 1;
    }

    fn state(&self) -> ListState {
        ListState {
            precision: (self.machine > 0).then(|| self.hits as f64 / self.machine as f64),
            recall: (self.curated > 0).then(|| self.hits as f64 / self.curated as f64),
            mean_length: if self.lists == 0 {
                0.0
            } else {
                self.machine as f64 / self.lists as f64
            },
        }
    }
}

fn words_at(trace: &ExecutionTrace, port: &PortRef, tag: PartTag) -> BTreeSet<String> {
    trace
        .value(port)
        .and_then(DataValue::as_word_list)
        .map(|l| l.with_tag(tag).map(|w| w.word.clone()).collect())
        .unwrap_or_default()
}

/// Detector precision/recall (micro-averaged over instances) before and
/// after the fixes, caption pruning rates, and reranker statistics.
pub fn component_state_report(
    runs: &[&WorkflowRun],
    detector: &PortRef,
    curated: &BTreeMap<String, CuratedLists>,
) -> ComponentStateReport {
    let mut detector_states = Vec::new();
    let mut skipped = BTreeSet::new();
    for tag in [PartTag::Object, PartTag::Activity] {
        let (mut before, mut after) = (Counts::default(), Counts::default());
        for run in runs {
            let id = &run.run.instance_id;
            let Some(reference) = curated.get(id).and_then(|c| c.get(tag)) else {
                skipped.insert(id.clone());
                continue;
            };
            before.add(&words_at(run.baseline(), detector, tag), reference);
            after.add(&words_at(run.last(), detector, tag), reference);
        }
        if before.lists > 0 {
            detector_states.push(DetectorState {
                category: tag,
                instances: before.lists,
                before: before.state(),
                after: after.state(),
            });
        }
    }
    if !skipped.is_empty() {
        warn!("{} instances without a curated word list skipped in detector state", skipped.len());
        debug!("skipped: {}", skipped.iter().map(String::as_str).collect::<Vec<_>>().join(", "));
    }

    let mut pruning = Vec::new();
    let mut combined = (0usize, 0usize, 0usize, 0usize); // instances, judged, pruned, top1
    let mut per_kind: BTreeMap<TaskKind, (usize, usize, usize, usize)> = BTreeMap::new();
    let mut rerank = (0usize, 0usize, 0usize, 0usize); // instances, changed, never picked, none fits
    for run in runs {
        let mut judged_all = BTreeSet::new();
        let mut pruned_all = BTreeSet::new();
        let mut first_top1: Option<String> = None;
        let mut any_prune = false;
        for round in &run.rounds {
            let Some(kind) = round.tasks.first().map(|t| t.kind) else { continue };
            match (&round.outcome, kind) {
                (RoundOutcome::Applied { result }, TaskKind::RerankTopK) => {
                    if let FixDetails::Rerank {
                        original_best_picks, ..
                    } = &result.details
                    {
                        rerank.0 += 1;
                        rerank.1 += usize::from(result.changed);
                        rerank.2 += usize::from(*original_best_picks == 0);
                        rerank.3 += usize::from(result.unrecoverable);
                    }
                }
                (
                    RoundOutcome::Applied { result },
                    TaskKind::CaptionCommonsensePrune | TaskKind::CaptionFluencyPrune,
                ) => {
                    if let FixDetails::Prune {
                        judged,
                        pruned_judged,
                        top1,
                        top1_pruned,
                        ..
                    } = &result.details
                    {
                        let e = per_kind.entry(kind).or_default();
                        e.0 += 1;
                        e.1 += judged.len();
                        e.2 += pruned_judged.len();
                        e.3 += usize::from(*top1_pruned);
                        any_prune = true;
                        judged_all.extend(judged.iter().cloned());
                        pruned_all.extend(pruned_judged.iter().cloned());
                        if first_top1.is_none() {
                            first_top1.clone_from(top1);
                        }
                    }
                }
                _ => {}
            }
        }
        if any_prune {
            combined.0 += 1;
            combined.1 += judged_all.len();
            combined.2 += pruned_all.len();
            combined.3 += usize::from(first_top1.is_some_and(|t| pruned_all.contains(&t)));
        }
    }
    let prune_state = |fix: String, (instances, judged, pruned, top1): (usize, usize, usize, usize)| PruneState {
        fix,
        instances,
        judged,
        pruned,
        pct_top_k: percent(pruned, judged),
        top1_pruned: top1,
        pct_top1: percent(top1, instances),
    };
    for (kind, counts) in &per_kind {
        pruning.push(prune_state(kind.to_string(), *counts));
    }
    if per_kind.len() > 1 {
        pruning.push(prune_state("combined".into(), combined));
    }
    let reranker = (rerank.0 > 0).then(|| RerankState {
        instances: rerank.0,
        pct_changed: percent(rerank.1, rerank.0),
        pct_original_never_picked: percent(rerank.2, rerank.0),
        pct_none_fits: percent(rerank.3, rerank.0),
    });
    ComponentStateReport {
        detector: detector_states,
        pruning,
        reranker,
        skipped: skipped.into_iter().collect(),
    }
}
