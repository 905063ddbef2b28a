//! Crowd answer aggregation, disagreement-based worker flags, and batching.

pub mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use task::{
    categorical_units, validate_answer, Answer, CaptionOption, EvaluationAnswer, Microtask, SchemaError,
    Span, TaskKind, TaskPayload, WorkerResponse,
};

/// Default batch size for published task batches.
pub const DEFAULT_BATCH_SIZE: usize = 250;
/// Default responses per fix task.
pub const DEFAULT_FIX_RESPONSES: u32 = 3;
/// Default responses per evaluation or rerank task.
pub const DEFAULT_EVALUATION_RESPONSES: u32 = 5;
/// Default disagreement rate at which a worker is flagged.
pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityOutcome<T> {
    /// Answer held by strictly more than half of the responses.
    pub decision: Option<T>,
    /// Share of the most frequent answer.
    pub agreement: f64,
}

/// Strict-majority vote over categorical answers.
pub fn majority_vote<T: Ord + Clone>(responses: &[T]) -> Result<MajorityOutcome<T>> {
    if responses.is_empty() {
        return Err(Error::EmptyInput("majority vote over zero responses"));
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for r in responses {
        *counts.entry(r).or_default() += 1;
    }
    let n = responses.len();
    let (top, top_count) = counts
        .iter()
        .max_by_key(|(_, c)| **c)
        .map(|(v, c)| (*v, *c))
        .expect("non-empty");
    Ok(MajorityOutcome {
        decision: (2 * top_count > n).then(|| top.clone()),
        agreement: top_count as f64 / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub mean: f64,
    /// Strictly more than half of the ratings are 4 or 5.
    pub satisfactory: bool,
}

/// Mean of 1-5 ratings and the majority-satisfactory flag (4-5 satisfactory,
/// 1-3 unsatisfactory).
pub fn likert_aggregate(ratings: &[u8]) -> Result<LikertSummary> {
    if ratings.is_empty() {
        return Err(Error::EmptyInput("likert aggregate over zero ratings"));
    }
    if let Some(bad) = ratings.iter().find(|r| !(1..=5).contains(*r)) {
        return Err(Error::RatingOutOfRange(*bad));
    }
    let sum: u32 = ratings.iter().map(|&r| u32::from(r)).sum();
    let high = ratings.iter().filter(|&&r| r >= 4).count();
    Ok(LikertSummary {
        mean: f64::from(sum) / ratings.len() as f64,
        satisfactory: 2 * high > ratings.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub worker_id: String,
    pub responses: usize,
    /// Decision units compared against a strict per-unit majority.
    pub compared: usize,
    pub disagreements: usize,
}

impl WorkerStats {
    /// Share of compared decisions that differ from the majority; `None`
    /// until the worker has been compared at least once.
    pub fn disagreement_rate(&self) -> Option<f64> {
        (self.compared > 0).then(|| self.disagreements as f64 / self.compared as f64)
    }
}

/// Per-worker disagreement with the majority answer of each decision unit.
/// Units without a strict majority are skipped.
pub fn worker_stats<'a>(
    tasks: impl IntoIterator<Item = (&'a Microtask, &'a [WorkerResponse])>,
) -> Vec<WorkerStats> {
    let mut stats: BTreeMap<&str, WorkerStats> = BTreeMap::new();
    for (task, responses) in tasks {
        let mut by_unit: BTreeMap<String, Vec<(&str, String)>> = BTreeMap::new();
        for r in responses {
            let entry = stats.entry(r.worker_id.as_str()).or_insert_with(|| WorkerStats {
                worker_id: r.worker_id.clone(),
                responses: 0,
                compared: 0,
                disagreements: 0,
            });
            entry.responses += 1;
            for (unit, value) in categorical_units(task, &r.answer) {
                by_unit.entry(unit).or_default().push((r.worker_id.as_str(), value));
            }
        }
        // Units a worker left implicit (e.g. words nobody else added) count
        // only among the workers that expressed them.
        for votes in by_unit.values() {
            let values: Vec<&String> = votes.iter().map(|(_, v)| v).collect();
            let outcome = majority_vote(&values).expect("unit has votes");
            let Some(majority) = outcome.decision else {
                continue;
            };
            for (worker, value) in votes {
                let entry = stats.get_mut(worker).expect("registered above");
                entry.compared += 1;
                if value != majority {
                    entry.disagreements += 1;
                }
            }
        }
    }
    stats.into_values().collect()
}

/// Workers with at least `min_responses` responses and a disagreement rate
/// of at least `threshold`. Flags are advisory; responses are never dropped.
pub fn flag_workers(stats: &[WorkerStats], threshold: f64, min_responses: usize) -> Result<Vec<String>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidValue(format!(
            "flag threshold {threshold} outside (0, 1]"
        )));
    }
    Ok(stats
        .iter()
        .filter(|s| s.responses >= min_responses)
        .filter(|s| s.disagreement_rate().is_some_and(|r| r >= threshold))
        .map(|s| s.worker_id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch<T> {
    pub id: String,
    pub items: Vec<T>,
}

/// Order-preserving partition into batches of `size` (the last may be
/// shorter).
pub fn plan_batches<T: Clone>(tasks: &[T], size: usize) -> Result<Vec<Batch<T>>> {
    if size == 0 {
        return Err(Error::InvalidValue("batch size must be at least 1".into()));
    }
    Ok(tasks
        .chunks(size)
        .enumerate()
        .map(|(i, chunk)| Batch {
            id: format!("batch-{:04}", i + 1),
            items: chunk.to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_examples() {
        let out = majority_vote(&["yes", "yes", "yes"]).unwrap();
        assert_eq!(out.decision, Some("yes"));
        assert_eq!(out.agreement, 1.0);

        let out = majority_vote(&["yes", "no"]).unwrap();
        assert_eq!(out.decision, None);
        assert_eq!(out.agreement, 0.5);

        assert!(majority_vote::<&str>(&[]).is_err());
    }

    #[test]
    fn likert_examples() {
        let s = likert_aggregate(&[4, 4, 5, 2, 4]).unwrap();
        assert!((s.mean - 3.8).abs() < 1e-12);
        assert!(s.satisfactory);

        let s = likert_aggregate(&[3, 3, 3, 3, 3]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!(!s.satisfactory);

        let s = likert_aggregate(&[5; 5]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert!(s.satisfactory);

        assert!(matches!(likert_aggregate(&[4, 6]), Err(Error::RatingOutOfRange(6))));
        assert!(matches!(likert_aggregate(&[0]), Err(Error::RatingOutOfRange(0))));
    }

    fn stats(id: &str, responses: usize, compared: usize, disagreements: usize) -> WorkerStats {
        WorkerStats {
            worker_id: id.into(),
            responses,
            compared,
            disagreements,
        }
    }

    #[test]
    fn flagging_rules() {
        let all = vec![
            stats("spammer", 20, 20, 18),
            stats("newbie", 5, 5, 5),
            stats("good", 30, 30, 1),
        ];
        assert_eq!(flag_workers(&all, 0.5, 10).unwrap(), vec!["spammer"]);
        let agreeing = vec![stats("a", 12, 12, 0), stats("b", 12, 12, 0)];
        assert!(flag_workers(&agreeing, 0.5, 10).unwrap().is_empty());
        assert!(flag_workers(&all, 0.0, 10).is_err());
    }

    #[test]
    fn batches() {
        let tasks: Vec<u32> = (0..1000).collect();
        let b = plan_batches(&tasks, DEFAULT_BATCH_SIZE).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|b| b.items.len() == 250));

        assert_eq!(plan_batches(&[1], 250).unwrap().len(), 1);

        let sizes: Vec<usize> = plan_batches(&(0..7).collect::<Vec<_>>(), 3)
            .unwrap()
            .iter()
            .map(|b| b.items.len())
            .collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        assert!(plan_batches(&[1], 0).is_err());
    }

    #[test]
    fn disagreement_over_strict_majorities() {
        let task = Microtask {
            id: "t1".into(),
            kind: TaskKind::CaptionCommonsensePrune,
            payload: TaskPayload::Caption {
                caption: "a cat playing a video game".into(),
            },
            instance_id: "i".into(),
            component_id: "language_model".into(),
            fix_id: None,
            batch_id: None,
            responses_required: 3,
        };
        let resp = |w: &str, sensible| WorkerResponse {
            task_id: "t1".into(),
            worker_id: w.into(),
            answer: Answer::Commonsense { sensible },
            timestamp: 0,
        };
        let responses = vec![resp("a", false), resp("b", false), resp("c", true)];
        let s = worker_stats([(&task, responses.as_slice())]);
        let c = s.iter().find(|s| s.worker_id == "c").unwrap();
        assert_eq!(c.disagreement_rate(), Some(1.0));
        let a = s.iter().find(|s| s.worker_id == "a").unwrap();
        assert_eq!(a.disagreement_rate(), Some(0.0));

        // an even split has no majority and compares nobody
        let split = vec![resp("a", false), resp("b", true)];
        let s = worker_stats([(&task, split.as_slice())]);
        assert!(s.iter().all(|s| s.disagreement_rate().is_none()));
    }
}
