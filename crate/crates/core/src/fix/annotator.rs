use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::crowd::{Answer, EvaluationAnswer, Microtask, TaskKind, TaskPayload, WorkerResponse};
use crate::error::{Error, Result};
use crate::events::{EventBody, EventSink};
use crate::rng;

/// Correct answers for microtasks.
pub trait GroundTruth: Send + Sync {
    fn answer(&self, task: &Microtask) -> Result<Answer>;
}

/// Endorses whatever the machine produced: keep every word, every caption is
/// sensible and fluent, the current best caption is the pick.
#[derive(Debug, Clone, Copy, Default)]
pub struct EndorseMachine;

impl GroundTruth for EndorseMachine {
    fn answer(&self, task: &Microtask) -> Result<Answer> {
        Ok(match &task.payload {
            TaskPayload::WordList { .. } => Answer::WordList {
                remove: Vec::new(),
                add: Vec::new(),
            },
            TaskPayload::Caption { .. } if task.kind == TaskKind::CaptionCommonsensePrune => {
                Answer::Commonsense { sensible: true }
            }
            TaskPayload::Caption { .. } => Answer::Fluency {
                rating: 5,
                highlights: Vec::new(),
            },
            TaskPayload::RankedCaptions { captions, .. } => Answer::Rerank {
                picks: captions.iter().filter(|c| c.id == 1).map(|c| c.id).collect(),
                none_fits: false,
            },
            TaskPayload::Evaluation { .. } => {
                return Err(Error::UnsupportedTask(format!(
                    "no ground truth for {} task `{}`",
                    task.kind, task.id
                )))
            }
        })
    }
}

/// Collects worker responses for a round of tasks.
pub trait Annotator: Send {
    fn collect(&mut self, tasks: &[Microtask], sink: &mut dyn EventSink) -> Result<Vec<WorkerResponse>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnotatorSource {
    Oracle,
    Simulated { epsilon: f64, seed: u64 },
    Queue,
}

impl FromStr for AnnotatorSource {
    type Err = Error;

    /// `oracle`, `queue`, or `sim:<epsilon>:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => return Ok(AnnotatorSource::Oracle),
            "queue" => return Ok(AnnotatorSource::Queue),
            _ => {}
        }
        let bad = || Error::Parse(format!("annotator `{s}`: expected oracle, queue or sim:<epsilon>:<seed>"));
        let mut parts = s.split(':');
        if parts.next() != Some("sim") {
            return Err(bad());
        }
        let epsilon: f64 = parts.next().and_then(|e| e.parse().ok()).ok_or_else(bad)?;
        let seed: u64 = parts.next().and_then(|e| e.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidValue(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(AnnotatorSource::Simulated { epsilon, seed })
    }
}

impl fmt::Display for AnnotatorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotatorSource::Oracle => f.write_str("oracle"),
            AnnotatorSource::Queue => f.write_str("queue"),
            AnnotatorSource::Simulated { epsilon, seed } => write!(f, "sim:{epsilon}:{seed}"),
        }
    }
}

/// Ground truth answered by `responses_required` simulated workers, each
/// decision perturbed with probability `epsilon`. `epsilon = 0` is the
/// oracle.
#[derive(Clone)]
pub struct SimulatedAnnotator {
    truth: Arc<dyn GroundTruth>,
    epsilon: f64,
    seed: u64,
    prefix: &'static str,
}

impl fmt::Debug for SimulatedAnnotator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulatedAnnotator")
            .field("epsilon", &self.epsilon)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl SimulatedAnnotator {
    pub fn oracle(truth: Arc<dyn GroundTruth>) -> Self {
        Self {
            truth,
            epsilon: 0.0,
            seed: 0,
            prefix: "oracle",
        }
    }

    pub fn new(truth: Arc<dyn GroundTruth>, epsilon: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidValue(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Self {
            truth,
            epsilon,
            seed,
            prefix: "sim",
        })
    }

    /// Answer of worker `index` for `task`. Noise depends only on the seed,
    /// the task's noise key and the worker.
    pub fn respond(&self, task: &Microtask, index: u32) -> Result<Answer> {
        let truth = self.truth.answer(task)?;
        if self.epsilon == 0.0 {
            return Ok(truth);
        }
        let key = noise_key(task);
        let mut rng = rng::stream(self.seed, &["worker", &key, &index.to_string()]);
        Ok(perturb(&truth, task, self.epsilon, &mut rng))
    }

    pub fn worker_id(&self, index: u32) -> String {
        format!("{}-{:02}", self.prefix, index + 1)
    }
}

impl Annotator for SimulatedAnnotator {
    fn collect(&mut self, tasks: &[Microtask], sink: &mut dyn EventSink) -> Result<Vec<WorkerResponse>> {
        let mut out = Vec::new();
        for task in tasks {
            for i in 0..task.responses_required {
                let response = WorkerResponse {
                    task_id: task.id.clone(),
                    worker_id: self.worker_id(i),
                    answer: self.respond(task, i)?,
                    timestamp: sink.now(),
                };
                sink.emit(EventBody::Response {
                    response: response.clone(),
                })?;
                out.push(response);
            }
        }
        Ok(out)
    }
}

/// Evaluation tasks draw noise from the instance and caption, so the same
/// output is judged the same way in every workflow.
fn noise_key(task: &Microtask) -> String {
    match &task.payload {
        TaskPayload::Evaluation { caption, .. } => format!("eval\u{1f}{}\u{1f}{caption}", task.instance_id),
        _ => task.id.clone(),
    }
}

fn flip<R: Rng>(rng: &mut R, epsilon: f64) -> bool {
    rng.gen_bool(epsilon)
}

fn nudge<R: Rng>(rng: &mut R, epsilon: f64, value: u8, lo: u8, hi: u8) -> u8 {
    if !flip(rng, epsilon) {
        return value;
    }
    let up = rng.gen_bool(0.5);
    if up {
        value.saturating_add(1).min(hi)
    } else {
        value.saturating_sub(1).max(lo)
    }
}

/// Perturbs each atomic decision of `truth` independently with
/// probability `epsilon`. Likert answers move one step, clamped.
pub fn perturb<R: Rng>(truth: &Answer, task: &Microtask, epsilon: f64, rng: &mut R) -> Answer {
    match (truth, &task.payload) {
        (Answer::WordList { remove, add }, TaskPayload::WordList { words, .. }) => {
            let remove = words
                .iter()
                .filter(|w| remove.contains(&w.word) != flip(rng, epsilon))
                .map(|w| w.word.clone())
                .collect();
            let add = add.iter().filter(|_| !flip(rng, epsilon)).cloned().collect();
            Answer::WordList { remove, add }
        }
        (Answer::Commonsense { sensible }, _) => Answer::Commonsense {
            sensible: *sensible != flip(rng, epsilon),
        },
        (Answer::Fluency { rating, highlights }, _) => Answer::Fluency {
            rating: nudge(rng, epsilon, *rating, 1, 5),
            highlights: highlights.iter().filter(|_| !flip(rng, epsilon)).copied().collect(),
        },
        (
            Answer::Rerank { picks, none_fits },
            TaskPayload::RankedCaptions {
                captions, max_picks, ..
            },
        ) => {
            let none = *none_fits != flip(rng, epsilon);
            if none {
                return Answer::Rerank {
                    picks: Vec::new(),
                    none_fits: true,
                };
            }
            let ids: Vec<u32> = captions.iter().map(|c| c.id).collect();
            let mut chosen: Vec<u32> = if *none_fits {
                // flipped out of "none fits": pick something at random
                ids.choose(rng).copied().into_iter().collect()
            } else {
                picks.clone()
            };
            for i in 0..chosen.len() {
                if flip(rng, epsilon) {
                    let free: Vec<u32> = ids.iter().copied().filter(|id| !chosen.contains(id)).collect();
                    if let Some(&other) = free.choose(rng) {
                        chosen[i] = other;
                    }
                }
            }
            chosen.truncate(*max_picks);
            Answer::Rerank {
                picks: chosen,
                none_fits: false,
            }
        }
        (Answer::Evaluation(e), _) => Answer::Evaluation(EvaluationAnswer {
            accuracy: e.accuracy.map(|v| nudge(rng, epsilon, v, 1, 5)),
            detail: e.detail.map(|v| nudge(rng, epsilon, v, 1, 5)),
            language: e.language.map(|v| nudge(rng, epsilon, v, 1, 5)),
            commonsense: e.commonsense.map(|v| if flip(rng, epsilon) { 1 - v.min(1) } else { v }),
            general: e.general.map(|v| nudge(rng, epsilon, v, 1, 5)),
        }),
        (other, _) => other.clone(),
    }
}
