use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::annotator::Annotator;
use super::integrate::{
    integrate_caption_prune_fix, integrate_rerank_fix, integrate_wordlist_fix, merge_sublist, CaptionJudgments,
    RerankVote, WordlistVotes,
};
use super::spec::{FixKind, FixResult, FixSpec, FixWorkflow, PatternBlocklist};
use super::tasks::{generate_microtasks, shown_words};
use crate::crowd::{Answer, Microtask, TaskPayload, WorkerResponse};
use crate::error::{Error, Result};
use crate::events::{EventBody, EventSink};
use crate::pipeline::{DataValue, ExecutionTrace, Instance, OverrideSet, Pipeline};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunRef {
    pub workflow_id: String,
    pub instance_id: String,
}

impl RunRef {
    pub fn new(workflow_id: impl Into<String>, instance_id: impl Into<String>) -> Self {
        Self {
            workflow_id: workflow_id.into(),
            instance_id: instance_id.into(),
        }
    }

    pub fn id(&self) -> String {
        format!("{}:{}", self.workflow_id, self.instance_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RoundOutcome {
    Applied { result: FixResult },
    /// Nothing to ask about (empty target output).
    NoTasks,
    /// Integration left no usable output; the component output is unchanged.
    Unrecoverable { reason: String },
    /// Responses could not be collected; the run stops here.
    Incomplete { reason: String },
}

impl RoundOutcome {
    pub fn result(&self) -> Option<&FixResult> {
        match self {
            RoundOutcome::Applied { result } => Some(result),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixRound {
    pub fix_id: String,
    pub tasks: Vec<Microtask>,
    pub responses: Vec<WorkerResponse>,
    pub warnings: Vec<String>,
    pub outcome: RoundOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowRun {
    pub run: RunRef,
    /// Baseline trace, then one trace per completed round.
    pub traces: Vec<ExecutionTrace>,
    pub rounds: Vec<FixRound>,
    pub complete: bool,
}

impl WorkflowRun {
    pub fn baseline(&self) -> &ExecutionTrace {
        &self.traces[0]
    }

    pub fn last(&self) -> &ExecutionTrace {
        self.traces.last().expect("a run has a baseline trace")
    }

    pub fn before_output(&self) -> Option<&DataValue> {
        self.baseline().output.as_ref()
    }

    pub fn after_output(&self) -> Option<&DataValue> {
        self.last().output.as_ref()
    }

    pub fn round(&self, fix_id: &str) -> Option<&FixRound> {
        self.rounds.iter().find(|r| r.fix_id == fix_id)
    }

    /// Re-emits the run's records in execution order.
    pub fn emit(&self, sink: &mut dyn EventSink) -> Result<()> {
        sink.emit(EventBody::Trace {
            run: self.run.clone(),
            step: 0,
            trace: self.traces[0].clone(),
        })?;
        for (i, round) in self.rounds.iter().enumerate() {
            for task in &round.tasks {
                sink.emit(EventBody::Microtask {
                    run: Some(self.run.clone()),
                    task: task.clone(),
                })?;
            }
            for r in &round.responses {
                sink.emit(EventBody::Response { response: r.clone() })?;
            }
            sink.emit(fix_event(&self.run, i, round))?;
            if let Some(trace) = self.traces.get(i + 1) {
                sink.emit(EventBody::Trace {
                    run: self.run.clone(),
                    step: i + 1,
                    trace: trace.clone(),
                })?;
            }
        }
        Ok(())
    }
}

fn fix_event(run: &RunRef, round: usize, r: &FixRound) -> EventBody {
    EventBody::FixResult {
        run: run.clone(),
        round,
        fix_id: r.fix_id.clone(),
        outcome: r.outcome.clone(),
        warnings: r.warnings.clone(),
    }
}

/// Per-run settings.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    /// Seeds task shuffling.
    pub seed: u64,
    /// Segments known to be problematic before the run starts.
    pub blocklist: PatternBlocklist,
}

/// Baseline execution, then for each fix: tasks from the latest trace,
/// responses, integration, and re-execution with the accumulated overrides.
pub fn execute_workflow(
    pipeline: &Pipeline,
    instance: &Instance,
    workflow: &FixWorkflow,
    annotator: &mut dyn Annotator,
    sink: &mut dyn EventSink,
    ctx: &RunContext,
) -> Result<WorkflowRun> {
    workflow.check_order(pipeline.graph())?;
    let run = RunRef::new(workflow.id.clone(), instance.id.clone());
    let run_id = run.id();

    let mut overrides = OverrideSet::new();
    let baseline = pipeline.execute(instance, &overrides)?;
    sink.emit(EventBody::Trace {
        run: run.clone(),
        step: 0,
        trace: baseline.clone(),
    })?;
    let mut out = WorkflowRun {
        run: run.clone(),
        traces: vec![baseline],
        rounds: Vec::new(),
        complete: true,
    };
    let mut blocklist = ctx.blocklist.clone();

    for fix in &workflow.fixes {
        let current = out.last();
        let batch = generate_microtasks(fix, current, &run_id, ctx.seed);
        for w in &batch.warnings {
            warn!("{w}");
        }
        for task in &batch.tasks {
            sink.emit(EventBody::Microtask {
                run: Some(run.clone()),
                task: task.clone(),
            })?;
        }
        let mut round = FixRound {
            fix_id: fix.id.clone(),
            tasks: batch.tasks,
            responses: Vec::new(),
            warnings: batch.warnings,
            outcome: RoundOutcome::NoTasks,
        };

        if !round.tasks.is_empty() {
            match annotator.collect(&round.tasks, sink) {
                Ok(responses) => {
                    round.responses = responses;
                    round.outcome = integrate_round(fix, current, &round.tasks, &round.responses, &mut blocklist);
                }
                Err(e) => {
                    round.outcome = RoundOutcome::Incomplete { reason: e.to_string() };
                }
            }
        }

        let index = out.rounds.len();
        sink.emit(fix_event(&run, index, &round))?;
        let incomplete = matches!(round.outcome, RoundOutcome::Incomplete { .. });
        if let Some(result) = round.outcome.result().filter(|r| r.changed) {
            overrides.insert(fix.target.clone(), result.corrected.clone());
        }
        out.rounds.push(round);
        if incomplete {
            out.complete = false;
            break;
        }
        let trace = pipeline.execute(instance, &overrides)?;
        sink.emit(EventBody::Trace {
            run: run.clone(),
            step: index + 1,
            trace: trace.clone(),
        })?;
        out.traces.push(trace);
    }
    Ok(out)
}

fn integrate_round(
    fix: &FixSpec,
    trace: &ExecutionTrace,
    tasks: &[Microtask],
    responses: &[WorkerResponse],
    blocklist: &mut PatternBlocklist,
) -> RoundOutcome {
    match integrate(fix, trace, tasks, responses, blocklist) {
        Ok(result) => RoundOutcome::Applied { result },
        Err(Error::EmptyCandidateSet) => RoundOutcome::Unrecoverable {
            reason: Error::EmptyCandidateSet.to_string(),
        },
        Err(Error::NoJudgments) => RoundOutcome::Incomplete {
            reason: Error::NoJudgments.to_string(),
        },
        Err(e) => RoundOutcome::Incomplete { reason: e.to_string() },
    }
}

fn answers_for<'a>(task: &Microtask, responses: &'a [WorkerResponse]) -> impl Iterator<Item = &'a Answer> {
    let id = task.id.clone();
    responses.iter().filter(move |r| r.task_id == id).map(|r| &r.answer)
}

fn integrate(
    fix: &FixSpec,
    trace: &ExecutionTrace,
    tasks: &[Microtask],
    responses: &[WorkerResponse],
    blocklist: &mut PatternBlocklist,
) -> Result<FixResult> {
    let target = trace
        .value(&fix.target)
        .ok_or_else(|| Error::InvalidFix(format!("no output at `{}`", fix.target)))?;
    match fix.kind {
        FixKind::WordlistAddRemoveObjects | FixKind::WordlistAddRemoveActivities => {
            let tag = fix.kind.part_tag().expect("word-list fix");
            let full = target
                .as_word_list()
                .ok_or_else(|| Error::InvalidFix(format!("`{}` is not a word list", fix.target)))?;
            let task = &tasks[0];
            let shown = shown_words(task).ok_or_else(|| Error::InvalidFix("word-list task without words".into()))?;
            let votes = WordlistVotes::tally(answers_for(task, responses));
            let mut result =
                integrate_wordlist_fix(&fix.id, &shown, &votes, tag, fix.allow_add(), fix.allow_remove());
            if result.changed {
                let sub = result.corrected.as_word_list().expect("word list");
                result.corrected = DataValue::ScoredWordList(merge_sublist(full, tag, sub));
            } else {
                result.corrected = target.clone();
            }
            Ok(result)
        }
        FixKind::CaptionCommonsensePrune | FixKind::CaptionFluencyPrune => {
            let captions = target
                .as_caption_list()
                .ok_or_else(|| Error::InvalidFix(format!("`{}` is not a caption list", fix.target)))?;
            let mut judgments: BTreeMap<String, CaptionJudgments> = BTreeMap::new();
            for task in tasks {
                let TaskPayload::Caption { caption } = &task.payload else {
                    continue;
                };
                let j = judgments.entry(caption.clone()).or_default();
                for answer in answers_for(task, responses) {
                    match answer {
                        Answer::Commonsense { sensible } => j.commonsense.push(*sensible),
                        Answer::Fluency { rating, highlights } => {
                            j.fluency.push(*rating);
                            j.highlights.push(highlights.iter().map(|s| s.text(caption)).collect());
                        }
                        _ => {}
                    }
                }
            }
            let top1 = trace
                .value(fix.scope())
                .and_then(DataValue::as_caption_list)
                .and_then(|l| l.best())
                .map(|c| c.text.clone());
            integrate_caption_prune_fix(
                &fix.id,
                captions,
                &judgments,
                blocklist,
                fix.fluency_threshold(),
                top1.as_deref(),
            )
        }
        FixKind::RerankTopK => {
            let list = target
                .as_caption_list()
                .ok_or_else(|| Error::InvalidFix(format!("`{}` is not a caption list", fix.target)))?;
            let votes: Vec<RerankVote> = answers_for(&tasks[0], responses)
                .filter_map(|a| match a {
                    Answer::Rerank { picks, none_fits } => Some(RerankVote {
                        picks: picks.clone(),
                        none_fits: *none_fits,
                    }),
                    _ => None,
                })
                .collect();
            integrate_rerank_fix(&fix.id, list, fix.top_k(), &votes)
        }
    }
}
