//! Rebuilds runs, evaluations and reports from an event log.

use std::collections::BTreeMap;
use std::path::Path;

use crate::analysis::{render_report, AnalysisData, Report, ReportSpec};
use crate::crowd::{Microtask, TaskKind, WorkerResponse};
use crate::error::{Error, Result};
use crate::events::{parse_jsonl, Event, EventBody, EventSink};
use crate::fix::{FixRound, RoundOutcome, RunRef, WorkflowRun};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationEntry {
    pub run: RunRef,
    pub task: Microtask,
    pub responses: Vec<WorkerResponse>,
}

/// Tasks published outside any run, with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct LooseTask {
    pub task: Microtask,
    pub responses: Vec<WorkerResponse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedReport {
    pub spec: ReportSpec,
    pub report: Report,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayState {
    /// Runs and quality records, as analysis input.
    pub data: AnalysisData,
    pub evaluations: Vec<EvaluationEntry>,
    pub loose: Vec<LooseTask>,
    pub reports: Vec<ReplayedReport>,
}

impl ReplayState {
    pub fn is_empty(&self) -> bool {
        self.data.runs.is_empty()
            && self.data.records.is_empty()
            && self.evaluations.is_empty()
            && self.loose.is_empty()
            && self.reports.is_empty()
    }

    pub fn report(&self, name: &str) -> Option<&Report> {
        self.reports.iter().rev().map(|r| &r.report).find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    /// Run index and, once the round has closed, the round index.
    Round(usize, Option<usize>),
    Evaluation(usize),
    Loose(usize),
}

#[derive(Default)]
struct Pending {
    tasks: Vec<Microtask>,
    responses: Vec<WorkerResponse>,
    task_ids: Vec<String>,
}

fn corrupt(seq: u64, reason: impl Into<String>) -> Error {
    Error::CorruptRecord {
        seq,
        reason: reason.into(),
    }
}

/// Replays `events` in order. Reports are re-rendered from the state
/// accumulated so far and must hash to the logged value.
pub fn replay(events: &[Event]) -> Result<ReplayState> {
    let mut state = ReplayState::default();
    let mut latest: BTreeMap<RunRef, usize> = BTreeMap::new();
    let mut pending: BTreeMap<usize, Pending> = BTreeMap::new();
    let mut slots: BTreeMap<String, Slot> = BTreeMap::new();
    let mut last_seq = 0;

    for e in events {
        if e.seq <= last_seq {
            return Err(corrupt(e.seq, format!("sequence number not after {last_seq}")));
        }
        last_seq = e.seq;
        match &e.event {
            EventBody::Trace { run, step, trace } => {
                if *step == 0 {
                    latest.insert(run.clone(), state.data.runs.len());
                    state.data.runs.push(WorkflowRun {
                        run: run.clone(),
                        traces: vec![trace.clone()],
                        rounds: Vec::new(),
                        complete: true,
                    });
                    continue;
                }
                let idx = *latest
                    .get(run)
                    .ok_or_else(|| corrupt(e.seq, format!("trace step {step} for unknown run `{}`", run.id())))?;
                let r = &mut state.data.runs[idx];
                if *step != r.traces.len() || r.rounds.len() != *step {
                    return Err(corrupt(e.seq, format!("trace step {step} out of order in `{}`", run.id())));
                }
                r.traces.push(trace.clone());
            }
            EventBody::Microtask { run, task } => {
                let slot = match run {
                    Some(run) if task.kind == TaskKind::SystemEvaluation => {
                        state.evaluations.push(EvaluationEntry {
                            run: run.clone(),
                            task: task.clone(),
                            responses: Vec::new(),
                        });
                        Slot::Evaluation(state.evaluations.len() - 1)
                    }
                    Some(run) => {
                        let idx = *latest
                            .get(run)
                            .ok_or_else(|| corrupt(e.seq, format!("task for unknown run `{}`", run.id())))?;
                        let p = pending.entry(idx).or_default();
                        p.tasks.push(task.clone());
                        p.task_ids.push(task.id.clone());
                        Slot::Round(idx, None)
                    }
                    None => {
                        state.loose.push(LooseTask {
                            task: task.clone(),
                            responses: Vec::new(),
                        });
                        Slot::Loose(state.loose.len() - 1)
                    }
                };
                slots.insert(task.id.clone(), slot);
            }
            EventBody::Response { response } => {
                let slot = slots
                    .get(&response.task_id)
                    .ok_or_else(|| corrupt(e.seq, format!("response for unknown task `{}`", response.task_id)))?;
                match *slot {
                    Slot::Round(idx, None) => pending.entry(idx).or_default().responses.push(response.clone()),
                    Slot::Round(idx, Some(round)) => {
                        state.data.runs[idx].rounds[round].responses.push(response.clone());
                    }
                    Slot::Evaluation(i) => state.evaluations[i].responses.push(response.clone()),
                    Slot::Loose(i) => state.loose[i].responses.push(response.clone()),
                }
            }
            EventBody::FixResult {
                run,
                round,
                fix_id,
                outcome,
                warnings,
            } => {
                let idx = *latest
                    .get(run)
                    .ok_or_else(|| corrupt(e.seq, format!("fix result for unknown run `{}`", run.id())))?;
                let r = &mut state.data.runs[idx];
                if *round != r.rounds.len() || r.traces.len() != round + 1 {
                    return Err(corrupt(e.seq, format!("fix round {round} out of order in `{}`", run.id())));
                }
                let p = pending.remove(&idx).unwrap_or_default();
                for id in &p.task_ids {
                    slots.insert(id.clone(), Slot::Round(idx, Some(*round)));
                }
                if matches!(outcome, RoundOutcome::Incomplete { .. }) {
                    r.complete = false;
                }
                r.rounds.push(FixRound {
                    fix_id: fix_id.clone(),
                    tasks: p.tasks,
                    responses: p.responses,
                    warnings: warnings.clone(),
                    outcome: outcome.clone(),
                });
            }
            EventBody::QualityRecord { workflow_id, record } => {
                state.data.add_record(workflow_id, record.clone());
            }
            EventBody::ReportRef { name, sha256, spec } => {
                let report = render_report(name, spec, &state.data)
                    .map_err(|err| corrupt(e.seq, format!("report `{name}` cannot be rebuilt: {err}")))?;
                let got = report.sha256();
                if &got != sha256 {
                    return Err(corrupt(
                        e.seq,
                        format!("report `{name}` rebuilds to {got}, log says {sha256}"),
                    ));
                }
                state.reports.push(ReplayedReport {
                    spec: spec.clone(),
                    report,
                });
            }
        }
    }
    if let Some((idx, _)) = pending.iter().find(|(_, p)| !p.tasks.is_empty()) {
        let r = &mut state.data.runs[*idx];
        log::warn!("run `{}` ends with an unfinished fix round", r.run.id());
        r.complete = false;
    }
    Ok(state)
}

pub fn replay_text(text: &str) -> Result<ReplayState> {
    replay(&parse_jsonl(text)?)
}

pub fn replay_file(path: &Path) -> Result<ReplayState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    replay_text(&text)
}

/// Writes `state` back as events: runs, evaluations, loose tasks, quality
/// records, then report references.
pub fn persist(state: &ReplayState, sink: &mut dyn EventSink) -> Result<()> {
    for run in &state.data.runs {
        run.emit(sink)?;
    }
    for ev in &state.evaluations {
        sink.emit(EventBody::Microtask {
            run: Some(ev.run.clone()),
            task: ev.task.clone(),
        })?;
    }
    for ev in &state.evaluations {
        for r in &ev.responses {
            sink.emit(EventBody::Response { response: r.clone() })?;
        }
    }
    for t in &state.loose {
        sink.emit(EventBody::Microtask {
            run: None,
            task: t.task.clone(),
        })?;
        for r in &t.responses {
            sink.emit(EventBody::Response { response: r.clone() })?;
        }
    }
    for (workflow_id, records) in &state.data.records {
        for record in records.values() {
            sink.emit(EventBody::QualityRecord {
                workflow_id: workflow_id.clone(),
                record: record.clone(),
            })?;
        }
    }
    for r in &state.reports {
        sink.emit(EventBody::ReportRef {
            name: r.report.name.clone(),
            sha256: r.report.sha256(),
            spec: r.spec.clone(),
        })?;
    }
    Ok(())
}
