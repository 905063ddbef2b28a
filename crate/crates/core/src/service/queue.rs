use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crowd::{plan_batches, validate_answer, Answer, Microtask, TaskKind, WorkerResponse, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task: Microtask,
    pub received: u32,
    pub closed: bool,
    pub served_to: BTreeSet<String>,
    pub responses: Vec<WorkerResponse>,
}

impl TaskState {
    pub fn required(&self) -> u32 {
        self.task.responses_required
    }

    fn answered_by(&self, worker: &str) -> bool {
        self.responses.iter().any(|r| r.worker_id == worker)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "reason", rename_all = "snake_case")]
pub enum Rejection {
    UnknownTask(String),
    Closed(String),
    Duplicate(String),
    Schema(String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::UnknownTask(id) => write!(f, "unknown task `{id}`"),
            Rejection::Closed(id) => write!(f, "task `{id}` is closed"),
            Rejection::Duplicate(id) => write!(f, "already answered task `{id}`"),
            Rejection::Schema(reason) => write!(f, "schema: {reason}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    /// This response closed the task.
    pub closed: bool,
}

/// Open tasks grouped in batches; workers pull from the earliest batch that
/// still has open tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskQueue {
    tasks: BTreeMap<String, TaskState>,
    batches: Vec<(String, Vec<String>)>,
    batch_size: usize,
}

impl Default for TaskQueue {
    fn default() -> Self {
        Self::new(DEFAULT_BATCH_SIZE).expect("default batch size")
    }
}

impl TaskQueue {
    pub fn new(batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidValue("batch size must be at least 1".into()));
        }
        Ok(Self {
            tasks: BTreeMap::new(),
            batches: Vec::new(),
            batch_size,
        })
    }

    /// Adds tasks as new batches; returns the tasks with batch ids set.
    pub fn publish(&mut self, tasks: Vec<Microtask>) -> Result<Vec<Microtask>> {
        let mut ids = BTreeSet::new();
        for t in &tasks {
            if self.tasks.contains_key(&t.id) || !ids.insert(t.id.as_str()) {
                return Err(Error::InvalidValue(format!("task `{}` published twice", t.id)));
            }
            if t.responses_required == 0 {
                return Err(Error::InvalidValue(format!("task `{}` requires no responses", t.id)));
            }
        }
        let offset = self.batches.len();
        let mut out = Vec::with_capacity(tasks.len());
        for (i, batch) in plan_batches(&tasks, self.batch_size)?.into_iter().enumerate() {
            let batch_id = format!("batch-{:04}", offset + i + 1);
            let mut members = Vec::with_capacity(batch.items.len());
            for mut task in batch.items {
                task.batch_id = Some(batch_id.clone());
                members.push(task.id.clone());
                out.push(task.clone());
                self.tasks.insert(
                    task.id.clone(),
                    TaskState {
                        task,
                        received: 0,
                        closed: false,
                        served_to: BTreeSet::new(),
                        responses: Vec::new(),
                    },
                );
            }
            self.batches.push((batch_id, members));
        }
        Ok(out)
    }

    pub fn task(&self, id: &str) -> Option<&TaskState> {
        self.tasks.get(id)
    }

    pub fn open_count(&self) -> usize {
        self.tasks.values().filter(|t| !t.closed).count()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Id of the earliest batch with an open task.
    pub fn current_batch(&self) -> Option<&str> {
        self.batches
            .iter()
            .find(|(_, members)| members.iter().any(|id| !self.tasks[id].closed))
            .map(|(id, _)| id.as_str())
    }

    /// First open task of the current batch that `worker` has not been
    /// served, optionally restricted to one kind.
    pub fn next_task(&mut self, worker: &str, kind: Option<TaskKind>) -> Option<Microtask> {
        let current = self.current_batch()?.to_string();
        let (_, members) = self.batches.iter().find(|(id, _)| *id == current)?;
        let id = members
            .iter()
            .find(|id| {
                let t = &self.tasks[*id];
                !t.closed
                    && !t.served_to.contains(worker)
                    && !t.answered_by(worker)
                    && kind.is_none_or(|k| t.task.kind == k)
            })?
            .clone();
        let state = self.tasks.get_mut(&id).expect("member task");
        state.served_to.insert(worker.to_string());
        Some(state.task.clone())
    }

    /// Validates and records a response. The task closes once it has its
    /// required responses; closed tasks never reopen.
    pub fn submit(&mut self, response: WorkerResponse) -> std::result::Result<Accepted, Rejection> {
        let state = self
            .tasks
            .get_mut(&response.task_id)
            .ok_or_else(|| Rejection::UnknownTask(response.task_id.clone()))?;
        if state.closed {
            return Err(Rejection::Closed(response.task_id));
        }
        if state.answered_by(&response.worker_id) {
            return Err(Rejection::Duplicate(response.task_id));
        }
        validate_answer(&state.task, &response.answer).map_err(|e| Rejection::Schema(e.0))?;
        state.served_to.insert(response.worker_id.clone());
        state.responses.push(response);
        state.received += 1;
        state.closed = state.received >= state.required();
        Ok(Accepted { closed: state.closed })
    }

    /// Check without recording.
    pub fn check(&self, worker: &str, task_id: &str, answer: &Answer) -> std::result::Result<(), Rejection> {
        let state = self
            .tasks
            .get(task_id)
            .ok_or_else(|| Rejection::UnknownTask(task_id.to_string()))?;
        if state.closed {
            return Err(Rejection::Closed(task_id.to_string()));
        }
        if state.answered_by(worker) {
            return Err(Rejection::Duplicate(task_id.to_string()));
        }
        validate_answer(&state.task, answer).map_err(|e| Rejection::Schema(e.0))
    }

    pub fn all_closed<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> bool {
        ids.into_iter().all(|id| self.tasks.get(id).is_some_and(|t| t.closed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::{CaptionOption, TaskPayload};

    fn cs_task(id: &str, k: u32) -> Microtask {
        Microtask {
            id: id.into(),
            kind: TaskKind::CaptionCommonsensePrune,
            payload: TaskPayload::Caption {
                caption: "a cat on a couch".into(),
            },
            instance_id: "i".into(),
            component_id: "language_model".into(),
            fix_id: None,
            batch_id: None,
            responses_required: k,
        }
    }

    fn resp(task: &str, worker: &str, answer: Answer) -> WorkerResponse {
        WorkerResponse {
            task_id: task.into(),
            worker_id: worker.into(),
            answer,
            timestamp: 0,
        }
    }

    const YES: Answer = Answer::Commonsense { sensible: true };

    #[test]
    fn fresh_worker_gets_first_task() {
        let mut q = TaskQueue::default();
        q.publish(vec![cs_task("t1", 3), cs_task("t2", 3)]).unwrap();
        let t = q.next_task("w1", None).unwrap();
        assert_eq!(t.id, "t1");
        assert_eq!(t.batch_id.as_deref(), Some("batch-0001"));
        assert_eq!(q.next_task("w1", None).unwrap().id, "t2");
        assert!(q.next_task("w1", None).is_none());
    }

    #[test]
    fn closed_tasks_are_never_served() {
        let mut q = TaskQueue::default();
        q.publish(vec![cs_task("t1", 3)]).unwrap();
        for w in ["a", "b", "c"] {
            q.next_task(w, None).unwrap();
            q.submit(resp("t1", w, YES)).unwrap();
        }
        assert!(q.task("t1").unwrap().closed);
        assert!(q.next_task("d", None).is_none());
        assert_eq!(q.submit(resp("t1", "d", YES)), Err(Rejection::Closed("t1".into())));
    }

    #[test]
    fn duplicates_and_schema_are_rejected() {
        let mut q = TaskQueue::default();
        let rerank = Microtask {
            kind: TaskKind::RerankTopK,
            payload: TaskPayload::RankedCaptions {
                image: None,
                captions: (1..=10).map(|i| CaptionOption { id: i, text: format!("c{i}") }).collect(),
                max_picks: 3,
            },
            ..cs_task("r", 5)
        };
        q.publish(vec![rerank]).unwrap();
        let two = Answer::Rerank {
            picks: vec![2, 5],
            none_fits: false,
        };
        assert!(q.submit(resp("r", "a", two.clone())).is_ok());
        assert!(matches!(q.submit(resp("r", "a", two)), Err(Rejection::Duplicate(_))));
        let four = Answer::Rerank {
            picks: vec![1, 2, 3, 4],
            none_fits: false,
        };
        assert!(matches!(q.submit(resp("r", "b", four)), Err(Rejection::Schema(_))));
        assert!(matches!(q.submit(resp("zz", "b", YES)), Err(Rejection::UnknownTask(_))));
    }

    #[test]
    fn batches_are_served_in_order() {
        let mut q = TaskQueue::new(2).unwrap();
        q.publish((0..3).map(|i| cs_task(&format!("t{i}"), 1)).collect()).unwrap();
        assert_eq!(q.current_batch(), Some("batch-0001"));
        q.next_task("a", None).unwrap();
        q.next_task("a", None).unwrap();
        // batch 2 stays hidden while batch 1 is open
        assert!(q.next_task("a", None).is_none());
        q.submit(resp("t0", "a", YES)).unwrap();
        q.submit(resp("t1", "a", YES)).unwrap();
        assert_eq!(q.current_batch(), Some("batch-0002"));
        assert_eq!(q.next_task("a", None).unwrap().id, "t2");
    }

    #[test]
    fn kind_filter() {
        let mut q = TaskQueue::default();
        q.publish(vec![cs_task("t1", 1)]).unwrap();
        assert!(q.next_task("a", Some(TaskKind::RerankTopK)).is_none());
        assert!(q.next_task("a", Some(TaskKind::CaptionCommonsensePrune)).is_some());
    }
}
