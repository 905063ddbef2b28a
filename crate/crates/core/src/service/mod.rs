//! Task queue for live annotators, event-log replay and the HTTP API.

pub mod http;
mod queue;
mod replay;

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

pub use queue::{Accepted, Rejection, TaskQueue, TaskState};
pub use replay::{persist, replay, replay_file, replay_text, EvaluationEntry, LooseTask, ReplayState, ReplayedReport};

use crate::crowd::{Answer, Microtask, TaskKind, WorkerResponse};
use crate::error::{Error, Result};
use crate::events::{EventBody, EventSink, SharedLog};
use crate::fix::Annotator;

/// The queue plus the log every accepted response is appended to.
#[derive(Debug)]
pub struct TaskService {
    queue: Mutex<TaskQueue>,
    changed: Condvar,
    log: SharedLog,
}

impl TaskService {
    pub fn new(queue: TaskQueue, log: SharedLog) -> Arc<Self> {
        Arc::new(Self {
            queue: Mutex::new(queue),
            changed: Condvar::new(),
            log,
        })
    }

    pub fn log(&self) -> &SharedLog {
        &self.log
    }

    fn queue(&self) -> MutexGuard<'_, TaskQueue> {
        self.queue.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Queues tasks. With `log_tasks` the tasks are also appended to the log
    /// (callers that already logged them, like workflow runs, pass false).
    pub fn publish(&self, tasks: Vec<Microtask>, log_tasks: bool) -> Result<Vec<Microtask>> {
        let mut q = self.queue();
        let published = q.publish(tasks)?;
        if log_tasks {
            let mut log = self.log.clone();
            for t in &published {
                log.emit(EventBody::Microtask {
                    run: None,
                    task: t.clone(),
                })?;
            }
        }
        Ok(published)
    }

    /// `kind` is a task kind name; unknown names are an error.
    pub fn next_task(&self, worker: &str, kind: Option<&str>) -> Result<Option<Microtask>> {
        let kind = kind.map(str::parse::<TaskKind>).transpose()?;
        Ok(self.queue().next_task(worker, kind))
    }

    /// Records an accepted response in the queue and the log, waking any
    /// collector waiting on the task.
    pub fn submit(&self, worker: &str, task_id: &str, answer: Answer) -> Result<std::result::Result<Accepted, Rejection>> {
        let mut q = self.queue();
        if let Err(r) = q.check(worker, task_id, &answer) {
            return Ok(Err(r));
        }
        let response = {
            let mut log = self.log.lock();
            let response = WorkerResponse {
                task_id: task_id.to_string(),
                worker_id: worker.to_string(),
                answer,
                timestamp: log.now(),
            };
            log.emit(EventBody::Response {
                response: response.clone(),
            })?;
            log.flush()?;
            response
        };
        let accepted = q.submit(response).expect("checked above");
        if accepted.closed {
            log::info!("task `{task_id}` closed");
            self.changed.notify_all();
        }
        Ok(Ok(accepted))
    }

    pub fn open_count(&self) -> usize {
        self.queue().open_count()
    }

    pub fn task(&self, id: &str) -> Option<TaskState> {
        self.queue().task(id).cloned()
    }

    /// Blocks until every task in `ids` is closed, then returns their
    /// responses in task order.
    pub fn wait_closed(&self, ids: &[String], timeout: Duration) -> Result<Vec<WorkerResponse>> {
        let deadline = Instant::now() + timeout;
        let mut q = self.queue();
        while !q.all_closed(ids.iter().map(String::as_str)) {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                let open = ids.iter().filter(|id| q.task(id).is_some_and(|t| !t.closed)).count();
                return Err(Error::Annotator(format!(
                    "timed out with {open} of {} tasks still open",
                    ids.len()
                )));
            }
            q = self.changed.wait_timeout(q, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        Ok(ids
            .iter()
            .filter_map(|id| q.task(id))
            .flat_map(|t| t.responses.iter().cloned())
            .collect())
    }
}

/// Collects responses from live workers through a [`TaskService`].
/// Responses are logged by the service as they arrive, not by `collect`.
#[derive(Debug, Clone)]
pub struct QueueAnnotator {
    service: Arc<TaskService>,
    timeout: Duration,
}

impl QueueAnnotator {
    pub fn new(service: Arc<TaskService>, timeout: Duration) -> Self {
        Self { service, timeout }
    }
}

impl Annotator for QueueAnnotator {
    fn collect(&mut self, tasks: &[Microtask], _sink: &mut dyn EventSink) -> Result<Vec<WorkerResponse>> {
        let ids: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
        self.service.publish(tasks.to_vec(), false)?;
        self.service.wait_closed(&ids, self.timeout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::TaskPayload;
    use crate::events::{Clock, EventLog};

    fn task(id: &str, k: u32) -> Microtask {
        Microtask {
            id: id.into(),
            kind: TaskKind::CaptionCommonsensePrune,
            payload: TaskPayload::Caption {
                caption: "a dog riding a bike".into(),
            },
            instance_id: "i".into(),
            component_id: "language_model".into(),
            fix_id: None,
            batch_id: None,
            responses_required: k,
        }
    }

    #[test]
    fn unknown_kind_filter_is_an_error() {
        let svc = TaskService::new(TaskQueue::default(), SharedLog::new(EventLog::in_memory(Clock::Logical)));
        assert!(matches!(svc.next_task("w", Some("painting")), Err(Error::UnknownTaskKind(_))));
    }

    #[test]
    fn queue_annotator_waits_for_workers() {
        let log = SharedLog::new(EventLog::in_memory(Clock::Logical));
        let svc = TaskService::new(TaskQueue::default(), log.clone());
        let worker_svc = svc.clone();
        let workers = std::thread::spawn(move || {
            let mut done = 0;
            while done < 3 {
                for w in ["a", "b", "c"] {
                    if let Some(t) = worker_svc.next_task(w, None).unwrap() {
                        worker_svc
                            .submit(w, &t.id, Answer::Commonsense { sensible: false })
                            .unwrap()
                            .unwrap();
                        done += 1;
                    }
                }
                std::thread::yield_now();
            }
        });
        let mut ann = QueueAnnotator::new(svc.clone(), Duration::from_secs(10));
        let responses = ann.collect(&[task("t", 3)], &mut log.clone()).unwrap();
        workers.join().unwrap();
        assert_eq!(responses.len(), 3);
        assert_eq!(log.lock().len(), 3);
    }

    #[test]
    fn queue_annotator_times_out() {
        let log = SharedLog::new(EventLog::in_memory(Clock::Logical));
        let svc = TaskService::new(TaskQueue::default(), log.clone());
        let mut ann = QueueAnnotator::new(svc, Duration::from_millis(20));
        let err = ann.collect(&[task("t", 1)], &mut log.clone()).unwrap_err();
        assert!(matches!(err, Error::Annotator(_)));
    }
}
