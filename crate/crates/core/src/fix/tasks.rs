use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::spec::{FixKind, FixSpec};
use crate::crowd::{CaptionOption, Microtask, TaskPayload};
use crate::pipeline::{DataValue, ExecutionTrace, ScoredWordList};
use crate::rng;

/// Tasks for one fix round plus any warnings raised while building them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskBatch {
    pub tasks: Vec<Microtask>,
    pub warnings: Vec<String>,
}

/// Image reference carried by the instance input, if any.
pub fn instance_image(trace: &ExecutionTrace) -> Option<String> {
    trace.input.values().find_map(|v| v.as_image_ref().map(str::to_string))
}

/// Builds the microtasks for `fix` from the target output recorded in
/// `trace`. Task ids are `{run_id}/{fix id}/{unit}`.
pub fn generate_microtasks(fix: &FixSpec, trace: &ExecutionTrace, run_id: &str, seed: u64) -> TaskBatch {
    let mut batch = TaskBatch::default();
    let Some(target) = trace.value(&fix.target) else {
        batch
            .warnings
            .push(format!("trace of `{}` has no output at `{}`", trace.instance_id, fix.target));
        return batch;
    };
    let task = |unit: &str, payload: TaskPayload| Microtask {
        id: format!("{run_id}/{}/{unit}", fix.id),
        kind: fix.kind.task_kind(),
        payload,
        instance_id: trace.instance_id.clone(),
        component_id: fix.target.component.clone(),
        fix_id: Some(fix.id.clone()),
        batch_id: None,
        responses_required: fix.responses_per_task(),
    };

    match fix.kind {
        FixKind::WordlistAddRemoveObjects | FixKind::WordlistAddRemoveActivities => {
            let tag = fix.kind.part_tag().expect("word-list fix");
            let words: Vec<_> = target
                .as_word_list()
                .map(|l| l.with_tag(tag).cloned().collect())
                .unwrap_or_default();
            if words.is_empty() {
                batch
                    .warnings
                    .push(format!("`{}`: empty {tag} list at `{}`, no tasks", trace.instance_id, fix.target));
                return batch;
            }
            let unit = match tag {
                crate::pipeline::PartTag::Object => "objects",
                crate::pipeline::PartTag::Activity => "activities",
                crate::pipeline::PartTag::Other => "other",
            };
            batch.tasks.push(task(
                unit,
                TaskPayload::WordList {
                    image: instance_image(trace),
                    words,
                },
            ));
        }
        FixKind::CaptionCommonsensePrune | FixKind::CaptionFluencyPrune => {
            let scope = match trace.value(fix.scope()).and_then(DataValue::as_caption_list) {
                Some(list) => list,
                None => {
                    batch
                        .warnings
                        .push(format!("`{}`: no caption list at `{}`", trace.instance_id, fix.scope()));
                    return batch;
                }
            };
            if scope.is_empty() {
                batch
                    .warnings
                    .push(format!("`{}`: empty caption list at `{}`, no tasks", trace.instance_id, fix.scope()));
            }
            let mut seen = BTreeSet::new();
            for c in scope.top(fix.top_k()) {
                if seen.insert(c.text.as_str()) {
                    batch.tasks.push(task(
                        &format!("c{:02}", c.rank),
                        TaskPayload::Caption {
                            caption: c.text.clone(),
                        },
                    ));
                }
            }
        }
        FixKind::RerankTopK => {
            let list = target.as_caption_list().cloned().unwrap_or_default();
            if list.is_empty() {
                batch
                    .warnings
                    .push(format!("`{}`: empty caption list at `{}`, no tasks", trace.instance_id, fix.target));
                return batch;
            }
            let mut captions: Vec<CaptionOption> = list
                .top(fix.top_k())
                .iter()
                .map(|c| CaptionOption {
                    id: c.rank,
                    text: c.text.clone(),
                })
                .collect();
            captions.shuffle(&mut rng::stream(seed, &["shuffle", run_id, &fix.id]));
            let k = captions.len();
            batch.tasks.push(task(
                &format!("top{k}"),
                TaskPayload::RankedCaptions {
                    image: instance_image(trace),
                    captions,
                    max_picks: fix.max_picks(),
                },
            ));
        }
    }
    batch
}

/// Word list shown in a word-list task.
pub(crate) fn shown_words(task: &Microtask) -> Option<ScoredWordList> {
    match &task.payload {
        TaskPayload::WordList { words, .. } => ScoredWordList::new(words.clone()).ok(),
        _ => None,
    }
}
