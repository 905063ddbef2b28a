use std::collections::BTreeMap;
use std::sync::Arc;

use super::scene::SyntheticScene;
use super::world::{Quality, World};
use crate::crowd::{Answer, Microtask, Span, TaskKind, TaskPayload};
use crate::error::{Error, Result};
use crate::fix::GroundTruth;
use crate::pipeline::PartTag;

/// Answers a careful worker who can see the scene would give.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    world: Arc<World>,
    /// By instance id.
    scenes: Arc<BTreeMap<String, SyntheticScene>>,
}

impl SceneTruth {
    pub fn new(world: Arc<World>, scenes: Arc<BTreeMap<String, SyntheticScene>>) -> Self {
        Self { world, scenes }
    }

    fn scene(&self, task: &Microtask) -> Result<&SyntheticScene> {
        self.scenes
            .get(&task.instance_id)
            .ok_or_else(|| Error::Annotator(format!("no scene for instance `{}`", task.instance_id)))
    }

    pub fn quality(&self, instance_id: &str, caption: &str) -> Option<Quality> {
        let scene = self.scenes.get(instance_id)?;
        Some(Quality::of(&self.world, &scene.content, caption))
    }
}

impl GroundTruth for SceneTruth {
    fn answer(&self, task: &Microtask) -> Result<Answer> {
        Ok(match &task.payload {
            TaskPayload::WordList { words, .. } => {
                let scene = self.scene(task)?;
                let (tag, truth) = match task.kind {
                    TaskKind::WordlistAddRemoveObjects => (PartTag::Object, &scene.content.objects),
                    TaskKind::WordlistAddRemoveActivities => (PartTag::Activity, &scene.content.activities),
                    other => return Err(Error::UnsupportedTask(format!("word list shown in a {other} task"))),
                };
                let remove = words
                    .iter()
                    .filter(|w| w.tag == tag && !truth.contains(&w.word))
                    .map(|w| w.word.clone())
                    .collect();
                let add = truth
                    .iter()
                    .filter(|t| !words.iter().any(|w| &w.word == *t))
                    .cloned()
                    .collect();
                Answer::WordList { remove, add }
            }
            TaskPayload::Caption { caption } => match task.kind {
                TaskKind::CaptionCommonsensePrune => Answer::Commonsense {
                    sensible: self.world.sensible(caption),
                },
                _ => {
                    let parts = self.world.parse(caption);
                    let rating = parts.as_ref().map_or(3, |p| p.template.fluency());
                    let highlights = parts
                        .and_then(|p| p.template.problem_segment())
                        .and_then(|seg| Span::find(caption, seg))
                        .into_iter()
                        .collect();
                    Answer::Fluency { rating, highlights }
                }
            },
            TaskPayload::RankedCaptions {
                captions, max_picks, ..
            } => {
                let scene = self.scene(task)?;
                let mut judged: Vec<(u8, f64, u32)> = captions
                    .iter()
                    .map(|c| {
                        let q = Quality::of(&self.world, &scene.content, &c.text);
                        (q.general_likert(), q.general, c.id)
                    })
                    .collect();
                let best = judged.iter().map(|j| j.0).max().unwrap_or(1);
                if best < 3 {
                    Answer::Rerank {
                        picks: Vec::new(),
                        none_fits: true,
                    }
                } else {
                    judged.retain(|j| j.0 == best);
                    judged.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
                    Answer::Rerank {
                        picks: judged.iter().take(*max_picks).map(|j| j.2).collect(),
                        none_fits: false,
                    }
                }
            }
            TaskPayload::Evaluation { caption, .. } => {
                let scene = self.scene(task)?;
                Answer::Evaluation(Quality::of(&self.world, &scene.content, caption).answer())
            }
        })
    }
}
