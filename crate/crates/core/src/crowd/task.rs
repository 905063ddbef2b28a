//! Microtasks, worker answers, and answer schema validation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::pipeline::ScoredWord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    WordlistAddRemoveObjects,
    WordlistAddRemoveActivities,
    CaptionCommonsensePrune,
    CaptionFluencyPrune,
    RerankTopK,
    SystemEvaluation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::WordlistAddRemoveObjects,
        TaskKind::WordlistAddRemoveActivities,
        TaskKind::CaptionCommonsensePrune,
        TaskKind::CaptionFluencyPrune,
        TaskKind::RerankTopK,
        TaskKind::SystemEvaluation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::WordlistAddRemoveObjects => "wordlist-add-remove-objects",
            TaskKind::WordlistAddRemoveActivities => "wordlist-add-remove-activities",
            TaskKind::CaptionCommonsensePrune => "caption-commonsense-prune",
            TaskKind::CaptionFluencyPrune => "caption-fluency-prune",
            TaskKind::RerankTopK => "rerank-top-k",
            TaskKind::SystemEvaluation => "system-evaluation",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownTaskKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionOption {
    /// Rank of the caption in the list the task was drawn from.
    pub id: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskPayload {
    WordList {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<String>,
        words: Vec<ScoredWord>,
    },
    /// Language model tasks never carry the image.
    Caption { caption: String },
    RankedCaptions {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<String>,
        /// Presentation order (shuffled).
        captions: Vec<CaptionOption>,
        max_picks: usize,
    },
    Evaluation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image: Option<String>,
        caption: String,
    },
}

impl TaskPayload {
    pub fn image(&self) -> Option<&str> {
        match self {
            TaskPayload::WordList { image, .. }
            | TaskPayload::RankedCaptions { image, .. }
            | TaskPayload::Evaluation { image, .. } => image.as_deref(),
            TaskPayload::Caption { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microtask {
    pub id: String,
    pub kind: TaskKind,
    pub payload: TaskPayload,
    pub instance_id: String,
    pub component_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<String>,
    /// Responses required before the task closes.
    pub responses_required: u32,
}

/// Character span `[start, end)` of a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn text(self, caption: &str) -> String {
        caption
            .chars()
            .skip(self.start)
            .take(self.end.saturating_sub(self.start))
            .collect()
    }

    /// Character span of the first occurrence of `segment` in `caption`.
    pub fn find(caption: &str, segment: &str) -> Option<Span> {
        let byte = caption.find(segment)?;
        let start = caption[..byte].chars().count();
        Some(Span {
            start,
            end: start + segment.chars().count(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationAnswer {
    pub accuracy: Option<u8>,
    pub detail: Option<u8>,
    pub language: Option<u8>,
    pub commonsense: Option<u8>,
    pub general: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    WordList {
        #[serde(default)]
        remove: Vec<String>,
        #[serde(default)]
        add: Vec<String>,
    },
    Commonsense { sensible: bool },
    Fluency {
        rating: u8,
        #[serde(default)]
        highlights: Vec<Span>,
    },
    Rerank {
        #[serde(default)]
        picks: Vec<u32>,
        #[serde(default)]
        none_fits: bool,
    },
    Evaluation(EvaluationAnswer),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub task_id: String,
    pub worker_id: String,
    pub answer: Answer,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn likert(value: Option<u8>, name: &str) -> Result<(), SchemaError> {
    match value {
        Some(1..=5) => Ok(()),
        Some(v) => Err(SchemaError(format!("{name} rating {v} outside 1-5"))),
        None => Err(SchemaError(format!("missing measure `{name}`"))),
    }
}

/// Checks that `answer` fits the schema of `task`'s kind.
pub fn validate_answer(task: &Microtask, answer: &Answer) -> Result<(), SchemaError> {
    match (task.kind, &task.payload, answer) {
        (
            TaskKind::WordlistAddRemoveObjects | TaskKind::WordlistAddRemoveActivities,
            TaskPayload::WordList { words, .. },
            Answer::WordList { remove, add },
        ) => {
            let shown: BTreeSet<&str> = words.iter().map(|w| w.word.as_str()).collect();
            let mut seen = BTreeSet::new();
            for w in remove {
                if !shown.contains(w.as_str()) {
                    return Err(SchemaError(format!("cannot remove `{w}`: not in the list")));
                }
                if !seen.insert(w) {
                    return Err(SchemaError(format!("`{w}` removed twice")));
                }
            }
            let mut added = BTreeSet::new();
            for w in add {
                if w.trim().is_empty() {
                    return Err(SchemaError("added word is empty".into()));
                }
                if shown.contains(w.as_str()) {
                    return Err(SchemaError(format!("cannot add `{w}`: already listed")));
                }
                if !added.insert(w) {
                    return Err(SchemaError(format!("`{w}` added twice")));
                }
            }
            Ok(())
        }
        (TaskKind::CaptionCommonsensePrune, TaskPayload::Caption { .. }, Answer::Commonsense { .. }) => Ok(()),
        (
            TaskKind::CaptionFluencyPrune,
            TaskPayload::Caption { caption },
            Answer::Fluency { rating, highlights },
        ) => {
            likert(Some(*rating), "fluency")?;
            let len = caption.chars().count();
            for span in highlights {
                if span.start >= span.end || span.end > len {
                    return Err(SchemaError(format!(
                        "highlight {}..{} outside caption of length {len}",
                        span.start, span.end
                    )));
                }
                if tokenize(&span.text(caption)).is_empty() {
                    return Err(SchemaError("highlight covers no words".into()));
                }
            }
            Ok(())
        }
        (
            TaskKind::RerankTopK,
            TaskPayload::RankedCaptions {
                captions, max_picks, ..
            },
            Answer::Rerank { picks, none_fits },
        ) => {
            if picks.len() > *max_picks {
                return Err(SchemaError(format!(
                    "{} picks exceed the limit of {max_picks}",
                    picks.len()
                )));
            }
            if *none_fits && !picks.is_empty() {
                return Err(SchemaError("`none fits` answers cannot pick captions".into()));
            }
            let ids: BTreeSet<u32> = captions.iter().map(|c| c.id).collect();
            let mut seen = BTreeSet::new();
            for p in picks {
                if !ids.contains(p) {
                    return Err(SchemaError(format!("pick {p} is not a listed caption")));
                }
                if !seen.insert(p) {
                    return Err(SchemaError(format!("caption {p} picked twice")));
                }
            }
            Ok(())
        }
        (TaskKind::SystemEvaluation, TaskPayload::Evaluation { .. }, Answer::Evaluation(e)) => {
            likert(e.accuracy, "accuracy")?;
            likert(e.detail, "detail")?;
            likert(e.language, "language")?;
            likert(e.general, "general")?;
            match e.commonsense {
                Some(0 | 1) => Ok(()),
                Some(v) => Err(SchemaError(format!("commonsense must be 0 or 1, got {v}"))),
                None => Err(SchemaError("missing measure `commonsense`".into())),
            }
        }
        (kind, _, _) => Err(SchemaError(format!("answer does not match a {kind} task"))),
    }
}

/// Categorical decisions carried by an answer, keyed by decision unit. Used
/// to compare a worker against the per-unit majority.
pub fn categorical_units(task: &Microtask, answer: &Answer) -> Vec<(String, String)> {
    match (&task.payload, answer) {
        (TaskPayload::WordList { words, .. }, Answer::WordList { remove, add }) => {
            let mut units: Vec<(String, String)> = words
                .iter()
                .map(|w| {
                    let decision = if remove.contains(&w.word) { "remove" } else { "keep" };
                    (format!("word:{}", w.word), decision.to_string())
                })
                .collect();
            units.extend(add.iter().map(|w| (format!("add:{w}"), "add".to_string())));
            units
        }
        (_, Answer::Commonsense { sensible }) => vec![("sensible".into(), sensible.to_string())],
        (_, Answer::Fluency { rating, .. }) => vec![("fluency".into(), rating.to_string())],
        (_, Answer::Rerank { picks, none_fits }) => {
            let mut units = vec![("none_fits".to_string(), none_fits.to_string())];
            if let TaskPayload::RankedCaptions { captions, .. } = &task.payload {
                units.extend(
                    captions
                        .iter()
                        .map(|c| (format!("pick:{}", c.id), picks.contains(&c.id).to_string())),
                );
            }
            units
        }
        (_, Answer::Evaluation(e)) => {
            let mut units = Vec::new();
            if let Some(g) = e.general {
                units.push(("satisfactory".into(), (g >= 4).to_string()));
            }
            if let Some(c) = e.commonsense {
                units.push(("commonsense".into(), c.to_string()));
            }
            units
        }
        _ => Vec::new(),
    }
}
