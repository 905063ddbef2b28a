//! Values exchanged between pipeline components.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// String-keyed bag of values; the input and output shape of every component.
pub type Record = BTreeMap<String, DataValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartTag {
    Object,
    Activity,
    Other,
}

impl fmt::Display for PartTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartTag::Object => "object",
            PartTag::Activity => "activity",
            PartTag::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    pub score: f64,
    pub tag: PartTag,
}

impl ScoredWord {
    pub fn new(word: impl Into<String>, score: f64, tag: PartTag) -> Self {
        Self {
            word: word.into(),
            score,
            tag,
        }
    }
}

/// Detector output: words with recognition scores in `[0, 1]`, unique by
/// `(word, tag)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScoredWord>", into = "Vec<ScoredWord>")]
pub struct ScoredWordList(Vec<ScoredWord>);

impl ScoredWordList {
    pub fn new(entries: Vec<ScoredWord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for entry in &entries {
            if !(0.0..=1.0).contains(&entry.score) {
                return Err(Error::InvalidValue(format!(
                    "score {} of `{}` outside [0, 1]",
                    entry.score, entry.word
                )));
            }
            if !seen.insert((entry.word.as_str(), entry.tag)) {
                return Err(Error::InvalidValue(format!(
                    "duplicate word `{}` ({})",
                    entry.word, entry.tag
                )));
            }
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[ScoredWord] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScoredWord> {
        self.0.iter()
    }

    pub fn with_tag(&self, tag: PartTag) -> impl Iterator<Item = &ScoredWord> {
        self.0.iter().filter(move |w| w.tag == tag)
    }

    pub fn get(&self, word: &str) -> Option<&ScoredWord> {
        self.0.iter().find(|w| w.word == word)
    }

    pub fn into_inner(self) -> Vec<ScoredWord> {
        self.0
    }
}

impl TryFrom<Vec<ScoredWord>> for ScoredWordList {
    type Error = Error;

    fn try_from(entries: Vec<ScoredWord>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<ScoredWordList> for Vec<ScoredWord> {
    fn from(list: ScoredWordList) -> Self {
        list.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCaption {
    pub text: String,
    /// Log-likelihood (language model) or ranking score (reranker).
    pub score: f64,
    pub rank: u32,
}

/// Ranked captions; ranks are always a permutation of `1..=len`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RankedCaption>", into = "Vec<RankedCaption>")]
pub struct CaptionList(Vec<RankedCaption>);

impl CaptionList {
    /// Validates that ranks form a permutation of `1..=len`. Entries are
    /// stored sorted by rank.
    pub fn new(mut entries: Vec<RankedCaption>) -> Result<Self> {
        entries.sort_by_key(|c| c.rank);
        for (i, c) in entries.iter().enumerate() {
            if c.rank as usize != i + 1 {
                return Err(Error::InvalidValue(format!(
                    "caption ranks are not a permutation of 1..={}",
                    entries.len()
                )));
            }
        }
        Ok(Self(entries))
    }

    /// Builds a list from `(text, score)` pairs already in rank order.
    pub fn from_ordered<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self(
            items
                .into_iter()
                .enumerate()
                .map(|(i, (text, score))| RankedCaption {
                    text: text.into(),
                    score,
                    rank: i as u32 + 1,
                })
                .collect(),
        )
    }

    /// Keeps the given entries in their current order and renumbers ranks.
    pub fn renumbered(entries: impl IntoIterator<Item = RankedCaption>) -> Self {
        Self(
            entries
                .into_iter()
                .enumerate()
                .map(|(i, mut c)| {
                    c.rank = i as u32 + 1;
                    c
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[RankedCaption] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn best(&self) -> Option<&RankedCaption> {
        self.0.first()
    }

    pub fn top(&self, k: usize) -> &[RankedCaption] {
        &self.0[..k.min(self.0.len())]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RankedCaption> {
        self.0.iter()
    }
}

impl TryFrom<Vec<RankedCaption>> for CaptionList {
    type Error = Error;

    fn try_from(entries: Vec<RankedCaption>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<CaptionList> for Vec<RankedCaption> {
    fn from(list: CaptionList) -> Self {
        list.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    ScoredWordList,
    CaptionList,
    Caption,
    ImageRef,
    Scalar,
    Record,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::ScoredWordList => "scored_word_list",
            ValueKind::CaptionList => "caption_list",
            ValueKind::Caption => "caption",
            ValueKind::ImageRef => "image_ref",
            ValueKind::Scalar => "scalar",
            ValueKind::Record => "record",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DataValue {
    ScoredWordList(ScoredWordList),
    CaptionList(CaptionList),
    Caption(String),
    ImageRef(String),
    Scalar(f64),
    Record(Record),
}

impl DataValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            DataValue::ScoredWordList(_) => ValueKind::ScoredWordList,
            DataValue::CaptionList(_) => ValueKind::CaptionList,
            DataValue::Caption(_) => ValueKind::Caption,
            DataValue::ImageRef(_) => ValueKind::ImageRef,
            DataValue::Scalar(_) => ValueKind::Scalar,
            DataValue::Record(_) => ValueKind::Record,
        }
    }

    pub fn as_word_list(&self) -> Option<&ScoredWordList> {
        match self {
            DataValue::ScoredWordList(w) => Some(w),
            _ => None,
        }
    }

    pub fn as_caption_list(&self) -> Option<&CaptionList> {
        match self {
            DataValue::CaptionList(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_image_ref(&self) -> Option<&str> {
        match self {
            DataValue::ImageRef(r) => Some(r),
            _ => None,
        }
    }

    /// The final caption carried by a system output: the caption itself, or
    /// the rank-1 entry of a caption list.
    pub fn best_caption(&self) -> Option<&str> {
        match self {
            DataValue::Caption(c) => Some(c),
            DataValue::CaptionList(list) => list.best().map(|c| c.text.as_str()),
            _ => None,
        }
    }
}
