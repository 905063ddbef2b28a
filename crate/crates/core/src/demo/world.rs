use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crowd::EvaluationAnswer;
use crate::error::{Error, Result};
use crate::rng;

pub const AGENTS: &[&str] = &[
    "bear", "bird", "boy", "cat", "dog", "elephant", "girl", "horse", "man", "person", "woman",
];
pub const THINGS: &[&str] = &[
    "ball", "bench", "bike", "blender", "cake", "car", "chair", "computer", "frisbee", "glasses", "hat", "keyboard",
    "kite", "laptop", "pizza", "table", "umbrella",
];
pub const ACTIVITIES: &[&str] = &["eating", "holding", "playing", "riding", "wearing", "flying", "throwing"];

/// Caption shapes the language model fills in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// `a {s}`
    Subject,
    /// `a {s} {v} a {o}`
    Svo,
    /// `a {s} sitting on top of a {o}`
    On,
    /// `a {s} next to a {o}`
    NextTo,
    /// `a {s} in front of a {o}`; reads badly.
    InFrontOf,
}

impl Template {
    pub const SPATIAL: [Template; 3] = [Template::On, Template::NextTo, Template::InFrontOf];

    pub fn render(self, s: &str, v: Option<&str>, o: Option<&str>) -> String {
        let o = o.unwrap_or("");
        match self {
            Template::Subject => format!("a {s}"),
            Template::Svo => format!("a {s} {} a {o}", v.unwrap_or("")),
            Template::On => format!("a {s} sitting on top of a {o}"),
            Template::NextTo => format!("a {s} next to a {o}"),
            Template::InFrontOf => format!("a {s} in front of a {o}"),
        }
    }

    /// Relation key used in the plausibility table.
    pub fn relation(self) -> Option<&'static str> {
        match self {
            Template::Subject | Template::Svo => None,
            Template::On => Some("on"),
            Template::NextTo => Some("next-to"),
            Template::InFrontOf => Some("in-front-of"),
        }
    }

    /// Fluency rating a careful reader gives the template.
    pub fn fluency(self) -> u8 {
        match self {
            Template::InFrontOf => 2,
            _ => 5,
        }
    }

    /// Segment a reader highlights as the problem, if any.
    pub fn problem_segment(self) -> Option<&'static str> {
        match self {
            Template::InFrontOf => Some("in front of"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityEntry {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub weight: f64,
}

/// Commonsense weight of `(subject, relation, object)` combinations, as the
/// language model believes them. Missing entries weigh 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PlausibilityEntry>", into = "Vec<PlausibilityEntry>")]
pub struct PlausibilityTable(BTreeMap<(String, String, String), f64>);

impl PlausibilityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: &str, rel: &str, o: &str) -> f64 {
        self.0
            .get(&(s.to_string(), rel.to_string(), o.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, s: &str, rel: &str, o: &str, weight: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidValue(format!("plausibility {weight} of {s} {rel} {o} outside [0, 1]")));
        }
        self.0.insert((s.to_string(), rel.to_string(), o.to_string()), weight);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str, f64)> {
        self.0.iter().map(|((s, r, o), w)| (s.as_str(), r.as_str(), o.as_str(), *w))
    }
}

impl TryFrom<Vec<PlausibilityEntry>> for PlausibilityTable {
    type Error = Error;

    fn try_from(entries: Vec<PlausibilityEntry>) -> Result<Self> {
        let mut t = PlausibilityTable::new();
        for e in entries {
            t.set(&e.subject, &e.relation, &e.object, e.weight)?;
        }
        Ok(t)
    }
}

impl From<PlausibilityTable> for Vec<PlausibilityEntry> {
    fn from(t: PlausibilityTable) -> Self {
        t.0.into_iter()
            .map(|((subject, relation, object), weight)| PlausibilityEntry {
                subject,
                relation,
                object,
                weight,
            })
            .collect()
    }
}

/// Parsed caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionParts {
    pub template: Template,
    pub subject: String,
    pub verb: Option<String>,
    pub object: Option<String>,
}

impl CaptionParts {
    pub fn relation(&self) -> Option<&str> {
        self.template.relation().or(self.verb.as_deref())
    }
}

/// Vocabulary, the language model's plausibility beliefs, and which
/// combinations are actually absurd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub agents: Vec<String>,
    pub things: Vec<String>,
    pub activities: Vec<String>,
    pub table: PlausibilityTable,
    /// Ground truth: combinations no sensible caption describes.
    pub nonsense: BTreeSet<(String, String, String)>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl World {
    /// Default vocabulary with an empty table.
    pub fn vocabulary() -> Self {
        Self {
            agents: strings(AGENTS),
            things: strings(THINGS),
            activities: strings(ACTIVITIES),
            table: PlausibilityTable::new(),
            nonsense: BTreeSet::new(),
        }
    }

    /// Random plausibility beliefs over the default vocabulary. A fraction
    /// of the combinations the model finds plausible are in fact absurd.
    pub fn generate(seed: u64, params: &WorldParams) -> Self {
        let mut w = Self::vocabulary();
        let mut rng = rng::stream(seed, &["world"]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, plausible_share: f64| {
            if rng.gen_bool(plausible_share) {
                rng.gen_range(params.floor..=1.0)
            } else {
                rng.gen_range(0.0..params.floor)
            }
        };
        let objects = w.objects();
        for s in &w.agents.clone() {
            for v in &w.activities.clone() {
                for o in &objects {
                    if o != s {
                        let weight = draw(&mut rng, params.svo_plausible);
                        w.table.set(s, v, o, weight).expect("weight in range");
                    }
                }
            }
        }
        for t in Template::SPATIAL {
            let rel = t.relation().expect("spatial");
            for s in &objects {
                for o in &objects {
                    if o != s {
                        let weight = draw(&mut rng, params.spatial_plausible);
                        w.table.set(s, rel, o, weight).expect("weight in range");
                    }
                }
            }
        }
        let plausible: Vec<(String, String, String)> = w
            .table
            .iter()
            .filter(|(.., wt)| *wt >= params.floor)
            .map(|(s, r, o, _)| (s.to_string(), r.to_string(), o.to_string()))
            .collect();
        for key in plausible {
            if rng.gen_bool(params.nonsense_share) {
                w.nonsense.insert(key);
            }
        }
        w
    }

    pub fn objects(&self) -> Vec<String> {
        let mut v: Vec<String> = self.agents.iter().chain(&self.things).cloned().collect();
        v.sort();
        v
    }

    pub fn is_agent(&self, word: &str) -> bool {
        self.agents.iter().any(|a| a == word)
    }

    pub fn is_activity(&self, word: &str) -> bool {
        self.activities.iter().any(|a| a == word)
    }

    pub fn is_nonsense(&self, s: &str, rel: &str, o: &str) -> bool {
        self.nonsense.contains(&(s.to_string(), rel.to_string(), o.to_string()))
    }

    /// Recognizes captions produced from the templates.
    pub fn parse(&self, caption: &str) -> Option<CaptionParts> {
        let t: Vec<&str> = caption.split_whitespace().collect();
        let parts = |template, s: &str, v: Option<&str>, o: Option<&str>| {
            Some(CaptionParts {
                template,
                subject: s.to_string(),
                verb: v.map(str::to_string),
                object: o.map(str::to_string),
            })
        };
        match t.as_slice() {
            ["a", s] => parts(Template::Subject, s, None, None),
            ["a", s, "sitting", "on", "top", "of", "a", o] => parts(Template::On, s, None, Some(o)),
            ["a", s, "next", "to", "a", o] => parts(Template::NextTo, s, None, Some(o)),
            ["a", s, "in", "front", "of", "a", o] => parts(Template::InFrontOf, s, None, Some(o)),
            ["a", s, v, "a", o] if self.is_activity(v) => parts(Template::Svo, s, Some(v), Some(o)),
            _ => None,
        }
    }

    /// Whether a careful reader finds the caption sensible.
    pub fn sensible(&self, caption: &str) -> bool {
        match self.parse(caption) {
            Some(p) => match (p.relation(), &p.object) {
                (Some(rel), Some(o)) => !self.is_nonsense(&p.subject, rel, o),
                _ => true,
            },
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    /// Plausibility below this is implausible to the language model.
    pub floor: f64,
    pub svo_plausible: f64,
    pub spatial_plausible: f64,
    pub nonsense_share: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            floor: 0.2,
            svo_plausible: 0.4,
            spatial_plausible: 0.3,
            nonsense_share: 0.15,
        }
    }
}

/// What a scene actually shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneContent {
    pub subject: String,
    pub activity: Option<String>,
    pub object: Option<String>,
    pub objects: BTreeSet<String>,
    pub activities: BTreeSet<String>,
}

/// Judged quality of a caption for a scene; fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quality {
    pub accuracy: f64,
    pub detail: f64,
    pub language: u8,
    /// 1 when sensible.
    pub commonsense: u8,
    pub general: f64,
}

const SUBJECT_WEIGHT: f64 = 3.0;
const OBJECT_WEIGHT: f64 = 2.0;
const ACTIVITY_WEIGHT: f64 = 1.0;

pub fn likert(x: f64) -> u8 {
    1 + (4.0 * x.clamp(0.0, 1.0)).round() as u8
}

impl Quality {
    pub fn of(world: &World, scene: &SceneContent, caption: &str) -> Self {
        let Some(p) = world.parse(caption) else {
            return Quality {
                accuracy: 0.0,
                detail: 0.0,
                language: 3,
                commonsense: 1,
                general: 0.15,
            };
        };
        let truth = |w: &str| scene.objects.contains(w) || scene.activities.contains(w);
        let mut said = vec![(p.subject.as_str(), SUBJECT_WEIGHT)];
        if let Some(v) = &p.verb {
            said.push((v, ACTIVITY_WEIGHT));
        }
        if let Some(o) = &p.object {
            said.push((o, OBJECT_WEIGHT));
        }
        let total: f64 = said.iter().map(|(_, w)| w).sum();
        let accuracy = said.iter().filter(|(x, _)| truth(x)).map(|(_, w)| w).sum::<f64>() / total;

        let words: BTreeSet<&str> = caption.split_whitespace().collect();
        let mut key = vec![(scene.subject.as_str(), SUBJECT_WEIGHT)];
        if let Some(a) = &scene.activity {
            key.push((a, ACTIVITY_WEIGHT));
        }
        if let Some(o) = &scene.object {
            key.push((o, OBJECT_WEIGHT));
        }
        let total: f64 = key.iter().map(|(_, w)| w).sum();
        let detail = key.iter().filter(|(x, _)| words.contains(x)).map(|(_, w)| w).sum::<f64>() / total;

        let language = p.template.fluency();
        let sensible = world.sensible(caption);
        let commonsense = u8::from(sensible);
        let mut general = 0.55 * accuracy
            + 0.25 * detail
            + 0.1 * f64::from(language - 1) / 4.0
            + 0.1 * f64::from(commonsense);
        if !sensible {
            general /= 2.0;
        }
        Quality {
            accuracy,
            detail,
            language,
            commonsense,
            general,
        }
    }

    pub fn answer(&self) -> EvaluationAnswer {
        EvaluationAnswer {
            accuracy: Some(likert(self.accuracy)),
            detail: Some(likert(self.detail)),
            language: Some(self.language),
            commonsense: Some(self.commonsense),
            general: Some(likert(self.general)),
        }
    }

    pub fn general_likert(&self) -> u8 {
        likert(self.general)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneContent {
        SceneContent {
            subject: "man".into(),
            activity: Some("riding".into()),
            object: Some("bike".into()),
            objects: ["man", "bike"].iter().map(|s| s.to_string()).collect(),
            activities: ["riding".to_string()].into(),
        }
    }

    #[test]
    fn parse_round_trips_every_template() {
        let w = World::vocabulary();
        for t in [Template::Subject, Template::Svo, Template::On, Template::NextTo, Template::InFrontOf] {
            let text = t.render("man", Some("riding"), Some("bike"));
            let p = w.parse(&text).unwrap();
            assert_eq!(p.template, t);
            assert_eq!(p.subject, "man");
        }
        assert!(w.parse("a picture of something").is_none());
    }

    #[test]
    fn quality_of_ground_truth_caption_is_top() {
        let w = World::vocabulary();
        let q = Quality::of(&w, &scene(), "a man riding a bike");
        assert_eq!(q.answer().general, Some(5));
        assert_eq!(q.accuracy, 1.0);
        let q = Quality::of(&w, &scene(), "a dog next to a car");
        assert_eq!(q.accuracy, 0.0);
        assert!(q.general_likert() <= 2);
    }

    #[test]
    fn nonsense_halves_general() {
        let mut w = World::vocabulary();
        w.nonsense.insert(("bike".into(), "on".into(), "man".into()));
        let q = Quality::of(&w, &scene(), "a bike sitting on top of a man");
        assert_eq!(q.commonsense, 0);
        // acc 1, detail 5/6 (activity missing), fluent, senseless
        assert!((q.general - 0.5 * (0.55 + 0.25 * 5.0 / 6.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn world_generation_is_deterministic() {
        let a = World::generate(7, &WorldParams::default());
        let b = World::generate(7, &WorldParams::default());
        assert_eq!(a, b);
        assert!(a.table.iter().all(|(.., w)| (0.0..=1.0).contains(&w)));
        assert!(!a.nonsense.is_empty());
    }
}
