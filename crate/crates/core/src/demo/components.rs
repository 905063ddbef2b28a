//! The three demo components: a synthetic detector, a template language
//! model and a linear reranker.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use super::world::{Template, World};
use crate::error::{Error, Result};
use crate::pipeline::{CaptionList, DataValue, ExecutorRegistry, PartTag, Record, ScoredWord, ScoredWordList};
use crate::rng;

pub const FALLBACK_CAPTION: &str = "a picture of something";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorRates {
    pub precision: f64,
    pub recall: f64,
}

impl DetectorRates {
    pub const PERFECT: DetectorRates = DetectorRates {
        precision: 1.0,
        recall: 1.0,
    };

    fn check(self) -> Result<()> {
        for (name, v) in [("precision", self.precision), ("recall", self.recall)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidValue(format!("detector {name} {v} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub objects: DetectorRates,
    pub activities: DetectorRates,
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            objects: DetectorRates {
                precision: 0.44,
                recall: 0.92,
            },
            activities: DetectorRates {
                precision: 0.8,
                recall: 0.87,
            },
            seed: 0,
        }
    }
}

fn detect_category(
    scene: &SyntheticScene,
    tag: PartTag,
    truth: &BTreeSet<String>,
    vocabulary: &[String],
    rates: DetectorRates,
    seed: u64,
) -> Vec<ScoredWord> {
    let mut rng = rng::stream(seed, &["detector", &scene.id, &tag.to_string()]);
    let kept: Vec<&String> = truth.iter().filter(|_| rng.gen_bool(rates.recall)).collect();
    // distractors so that kept / (kept + distractors) is the precision in expectation
    let expected = kept.len() as f64 * (1.0 - rates.precision) / rates.precision;
    let mut n = expected.floor() as usize;
    if rng.gen_bool(expected.fract()) {
        n += 1;
    }
    let mut pool: Vec<&String> = vocabulary.iter().filter(|w| !truth.contains(*w)).collect();
    pool.shuffle(&mut rng);
    let mut out: Vec<ScoredWord> = kept
        .into_iter()
        .map(|w| ScoredWord::new(w.clone(), round3(rng.gen_range(0.5..=1.0)), tag))
        .collect();
    out.extend(
        pool.into_iter()
            .take(n)
            .map(|w| ScoredWord::new(w.clone(), round3(rng.gen_range(0.2..=0.9)), tag)),
    );
    out
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Keeps each true word with probability `recall` and adds distractors so
/// the expected precision is `precision`. Scenes with fixed detections
/// return them unchanged.
pub fn synthetic_detector(scene: &SyntheticScene, world: &World, params: &DetectorParams) -> Result<ScoredWordList> {
    params.objects.check()?;
    params.activities.check()?;
    if let Some(fixed) = &scene.detections {
        return ScoredWordList::new(fixed.clone());
    }
    let mut words = detect_category(
        scene,
        PartTag::Object,
        &scene.content.objects,
        &world.objects(),
        params.objects,
        params.seed,
    );
    words.extend(detect_category(
        scene,
        PartTag::Activity,
        &scene.content.activities,
        &world.activities,
        params.activities,
        params.seed,
    ));
    words.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.word.cmp(&b.word)));
    ScoredWordList::new(words)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmParams {
    /// Combinations weighing less are not generated as such.
    pub floor: f64,
    /// Subject substitution needs a replacement at least this plausible.
    pub substitution_min: f64,
    /// Stands in for the replaced subject's word score.
    pub substitution_penalty: f64,
    /// Prior of the bare `a {s}` caption.
    pub subject_only: f64,
    pub max_candidates: usize,
}

impl Default for LmParams {
    fn default() -> Self {
        Self {
            floor: 0.2,
            substitution_min: 0.5,
            substitution_penalty: 0.8,
            subject_only: 0.25,
            max_candidates: 30,
        }
    }
}

/// Every caption the model can produce from `words`, with its
/// log-likelihood (best over derivations).
pub fn lm_candidates(words: &ScoredWordList, world: &World, p: &LmParams) -> BTreeMap<String, f64> {
    let objects: Vec<(&str, f64)> = words
        .with_tag(PartTag::Object)
        .filter(|w| w.score > 0.0)
        .map(|w| (w.word.as_str(), w.score))
        .collect();
    let activities: Vec<(&str, f64)> = words
        .with_tag(PartTag::Activity)
        .filter(|w| w.score > 0.0)
        .map(|w| (w.word.as_str(), w.score))
        .collect();
    let agents: Vec<(&str, f64)> = objects.iter().copied().filter(|(w, _)| world.is_agent(w)).collect();

    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    let mut push = |text: String, likelihood: f64| {
        let ll = likelihood.ln();
        let e = out.entry(text).or_insert(f64::NEG_INFINITY);
        if ll > *e {
            *e = ll;
        }
    };

    for &(s, ws) in &agents {
        push(Template::Subject.render(s, None, None), ws * p.subject_only);
    }
    for &(s, ws) in &agents {
        for &(v, wv) in &activities {
            for &(o, wo) in &objects {
                if o == s {
                    continue;
                }
                let weight = world.table.get(s, v, o);
                if weight >= p.floor {
                    push(Template::Svo.render(s, Some(v), Some(o)), ws * wv * wo * weight);
                } else if let Some((sub, w2)) = substitute(world, v, o, p) {
                    push(Template::Svo.render(&sub, Some(v), Some(o)), p.substitution_penalty * wv * wo * w2);
                }
            }
        }
    }
    for t in Template::SPATIAL {
        let rel = t.relation().expect("spatial");
        for &(s, ws) in &objects {
            for &(o, wo) in &objects {
                if o == s {
                    continue;
                }
                let weight = world.table.get(s, rel, o);
                if weight >= p.floor {
                    push(t.render(s, None, Some(o)), ws * wo * weight);
                }
            }
        }
    }
    out
}

/// Most plausible agent doing `v` with `o`, if plausible enough.
fn substitute(world: &World, v: &str, o: &str, p: &LmParams) -> Option<(String, f64)> {
    let mut best: Option<(&String, f64)> = None;
    for a in &world.agents {
        if a == o {
            continue;
        }
        let w = world.table.get(a, v, o);
        if w >= p.substitution_min.max(p.floor) && best.is_none_or(|(_, bw)| w > bw) {
            best = Some((a, w));
        }
    }
    best.map(|(a, w)| (a.clone(), w))
}

/// Top candidates by log-likelihood (ties by text). With no candidate the
/// fallback caption is returned and flagged.
pub fn template_lm(words: &ScoredWordList, world: &World, p: &LmParams) -> (CaptionList, bool) {
    let mut cands: Vec<(String, f64)> = lm_candidates(words, world, p).into_iter().collect();
    if cands.is_empty() {
        return (CaptionList::from_ordered([(FALLBACK_CAPTION, 0.01f64.ln())]), true);
    }
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    cands.truncate(p.max_candidates.max(1));
    (CaptionList::from_ordered(cands), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankWeights {
    pub lm: f64,
    /// Weight of the summed detector scores of the caption's words.
    pub similarity: f64,
}

impl Default for RerankWeights {
    fn default() -> Self {
        Self {
            lm: 1.0,
            similarity: 0.5,
        }
    }
}

/// Sum of detector scores of the distinct words a caption uses.
pub fn similarity(caption: &str, words: &ScoredWordList) -> f64 {
    let tokens: BTreeSet<&str> = caption.split_whitespace().collect();
    words
        .iter()
        .filter(|w| tokens.contains(w.word.as_str()))
        .map(|w| w.score)
        .sum()
}

/// Reorders by `lm * score + similarity * overlap`; stable for ties.
pub fn linear_reranker(captions: &CaptionList, words: &ScoredWordList, weights: &RerankWeights) -> CaptionList {
    let mut scored: Vec<(String, f64)> = captions
        .iter()
        .map(|c| {
            (
                c.text.clone(),
                weights.lm * c.score + weights.similarity * similarity(&c.text, words),
            )
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    CaptionList::from_ordered(scored)
}

/// Settings shared by the three executors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub detector: DetectorParams,
    pub lm: LmParams,
    pub rerank: RerankWeights,
}

fn input<'a>(inputs: &'a Record, name: &str) -> std::result::Result<&'a DataValue, String> {
    inputs.get(name).ok_or_else(|| format!("missing input `{name}`"))
}

pub const DETECTOR: &str = "synthetic_detector";
pub const LANGUAGE_MODEL: &str = "template_lm";
pub const RERANKER: &str = "linear_reranker";

/// Executors bound to a world and its scenes (looked up by image id).
pub fn registry(world: Arc<World>, scenes: Arc<BTreeMap<String, SyntheticScene>>, params: &ComponentParams) -> ExecutorRegistry {
    let mut r = ExecutorRegistry::new();
    let (w, d) = (world.clone(), params.detector);
    r.register(DETECTOR, move |inputs: &Record| {
        let image = input(inputs, "image")?
            .as_image_ref()
            .ok_or("`image` is not an image reference")?;
        let scene = scenes.get(image).ok_or_else(|| format!("unknown image `{image}`"))?;
        let words = synthetic_detector(scene, &w, &d).map_err(|e| e.to_string())?;
        Ok(Record::from([("words".to_string(), DataValue::ScoredWordList(words))]))
    });
    let (w, lm) = (world, params.lm);
    r.register(LANGUAGE_MODEL, move |inputs: &Record| {
        let words = input(inputs, "words")?
            .as_word_list()
            .ok_or("`words` is not a word list")?;
        let (captions, fallback) = template_lm(words, &w, &lm);
        Ok(Record::from([
            ("captions".to_string(), DataValue::CaptionList(captions)),
            ("fallback".to_string(), DataValue::Scalar(if fallback { 1.0 } else { 0.0 })),
        ]))
    });
    let weights = params.rerank;
    r.register(RERANKER, move |inputs: &Record| {
        let captions = input(inputs, "captions")?
            .as_caption_list()
            .ok_or("`captions` is not a caption list")?;
        let words = input(inputs, "words")?
            .as_word_list()
            .ok_or("`words` is not a word list")?;
        Ok(Record::from([(
            "ranked".to_string(),
            DataValue::CaptionList(linear_reranker(captions, words, &weights)),
        )]))
    });
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::scene::SceneContent;

    fn words(list: &[(&str, f64, PartTag)]) -> ScoredWordList {
        ScoredWordList::new(list.iter().map(|(w, s, t)| ScoredWord::new(*w, *s, *t)).collect()).unwrap()
    }

    fn scene() -> SyntheticScene {
        SyntheticScene {
            id: "s1".into(),
            image: "img-s1".into(),
            content: SceneContent {
                subject: "man".into(),
                activity: Some("riding".into()),
                object: Some("bike".into()),
                objects: ["man", "bike", "hat"].iter().map(|s| s.to_string()).collect(),
                activities: ["riding".to_string()].into(),
            },
            caption: "a man riding a bike".into(),
            detections: None,
        }
    }

    #[test]
    fn perfect_detector_returns_truth() {
        let p = DetectorParams {
            objects: DetectorRates::PERFECT,
            activities: DetectorRates::PERFECT,
            seed: 3,
        };
        let out = synthetic_detector(&scene(), &World::vocabulary(), &p).unwrap();
        let got: BTreeSet<&str> = out.iter().map(|w| w.word.as_str()).collect();
        assert_eq!(got, ["bike", "hat", "man", "riding"].into());
    }

    #[test]
    fn detector_is_seeded() {
        let w = World::vocabulary();
        let p = DetectorParams::default();
        assert_eq!(synthetic_detector(&scene(), &w, &p).unwrap(), synthetic_detector(&scene(), &w, &p).unwrap());
    }

    #[test]
    fn zero_similarity_keeps_lm_order() {
        let list = CaptionList::from_ordered([("a man", -1.0), ("a bike next to a man", -2.0), ("a hat", -3.0)]);
        let w = words(&[("bike", 0.9, PartTag::Object), ("hat", 0.9, PartTag::Object)]);
        let out = linear_reranker(&list, &w, &RerankWeights { lm: 1.0, similarity: 0.0 });
        assert_eq!(out, list);
        // -2 + 2 * 0.9 beats -1
        let out = linear_reranker(&list, &w, &RerankWeights { lm: 1.0, similarity: 2.0 });
        assert_eq!(out.best().unwrap().text, "a bike next to a man");
    }

    #[test]
    fn empty_words_give_flagged_fallback() {
        let (list, flagged) = template_lm(&ScoredWordList::default(), &World::vocabulary(), &LmParams::default());
        assert!(flagged);
        assert_eq!(list.best().unwrap().text, FALLBACK_CAPTION);
    }
}
