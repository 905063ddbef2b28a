use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use super::world::SceneContent;
use super::world::{Template, World};
use crate::error::{Error, Result};
use crate::pipeline::{DataValue, Instance, ScoredWord};
use crate::rng;

/// Stand-in for an image: what it shows and a reference caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub id: String,
    pub image: String,
    pub content: SceneContent,
    pub caption: String,
    /// Fixed detector output; replaces the sampled one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<ScoredWord>>,
}

impl SyntheticScene {
    /// Caption mentions only words the scene shows.
    pub fn check(&self) -> Result<()> {
        for w in self.caption.split_whitespace().filter(|w| *w != "a") {
            let known = self.content.objects.contains(w) || self.content.activities.contains(w);
            let filler = ["sitting", "on", "top", "of", "next", "to", "in", "front"].contains(&w);
            if !known && !filler {
                return Err(Error::InvalidValue(format!(
                    "caption of `{}` mentions `{w}`, which the scene does not show",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Reference captions for automatic metrics.
    pub fn references(&self) -> Vec<String> {
        let c = &self.content;
        let mut refs = vec![self.caption.clone()];
        if let Some(o) = &c.object {
            refs.push(format!("a {} with a {o}", c.subject));
            refs.push(format!("a {o} and a {}", c.subject));
        } else {
            refs.push(format!("a {} in a picture", c.subject));
        }
        refs
    }

    pub fn instance(&self) -> Instance {
        Instance {
            id: self.id.clone(),
            input: [("image".to_string(), DataValue::ImageRef(self.image.clone()))].into(),
            references: Some(self.references()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Up to this many background things besides the subject's object.
    pub max_extra_objects: usize,
    /// Share of scenes whose true combination the language model finds
    /// implausible.
    pub implausible_share: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            max_extra_objects: 2,
            implausible_share: 0.5,
        }
    }
}

/// Samples `n` scenes and writes the table entries they participate in:
/// plausible by default, below `floor` for the implausible share. Scene
/// combinations are never nonsense.
pub fn generate_scenes(world: &mut World, n: usize, seed: u64, params: &SceneParams, floor: f64) -> Vec<SyntheticScene> {
    let mut rng = rng::stream(seed, &["scenes"]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("scene-{:04}", i + 1);
        let subject = world.agents.choose(&mut rng).expect("agents").clone();
        let activity = world.activities.choose(&mut rng).expect("activities").clone();
        let object = world.things.choose(&mut rng).expect("things").clone();
        let key = (subject.clone(), activity.clone(), object.clone());
        world.nonsense.remove(&key);
        let weight = if rng.gen_bool(params.implausible_share) {
            rng.gen_range(0.0..floor * 0.75)
        } else {
            world.table.get(&subject, &activity, &object).max(rng.gen_range(0.5..=1.0))
        };
        world.table.set(&subject, &activity, &object, weight).expect("weight in range");

        let mut objects: std::collections::BTreeSet<String> = [subject.clone(), object.clone()].into();
        let extra = rng.gen_range(0..=params.max_extra_objects);
        let mut pool: Vec<&String> = world.things.iter().filter(|t| !objects.contains(*t)).collect();
        pool.shuffle(&mut rng);
        objects.extend(pool.into_iter().take(extra).cloned());
        let caption = Template::Svo.render(&subject, Some(&activity), Some(&object));
        out.push(SyntheticScene {
            image: format!("img-{:04}", i + 1),
            id,
            content: SceneContent {
                subject,
                activity: Some(activity.clone()),
                object: Some(object),
                objects,
                activities: [activity].into(),
            },
            caption,
            detections: None,
        });
    }
    out
}
