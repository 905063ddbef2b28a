//! Two hand-built scenes. In the first, cleaning the detector's word list
//! makes the final caption worse; in the second, neither the detector fix
//! nor the language-model fix helps alone but both together do.

use super::scene::{SceneContent, SyntheticScene};
use super::world::World;
use crate::pipeline::{PartTag, ScoredWord};

fn set(words: &[&str]) -> std::collections::BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Bear wearing glasses at a desk. The detector also reports a computer
/// and a keyboard; without them the model no longer believes in the bear.
pub fn worse_after_detector_fix() -> (World, SyntheticScene) {
    let mut w = World::vocabulary();
    for (s, r, o, x) in [
        ("bear", "on", "computer", 0.6),
        ("bear", "on", "keyboard", 0.55),
        ("bear", "wearing", "glasses", 0.05),
        ("person", "wearing", "glasses", 1.0),
    ] {
        w.table.set(s, r, o, x).expect("weight in range");
    }
    let scene = SyntheticScene {
        id: "bear-glasses".into(),
        image: "img-bear-glasses".into(),
        content: SceneContent {
            subject: "bear".into(),
            activity: Some("wearing".into()),
            object: Some("glasses".into()),
            objects: set(&["bear", "glasses"]),
            activities: set(&["wearing"]),
        },
        caption: "a bear wearing a glasses".into(),
        detections: Some(vec![
            ScoredWord::new("bear", 0.92, PartTag::Object),
            ScoredWord::new("computer", 0.91, PartTag::Object),
            ScoredWord::new("wearing", 0.87, PartTag::Activity),
            ScoredWord::new("keyboard", 0.84, PartTag::Object),
            ScoredWord::new("glasses", 0.63, PartTag::Object),
        ]),
    };
    (w, scene)
}

/// Bear next to a cake. The model likes "cake on bear", which is absurd;
/// pruning it alone lets the spurious blender through.
pub fn needs_both_fixes() -> (World, SyntheticScene) {
    let mut w = World::vocabulary();
    for (s, r, o, x) in [
        ("cake", "on", "bear", 0.9),
        ("blender", "on", "cake", 0.9),
        ("cake", "on", "blender", 0.5),
    ] {
        w.table.set(s, r, o, x).expect("weight in range");
    }
    w.nonsense.insert(("cake".into(), "on".into(), "bear".into()));
    let scene = SyntheticScene {
        id: "bear-cake".into(),
        image: "img-bear-cake".into(),
        content: SceneContent {
            subject: "bear".into(),
            activity: None,
            object: Some("cake".into()),
            objects: set(&["bear", "cake"]),
            activities: set(&[]),
        },
        caption: "a bear next to a cake".into(),
        detections: Some(vec![
            ScoredWord::new("cake", 0.90, PartTag::Object),
            ScoredWord::new("bear", 0.87, PartTag::Object),
            ScoredWord::new("blender", 0.57, PartTag::Object),
        ]),
    };
    (w, scene)
}
