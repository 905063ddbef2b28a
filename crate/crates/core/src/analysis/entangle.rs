use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::compare::{pair_records, signed_percent};
use crate::error::{Error, Result};
use crate::evaluation::{Measure, QualityRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDelta {
    /// Sorted fix ids; empty for the baseline.
    pub fixes: Vec<String>,
    pub satisfactory: usize,
    /// Change in % satisfactory against the baseline, in points.
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Synergy,
    Suppression,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub a: String,
    pub b: String,
    /// `delta({a,b}) - delta({a}) - delta({b})`.
    pub value: f64,
    pub kind: InteractionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub n: usize,
    pub baseline_satisfactory: usize,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    /// Every evaluated subset, baseline first, then by size and ids.
    pub subsets: Vec<SubsetDelta>,
    pub interactions: Vec<Interaction>,
}

impl InteractionReport {
    pub fn subset(&self, fixes: &[&str]) -> Option<&SubsetDelta> {
        let mut key: Vec<String> = fixes.iter().map(|s| s.to_string()).collect();
        key.sort();
        self.subsets.iter().find(|s| s.fixes == key)
    }

    pub fn interaction(&self, a: &str, b: &str) -> Option<&Interaction> {
        self.interactions
            .iter()
            .find(|i| (i.a == a && i.b == b) || (i.a == b && i.b == a))
    }
}

/// Deltas of every subset run against the shared baseline and pairwise
/// interaction terms for every evaluated pair. Interactions beyond
/// `threshold` in absolute value are synergy (positive) or suppression.
///
/// Satisfactory deltas come from integer counts with one final division,
/// so equal counts always give bit-equal results.
pub fn detect_entanglement(
    baseline: &[QualityRecord],
    runs: &[(Vec<String>, Vec<QualityRecord>)],
    threshold: f64,
    measure: Option<Measure>,
) -> Result<InteractionReport> {
    let n = baseline.len();
    let base_sat = baseline.iter().filter(|r| r.satisfactory).count();
    let base_mean = |m: Measure| baseline.iter().map(|r| r.get(m)).sum::<f64>() / n.max(1) as f64;

    let mut by_subset: BTreeMap<BTreeSet<String>, (usize, Option<f64>)> = BTreeMap::new();
    by_subset.insert(BTreeSet::new(), (base_sat, measure.map(|_| 0.0)));
    for (fixes, records) in runs {
        let key: BTreeSet<String> = fixes.iter().cloned().collect();
        if key.is_empty() {
            continue;
        }
        pair_records(baseline, records)?;
        let sat = records.iter().filter(|r| r.satisfactory).count();
        let md = measure.map(|m| records.iter().map(|r| r.get(m)).sum::<f64>() / n.max(1) as f64 - base_mean(m));
        by_subset.insert(key, (sat, md));
    }

    let mut subsets: Vec<SubsetDelta> = by_subset
        .iter()
        .map(|(k, (sat, md))| SubsetDelta {
            fixes: k.iter().cloned().collect(),
            satisfactory: *sat,
            delta: signed_percent(*sat as i64 - base_sat as i64, n),
            measure_delta: *md,
        })
        .collect();
    subsets.sort_by(|x, y| x.fixes.len().cmp(&y.fixes.len()).then_with(|| x.fixes.cmp(&y.fixes)));

    let mut interactions = Vec::new();
    for key in by_subset.keys().filter(|k| k.len() == 2) {
        let mut it = key.iter();
        let (a, b) = (it.next().expect("pair"), it.next().expect("pair"));
        let single = |f: &String| {
            by_subset
                .get(&BTreeSet::from([f.clone()]))
                .copied()
                .ok_or_else(|| Error::MissingSingleton(f.clone()))
        };
        let (sa, ma) = single(a)?;
        let (sb, mb) = single(b)?;
        let (sab, mab) = by_subset[key];
        let count = sab as i64 - sa as i64 - sb as i64 + base_sat as i64;
        let value = signed_percent(count, n);
        let kind = if value > threshold {
            InteractionKind::Synergy
        } else if value < -threshold {
            InteractionKind::Suppression
        } else {
            InteractionKind::Additive
        };
        let measure_value = match (mab, ma, mb) {
            (Some(x), Some(y), Some(z)) => Some(x - y - z),
            _ => None,
        };
        interactions.push(Interaction {
            a: a.clone(),
            b: b.clone(),
            value,
            kind,
            measure_value,
        });
    }
    Ok(InteractionReport {
        n,
        baseline_satisfactory: base_sat,
        threshold,
        measure,
        subsets,
        interactions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(sat: &[bool]) -> Vec<QualityRecord> {
        sat.iter()
            .enumerate()
            .map(|(i, &s)| QualityRecord {
                instance_id: format!("i{i}"),
                accuracy: 3.0,
                detail: 3.0,
                language: 3.0,
                commonsense: 1.0,
                general: if s { 4.0 } else { 2.0 },
                satisfactory: s,
            })
            .collect()
    }

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn disjoint_additive_fixes_do_not_interact() {
        let base = records(&[false, false, false, false]);
        let runs = vec![
            (v(&["a"]), records(&[true, false, false, false])),
            (v(&["b"]), records(&[false, true, false, false])),
            (v(&["a", "b"]), records(&[true, true, false, false])),
        ];
        let r = detect_entanglement(&base, &runs, 0.0, None).unwrap();
        assert_eq!(r.subset(&[]).unwrap().delta, 0.0);
        let i = r.interaction("a", "b").unwrap();
        assert_eq!(i.value, 0.0);
        assert_eq!(i.kind, InteractionKind::Additive);
    }

    #[test]
    fn joint_only_improvement_is_synergy() {
        let base = records(&[false, true]);
        let runs = vec![
            (v(&["det"]), records(&[false, true])),
            (v(&["lm"]), records(&[false, true])),
            (v(&["lm", "det"]), records(&[true, true])),
        ];
        let r = detect_entanglement(&base, &runs, 0.0, Some(Measure::General)).unwrap();
        let i = r.interaction("det", "lm").unwrap();
        assert_eq!(i.value, 50.0);
        assert_eq!(i.kind, InteractionKind::Synergy);
        assert_eq!(i.measure_value, Some(1.0));
    }

    #[test]
    fn pair_without_singleton_fails() {
        let base = records(&[false]);
        let runs = vec![(v(&["a"]), records(&[true])), (v(&["a", "b"]), records(&[true]))];
        assert!(matches!(
            detect_entanglement(&base, &runs, 0.0, None),
            Err(Error::MissingSingleton(f)) if f == "b"
        ));
    }
}
