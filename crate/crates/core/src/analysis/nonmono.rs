use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::compare::pair_records;
use crate::error::Result;
use crate::evaluation::{Measure, Partition, QualityRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub instance_id: String,
    pub before: f64,
    pub after: f64,
}

impl Drop {
    pub fn size(&self) -> f64 {
        self.before - self.after
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDrift {
    pub n: usize,
    pub before_mean: f64,
    pub after_mean: f64,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonMonotonicReport {
    pub measure: Measure,
    /// Largest drop first; equal drops by instance id.
    pub drops: Vec<Drop>,
    /// Mean of the measure per baseline partition.
    pub partitions: BTreeMap<Partition, PartitionDrift>,
}

impl NonMonotonicReport {
    pub fn is_flagged(&self, instance_id: &str) -> bool {
        self.drops.iter().any(|d| d.instance_id == instance_id)
    }
}

/// Instances whose `measure` got worse after the fixes.
pub fn detect_nonmonotonic(
    before: &[QualityRecord],
    after: &[QualityRecord],
    measure: Measure,
) -> Result<NonMonotonicReport> {
    let pairs = pair_records(before, after)?;
    let mut drops: Vec<Drop> = pairs
        .iter()
        .filter(|(b, a)| a.get(measure) < b.get(measure))
        .map(|(b, a)| Drop {
            instance_id: b.instance_id.clone(),
            before: b.get(measure),
            after: a.get(measure),
        })
        .collect();
    drops.sort_by(|x, y| {
        y.size()
            .total_cmp(&x.size())
            .then_with(|| x.instance_id.cmp(&y.instance_id))
    });

    let mut partitions = BTreeMap::new();
    for p in [Partition::Satisfactory, Partition::Unsatisfactory] {
        let members: Vec<_> = pairs.iter().filter(|(b, _)| Partition::of(b) == p).collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let before_mean = members.iter().map(|(b, _)| b.get(measure)).sum::<f64>() / n;
        let after_mean = members.iter().map(|(_, a)| a.get(measure)).sum::<f64>() / n;
        partitions.insert(
            p,
            PartitionDrift {
                n: members.len(),
                before_mean,
                after_mean,
                dropped: after_mean < before_mean,
            },
        );
    }
    Ok(NonMonotonicReport {
        measure,
        drops,
        partitions,
    })
}
