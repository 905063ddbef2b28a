use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{percent, Measure, MeasureMeans, Partition, QualityRecord};

/// Before/after state of one set of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateComparison {
    pub n: usize,
    pub before: Option<MeasureMeans>,
    pub after: Option<MeasureMeans>,
    pub satisfactory_before: usize,
    pub satisfactory_after: usize,
    pub pct_before: f64,
    pub pct_after: f64,
    /// Percentage points: `pct_after - pct_before`.
    pub delta_points: f64,
    /// Change in the satisfactory count relative to the baseline count, in
    /// percent; absent when the baseline has no satisfactory instance.
    pub delta_relative: Option<f64>,
}

impl StateComparison {
    fn new(pairs: &[(&QualityRecord, &QualityRecord)]) -> Self {
        let n = pairs.len();
        let sb = pairs.iter().filter(|(b, _)| b.satisfactory).count();
        let sa = pairs.iter().filter(|(_, a)| a.satisfactory).count();
        StateComparison {
            n,
            before: MeasureMeans::of(pairs.iter().map(|(b, _)| *b)),
            after: MeasureMeans::of(pairs.iter().map(|(_, a)| *a)),
            satisfactory_before: sb,
            satisfactory_after: sa,
            pct_before: percent(sb, n),
            pct_after: percent(sa, n),
            delta_points: signed_percent(sa as i64 - sb as i64, n),
            delta_relative: (sb > 0).then(|| signed_percent(sa as i64 - sb as i64, sb)),
        }
    }

    /// `after - before` for one measure's mean.
    pub fn delta(&self, measure: Measure) -> Option<f64> {
        Some(self.after.as_ref()?.get(measure) - self.before.as_ref()?.get(measure))
    }
}

/// `100 * diff / n` with a single rounding.
pub fn signed_percent(diff: i64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (100 * diff) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixEffectReport {
    pub workflow_id: String,
    pub overall: StateComparison,
    /// Broken down by the baseline partition of each instance.
    pub partitions: BTreeMap<Partition, StateComparison>,
}

/// Pairs records by instance id; both sides must cover the same ids.
pub fn pair_records<'a>(
    before: &'a [QualityRecord],
    after: &'a [QualityRecord],
) -> Result<Vec<(&'a QualityRecord, &'a QualityRecord)>> {
    let b: BTreeMap<&str, &QualityRecord> = before.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let a: BTreeMap<&str, &QualityRecord> = after.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let bk: BTreeSet<&str> = b.keys().copied().collect();
    let ak: BTreeSet<&str> = a.keys().copied().collect();
    let missing: Vec<String> = bk.symmetric_difference(&ak).map(|s| s.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::InstanceMismatch(missing));
    }
    Ok(b.iter().map(|(id, r)| (*r, a[id])).collect())
}

pub fn compare_states(workflow_id: &str, before: &[QualityRecord], after: &[QualityRecord]) -> Result<FixEffectReport> {
    let pairs = pair_records(before, after)?;
    let mut partitions = BTreeMap::new();
    for p in [Partition::Satisfactory, Partition::Unsatisfactory] {
        let subset: Vec<_> = pairs.iter().copied().filter(|(b, _)| Partition::of(b) == p).collect();
        partitions.insert(p, StateComparison::new(&subset));
    }
    Ok(FixEffectReport {
        workflow_id: workflow_id.to_string(),
        overall: StateComparison::new(&pairs),
        partitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: usize, sat: bool, general: f64) -> QualityRecord {
        QualityRecord {
            instance_id: format!("i{id:04}"),
            accuracy: general,
            detail: general,
            language: general,
            commonsense: 1.0,
            general,
            satisfactory: sat,
        }
    }

    #[test]
    fn identical_states_have_zero_deltas() {
        let rs: Vec<_> = (0..10).map(|i| rec(i, i % 3 == 0, 3.0)).collect();
        let r = compare_states("w", &rs, &rs).unwrap();
        assert_eq!(r.overall.delta_points, 0.0);
        assert_eq!(r.overall.delta_relative, Some(0.0));
        assert_eq!(r.overall.delta(Measure::General), Some(0.0));
    }

    #[test]
    fn unsatisfactory_partition_recovery() {
        let before: Vec<_> = (0..1000).map(|i| rec(i, false, 2.0)).collect();
        let after: Vec<_> = (0..1000).map(|i| rec(i, i < 472, 3.0)).collect();
        let r = compare_states("detector", &before, &after).unwrap();
        let u = &r.partitions[&Partition::Unsatisfactory];
        assert_eq!(u.pct_after, 47.2);
        assert_eq!(r.partitions[&Partition::Satisfactory].n, 0);
        assert_eq!(r.overall.delta_relative, None);
    }

    #[test]
    fn mismatched_ids_are_listed() {
        let before = vec![rec(1, true, 4.0), rec(2, true, 4.0)];
        let after = vec![rec(1, true, 4.0), rec(3, true, 4.0)];
        match compare_states("w", &before, &after) {
            Err(Error::InstanceMismatch(ids)) => assert_eq!(ids, ["i0002", "i0003"]),
            other => panic!("{other:?}"),
        }
    }
}
