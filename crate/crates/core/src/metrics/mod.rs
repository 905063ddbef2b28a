//! Automatic caption-quality scores against multi-reference caption sets.

mod bleu;
mod cider;
mod rouge;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bleu::bleu;
pub use cider::{cider, cider_per_instance};
pub use rouge::{lcs_len, rouge_l, rouge_l_corpus, ROUGE_BETA};

use crate::error::{Error, Result};

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub instance_id: String,
    pub references: Vec<String>,
}

impl ReferenceSet {
    pub fn new(instance_id: impl Into<String>, references: Vec<String>) -> Result<Self> {
        let instance_id = instance_id.into();
        if references.is_empty() {
            return Err(Error::InvalidValue(format!("`{instance_id}` has no references")));
        }
        if let Some(empty) = references.iter().find(|r| tokenize(r).is_empty()) {
            return Err(Error::InvalidValue(format!(
                "`{instance_id}` has an empty reference `{empty}`"
            )));
        }
        Ok(Self {
            instance_id,
            references,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance_id: String,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub instances: Vec<InstanceMetrics>,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
}

/// Per-instance and corpus BLEU-1/4, ROUGE-L and CIDEr. Needs at least two
/// instances for CIDEr's document frequencies.
pub fn metric_report(candidates: &[String], references: &[ReferenceSet]) -> Result<MetricReport> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidValue(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| r.references.clone()).collect();
    let ciders = cider_per_instance(candidates, &refs)?;
    let mut instances = Vec::with_capacity(candidates.len());
    for (i, cand) in candidates.iter().enumerate() {
        let single_c = std::slice::from_ref(cand);
        let single_r = std::slice::from_ref(&refs[i]);
        instances.push(InstanceMetrics {
            instance_id: references[i].instance_id.clone(),
            bleu1: bleu(single_c, single_r, 1)?,
            bleu4: bleu(single_c, single_r, 4)?,
            rouge_l: rouge_l(cand, &refs[i]),
            cider: ciders[i],
        });
    }
    Ok(MetricReport {
        bleu1: bleu(candidates, &refs, 1)?,
        bleu4: bleu(candidates, &refs, 4)?,
        rouge_l: rouge_l_corpus(candidates, &refs)?,
        cider: ciders.iter().sum::<f64>() / ciders.len() as f64,
        instances,
    })
}
