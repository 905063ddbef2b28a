use std::collections::{BTreeMap, BTreeSet};

use super::{ngram_counts, tokenize};
use crate::error::{Error, Result};

const MAX_N: usize = 4;

type Vector = BTreeMap<Vec<String>, f64>;

/// Plain CIDEr (no length penalty, no count clipping) for every instance.
///
/// Per n-gram order, candidate and references become TF-IDF vectors with
/// `idf = ln(N / max(1, df))`, where `df` counts reference sets containing
/// the n-gram. The instance score is `10 * mean_n mean_ref cos(c, r)`.
pub fn cider_per_instance(candidates: &[String], references: &[Vec<String>]) -> Result<Vec<f64>> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidValue(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.len() < 2 {
        return Err(Error::DegenerateIdf);
    }
    let n_docs = candidates.len() as f64;

    let cand_tokens: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c)).collect();
    let ref_tokens: Vec<Vec<Vec<String>>> = references
        .iter()
        .map(|rs| rs.iter().map(|r| tokenize(r)).collect())
        .collect();

    let mut per_n = vec![vec![0.0; candidates.len()]; MAX_N];
    for n in 1..=MAX_N {
        let mut df: BTreeMap<&[String], usize> = BTreeMap::new();
        for refs in &ref_tokens {
            let grams: BTreeSet<&[String]> = refs
                .iter()
                .flat_map(|r| ngram_counts(r, n).into_keys())
                .collect();
            for g in grams {
                *df.entry(g).or_default() += 1;
            }
        }
        let vectorize = |tokens: &[String]| -> Vector {
            ngram_counts(tokens, n)
                .into_iter()
                .map(|(g, tf)| {
                    let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
                    (g.to_vec(), tf as f64 * (n_docs / d).ln())
                })
                .collect()
        };
        for (i, cand) in cand_tokens.iter().enumerate() {
            let c = vectorize(cand);
            let refs = &ref_tokens[i];
            if refs.is_empty() {
                continue;
            }
            let sum: f64 = refs.iter().map(|r| cosine(&c, &vectorize(r))).sum();
            per_n[n - 1][i] = sum / refs.len() as f64;
        }
    }

    Ok((0..candidates.len())
        .map(|i| 10.0 * per_n.iter().map(|scores| scores[i]).sum::<f64>() / MAX_N as f64)
        .collect())
}

/// Corpus CIDEr: mean instance score.
pub fn cider(candidates: &[String], references: &[Vec<String>]) -> Result<f64> {
    let scores = cider_per_instance(candidates, references)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Cosine clipped to `[0, 1]`; zero when either vector vanishes.
fn cosine(a: &Vector, b: &Vector) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(g, x)| b.get(g).map(|y| x * y))
        .sum();
    let na: f64 = a.values().map(|x| x * x).sum();
    let nb: f64 = b.values().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn identity_with_disjoint_corpus_scores_ten() {
        let c = s(&["a man riding a horse", "the cat sleeps on the bench"]);
        let r = vec![s(&["a man riding a horse"]), s(&["dogs eat pizza slices quickly"])];
        let scores = cider_per_instance(&c, &r).unwrap();
        assert_eq!(scores[0], 10.0);
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        let c = s(&["zebra zebra", "a man riding a horse"]);
        let r = vec![s(&["a cat on a bench"]), s(&["a man riding a horse"])];
        assert_eq!(cider_per_instance(&c, &r).unwrap()[0], 0.0);
    }

    #[test]
    fn single_instance_is_degenerate() {
        let err = cider(&s(&["a cat"]), &[s(&["a cat"])]).unwrap_err();
        assert!(matches!(err, Error::DegenerateIdf));
    }
}
