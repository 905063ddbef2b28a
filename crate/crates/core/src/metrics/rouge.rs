use log::warn;

use super::tokenize;
use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;

/// Longest common subsequence length, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with `beta = 1.2`, maximised over references.
pub fn rouge_l(candidate: &str, references: &[String]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        warn!("ROUGE-L of an empty candidate is 0");
        return 0.0;
    }
    let beta2 = ROUGE_BETA * ROUGE_BETA;
    references
        .iter()
        .map(|r| {
            let reference = tokenize(r);
            let lcs = lcs_len(&cand, &reference);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / cand.len() as f64;
            let r = lcs as f64 / reference.len() as f64;
            (1.0 + beta2) * p * r / (r + beta2 * p)
        })
        .fold(0.0, f64::max)
}

/// Mean instance ROUGE-L.
pub fn rouge_l_corpus(candidates: &[String], references: &[Vec<String>]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("ROUGE-L over an empty candidate corpus"));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidValue(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l(c, r))
        .sum();
    Ok(sum / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_small() {
        let a: Vec<char> = "ABCBDAB".chars().collect();
        let b: Vec<char> = "BDCABA".chars().collect();
        assert_eq!(lcs_len(&a, &b), 4);
        assert_eq!(lcs_len::<char>(&[], &b), 0);
    }

    #[test]
    fn identity_and_disjoint() {
        let refs = vec!["a man riding a horse".to_string()];
        assert_eq!(rouge_l("a man riding a horse", &refs), 1.0);
        assert_eq!(rouge_l("red kite", &refs), 0.0);
        assert_eq!(rouge_l("", &refs), 0.0);
    }

    #[test]
    fn max_over_references() {
        let refs = vec!["a dog".to_string(), "a man riding a horse".to_string()];
        assert_eq!(rouge_l("a man riding a horse", &refs), 1.0);
    }
}
