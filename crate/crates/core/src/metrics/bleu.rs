use super::{ngram_counts, tokenize};
use crate::error::{Error, Result};

/// Corpus BLEU-`n`: geometric mean of clipped i-gram precisions for
/// `i = 1..=n`, times the brevity penalty `exp(1 - r/c)` when the total
/// candidate length `c` is below the summed closest-reference length `r`.
/// No smoothing: any zero precision yields 0.
pub fn bleu(candidates: &[String], references: &[Vec<String>], n: usize) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("BLEU over an empty candidate corpus"));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidValue(format!(
            "{} candidates for {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidValue("BLEU order must be at least 1".into()));
    }

    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;

    for (cand, refs) in candidates.iter().zip(references) {
        let cand_tokens = tokenize(cand);
        let ref_tokens: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        cand_len += cand_tokens.len();
        ref_len += closest_length(cand_tokens.len(), &ref_tokens);

        for i in 1..=n {
            let cand_counts = ngram_counts(&cand_tokens, i);
            let ref_counts: Vec<_> = ref_tokens.iter().map(|r| ngram_counts(r, i)).collect();
            for (gram, count) in &cand_counts {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matched[i - 1] += (*count).min(max_ref);
                total[i - 1] += count;
            }
        }
    }

    if cand_len == 0 || matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_mean = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * log_mean.exp())
}

/// Reference length closest to `len`; ties go to the shorter reference.
fn closest_length(len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}
