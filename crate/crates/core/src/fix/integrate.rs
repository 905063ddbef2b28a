//! Integration rules turning aggregated crowd answers into corrected outputs.

use std::collections::{BTreeMap, BTreeSet};

use super::spec::{FixDetails, FixResult, PatternBlocklist};
use crate::crowd::{majority_vote, Answer};
use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::pipeline::{CaptionList, DataValue, PartTag, RankedCaption, ScoredWord, ScoredWordList};

/// Remove and add counts for one shown word list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordlistVotes {
    pub responses: usize,
    pub remove: BTreeMap<String, usize>,
    pub add: BTreeMap<String, usize>,
}

impl WordlistVotes {
    pub fn tally<'a>(answers: impl IntoIterator<Item = &'a Answer>) -> Self {
        let mut votes = Self::default();
        for answer in answers {
            if let Answer::WordList { remove, add } = answer {
                votes.responses += 1;
                for w in remove {
                    *votes.remove.entry(w.clone()).or_default() += 1;
                }
                for w in add {
                    *votes.add.entry(w.trim().to_lowercase()).or_default() += 1;
                }
            }
        }
        votes
    }
}

/// Applies strict-majority removals and additions to `machine`.
///
/// Surviving words are rescored to `max(score, keep agreement)` and added
/// words get their add agreement. A round with no removal and no addition
/// returns `machine` untouched.
pub fn integrate_wordlist_fix(
    fix_id: &str,
    machine: &ScoredWordList,
    votes: &WordlistVotes,
    add_tag: PartTag,
    allow_add: bool,
    allow_remove: bool,
) -> FixResult {
    let n = votes.responses;
    let unchanged = |agreement| FixResult {
        fix_id: fix_id.to_string(),
        corrected: DataValue::ScoredWordList(machine.clone()),
        agreement,
        unrecoverable: false,
        changed: false,
        details: FixDetails::Wordlist {
            removed: Vec::new(),
            added: Vec::new(),
        },
    };
    if n == 0 {
        return unchanged(BTreeMap::new());
    }
    let frac = |c: usize| c as f64 / n as f64;

    let mut agreement = BTreeMap::new();
    let mut removed = Vec::new();
    let mut kept = Vec::new();
    for w in machine.iter() {
        let r = votes.remove.get(&w.word).copied().unwrap_or(0);
        if allow_remove && 2 * r > n {
            agreement.insert(w.word.clone(), frac(r));
            removed.push(w.word.clone());
        } else {
            agreement.insert(w.word.clone(), frac(n - r));
            kept.push((w, frac(n - r)));
        }
    }
    let mut added = Vec::new();
    if allow_add {
        for (word, &c) in &votes.add {
            if 2 * c > n && machine.get(word).is_none() && !word.is_empty() {
                agreement.insert(word.clone(), frac(c));
                added.push(ScoredWord::new(word.clone(), frac(c), add_tag));
            }
        }
    }
    if removed.is_empty() && added.is_empty() {
        return unchanged(agreement);
    }

    let added_words = added.iter().map(|w| w.word.clone()).collect();
    let mut entries: Vec<ScoredWord> = kept
        .into_iter()
        .map(|(w, keep)| ScoredWord::new(w.word.clone(), w.score.max(keep), w.tag))
        .collect();
    entries.extend(added);
    let corrected = ScoredWordList::new(entries).expect("scores in [0,1], words unique");
    FixResult {
        fix_id: fix_id.to_string(),
        corrected: DataValue::ScoredWordList(corrected),
        agreement,
        unrecoverable: false,
        changed: true,
        details: FixDetails::Wordlist {
            removed,
            added: added_words,
        },
    }
}

/// Puts a corrected sublist back into the full list: entries with `tag` are
/// replaced by `sublist` (in its order), other entries keep their places.
pub fn merge_sublist(full: &ScoredWordList, tag: PartTag, sublist: &ScoredWordList) -> ScoredWordList {
    let mut replacement: BTreeMap<&str, &ScoredWord> =
        sublist.iter().filter(|w| w.tag == tag).map(|w| (w.word.as_str(), w)).collect();
    let mut entries = Vec::with_capacity(full.len() + sublist.len());
    for w in full.iter() {
        if w.tag != tag {
            entries.push(w.clone());
        } else if let Some(fixed) = replacement.remove(w.word.as_str()) {
            entries.push(fixed.clone());
        }
    }
    // remaining replacements are additions, in sublist order
    for w in sublist.iter() {
        if replacement.contains_key(w.word.as_str()) {
            entries.push(w.clone());
        }
    }
    ScoredWordList::new(entries).expect("merged list keeps word uniqueness")
}

/// Worker judgments of one caption.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaptionJudgments {
    pub commonsense: Vec<bool>,
    pub fluency: Vec<u8>,
    /// Highlighted segment texts, one list per fluency response.
    pub highlights: Vec<Vec<String>>,
}

/// Prunes captions judged nonsensical (strict majority), rated non-fluent
/// (mean below `threshold`), or matching the blocklist. Segments
/// highlighted by a strict majority of fluency raters are added to the
/// blocklist before it is applied.
///
/// `scope_top1` names the caption whose removal counts as a Top-1 prune.
pub fn integrate_caption_prune_fix(
    fix_id: &str,
    captions: &CaptionList,
    judgments: &BTreeMap<String, CaptionJudgments>,
    blocklist: &mut PatternBlocklist,
    threshold: f64,
    scope_top1: Option<&str>,
) -> Result<FixResult> {
    let mut harvested = Vec::new();
    for j in judgments.values() {
        let n = j.highlights.len();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for worker in &j.highlights {
            let segments: BTreeSet<String> = worker
                .iter()
                .map(|s| tokenize(s).join(" "))
                .filter(|s| !s.is_empty())
                .collect();
            for s in segments {
                *counts.entry(s).or_default() += 1;
            }
        }
        for (segment, c) in counts {
            if 2 * c > n && blocklist.insert(&segment) {
                harvested.push(segment);
            }
        }
    }

    let mut agreement = BTreeMap::new();
    let mut pruned_judged = Vec::new();
    let mut pruned_by_blocklist = Vec::new();
    let mut survivors = Vec::new();
    for c in captions.iter() {
        let mut prune = false;
        if let Some(j) = judgments.get(&c.text) {
            if !j.commonsense.is_empty() {
                let vote = majority_vote(&j.commonsense)?;
                agreement.insert(c.text.clone(), vote.agreement);
                prune |= vote.decision == Some(false);
            }
            if !j.fluency.is_empty() {
                let n = j.fluency.len() as f64;
                let mean = j.fluency.iter().map(|&r| f64::from(r)).sum::<f64>() / n;
                let low = mean < threshold;
                let side = j.fluency.iter().filter(|&&r| (f64::from(r) < threshold) == low).count();
                agreement.insert(c.text.clone(), side as f64 / n);
                prune |= low;
            }
            if prune {
                pruned_judged.push(c.text.clone());
            }
        }
        if !prune && blocklist.matching(&c.text).is_some() {
            prune = true;
            pruned_by_blocklist.push(c.text.clone());
        }
        if !prune {
            survivors.push(c.clone());
        }
    }
    if survivors.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let changed = survivors.len() != captions.len();
    let top1_pruned = scope_top1
        .map(|t| pruned_judged.iter().chain(&pruned_by_blocklist).any(|p| p == t))
        .unwrap_or(false);
    let corrected = if changed {
        CaptionList::renumbered(survivors)
    } else {
        captions.clone()
    };
    Ok(FixResult {
        fix_id: fix_id.to_string(),
        corrected: DataValue::CaptionList(corrected),
        agreement,
        unrecoverable: false,
        changed,
        details: FixDetails::Prune {
            judged: judgments.keys().cloned().collect(),
            pruned_judged,
            pruned_by_blocklist,
            top1: scope_top1.map(str::to_string),
            top1_pruned,
            harvested,
        },
    })
}

/// One worker's rerank answer: picked ranks, or "none fits".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RerankVote {
    pub picks: Vec<u32>,
    pub none_fits: bool,
}

/// Promotes the most-picked Top-K caption (ties to the better original
/// rank) to rank 1; the rest keep their order. A strict majority of
/// "none fits" marks the instance unrecoverable and keeps the list.
pub fn integrate_rerank_fix(fix_id: &str, list: &CaptionList, top_k: usize, votes: &[RerankVote]) -> Result<FixResult> {
    if votes.is_empty() {
        return Err(Error::NoJudgments);
    }
    let n = votes.len();
    let top = list.top(top_k);
    let mut counts: BTreeMap<u32, usize> = top.iter().map(|c| (c.rank, 0)).collect();
    for v in votes {
        let picks: BTreeSet<u32> = v.picks.iter().copied().collect();
        for p in picks {
            if let Some(c) = counts.get_mut(&p) {
                *c += 1;
            }
        }
    }
    let none = votes.iter().filter(|v| v.none_fits).count();
    let mut agreement: BTreeMap<String, f64> = counts
        .iter()
        .map(|(rank, &c)| (format!("pick:{rank}"), c as f64 / n as f64))
        .collect();
    agreement.insert("none_fits".into(), none as f64 / n as f64);

    let original_best_picks = counts.get(&1).copied().unwrap_or(0);
    // BTreeMap iterates ranks ascending, so the first maximum is the tie winner
    let winner = counts
        .iter()
        .fold(None, |best: Option<(u32, usize)>, (&rank, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ if c > 0 => Some((rank, c)),
            _ => best,
        })
        .map(|(rank, _)| rank);

    let unrecoverable = 2 * none > n;
    let promote = if unrecoverable { None } else { winner.filter(|&r| r != 1) };
    let corrected = match promote {
        Some(rank) => {
            let mut entries: Vec<RankedCaption> = list.entries().to_vec();
            let idx = entries.iter().position(|c| c.rank == rank).expect("rank in list");
            let best = entries.remove(idx);
            entries.insert(0, best);
            CaptionList::renumbered(entries)
        }
        None => list.clone(),
    };
    Ok(FixResult {
        fix_id: fix_id.to_string(),
        corrected: DataValue::CaptionList(corrected),
        agreement,
        unrecoverable,
        changed: promote.is_some(),
        details: FixDetails::Rerank {
            winner_rank: if unrecoverable { None } else { winner },
            original_best_picks,
            none_fits_votes: none,
            responses: n,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(words: &[(&str, f64)]) -> ScoredWordList {
        ScoredWordList::new(
            words
                .iter()
                .map(|(w, s)| ScoredWord::new(*w, *s, PartTag::Object))
                .collect(),
        )
        .unwrap()
    }

    fn wl(remove: &[&str], add: &[&str]) -> Answer {
        Answer::WordList {
            remove: remove.iter().map(|s| s.to_string()).collect(),
            add: add.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn unanimous_removal_rescores_survivors() {
        let machine = list(&[
            ("teddy", 0.92),
            ("computer", 0.91),
            ("bear", 0.90),
            ("wearing", 0.87),
            ("keyboard", 0.84),
            ("glasses", 0.63),
        ]);
        let answers = vec![wl(&["computer"], &[]); 3];
        let votes = WordlistVotes::tally(&answers);
        let r = integrate_wordlist_fix("objects", &machine, &votes, PartTag::Object, true, true);
        let fixed = r.corrected.as_word_list().unwrap();
        assert_eq!(fixed.len(), 5);
        assert!(fixed.get("computer").is_none());
        assert!(fixed.iter().all(|w| w.score == 1.0));
        assert_eq!(r.agreement["computer"], 1.0);
    }

    #[test]
    fn two_of_three_add() {
        let machine = list(&[("man", 0.8)]);
        let answers = vec![wl(&[], &["umbrella"]), wl(&[], &["umbrella"]), wl(&[], &[])];
        let r = integrate_wordlist_fix(
            "objects",
            &machine,
            &WordlistVotes::tally(&answers),
            PartTag::Object,
            true,
            true,
        );
        let fixed = r.corrected.as_word_list().unwrap();
        assert!((fixed.get("umbrella").unwrap().score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn additions_can_be_disabled() {
        let machine = list(&[("man", 0.8)]);
        let answers = vec![wl(&[], &["umbrella"]); 3];
        let r = integrate_wordlist_fix(
            "objects",
            &machine,
            &WordlistVotes::tally(&answers),
            PartTag::Object,
            false,
            true,
        );
        assert!(!r.changed);
        assert_eq!(r.corrected, DataValue::ScoredWordList(machine));
    }

    #[test]
    fn zero_responses_is_a_no_op() {
        let machine = list(&[("man", 0.8)]);
        let r = integrate_wordlist_fix(
            "objects",
            &machine,
            &WordlistVotes::default(),
            PartTag::Object,
            true,
            true,
        );
        assert!(r.agreement.is_empty());
        assert_eq!(r.corrected, DataValue::ScoredWordList(machine));
    }

    #[test]
    fn merge_keeps_other_tags_in_place() {
        let full = ScoredWordList::new(vec![
            ScoredWord::new("man", 0.9, PartTag::Object),
            ScoredWord::new("riding", 0.8, PartTag::Activity),
            ScoredWord::new("horse", 0.7, PartTag::Object),
        ])
        .unwrap();
        let sub = ScoredWordList::new(vec![
            ScoredWord::new("horse", 1.0, PartTag::Object),
            ScoredWord::new("hat", 1.0, PartTag::Object),
        ])
        .unwrap();
        let merged = merge_sublist(&full, PartTag::Object, &sub);
        let words: Vec<_> = merged.iter().map(|w| w.word.as_str()).collect();
        assert_eq!(words, ["riding", "horse", "hat"]);
    }

    fn captions(texts: &[&str]) -> CaptionList {
        CaptionList::from_ordered(texts.iter().enumerate().map(|(i, t)| (*t, -(i as f64))))
    }

    #[test]
    fn commonsense_majority_prunes() {
        let list = captions(&["a cat playing a video game", "a cat on a couch"]);
        let mut j = BTreeMap::new();
        j.insert(
            "a cat playing a video game".to_string(),
            CaptionJudgments {
                commonsense: vec![false; 3],
                ..Default::default()
            },
        );
        let mut block = PatternBlocklist::new();
        let r = integrate_caption_prune_fix("cs", &list, &j, &mut block, 3.0, Some("a cat playing a video game")).unwrap();
        let out = r.corrected.as_caption_list().unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.best().unwrap().text, "a cat on a couch");
        assert_eq!(out.best().unwrap().rank, 1);
        assert!(matches!(r.details, FixDetails::Prune { top1_pruned: true, .. }));
    }

    #[test]
    fn fluency_highlights_feed_the_blocklist() {
        let list = captions(&["a dog in front of a ball", "a dog playing a ball", "a cat in front of a car"]);
        let mut j = BTreeMap::new();
        j.insert(
            "a dog in front of a ball".to_string(),
            CaptionJudgments {
                fluency: vec![4, 4, 4],
                highlights: vec![vec!["in front of".into()], vec!["In front of".into()], vec![]],
                ..Default::default()
            },
        );
        let mut block = PatternBlocklist::new();
        let r = integrate_caption_prune_fix("fl", &list, &j, &mut block, 3.0, None).unwrap();
        let out = r.corrected.as_caption_list().unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(block.len(), 1);
    }

    #[test]
    fn pruning_everything_is_an_error() {
        let list = captions(&["a b"]);
        let mut j = BTreeMap::new();
        j.insert(
            "a b".to_string(),
            CaptionJudgments {
                fluency: vec![1, 1, 2],
                ..Default::default()
            },
        );
        let err = integrate_caption_prune_fix("fl", &list, &j, &mut PatternBlocklist::new(), 3.0, None).unwrap_err();
        assert!(matches!(err, Error::EmptyCandidateSet));
    }

    fn v(picks: &[u32]) -> RerankVote {
        RerankVote {
            picks: picks.to_vec(),
            none_fits: false,
        }
    }

    #[test]
    fn rerank_counts_and_ties() {
        let list = captions(&["c1", "c2", "c3", "c4"]);
        let votes = [v(&[1, 2]), v(&[2, 3]), v(&[2]), v(&[1]), v(&[3])];
        let r = integrate_rerank_fix("rr", &list, 10, &votes).unwrap();
        let out = r.corrected.as_caption_list().unwrap();
        let texts: Vec<_> = out.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["c2", "c1", "c3", "c4"]);
        assert_eq!(r.agreement["pick:2"], 0.6);

        // 1 and 3 tie at two picks each: the better original rank stays
        let votes = [v(&[1, 3]), v(&[1, 3]), v(&[])];
        let r = integrate_rerank_fix("rr", &list, 10, &votes).unwrap();
        assert!(!r.changed);
    }

    #[test]
    fn rerank_none_fits_majority() {
        let list = captions(&["c1", "c2", "c3"]);
        let nf = RerankVote {
            picks: vec![],
            none_fits: true,
        };
        let votes = [nf.clone(), nf.clone(), nf, v(&[3]), v(&[3])];
        let r = integrate_rerank_fix("rr", &list, 10, &votes).unwrap();
        assert!(r.unrecoverable);
        assert_eq!(r.corrected, DataValue::CaptionList(list));
        assert!(matches!(integrate_rerank_fix("rr", &captions(&["x"]), 10, &[]), Err(Error::NoJudgments)));
    }
}
