//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every expected value is recomputed here from first principles
//! rather than read back from the library.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fixflow::analysis::{
    component_state_report, curated_from_runs, detect_entanglement, detect_nonmonotonic,
};
use fixflow::crowd::{likert_aggregate, majority_vote, Answer, Microtask, TaskKind, TaskPayload};
use fixflow::demo::{self, analogs, DemoConfig, DemoData};
use fixflow::evaluation::{partition_dataset, Measure, QualityRecord};
use fixflow::events::{Clock, EventLog};
use fixflow::fix::{
    execute_workflow, AnnotatorSource, EndorseMachine, FixWorkflow, GroundTruth, RunContext, SimulatedAnnotator,
};
use fixflow::metrics::{bleu, cider, rouge_l_corpus};
use fixflow::pipeline::{DataValue, PartTag};
use fixflow::service::replay_text;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---------------------------------------------------------------- cost

fn cost_reproduction() -> Outcome {
    let plan = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/cost_plan.toml");
    let dir = tempfile::tempdir().map_err(e)?;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_fixflow"))
        .args(["--data-dir"])
        .arg(dir.path())
        .args(["analyze", "cost", plan])
        .output()
        .map_err(e)?;
    let elapsed = start.elapsed();
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let amounts: Vec<&str> = text
        .lines()
        .filter_map(|l| l.split_whitespace().last())
        .filter(|w| w.starts_with('$'))
        .collect();
    // rows: tasks * cents * assignments, by hand
    let expected_cents = [1000 * 5 * 5, 1000 * 4 * 5, 10000 * 2 * 3, 10000 * 3, 1000 * 5 * 5, 1000 * 5 * 5];
    let total: i64 = expected_cents.iter().sum();
    let fmt = |c: i64| {
        let d = c / 100;
        let grouped = if d >= 1000 { format!("{},{:03}", d / 1000, d % 1000) } else { d.to_string() };
        format!("${grouped}.{:02}", c % 100)
    };
    let mut want: Vec<String> = expected_cents.iter().map(|&c| fmt(c)).collect();
    want.push(fmt(total));
    check(amounts == want, || format!("got {amounts:?}, want {want:?}"))?;
    check(want.last().map(String::as_str) == Some("$1,850.00"), || "grand total".into())?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("rows {} total {} in {elapsed:.0?}", want[..6].join(" "), want[6]))
}

// ---------------------------------------------------------------- metrics

fn toks(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= t.len() {
        out.push(t[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count(g: &[String], all: &[Vec<String>]) -> usize {
    all.iter().filter(|x| x.as_slice() == g).count()
}

fn oracle_bleu(cands: &[String], refs: &[Vec<String>], n: usize) -> f64 {
    let mut clipped = vec![0.0; n];
    let mut total = vec![0.0; n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, rs) in cands.iter().zip(refs) {
        let ct = toks(c);
        let rts: Vec<Vec<String>> = rs.iter().map(|r| toks(r)).collect();
        c_len += ct.len();
        let mut best: Option<usize> = None;
        for r in &rts {
            let d = r.len().abs_diff(ct.len());
            best = match best {
                Some(b) if b.abs_diff(ct.len()) < d || (b.abs_diff(ct.len()) == d && b <= r.len()) => Some(b),
                _ => Some(r.len()),
            };
        }
        r_len += best.unwrap_or(0);
        for k in 1..=n {
            let cg = grams(&ct, k);
            let mut seen: Vec<Vec<String>> = Vec::new();
            for g in &cg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                let mine = count(g, &cg);
                let cap = rts.iter().map(|r| count(g, &grams(r, k))).max().unwrap_or(0);
                clipped[k - 1] += mine.min(cap) as f64;
                total[k - 1] += mine as f64;
            }
        }
    }
    if c_len == 0 || (0..n).any(|k| clipped[k] == 0.0 || total[k] == 0.0) {
        return 0.0;
    }
    let product: f64 = (0..n).map(|k| clipped[k] / total[k]).product();
    let bp = if c_len < r_len { (1.0 - r_len as f64 / c_len as f64).exp() } else { 1.0 };
    bp * product.powf(1.0 / n as f64)
}

fn is_subsequence(sub: &[&String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|x| it.any(|y| y == *x))
}

/// LCS by trying every subsequence of the candidate.
fn oracle_lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let pick: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if pick.len() > best && is_subsequence(&pick, b) {
            best = pick.len();
        }
    }
    best
}

fn oracle_rouge(cands: &[String], refs: &[Vec<String>]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let per: Vec<f64> = cands
        .iter()
        .zip(refs)
        .map(|(c, rs)| {
            let ct = toks(c);
            rs.iter()
                .map(|r| {
                    let rt = toks(r);
                    let l = oracle_lcs(&ct, &rt) as f64;
                    if l == 0.0 || ct.is_empty() {
                        0.0
                    } else {
                        let (p, rec) = (l / ct.len() as f64, l / rt.len() as f64);
                        (1.0 + beta2) * p * rec / (rec + beta2 * p)
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

fn oracle_cider(cands: &[String], refs: &[Vec<String>]) -> f64 {
    let docs = cands.len() as f64;
    let mut total = 0.0;
    for (i, c) in cands.iter().enumerate() {
        let mut score = 0.0;
        for n in 1..=4 {
            let df = |g: &Vec<String>| {
                refs.iter()
                    .filter(|rs| rs.iter().any(|r| grams(&toks(r), n).contains(g)))
                    .count()
                    .max(1) as f64
            };
            let vec_of = |t: &[String]| -> HashMap<Vec<String>, f64> {
                let gs = grams(t, n);
                let mut v = HashMap::new();
                for g in &gs {
                    v.entry(g.clone()).or_insert_with(|| count(g, &gs) as f64 * (docs / df(g)).ln());
                }
                v
            };
            let cv = vec_of(&toks(c));
            let mut sum = 0.0;
            for r in &refs[i] {
                let rv = vec_of(&toks(r));
                let dot: f64 = cv.iter().map(|(g, x)| x * rv.get(g).unwrap_or(&0.0)).sum();
                let nc = cv.values().map(|x| x * x).sum::<f64>().sqrt();
                let nr = rv.values().map(|x| x * x).sum::<f64>().sqrt();
                if nc > 0.0 && nr > 0.0 {
                    sum += (dot / (nc * nr)).clamp(0.0, 1.0);
                }
            }
            score += sum / refs[i].len() as f64;
        }
        total += 10.0 * score / 4.0;
    }
    total / docs
}

fn metric_oracles() -> Outcome {
    const VOCAB: [&str; 10] = ["a", "man", "dog", "riding", "on", "bench", "red", "kite", "the", "park"];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for set in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + set);
        let sentence = |rng: &mut ChaCha8Rng| {
            let len = rng.gen_range(1..=8);
            (0..len).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
        };
        let n = rng.gen_range(2..=5);
        let cands: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
        let refs: Vec<Vec<String>> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=4);
                (0..k).map(|_| sentence(&mut rng)).collect()
            })
            .collect();
        let pairs = [
            ("BLEU-1", bleu(&cands, &refs, 1).map_err(e)?, oracle_bleu(&cands, &refs, 1)),
            ("BLEU-4", bleu(&cands, &refs, 4).map_err(e)?, oracle_bleu(&cands, &refs, 4)),
            ("ROUGE-L", rouge_l_corpus(&cands, &refs).map_err(e)?, oracle_rouge(&cands, &refs)),
            ("CIDEr", cider(&cands, &refs).map_err(e)?, oracle_cider(&cands, &refs)),
        ];
        for (name, got, want) in pairs {
            worst = worst.max((got - want).abs());
            check((got - want).abs() <= 1e-9, || format!("set {set} {name}: {got} vs oracle {want}"))?;
        }
    }
    let cands = vec!["a man riding a red horse".to_string(), "two dogs play in the snow".to_string()];
    let refs = vec![vec![cands[0].clone()], vec![cands[1].clone()]];
    let ident = [
        bleu(&cands, &refs, 1).map_err(e)?,
        bleu(&cands, &refs, 4).map_err(e)?,
        rouge_l_corpus(&cands, &refs).map_err(e)?,
    ];
    check(ident == [1.0, 1.0, 1.0], || format!("identity BLEU-1/4, ROUGE-L = {ident:?}"))?;
    let c = cider(&cands, &refs).map_err(e)?;
    check(c == 10.0, || format!("identity CIDEr = {c}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("20 sets, max |diff| {worst:.1e}; identity 1.0/1.0/1.0/10.0 in {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- entanglement

fn entanglement_exactness() -> Outcome {
    let start = Instant::now();
    let data = DemoData::generate(&DemoConfig::default());
    let pipeline = data.pipeline().map_err(e)?;
    let instances = data.instances();
    let mut annotator = SimulatedAnnotator::oracle(Arc::new(data.truth()));
    let ctx = RunContext {
        seed: data.config.seed,
        ..RunContext::default()
    };
    let fixes = demo::ENTANGLEMENT_FIXES;
    // every subset, executed from a workflow assembled here
    let mut sat: BTreeMap<BTreeSet<&str>, i64> = BTreeMap::new();
    let mut records: BTreeMap<BTreeSet<&str>, Vec<QualityRecord>> = BTreeMap::new();
    for mask in 0..(1u32 << fixes.len()) {
        let subset: Vec<&str> = (0..fixes.len()).filter(|i| mask & (1 << i) != 0).map(|i| fixes[i]).collect();
        // catalogue order keeps fixes topologically sorted
        let specs = data
            .definition
            .fixes
            .iter()
            .filter(|f| subset.contains(&f.id.as_str()))
            .cloned()
            .collect();
        let wf = FixWorkflow::new(format!("brute-{mask}"), specs);
        let mut sink = fixflow::events::NullSink::default();
        let mut tasks = Vec::new();
        for inst in &instances {
            let run = execute_workflow(&pipeline, inst, &wf, &mut annotator, &mut sink, &ctx).map_err(e)?;
            let caption = run.after_output().and_then(DataValue::best_caption).unwrap_or("").to_string();
            tasks.push((
                run.run.clone(),
                fixflow::evaluation::evaluation_task(
                    &run.run,
                    fixflow::fix::instance_image(run.last()),
                    &caption,
                    data.config.evaluation_responses,
                ),
            ));
        }
        let recs = fixflow::evaluation::evaluate_outputs(&tasks, &mut annotator, &mut sink).map_err(e)?;
        let key: BTreeSet<&str> = subset.into_iter().collect();
        sat.insert(key.clone(), recs.iter().filter(|r| r.satisfactory).count() as i64);
        records.insert(key, recs);
    }
    let n = instances.len() as i64;
    let base_key = BTreeSet::new();
    let base = sat[&base_key];
    let runs: Vec<(Vec<String>, Vec<QualityRecord>)> = records
        .iter()
        .filter(|(k, _)| !k.is_empty())
        .map(|(k, r)| (k.iter().map(|s| s.to_string()).collect(), r.clone()))
        .collect();
    let report =
        detect_entanglement(&records[&base_key], &runs, data.config.entanglement_threshold, None).map_err(e)?;

    let pct = |diff: i64| (100 * diff) as f64 / n as f64;
    let mut checked = 0;
    for (k, s) in &sat {
        let ids: Vec<&str> = k.iter().copied().collect();
        let d = report.subset(&ids).ok_or_else(|| format!("no delta for {ids:?}"))?;
        check(d.delta == pct(s - base), || format!("delta {ids:?}: {} vs {}", d.delta, pct(s - base)))?;
        checked += 1;
    }
    for (i, a) in fixes.iter().enumerate() {
        for b in &fixes[i + 1..] {
            let s = |ks: &[&str]| sat[&ks.iter().copied().collect::<BTreeSet<_>>()];
            let want = pct(s(&[a, b]) - s(&[a]) - s(&[b]) + base);
            let got = report.interaction(a, b).ok_or_else(|| format!("no I({a},{b})"))?.value;
            check(got == want, || format!("I({a},{b}) = {got}, brute force {want}"))?;
            checked += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("{checked} terms exact over {n} scenes in {:.1?}", start.elapsed()))
}

// ---------------------------------------------------------------- non-monotonicity

fn records_of(data: &fixflow::analysis::AnalysisData, wf: &str) -> Result<Vec<QualityRecord>, String> {
    data.records(wf).map_err(e)
}

fn nonmonotonic_analogs() -> Outcome {
    let mut sink = fixflow::events::NullSink::default();

    let (world, scene) = analogs::worse_after_detector_fix();
    let data = DemoData::from_scenes(world, vec![scene]);
    let a = demo::run_scenes(&data, &["baseline", "objects"], AnnotatorSource::Oracle, &mut sink).map_err(e)?;
    let (before, after) = (records_of(&a, "baseline")?, records_of(&a, "objects")?);
    let report = detect_nonmonotonic(&before, &after, Measure::General).map_err(e)?;
    check(report.is_flagged("bear-glasses"), || {
        format!("not flagged: general {} -> {}", before[0].general, after[0].general)
    })?;
    let mut fresh = fixflow::events::NullSink::default();
    let first = demo::run_scenes(&data, &["baseline", "objects"], AnnotatorSource::Oracle, &mut fresh).map_err(e)?;
    let mut fresh = fixflow::events::NullSink::default();
    let again = demo::run_scenes(&data, &["baseline", "objects"], AnnotatorSource::Oracle, &mut fresh).map_err(e)?;
    check(again == first, || "analog run not deterministic".into())?;

    let (world, scene) = analogs::needs_both_fixes();
    let data = DemoData::from_scenes(world, vec![scene]);
    let both = demo::subset_workflow(&["objects", "commonsense"]);
    let b = demo::run_scenes(&data, &["baseline", "objects", "commonsense", &both], AnnotatorSource::Oracle, &mut sink)
        .map_err(e)?;
    let runs = vec![
        (vec!["objects".to_string()], records_of(&b, "objects")?),
        (vec!["commonsense".to_string()], records_of(&b, "commonsense")?),
        (vec!["objects".to_string(), "commonsense".to_string()], records_of(&b, &both)?),
    ];
    let ent = detect_entanglement(&records_of(&b, "baseline")?, &runs, 0.0, None).map_err(e)?;
    let i = ent.interaction("objects", "commonsense").ok_or("no interaction term")?.value;
    check(i > 0.0, || format!("I(objects, commonsense) = {i}"))?;
    Ok(format!(
        "bear-glasses general {:.1} -> {:.1} flagged; bear-cake I(detector, LM) = {i:+.1} points",
        before[0].general, after[0].general
    ))
}

// ---------------------------------------------------------------- aggregation

/// Every multiset of size `len` over `0..k`, as sorted vectors.
fn multisets(k: u8, len: usize) -> Vec<Vec<u8>> {
    if len == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for m in multisets(k, len - 1) {
        let lo = m.last().copied().unwrap_or(0);
        for v in lo..k {
            let mut x = m.clone();
            x.push(v);
            out.push(x);
        }
    }
    out
}

fn aggregation_oracles() -> Outcome {
    let mut cases = 0;
    for len in 1..=7 {
        for m in multisets(3, len) {
            let got = majority_vote(&m).map_err(e)?;
            let mut want = None;
            let mut best = 0;
            for v in 0..3u8 {
                let c = m.iter().filter(|x| **x == v).count();
                best = best.max(c);
                if 2 * c > len {
                    want = Some(v);
                }
            }
            check(got.decision == want, || format!("majority {m:?}: {:?} vs {want:?}", got.decision))?;
            check(got.agreement == best as f64 / len as f64, || format!("agreement {m:?}"))?;
            cases += 1;
        }
        for m in multisets(5, len) {
            let ratings: Vec<u8> = m.iter().map(|x| x + 1).collect();
            let got = likert_aggregate(&ratings).map_err(e)?;
            let sum: u32 = ratings.iter().map(|&r| r as u32).sum();
            let high = ratings.iter().filter(|&&r| r >= 4).count();
            check(got.mean == sum as f64 / len as f64, || format!("mean {ratings:?}"))?;
            check(got.satisfactory == (high * 2 > len), || format!("satisfactory {ratings:?}"))?;
            cases += 1;
        }
    }
    check(majority_vote::<u8>(&[]).is_err() && likert_aggregate(&[]).is_err(), || "empty input accepted".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(578);
    let records: Vec<QualityRecord> = (0..1000)
        .map(|i| {
            let mut r = || rng.gen_range(1.0..=5.0);
            QualityRecord {
                instance_id: format!("r{i:04}"),
                accuracy: r(),
                detail: r(),
                language: r(),
                commonsense: rng.gen_range(0.0..=1.0),
                general: rng.gen_range(1.0..=5.0),
                satisfactory: rng.gen_bool(0.5),
            }
        })
        .collect();
    let s = partition_dataset(&records).map_err(e)?;
    let sat = records.iter().filter(|r| r.satisfactory).count();
    check(s.satisfactory == sat && s.n == 1000, || "random record counts".into())?;
    check(s.pct_satisfactory == (100 * sat) as f64 / 1000.0, || "random record percentage".into())?;
    let sat_ids: BTreeSet<&str> = records.iter().filter(|r| r.satisfactory).map(|r| r.instance_id.as_str()).collect();
    check(s.partition(fixflow::evaluation::Partition::Satisfactory).collect::<BTreeSet<_>>() == sat_ids, || {
        "partition membership".into()
    })?;
    let mean_acc = records.iter().map(|r| r.accuracy).sum::<f64>() / 1000.0;
    check((s.means.get(Measure::Accuracy) - mean_acc).abs() < 1e-12, || "accuracy mean".into())?;

    let fixture: Vec<QualityRecord> = (0..1000)
        .map(|i| QualityRecord {
            instance_id: format!("f{i:04}"),
            accuracy: 3.0,
            detail: 3.0,
            language: 3.0,
            commonsense: 1.0,
            general: if i < 578 { 4.0 } else { 2.0 },
            satisfactory: i < 578,
        })
        .collect();
    let f = partition_dataset(&fixture).map_err(e)?;
    check(f.pct_satisfactory == 57.8, || format!("fixture {}", f.pct_satisfactory))?;
    Ok(format!("{cases} multisets, 1000 random records, fixture 578/1000 = {}%", f.pct_satisfactory))
}

// ---------------------------------------------------------------- simulated annotators

struct AllSensible;

impl GroundTruth for AllSensible {
    fn answer(&self, _: &Microtask) -> fixflow::Result<Answer> {
        Ok(Answer::Commonsense { sensible: true })
    }
}

fn binomial_majority(k: u64, p: f64) -> f64 {
    let choose = |n: u64, r: u64| (1..=r).fold(1.0, |acc, i| acc * (n - r + i) as f64 / i as f64);
    ((k / 2 + 1)..=k)
        .map(|i| choose(k, i) * p.powi(i as i32) * (1.0 - p).powi((k - i) as i32))
        .sum()
}

fn simulated_recovery() -> Outcome {
    let want = binomial_majority(5, 0.8);
    let annotator = SimulatedAnnotator::new(Arc::new(AllSensible), 0.2, 42).map_err(e)?;
    let trials = 4000;
    let mut recovered = 0;
    for t in 0..trials {
        let task = Microtask {
            id: format!("trial-{t}"),
            kind: TaskKind::CaptionCommonsensePrune,
            payload: TaskPayload::Caption {
                caption: "a dog on a bench".into(),
            },
            instance_id: format!("i{t}"),
            component_id: "lm".into(),
            fix_id: None,
            batch_id: None,
            responses_required: 5,
        };
        let votes: Vec<bool> = (0..5)
            .map(|w| match annotator.respond(&task, w) {
                Ok(Answer::Commonsense { sensible }) => Ok(sensible),
                other => Err(format!("unexpected answer {other:?}")),
            })
            .collect::<Result<_, _>>()?;
        if majority_vote(&votes).map_err(e)?.decision == Some(true) {
            recovered += 1;
        }
    }
    let rate = recovered as f64 / trials as f64;
    check((rate - want).abs() <= 0.03, || format!("rate {rate:.4} vs binomial {want:.5}"))?;
    Ok(format!("{recovered}/{trials} = {rate:.4}, binomial {want:.5}"))
}

// ---------------------------------------------------------------- determinism and replay

fn determinism_and_replay() -> Outcome {
    let start = Instant::now();
    let data = DemoData::generate(&DemoConfig::default());
    let mut logs = Vec::new();
    let mut outcomes = Vec::new();
    for _ in 0..2 {
        let mut log = EventLog::in_memory(Clock::Logical);
        outcomes.push(demo::run_all(&data, AnnotatorSource::Oracle, &mut log, None).map_err(e)?);
        logs.push(log.to_jsonl());
    }
    check(logs[0] == logs[1], || "two seeded runs wrote different logs".into())?;
    let state = replay_text(&logs[0]).map_err(e)?;
    let reports = &outcomes[0].reports;
    check(state.reports.len() == reports.len(), || {
        format!("{} reports replayed, {} written", state.reports.len(), reports.len())
    })?;
    for r in reports {
        let back = state.report(&r.name).ok_or_else(|| format!("report `{}` missing", r.name))?;
        check(back.csv == r.csv && back.text == r.text, || format!("report `{}` differs", r.name))?;
    }
    Ok(format!(
        "{} bytes x2 identical, {} reports rebuilt in {:.1?}",
        logs[0].len(),
        reports.len(),
        start.elapsed()
    ))
}

// ---------------------------------------------------------------- detector state

fn detector_state() -> Outcome {
    let config = DemoConfig {
        scenes: 1000,
        ..DemoConfig::default()
    };
    let data = DemoData::generate(&config);
    let pipeline = data.pipeline().map_err(e)?;
    let mut annotator = SimulatedAnnotator::oracle(Arc::new(data.truth()));
    let wf = data.definition.workflow("objects").map_err(e)?;
    let mut sink = fixflow::events::NullSink::default();
    let runs = data
        .instances()
        .iter()
        .map(|i| execute_workflow(&pipeline, i, &wf, &mut annotator, &mut sink, &RunContext::default()))
        .collect::<fixflow::Result<Vec<_>>>()
        .map_err(e)?;
    let refs: Vec<_> = runs.iter().collect();
    let curated = curated_from_runs(refs.iter().copied());
    let port = demo::DETECTOR_WORDS.parse().map_err(e)?;
    let report = component_state_report(&refs, &port, &curated);
    let objects = report
        .detector
        .iter()
        .find(|d| d.category == PartTag::Object)
        .ok_or("no object state")?;
    let (p, r) = (objects.before.precision.unwrap_or(0.0), objects.before.recall.unwrap_or(0.0));

    // independent count straight from the scenes
    let (mut hit, mut shown, mut truth) = (0usize, 0usize, 0usize);
    for (run, scene) in runs.iter().zip(&data.scenes) {
        let words: BTreeSet<String> = run
            .baseline()
            .value(&port)
            .and_then(DataValue::as_word_list)
            .map(|l| l.with_tag(PartTag::Object).map(|w| w.word.clone()).collect())
            .unwrap_or_default();
        hit += words.intersection(&scene.content.objects).count();
        shown += words.len();
        truth += scene.content.objects.len();
    }
    let (op, or) = (hit as f64 / shown as f64, hit as f64 / truth as f64);
    check((p - op).abs() < 1e-12 && (r - or).abs() < 1e-12, || {
        format!("report ({p:.4}, {r:.4}) vs scene count ({op:.4}, {or:.4})")
    })?;
    check((p - 0.44).abs() <= 0.03 && (r - 0.92).abs() <= 0.03, || {
        format!("precision {p:.4}, recall {r:.4}")
    })?;
    Ok(format!("precision {p:.3}, recall {r:.3} over {} scenes", runs.len()))
}

// ---------------------------------------------------------------- fixpoints

fn fixpoints() -> Outcome {
    let config = DemoConfig {
        scenes: 40,
        ..DemoConfig::default()
    };
    let data = DemoData::generate(&config);
    let pipeline = data.pipeline().map_err(e)?;
    let mut annotator = SimulatedAnnotator::oracle(Arc::new(EndorseMachine));
    let ctx = RunContext::default();
    let mut kinds = BTreeSet::new();
    for fix in &data.definition.fixes {
        let wf = FixWorkflow::new(format!("endorse-{}", fix.id), vec![fix.clone()]);
        for inst in data.instances() {
            let mut sink = fixflow::events::NullSink::default();
            let run = execute_workflow(&pipeline, &inst, &wf, &mut annotator, &mut sink, &ctx).map_err(e)?;
            check(run.after_output() == run.before_output(), || {
                format!("`{}` changed the output of `{}`", fix.id, inst.id)
            })?;
            check(run.last().steps == run.baseline().steps, || {
                format!("`{}` changed a component output of `{}`", fix.id, inst.id)
            })?;
        }
        kinds.insert(fix.kind);
    }
    check(kinds.len() == 5, || format!("only {} fix kinds covered", kinds.len()))?;

    let empty = FixWorkflow::new("empty", vec![]);
    for inst in data.instances() {
        let mut log = EventLog::in_memory(Clock::Logical);
        let run = execute_workflow(&pipeline, &inst, &empty, &mut annotator, &mut log, &ctx).map_err(e)?;
        check(run.traces.len() == 1 && run.rounds.is_empty() && run.complete, || "empty workflow ran rounds".into())?;
        check(run.after_output() == run.before_output(), || "empty workflow changed output".into())?;
        let plain = pipeline.execute(&inst, &Default::default()).map_err(e)?;
        check(run.baseline() == &plain, || "empty workflow trace differs from plain execution".into())?;
        let tasks = log
            .records()
            .iter()
            .filter(|r| !matches!(r.event, fixflow::events::EventBody::Trace { .. }))
            .count();
        check(tasks == 0, || format!("empty workflow logged {tasks} non-trace events"))?;
    }
    Ok(format!("{} fix kinds x {} scenes unchanged; empty workflow is a no-op", kinds.len(), config.scenes))
}

// ---------------------------------------------------------------- main

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("cost reproduction", cost_reproduction),
        ("metric oracle equivalence", metric_oracles),
        ("entanglement exactness", entanglement_exactness),
        ("non-monotonicity analogs", nonmonotonic_analogs),
        ("aggregation correctness", aggregation_oracles),
        ("simulated-annotator recovery", simulated_recovery),
        ("determinism and replay", determinism_and_replay),
        ("detector-state recovery", detector_state),
        ("fixpoint properties", fixpoints),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
