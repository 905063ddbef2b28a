//! Named reports: CSV tables plus a plain-text result summary, rendered
//! from logged runs and quality records only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::compare::{compare_states, FixEffectReport, StateComparison};
use super::cost::{estimate_cost, CostPlan};
use super::entangle::detect_entanglement;
use super::nonmono::detect_nonmonotonic;
use super::state::{component_state_report, curated_from_runs, ListState};
use crate::error::{Error, Result};
use crate::evaluation::{partition_dataset, Measure, Partition, QualityRecord};
use crate::fix::WorkflowRun;
use crate::metrics::{metric_report, ReferenceSet};
use crate::pipeline::PortRef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRun {
    pub fixes: Vec<String>,
    pub workflow_id: String,
}

/// What a report is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportSpec {
    Summary {
        workflow_id: String,
    },
    Compare {
        baseline: String,
        after: String,
    },
    NonMonotonic {
        baseline: String,
        after: String,
        measure: Measure,
    },
    Entanglement {
        baseline: String,
        subsets: Vec<SubsetRun>,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        measure: Option<Measure>,
    },
    ComponentState {
        workflow_id: String,
        detector: PortRef,
    },
    Cost {
        plan: CostPlan,
    },
    Metrics {
        workflow_id: String,
        references: Vec<ReferenceSet>,
    },
}

/// Runs and quality records available to reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisData {
    pub runs: Vec<WorkflowRun>,
    /// workflow id -> instance id -> record
    pub records: BTreeMap<String, BTreeMap<String, QualityRecord>>,
}

impl AnalysisData {
    pub fn add_record(&mut self, workflow_id: &str, record: QualityRecord) {
        self.records
            .entry(workflow_id.to_string())
            .or_default()
            .insert(record.instance_id.clone(), record);
    }

    pub fn records(&self, workflow_id: &str) -> Result<Vec<QualityRecord>> {
        self.records
            .get(workflow_id)
            .map(|m| m.values().cloned().collect())
            .ok_or_else(|| Error::InvalidValue(format!("no quality records for workflow `{workflow_id}`")))
    }

    pub fn runs_of<'a>(&'a self, workflow_id: &'a str) -> impl Iterator<Item = &'a WorkflowRun> + 'a {
        self.runs.iter().filter(move |r| r.run.workflow_id == workflow_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub name: String,
    pub csv: String,
    pub text: String,
}

impl Report {
    /// Hex SHA-256 over the CSV and the text.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.csv.as_bytes());
        h.update([0u8]);
        h.update(self.text.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

fn signed(v: f64) -> String {
    format!("{v:+.2}")
}

pub fn render_report(name: &str, spec: &ReportSpec, data: &AnalysisData) -> Result<Report> {
    let (csv, text) = match spec {
        ReportSpec::Summary { workflow_id } => summary(workflow_id, data)?,
        ReportSpec::Compare { baseline, after } => {
            let r = compare_states(after, &data.records(baseline)?, &data.records(after)?)?;
            compare(baseline, &r)
        }
        ReportSpec::NonMonotonic {
            baseline,
            after,
            measure,
        } => nonmono(baseline, after, *measure, data)?,
        ReportSpec::Entanglement {
            baseline,
            subsets,
            threshold,
            measure,
        } => entangle(baseline, subsets, *threshold, *measure, data)?,
        ReportSpec::ComponentState { workflow_id, detector } => component_state(workflow_id, detector, data),
        ReportSpec::Cost { plan } => cost(plan)?,
        ReportSpec::Metrics {
            workflow_id,
            references,
        } => metrics(workflow_id, references, data)?,
    };
    Ok(Report {
        name: name.to_string(),
        csv,
        text,
    })
}

fn summary(workflow_id: &str, data: &AnalysisData) -> Result<(String, String)> {
    let records = data.records(workflow_id)?;
    let s = partition_dataset(&records)?;
    let mut csv = String::from("instance_id,accuracy,detail,language,commonsense,general,partition\n");
    for r in &records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{:?}",
            r.instance_id,
            r.accuracy,
            r.detail,
            r.language,
            r.commonsense,
            r.general,
            Partition::of(r)
        );
    }
    let mut text = format!("Result: evaluation of `{workflow_id}`\n");
    let _ = writeln!(text, "  instances      {}", s.n);
    let _ = writeln!(text, "  satisfactory   {} ({:.2}%)", s.satisfactory, s.pct_satisfactory);
    for m in Measure::ALL {
        let _ = writeln!(text, "  {:<14} {:.3}", m.as_str(), s.means.get(m));
    }
    Ok((csv, text))
}

fn compare_row(csv: &mut String, label: &str, c: &StateComparison) {
    let _ = write!(
        csv,
        "{label},{},{},{},{},{},{},{}",
        c.n,
        c.satisfactory_before,
        c.satisfactory_after,
        c.pct_before,
        c.pct_after,
        c.delta_points,
        opt(c.delta_relative)
    );
    for m in Measure::ALL {
        let b = c.before.as_ref().map(|x| x.get(m));
        let a = c.after.as_ref().map(|x| x.get(m));
        let _ = write!(csv, ",{},{}", opt(b), opt(a));
    }
    csv.push('\n');
}

fn compare(baseline: &str, r: &FixEffectReport) -> (String, String) {
    let mut csv =
        String::from("partition,n,satisfactory_before,satisfactory_after,pct_before,pct_after,delta_points,delta_relative");
    for m in Measure::ALL {
        let _ = write!(csv, ",{m}_before,{m}_after");
    }
    csv.push('\n');
    compare_row(&mut csv, "all", &r.overall);
    for (p, c) in &r.partitions {
        compare_row(&mut csv, &format!("{p:?}"), c);
    }

    let mut text = format!("Result: `{}` against `{baseline}`\n", r.workflow_id);
    let o = &r.overall;
    let _ = writeln!(
        text,
        "  satisfactory {:.2}% -> {:.2}% ({} points, {}% relative)",
        o.pct_before,
        o.pct_after,
        signed(o.delta_points),
        o.delta_relative.map(signed).unwrap_or_else(|| "n/a".into())
    );
    for m in Measure::ALL {
        if let (Some(b), Some(a)) = (&o.before, &o.after) {
            let _ = writeln!(text, "  {:<12} {:.3} -> {:.3}", m.as_str(), b.get(m), a.get(m));
        }
    }
    for (p, c) in &r.partitions {
        let _ = writeln!(
            text,
            "  {p:?} partition ({} instances): {:.2}% satisfactory after",
            c.n, c.pct_after
        );
    }
    (csv, text)
}

fn nonmono(baseline: &str, after: &str, measure: Measure, data: &AnalysisData) -> Result<(String, String)> {
    let r = detect_nonmonotonic(&data.records(baseline)?, &data.records(after)?, measure)?;
    let mut csv = String::from("instance_id,before,after,drop\n");
    for d in &r.drops {
        let _ = writeln!(csv, "{},{},{},{}", d.instance_id, d.before, d.after, d.size());
    }
    let mut text = format!("Result: non-monotonic {measure} changes, `{after}` against `{baseline}`\n");
    let _ = writeln!(text, "  instances that got worse: {}", r.drops.len());
    for (p, d) in &r.partitions {
        let _ = writeln!(
            text,
            "  {p:?} partition mean {:.3} -> {:.3}{}",
            d.before_mean,
            d.after_mean,
            if d.dropped { " (dropped)" } else { "" }
        );
    }
    Ok((csv, text))
}

fn entangle(
    baseline: &str,
    subsets: &[SubsetRun],
    threshold: f64,
    measure: Option<Measure>,
    data: &AnalysisData,
) -> Result<(String, String)> {
    let runs = subsets
        .iter()
        .map(|s| Ok((s.fixes.clone(), data.records(&s.workflow_id)?)))
        .collect::<Result<Vec<_>>>()?;
    let r = detect_entanglement(&data.records(baseline)?, &runs, threshold, measure)?;
    let mut csv = String::from("subset,satisfactory,delta,measure_delta\n");
    for s in &r.subsets {
        let _ = writeln!(csv, "{},{},{},{}", s.fixes.join("+"), s.satisfactory, s.delta, opt(s.measure_delta));
    }
    csv.push_str("pair,interaction,kind,measure_interaction\n");
    for i in &r.interactions {
        let _ = writeln!(csv, "{}+{},{},{:?},{}", i.a, i.b, i.value, i.kind, opt(i.measure_value));
    }
    let mut text = format!("Result: fix interactions over {} instances\n", r.n);
    for s in &r.subsets {
        let label = if s.fixes.is_empty() { "(none)".to_string() } else { s.fixes.join(" + ") };
        let _ = writeln!(text, "  delta {label:<40} {} points", signed(s.delta));
    }
    for i in &r.interactions {
        let _ = writeln!(text, "  I({}, {}) = {} points: {:?}", i.a, i.b, signed(i.value), i.kind);
    }
    Ok((csv, text))
}

fn list_state_cells(s: &ListState) -> String {
    format!("{},{},{}", opt(s.precision), opt(s.recall), s.mean_length)
}

fn component_state(workflow_id: &str, detector: &PortRef, data: &AnalysisData) -> (String, String) {
    let runs: Vec<&WorkflowRun> = data.runs_of(workflow_id).collect();
    let curated = curated_from_runs(runs.iter().copied());
    let r = component_state_report(&runs, detector, &curated);

    let mut csv = String::from(
        "section,item,precision_before,recall_before,length_before,precision_after,recall_after,length_after\n",
    );
    for d in &r.detector {
        let _ = writeln!(
            csv,
            "detector,{},{},{}",
            d.category,
            list_state_cells(&d.before),
            list_state_cells(&d.after)
        );
    }
    csv.push_str("section,item,instances,judged,pruned,pct_top_k,top1_pruned,pct_top1\n");
    for p in &r.pruning {
        let _ = writeln!(
            csv,
            "pruning,{},{},{},{},{},{},{}",
            p.fix, p.instances, p.judged, p.pruned, p.pct_top_k, p.top1_pruned, p.pct_top1
        );
    }
    if let Some(rr) = &r.reranker {
        csv.push_str("section,instances,pct_changed,pct_original_never_picked,pct_none_fits\n");
        let _ = writeln!(
            csv,
            "reranker,{},{},{},{}",
            rr.instances, rr.pct_changed, rr.pct_original_never_picked, rr.pct_none_fits
        );
    }

    let mut text = format!("Result: component state in `{workflow_id}`\n");
    for d in &r.detector {
        let _ = writeln!(
            text,
            "  detector {:<9} precision {} -> {}, recall {} -> {}, length {:.2} -> {:.2}",
            d.category.to_string(),
            opt2(d.before.precision),
            opt2(d.after.precision),
            opt2(d.before.recall),
            opt2(d.after.recall),
            d.before.mean_length,
            d.after.mean_length
        );
    }
    for p in &r.pruning {
        let _ = writeln!(
            text,
            "  pruned by {:<26} {:.2}% of Top-K, {:.2}% of Top-1",
            p.fix, p.pct_top_k, p.pct_top1
        );
    }
    if let Some(rr) = &r.reranker {
        let _ = writeln!(
            text,
            "  reranker: best caption changed {:.2}%, original never picked {:.2}%, none fits {:.2}%",
            rr.pct_changed, rr.pct_original_never_picked, rr.pct_none_fits
        );
    }
    if !r.skipped.is_empty() {
        let _ = writeln!(text, "  skipped without curated lists: {}", r.skipped.len());
    }
    (csv, text)
}

fn cost(plan: &CostPlan) -> Result<(String, String)> {
    let p = estimate_cost(&plan.rows)?;
    let mut csv = String::from("task,tasks,cost_per_assignment,assignments,total\n");
    let mut text = String::from("Result: crowdsourcing cost\n");
    for r in &p.rows {
        let task = if r.task.contains(',') {
            format!("\"{}\"", r.task.replace('"', "\"\""))
        } else {
            r.task.clone()
        };
        let _ = writeln!(
            csv,
            "{task},{},{},{},{}",
            r.tasks, r.cost_per_assignment, r.assignments, r.total
        );
        let _ = writeln!(text, "  {:<48} {:>12}", r.task, r.total.to_string());
    }
    let _ = writeln!(csv, "total,,,,{}", p.total);
    let _ = writeln!(text, "  {:<48} {:>12}", "Maximum workflow cost", p.total.to_string());
    Ok((csv, text))
}

fn metrics(workflow_id: &str, references: &[ReferenceSet], data: &AnalysisData) -> Result<(String, String)> {
    let outputs: BTreeMap<&str, String> = data
        .runs_of(workflow_id)
        .map(|r| {
            (
                r.run.instance_id.as_str(),
                r.after_output().and_then(|o| o.best_caption()).unwrap_or("").to_string(),
            )
        })
        .collect();
    let mut candidates = Vec::with_capacity(references.len());
    for r in references {
        let c = outputs
            .get(r.instance_id.as_str())
            .ok_or_else(|| Error::InstanceMismatch(vec![r.instance_id.clone()]))?;
        candidates.push(c.clone());
    }
    let m = metric_report(&candidates, references)?;
    let mut csv = String::from("workflow_id,instance_id,bleu1,bleu4,rouge_l,cider\n");
    for i in &m.instances {
        let _ = writeln!(
            csv,
            "{workflow_id},{},{},{},{},{}",
            i.instance_id, i.bleu1, i.bleu4, i.rouge_l, i.cider
        );
    }
    let _ = writeln!(csv, "{workflow_id},all,{},{},{},{}", m.bleu1, m.bleu4, m.rouge_l, m.cider);
    let text = format!(
        "Result: automatic scores of `{workflow_id}`\n  BLEU-1 {:.4}  BLEU-4 {:.4}  ROUGE-L {:.4}  CIDEr {:.4}\n",
        m.bleu1, m.bleu4, m.rouge_l, m.cider
    );
    Ok((csv, text))
}
