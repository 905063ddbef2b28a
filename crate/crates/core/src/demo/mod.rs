//! Synthetic captioning pipeline: scenes, components, ground truth, and a
//! driver that runs every demo workflow and writes the reports.

pub mod analogs;
mod components;
mod scene;
mod truth;
mod world;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use components::{
    lm_candidates, linear_reranker, registry, similarity, synthetic_detector, template_lm, ComponentParams,
    DetectorParams, DetectorRates, LmParams, RerankWeights, DETECTOR, FALLBACK_CAPTION, LANGUAGE_MODEL, RERANKER,
};
pub use scene::{generate_scenes, SceneContent, SceneParams, SyntheticScene};
pub use truth::SceneTruth;
pub use world::{
    likert, CaptionParts, PlausibilityEntry, PlausibilityTable, Quality, Template, World, WorldParams, ACTIVITIES,
    AGENTS, THINGS,
};

use crate::analysis::{render_report, AnalysisData, CostPlan, CostRow, Money, Report, ReportSpec, SubsetRun};
use crate::crowd::{Microtask, TaskKind};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_outputs, evaluation_task, Measure, DatasetSummary, partition_dataset};
use crate::events::{EventBody, EventSink};
use crate::fix::{
    execute_workflow, instance_image, Annotator, AnnotatorSource, FixKind, FixParams, FixSpec, GroundTruth,
    RunContext, RunRef, SimulatedAnnotator, WorkflowRun,
};
use crate::metrics::ReferenceSet;
use crate::pipeline::{
    ComponentSpec, Edge, Instance, Pipeline, PipelineDefinition, PipelineGraph, Port, PortRef, SystemInput, ValueKind,
    WorkflowDef,
};

/// Prices per assignment, as decimal dollar strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prices {
    pub wordlist: Money,
    pub caption: Money,
    pub rerank: Money,
    pub evaluation: Money,
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            wordlist: Money::from_micros(50_000),
            caption: Money::from_micros(20_000),
            rerank: Money::from_micros(50_000),
            evaluation: Money::from_micros(50_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub scenes: usize,
    pub seed: u64,
    pub evaluation_responses: u32,
    /// Interaction size (points) below which fixes count as additive.
    pub entanglement_threshold: f64,
    pub world: WorldParams,
    pub scene: SceneParams,
    pub components: ComponentParams,
    pub prices: Prices,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            scenes: 200,
            seed: 7,
            evaluation_responses: crate::crowd::DEFAULT_EVALUATION_RESPONSES,
            entanglement_threshold: 0.5,
            world: WorldParams::default(),
            scene: SceneParams::default(),
            components: ComponentParams::default(),
            prices: Prices::default(),
        }
    }
}

pub const DETECTOR_WORDS: &str = "detector.words";
pub const LM_CAPTIONS: &str = "language_model.captions";
pub const RANKED: &str = "reranker.ranked";

fn port(s: &str) -> PortRef {
    s.parse().expect("static port reference")
}

fn component(id: &str, executor: &str, inputs: &[(&str, ValueKind)], outputs: &[(&str, ValueKind)]) -> ComponentSpec {
    let ports = |ps: &[(&str, ValueKind)]| ps.iter().map(|(n, k)| Port::new(*n, *k)).collect();
    ComponentSpec {
        id: id.into(),
        executor: executor.into(),
        inputs: ports(inputs),
        outputs: ports(outputs),
    }
}

pub fn graph() -> PipelineGraph {
    use ValueKind::*;
    PipelineGraph {
        components: vec![
            component("detector", DETECTOR, &[("image", ImageRef)], &[("words", ScoredWordList)]),
            component(
                "language_model",
                LANGUAGE_MODEL,
                &[("words", ScoredWordList)],
                &[("captions", CaptionList), ("fallback", Scalar)],
            ),
            component(
                "reranker",
                RERANKER,
                &[("captions", CaptionList), ("words", ScoredWordList)],
                &[("ranked", CaptionList)],
            ),
        ],
        edges: vec![
            Edge {
                from: port(DETECTOR_WORDS),
                to: port("language_model.words"),
            },
            Edge {
                from: port(DETECTOR_WORDS),
                to: port("reranker.words"),
            },
            Edge {
                from: port(LM_CAPTIONS),
                to: port("reranker.captions"),
            },
        ],
        system_inputs: vec![SystemInput {
            name: "image".into(),
            kind: ImageRef,
            to: vec![port("detector.image")],
        }],
        system_output: port(RANKED),
    }
}

pub fn fixes() -> Vec<FixSpec> {
    let lm_fix = |id: &str, kind| FixSpec {
        params: FixParams {
            scope: Some(port(RANKED)),
            ..FixParams::default()
        },
        ..FixSpec::new(id, port(LM_CAPTIONS), kind)
    };
    vec![
        FixSpec::new("objects", port(DETECTOR_WORDS), FixKind::WordlistAddRemoveObjects),
        FixSpec::new("activities", port(DETECTOR_WORDS), FixKind::WordlistAddRemoveActivities),
        lm_fix("commonsense", FixKind::CaptionCommonsensePrune),
        lm_fix("fluency", FixKind::CaptionFluencyPrune),
        FixSpec::new("rerank", port(RANKED), FixKind::RerankTopK),
    ]
}

/// Fixes whose subsets are run for the interaction analysis.
pub const ENTANGLEMENT_FIXES: [&str; 3] = ["objects", "commonsense", "rerank"];

pub const BASELINE: &str = "baseline";
pub const COMPLETE: &str = "complete";

/// Workflow id of a subset of [`ENTANGLEMENT_FIXES`].
pub fn subset_workflow(fixes: &[&str]) -> String {
    if fixes.is_empty() {
        BASELINE.to_string()
    } else {
        fixes.join("+")
    }
}

pub fn workflows() -> Vec<WorkflowDef> {
    let wf = |id: &str, fixes: &[&str]| WorkflowDef {
        id: id.into(),
        fixes: fixes.iter().map(|f| f.to_string()).collect(),
    };
    let mut out = vec![
        wf(BASELINE, &[]),
        wf("objects", &["objects"]),
        wf("activities", &["activities"]),
        wf("commonsense", &["commonsense"]),
        wf("fluency", &["fluency"]),
        wf("rerank", &["rerank"]),
        wf("detector", &["objects", "activities"]),
        wf("language-model", &["commonsense", "fluency"]),
        wf(COMPLETE, &["objects", "activities", "commonsense", "fluency", "rerank"]),
    ];
    for subset in entanglement_subsets() {
        if subset.len() > 1 {
            out.push(wf(&subset_workflow(&subset), &subset));
        }
    }
    out
}

/// All subsets of [`ENTANGLEMENT_FIXES`], smallest first.
pub fn entanglement_subsets() -> Vec<Vec<&'static str>> {
    let n = ENTANGLEMENT_FIXES.len();
    let mut subsets: Vec<Vec<&str>> = (0..1u32 << n)
        .map(|mask| {
            ENTANGLEMENT_FIXES
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| *f)
                .collect()
        })
        .collect();
    subsets.sort_by_key(Vec::len);
    subsets
}

pub fn definition() -> PipelineDefinition {
    PipelineDefinition {
        name: "demo-captioning".into(),
        graph: graph(),
        fixes: fixes(),
        workflows: workflows(),
    }
}

/// Everything `generate` writes.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoData {
    pub config: DemoConfig,
    pub world: World,
    pub scenes: Vec<SyntheticScene>,
    pub definition: PipelineDefinition,
}

impl DemoData {
    pub fn generate(config: &DemoConfig) -> Self {
        let mut world = World::generate(config.seed, &config.world);
        let scenes = generate_scenes(&mut world, config.scenes, config.seed, &config.scene, config.world.floor);
        let mut config = config.clone();
        config.components.detector.seed = config.seed;
        config.components.lm.floor = config.world.floor;
        Self {
            config,
            world,
            scenes,
            definition: definition(),
        }
    }

    /// A dataset of hand-built scenes sharing one world.
    pub fn from_scenes(world: World, scenes: Vec<SyntheticScene>) -> Self {
        Self {
            config: DemoConfig {
                scenes: scenes.len(),
                ..DemoConfig::default()
            },
            world,
            scenes,
            definition: definition(),
        }
    }

    pub fn instances(&self) -> Vec<Instance> {
        self.scenes.iter().map(SyntheticScene::instance).collect()
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let world = Arc::new(self.world.clone());
        let by_image = self.scenes.iter().map(|s| (s.image.clone(), s.clone())).collect();
        let reg = registry(world, Arc::new(by_image), &self.config.components);
        Pipeline::new(self.definition.graph.clone(), &reg)
    }

    pub fn truth(&self) -> SceneTruth {
        let by_id = self.scenes.iter().map(|s| (s.id.clone(), s.clone())).collect();
        SceneTruth::new(Arc::new(self.world.clone()), Arc::new(by_id))
    }

    pub fn references(&self) -> Result<Vec<ReferenceSet>> {
        self.scenes
            .iter()
            .map(|s| ReferenceSet::new(s.id.clone(), s.references()))
            .collect()
    }
}

pub const CONFIG_FILE: &str = "demo.toml";
pub const WORLD_FILE: &str = "world.json";
pub const SCENES_FILE: &str = "scenes.jsonl";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const PIPELINE_FILE: &str = "pipeline.toml";

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for i in items {
        out.push_str(&serde_json::to_string(i)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_jsonl_items<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

impl DemoData {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(
            &dir.join(CONFIG_FILE),
            &toml::to_string_pretty(&self.config).map_err(|e| Error::Parse(e.to_string()))?,
        )?;
        write(&dir.join(WORLD_FILE), &serde_json::to_string(&self.world)?)?;
        write(&dir.join(SCENES_FILE), &jsonl(&self.scenes)?)?;
        write(&dir.join(INSTANCES_FILE), &jsonl(&self.instances())?)?;
        write(&dir.join(PIPELINE_FILE), &self.definition.to_toml()?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config: DemoConfig =
            toml::from_str(&read(&dir.join(CONFIG_FILE))?).map_err(|e| Error::Parse(e.to_string()))?;
        let world: World = serde_json::from_str(&read(&dir.join(WORLD_FILE))?)?;
        let scenes: Vec<SyntheticScene> = parse_jsonl_items(&read(&dir.join(SCENES_FILE))?)?;
        for s in &scenes {
            s.check()?;
        }
        let definition = PipelineDefinition::load(&dir.join(PIPELINE_FILE))?;
        Ok(Self {
            config,
            world,
            scenes,
            definition,
        })
    }
}

/// Outcome of [`run_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunAllOutcome {
    pub data: AnalysisData,
    pub summaries: BTreeMap<String, DatasetSummary>,
    pub reports: Vec<Report>,
}

/// Runs `workflows` over `instances` and evaluates each workflow's final
/// outputs with `annotator`.
#[allow(clippy::too_many_arguments)]
pub fn run_workflows(
    pipeline: &Pipeline,
    definition: &PipelineDefinition,
    workflows: &[String],
    instances: &[Instance],
    annotator: &mut dyn Annotator,
    sink: &mut dyn EventSink,
    ctx: &RunContext,
    evaluation_responses: u32,
) -> Result<AnalysisData> {
    let mut data = AnalysisData::default();
    for wf_id in workflows {
        let workflow = definition.workflow(wf_id)?;
        let mut tasks: Vec<(RunRef, Microtask)> = Vec::with_capacity(instances.len());
        for inst in instances {
            let run = execute_workflow(pipeline, inst, &workflow, annotator, sink, ctx)?;
            let caption = run.after_output().and_then(|o| o.best_caption()).unwrap_or("").to_string();
            tasks.push((
                run.run.clone(),
                evaluation_task(&run.run, instance_image(run.last()), &caption, evaluation_responses),
            ));
            data.runs.push(run);
        }
        for record in evaluate_outputs(&tasks, annotator, sink)? {
            data.add_record(wf_id, record);
        }
    }
    Ok(data)
}

/// Report specifications for a complete demo run.
pub fn report_specs(data: &DemoData, analysis: &AnalysisData) -> Result<Vec<(String, ReportSpec)>> {
    let mut specs = vec![(
        format!("summary-{BASELINE}"),
        ReportSpec::Summary {
            workflow_id: BASELINE.into(),
        },
    )];
    for wf in &data.definition.workflows {
        if wf.id != BASELINE {
            specs.push((
                format!("compare-{}", wf.id),
                ReportSpec::Compare {
                    baseline: BASELINE.into(),
                    after: wf.id.clone(),
                },
            ));
        }
    }
    for wf in ["objects", "detector", COMPLETE] {
        specs.push((
            format!("nonmono-{wf}"),
            ReportSpec::NonMonotonic {
                baseline: BASELINE.into(),
                after: wf.into(),
                measure: Measure::General,
            },
        ));
    }
    specs.push((
        "entanglement".into(),
        ReportSpec::Entanglement {
            baseline: BASELINE.into(),
            subsets: entanglement_subsets()
                .into_iter()
                .filter(|s| !s.is_empty())
                .map(|s| SubsetRun {
                    fixes: s.iter().map(|f| f.to_string()).collect(),
                    workflow_id: subset_workflow(&s),
                })
                .collect(),
            threshold: data.config.entanglement_threshold,
            measure: Some(Measure::General),
        },
    ));
    specs.push((
        "component-state".into(),
        ReportSpec::ComponentState {
            workflow_id: COMPLETE.into(),
            detector: port(DETECTOR_WORDS),
        },
    ));
    specs.push((
        "cost".into(),
        ReportSpec::Cost {
            plan: observed_cost(data, analysis),
        },
    ));
    for wf in [BASELINE, COMPLETE] {
        specs.push((
            format!("metrics-{wf}"),
            ReportSpec::Metrics {
                workflow_id: wf.into(),
                references: data.references()?,
            },
        ));
    }
    Ok(specs)
}

/// Cost of the complete workflow's microtasks plus before/after evaluation.
fn observed_cost(data: &DemoData, analysis: &AnalysisData) -> CostPlan {
    let p = &data.config.prices;
    let mut counts: BTreeMap<TaskKind, (u64, u64)> = BTreeMap::new();
    for run in analysis.runs_of(COMPLETE) {
        for round in &run.rounds {
            for t in &round.tasks {
                let e = counts.entry(t.kind).or_default();
                e.0 += 1;
                e.1 = e.1.max(u64::from(t.responses_required));
            }
        }
    }
    let mut rows: Vec<CostRow> = counts
        .into_iter()
        .map(|(kind, (n, k))| {
            let price = match kind {
                TaskKind::WordlistAddRemoveObjects | TaskKind::WordlistAddRemoveActivities => p.wordlist,
                TaskKind::CaptionCommonsensePrune | TaskKind::CaptionFluencyPrune => p.caption,
                TaskKind::RerankTopK => p.rerank,
                TaskKind::SystemEvaluation => p.evaluation,
            };
            CostRow::new(kind.to_string(), n, price, k)
        })
        .collect();
    let evaluated = analysis.records.get(BASELINE).map_or(0, |m| m.len()) as u64
        + analysis.records.get(COMPLETE).map_or(0, |m| m.len()) as u64;
    rows.push(CostRow::new(
        TaskKind::SystemEvaluation.to_string(),
        evaluated,
        p.evaluation,
        u64::from(data.config.evaluation_responses),
    ));
    CostPlan {
        rows,
        total: Money::ZERO,
    }
}

/// Builds the annotator for `source` from the scene ground truth.
pub fn annotator_for(source: AnnotatorSource, truth: Arc<dyn GroundTruth>) -> Result<SimulatedAnnotator> {
    match source {
        AnnotatorSource::Oracle => Ok(SimulatedAnnotator::oracle(truth)),
        AnnotatorSource::Simulated { epsilon, seed } => SimulatedAnnotator::new(truth, epsilon, seed),
        AnnotatorSource::Queue => Err(Error::Annotator(
            "the demo driver needs a simulated annotator; use `serve` for live workers".into(),
        )),
    }
}

/// Every demo workflow, evaluation, and all reports. Reports are logged as
/// references and, with `reports_dir`, written as `{name}.csv` and
/// `{name}.txt`.
pub fn run_all(
    data: &DemoData,
    source: AnnotatorSource,
    sink: &mut dyn EventSink,
    reports_dir: Option<&Path>,
) -> Result<RunAllOutcome> {
    let pipeline = data.pipeline()?;
    let mut annotator = annotator_for(source, Arc::new(data.truth()))?;
    let ctx = RunContext {
        seed: data.config.seed,
        ..RunContext::default()
    };
    let ids: Vec<String> = data.definition.workflows.iter().map(|w| w.id.clone()).collect();
    let analysis = run_workflows(
        &pipeline,
        &data.definition,
        &ids,
        &data.instances(),
        &mut annotator,
        sink,
        &ctx,
        data.config.evaluation_responses,
    )?;
    let mut summaries = BTreeMap::new();
    for id in &ids {
        summaries.insert(id.clone(), partition_dataset(&analysis.records(id)?)?);
    }
    let mut reports = Vec::new();
    if let Some(dir) = reports_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (name, spec) in report_specs(data, &analysis)? {
        let report = render_report(&name, &spec, &analysis)?;
        if let Some(dir) = reports_dir {
            write(&dir.join(format!("{name}.csv")), &report.csv)?;
            write(&dir.join(format!("{name}.txt")), &report.text)?;
        }
        sink.emit(EventBody::ReportRef {
            name: name.clone(),
            sha256: report.sha256(),
            spec,
        })?;
        reports.push(report);
    }
    Ok(RunAllOutcome {
        data: analysis,
        summaries,
        reports,
    })
}

/// Runs the listed workflows on a small hand-built dataset and evaluates
/// them; used for the constructed analog scenes.
pub fn run_scenes(
    data: &DemoData,
    workflows: &[&str],
    source: AnnotatorSource,
    sink: &mut dyn EventSink,
) -> Result<AnalysisData> {
    let pipeline = data.pipeline()?;
    let mut annotator = annotator_for(source, Arc::new(data.truth()))?;
    let ctx = RunContext {
        seed: data.config.seed,
        ..RunContext::default()
    };
    let ids: Vec<String> = workflows.iter().map(|w| w.to_string()).collect();
    run_workflows(
        &pipeline,
        &data.definition,
        &ids,
        &data.instances(),
        &mut annotator,
        sink,
        &ctx,
        data.config.evaluation_responses,
    )
}

/// Runs of `workflow_id` in `data`.
pub fn runs<'a>(data: &'a AnalysisData, workflow_id: &'a str) -> Vec<&'a WorkflowRun> {
    data.runs_of(workflow_id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_is_valid() {
        let d = definition();
        assert_eq!(d.check(), Vec::<String>::new());
        let text = d.to_toml().unwrap();
        assert_eq!(PipelineDefinition::from_toml(&text).unwrap(), d);
    }

    #[test]
    fn subsets_cover_the_power_set() {
        let s = entanglement_subsets();
        assert_eq!(s.len(), 8);
        assert_eq!(subset_workflow(&s[0]), BASELINE);
        let ids: Vec<String> = workflows().into_iter().map(|w| w.id).collect();
        for subset in s {
            assert!(ids.contains(&subset_workflow(&subset)));
        }
    }
}
