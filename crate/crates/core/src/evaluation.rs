//! Human quality measures per instance and the satisfactory partition.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crowd::{likert_aggregate, Answer, EvaluationAnswer, Microtask, TaskKind, TaskPayload, WorkerResponse};
use crate::error::{Error, Result};
use crate::events::{EventBody, EventSink};
use crate::fix::{Annotator, RunRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Accuracy,
    Detail,
    Language,
    Commonsense,
    General,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Accuracy,
        Measure::Detail,
        Measure::Language,
        Measure::Commonsense,
        Measure::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Accuracy => "accuracy",
            Measure::Detail => "detail",
            Measure::Language => "language",
            Measure::Commonsense => "commonsense",
            Measure::General => "general",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown measure `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub instance_id: String,
    pub accuracy: f64,
    pub detail: f64,
    pub language: f64,
    /// Fraction of responses judging the output sensible.
    pub commonsense: f64,
    pub general: f64,
    pub satisfactory: bool,
}

impl QualityRecord {
    pub fn get(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Accuracy => self.accuracy,
            Measure::Detail => self.detail,
            Measure::Language => self.language,
            Measure::Commonsense => self.commonsense,
            Measure::General => self.general,
        }
    }
}

fn mean(values: &[u8]) -> f64 {
    values.iter().map(|&v| u32::from(v)).sum::<u32>() as f64 / values.len() as f64
}

/// Averages the Likert measures, takes the share of sensible votes, and
/// flags the instance satisfactory when most general ratings are 4 or 5.
pub fn aggregate_evaluation(instance_id: &str, responses: &[EvaluationAnswer]) -> Result<QualityRecord> {
    if responses.is_empty() {
        return Err(Error::EmptyInput("evaluation of an instance without responses"));
    }
    let mut cols: [Vec<u8>; 5] = Default::default();
    for r in responses {
        let values = [r.accuracy, r.detail, r.language, r.commonsense, r.general];
        for ((col, value), measure) in cols.iter_mut().zip(values).zip(Measure::ALL) {
            let v = value.ok_or_else(|| Error::MissingMeasure(instance_id.to_string(), measure.as_str()))?;
            col.push(v);
        }
    }
    let [accuracy, detail, language, commonsense, general] = cols;
    for v in accuracy.iter().chain(&detail).chain(&language) {
        if !(1..=5).contains(v) {
            return Err(Error::RatingOutOfRange(*v));
        }
    }
    if let Some(v) = commonsense.iter().find(|v| **v > 1) {
        return Err(Error::InvalidValue(format!("commonsense answer {v} is not 0 or 1")));
    }
    let general_summary = likert_aggregate(&general)?;
    Ok(QualityRecord {
        instance_id: instance_id.to_string(),
        accuracy: mean(&accuracy),
        detail: mean(&detail),
        language: mean(&language),
        commonsense: commonsense.iter().filter(|&&v| v == 1).count() as f64 / commonsense.len() as f64,
        general: general_summary.mean,
        satisfactory: general_summary.satisfactory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    Satisfactory,
    Unsatisfactory,
}

impl Partition {
    pub fn of(record: &QualityRecord) -> Self {
        if record.satisfactory {
            Partition::Satisfactory
        } else {
            Partition::Unsatisfactory
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeans {
    pub accuracy: f64,
    pub detail: f64,
    pub language: f64,
    pub commonsense: f64,
    pub general: f64,
}

impl MeasureMeans {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a QualityRecord>) -> Option<Self> {
        let mut sums = [0.0; 5];
        let mut n = 0usize;
        for r in records {
            for (s, m) in sums.iter_mut().zip(Measure::ALL) {
                *s += r.get(m);
            }
            n += 1;
        }
        (n > 0).then(|| {
            let d = n as f64;
            MeasureMeans {
                accuracy: sums[0] / d,
                detail: sums[1] / d,
                language: sums[2] / d,
                commonsense: sums[3] / d,
                general: sums[4] / d,
            }
        })
    }

    pub fn get(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Accuracy => self.accuracy,
            Measure::Detail => self.detail,
            Measure::Language => self.language,
            Measure::Commonsense => self.commonsense,
            Measure::General => self.general,
        }
    }
}

/// `100 * count / n`, computed from integers so round values stay exact.
pub fn percent(count: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (100 * count) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub satisfactory: usize,
    pub pct_satisfactory: f64,
    pub means: MeasureMeans,
    pub labels: BTreeMap<String, Partition>,
}

impl DatasetSummary {
    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |(_, l)| **l == p)
            .map(|(id, _)| id.as_str())
    }
}

pub fn partition_dataset(records: &[QualityRecord]) -> Result<DatasetSummary> {
    let means = MeasureMeans::of(records).ok_or(Error::EmptyInput("partition of an empty record set"))?;
    let mut labels = BTreeMap::new();
    for r in records {
        if labels.insert(r.instance_id.clone(), Partition::of(r)).is_some() {
            return Err(Error::InvalidValue(format!("instance `{}` appears twice", r.instance_id)));
        }
    }
    let satisfactory = records.iter().filter(|r| r.satisfactory).count();
    Ok(DatasetSummary {
        n: records.len(),
        satisfactory,
        pct_satisfactory: percent(satisfactory, records.len()),
        means,
        labels,
    })
}

pub fn evaluation_task(run: &RunRef, image: Option<String>, caption: &str, responses: u32) -> Microtask {
    Microtask {
        id: format!("{}/evaluation", run.id()),
        kind: TaskKind::SystemEvaluation,
        payload: TaskPayload::Evaluation {
            image,
            caption: caption.to_string(),
        },
        instance_id: run.instance_id.clone(),
        component_id: "system".into(),
        fix_id: None,
        batch_id: None,
        responses_required: responses,
    }
}

/// Evaluation answers among `responses` for `task`.
pub fn evaluation_answers(task: &Microtask, responses: &[WorkerResponse]) -> Vec<EvaluationAnswer> {
    responses
        .iter()
        .filter(|r| r.task_id == task.id)
        .filter_map(|r| match &r.answer {
            Answer::Evaluation(e) => Some(e.clone()),
            _ => None,
        })
        .collect()
}

/// Runs evaluation tasks through `annotator` and logs the tasks, responses
/// and the aggregated records.
pub fn evaluate_outputs(
    tasks: &[(RunRef, Microtask)],
    annotator: &mut dyn Annotator,
    sink: &mut dyn EventSink,
) -> Result<Vec<QualityRecord>> {
    for (run, task) in tasks {
        sink.emit(EventBody::Microtask {
            run: Some(run.clone()),
            task: task.clone(),
        })?;
    }
    let just_tasks: Vec<Microtask> = tasks.iter().map(|(_, t)| t.clone()).collect();
    let responses = annotator.collect(&just_tasks, sink)?;
    let mut records = Vec::with_capacity(tasks.len());
    for (run, task) in tasks {
        let record = aggregate_evaluation(&task.instance_id, &evaluation_answers(task, &responses))?;
        sink.emit(EventBody::QualityRecord {
            workflow_id: run.workflow_id.clone(),
            record: record.clone(),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    workflow_id: String,
    instance_id: String,
    accuracy: f64,
    detail: f64,
    language: f64,
    commonsense: f64,
    general: f64,
    satisfactory: bool,
}

/// Writes `(workflow id, record)` rows as CSV.
pub fn write_records_csv<W: Write>(out: W, rows: &[(String, QualityRecord)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (workflow_id, r) in rows {
        w.serialize(RecordRow {
            workflow_id: workflow_id.clone(),
            instance_id: r.instance_id.clone(),
            accuracy: r.accuracy,
            detail: r.detail,
            language: r.language,
            commonsense: r.commonsense,
            general: r.general,
            satisfactory: r.satisfactory,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<(String, QualityRecord)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        let r: RecordRow = row?;
        rows.push((
            r.workflow_id,
            QualityRecord {
                instance_id: r.instance_id,
                accuracy: r.accuracy,
                detail: r.detail,
                language: r.language,
                commonsense: r.commonsense,
                general: r.general,
                satisfactory: r.satisfactory,
            },
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ans(a: u8, d: u8, l: u8, c: u8, g: u8) -> EvaluationAnswer {
        EvaluationAnswer {
            accuracy: Some(a),
            detail: Some(d),
            language: Some(l),
            commonsense: Some(c),
            general: Some(g),
        }
    }

    #[test]
    fn unanimous_record() {
        let r = aggregate_evaluation("i", &vec![ans(5, 5, 5, 1, 5); 5]).unwrap();
        assert_eq!((r.accuracy, r.detail, r.language, r.commonsense, r.general), (5.0, 5.0, 5.0, 1.0, 5.0));
        assert!(r.satisfactory);
    }

    #[test]
    fn satisfactory_follows_general_majority() {
        let with = |gs: [u8; 5]| gs.iter().map(|&g| ans(1, 1, 1, 0, g)).collect::<Vec<_>>();
        assert!(aggregate_evaluation("i", &with([4, 4, 2, 3, 5])).unwrap().satisfactory);
        assert!(!aggregate_evaluation("i", &with([3, 3, 4, 4, 1])).unwrap().satisfactory);
    }

    #[test]
    fn missing_measure_is_an_error() {
        let mut a = ans(5, 5, 5, 1, 5);
        a.detail = None;
        assert!(matches!(
            aggregate_evaluation("x", &[a]),
            Err(Error::MissingMeasure(id, "detail")) if id == "x"
        ));
    }

    #[test]
    fn csv_round_trip() {
        let r = aggregate_evaluation("i1", &[ans(4, 3, 5, 1, 4), ans(3, 3, 4, 0, 2)]).unwrap();
        let rows = vec![("baseline".to_string(), r)];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), rows);
    }
}
