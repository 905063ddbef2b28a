//! A data directory: generated demo dataset, pipeline file, event log and
//! reports.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::demo::DemoData;
use crate::error::Result;
use crate::fix::GroundTruth;
use crate::pipeline::{Instance, Pipeline, PipelineDefinition};

pub const LOG_FILE: &str = "events.jsonl";
pub const REPORTS_DIR: &str = "reports";
pub const DATA_DIR_ENV: &str = "FIXFLOW_DATA_DIR";

pub struct Project {
    pub dir: PathBuf,
    pub data: DemoData,
    pub definition: PipelineDefinition,
    pub pipeline: Pipeline,
    pub instances: Vec<Instance>,
    pub truth: Arc<dyn GroundTruth>,
    pub seed: u64,
}

impl std::fmt::Debug for Project {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Project")
            .field("dir", &self.dir)
            .field("instances", &self.instances.len())
            .finish_non_exhaustive()
    }
}

impl Project {
    pub fn load(dir: &Path) -> Result<Self> {
        let data = DemoData::load(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            definition: data.definition.clone(),
            pipeline: data.pipeline()?,
            instances: data.instances(),
            truth: Arc::new(data.truth()),
            seed: data.config.seed,
            data,
        })
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.dir.join(REPORTS_DIR)
    }
}
