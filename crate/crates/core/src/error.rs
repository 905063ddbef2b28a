use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid pipeline: {0}")]
    InvalidGraph(String),

    #[error("cycle detected among components: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("unknown executor `{0}`")]
    UnknownExecutor(String),

    #[error("instance `{instance}` is missing system input `{input}`")]
    MissingSystemInput { instance: String, input: String },

    #[error("invalid fix: {0}")]
    InvalidFix(String),

    #[error("invalid workflow: {0}")]
    InvalidWorkflow(String),

    #[error("empty candidate set")]
    EmptyCandidateSet,

    #[error("no judgments")]
    NoJudgments,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("rating {0} outside the 1-5 scale")]
    RatingOutOfRange(u8),

    #[error("response for `{0}` is missing measure `{1}`")]
    MissingMeasure(String, &'static str),

    #[error("instance sets differ; missing: {}", .0.join(", "))]
    InstanceMismatch(Vec<String>),

    #[error("missing singleton run for fix `{0}`")]
    MissingSingleton(String),

    #[error("degenerate IDF: CIDEr needs at least two instances")]
    DegenerateIdf,

    #[error("annotator: {0}")]
    Annotator(String),

    #[error("unknown task kind `{0}`")]
    UnknownTaskKind(String),

    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    #[error("corrupt event log record {seq}: {reason}")]
    CorruptRecord { seq: u64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
