use lakegraph_core::CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("object not found: {0}")]
    NotFound(String),
    #[error("range {offset}+{len} out of bounds for {path} ({size} bytes)")]
    OutOfRange {
        path: String,
        offset: u64,
        len: u64,
        size: u64,
    },
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("truncated file {0}")]
    Truncated(String),
    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("duplicate key {key} in vertex type {vertex_type}: file {first_file} row {first_row} and file {second_file} row {second_row}")]
    DuplicateKey {
        vertex_type: String,
        key: String,
        first_file: u32,
        first_row: u32,
        second_file: u32,
        second_row: u32,
    },
    #[error("file {file_id} ({path}): {source}")]
    File {
        file_id: u32,
        path: String,
        #[source]
        source: Box<Error>,
    },
    #[error("cache: {0}")]
    Cache(String),
    #[error("cache admission failed: every resident unit is pinned")]
    AdmissionFailed,
    #[error("scan contract violated: {0}")]
    BackwardSeek(String),
    #[error("plan validation failed: {}", .0.join("; "))]
    Plan(Vec<String>),
    #[error("query: {0}")]
    Query(String),
    #[error("worker {worker}: {detail}")]
    Worker { worker: u32, detail: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn malformed(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub fn in_file(self, file_id: u32, path: &str) -> Self {
        Error::File {
            file_id,
            path: path.to_string(),
            source: Box::new(self),
        }
    }
}
