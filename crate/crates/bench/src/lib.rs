//! Workloads, accuracy studies and benchmarks for the `sprig` index.

pub mod accuracy;
pub mod runner;
pub mod workload;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] sprig::Error),

    #[error("checksum mismatch in group {group}: {detail}")]
    ChecksumMismatch { group: String, detail: String },
}

impl BenchError {
    /// 2 for a result disagreement between engines, 3 for a resource
    /// failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::ChecksumMismatch { .. } => 2,
            BenchError::Core(e) if e.is_resource() => 3,
            BenchError::Core(_) => 1,
        }
    }
}
