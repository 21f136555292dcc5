pub mod baseline;
pub mod dump;
pub mod error;
pub mod grid;
pub mod models;
pub mod point;
pub mod query;
pub mod storage;
pub mod tuner;

pub use baseline::{brute_knn, brute_range, KdTree};
pub use error::{Error, Result};
pub use grid::{build_grid, GridLayout};
pub use models::{ErrorGuarantee, LearnedModel, ModelConfig, ModelKind};
pub use point::{Bounds, Dataset, Distribution, KnnQuery, Point, RangeQuery};
pub use query::{IndexConfig, KnnOptions, KnnResult, KnnStats, Neighbor, RangeStats, SprigIndex};
