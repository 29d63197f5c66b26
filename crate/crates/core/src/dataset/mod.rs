//! Series ingestion, training slices and covariate construction.

mod frequency;
mod series;
mod task;

pub use frequency::Frequency;
pub use series::{
    load_dataset, meta_path_for, split_train_test, write_dataset, Dataset, DatasetMeta, TimeSeries,
};
pub use task::{
    admissible_splits, compute_scale, sample_slice, CovariateVector, FeatureSpec, ForecastTask,
    LagSource,
};
