//! The weight optimizer: a one-hidden-layer ReLU network trained on pooled
//! (date, ticker) rows, then linearized into one weight per alpha.

mod dataset;
mod linear;
mod model;
mod train;

pub use dataset::{build_dataset, Dataset, DatasetError, FeatureMatrix, Standardizer};
pub use linear::{
    combine, extract_weights, independent_columns, least_squares, CombinedAlphaWeights, WeightError, SINGULAR_RATIO,
};
pub use model::{MlpModel, ModelError, DEFAULT_HIDDEN};
pub use train::{gradient_check, train, TrainConfig, TrainError, TrainOutcome, GRADIENT_CHECK_STEP};
