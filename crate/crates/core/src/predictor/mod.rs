//! Path-metric predictor: the reduced input vector, a single-hidden-layer
//! Gaussian RBF network, its training and its file formats.

mod dataset;
mod features;
mod model_io;
mod network;
mod train;

pub use dataset::{
    dataset_instance, export_csv, generate_dataset, label_instance, read_dataset, write_dataset, DatasetHeader, DatasetSpec,
    TrainingExample, DATASET_MAGIC,
};
pub use features::{extract_features, extract_features_counted, FeatureVector};
pub use model_io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use network::{gaussian_activation, Normalization, RbfnModel};
pub use train::{train, Objective, TrainerConfig, TrainingMethod, TrainingReport};

/// Input length `2N_t + 2`.
pub fn input_dim(n_t: usize) -> usize {
    2 * n_t + 2
}

/// Hidden width `2N_t + 2|𝕊|`.
pub fn hidden_dim(n_t: usize, constellation_size: usize) -> usize {
    2 * n_t + 2 * constellation_size
}
