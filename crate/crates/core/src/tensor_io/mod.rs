//! On-disk data model: NPY array files, label/logit files and run manifests.

mod features;
mod manifest;
pub mod npy;

pub use features::{
    labels_from_npy, pool, pooled, read_array, read_labels, read_labels_csv, read_logits, write_array,
    FeatureMatrix, Pooling, PredictionSet,
};
pub use manifest::{
    load_manifest, CheckpointEntry, ContentSummary, LayerEntry, RunManifest, SCHEMA_VERSION,
};
pub use npy::Dtype;
