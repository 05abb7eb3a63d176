//! File formats: image features, datasets, word vectors, checkpoints.

mod checkpoint;
mod dataset;
mod features;
mod wordvec;

pub use checkpoint::{
    checkpoint_of, load_checkpoint, save_checkpoint, state_from_checkpoint, Checkpoint, Counters, CHECKPOINT_VERSION,
};
pub use dataset::{load_dataset, parse_dataset, read_dataset, write_dataset, DatasetRecord};
pub use features::{read_feature_file, write_feature_file, FeatureTable, FEATURE_MAGIC, FEATURE_VERSION};
pub use wordvec::{load_word_vectors, WordVectorTable};
