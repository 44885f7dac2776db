//! Dataset representation, embedding-file ingestion, episodic sampling and a
//! synthetic unbalanced-dataset generator with known ground truth.

mod dataset;
mod episode;
mod load;
mod synthetic;

pub use dataset::{ClassId, ClassRole, LabeledSample, UnbalancedDataset};
pub use episode::{sample_episode, sample_eval_episode, Episode};
pub use load::{load_embeddings, save_embeddings};
pub use synthetic::{
    make_synthetic, make_synthetic_with_eval, DeviationSpec, FewShotSizing, GroundTruth,
    SyntheticSpec,
};
