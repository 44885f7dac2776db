//! Conditional sample generation and the meta-learning loops that train it.
//!
//! The generator consumes a seed sample, the statistics inherited from the
//! seed's superclass and a noise vector, and emits a synthetic sample with
//! the seed's label. Support sets are augmented to a fixed per-class size,
//! a classifier is fitted on the augmented set, and the query loss of that
//! classifier is backpropagated through the unrolled fit into the generator.

mod augment;
mod classifier;
mod generator;
mod metatest;
mod outer;

pub use augment::{
    augment, AugmentationPlan, AugmentedSet, NearestSuperclassStats, Provenance, StatsProvider,
    TreeAssignmentStats, TreeLookupStats,
};
pub use classifier::{fit_classifier, fit_classifier_samples, ClassifierModel, InnerFitConfig};
pub use generator::{GeneratorArch, GeneratorModel};
pub use metatest::{meta_test, score, MetaTestConfig, MetaTestReport};
pub use outer::{episode_meta_loss_value, meta_train, outer_step, MetaTrainConfig};
