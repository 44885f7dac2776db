//! Meta-test: evaluate a frozen generator on one episode.

use std::collections::BTreeMap;

use rand::Rng;

use super::augment::{augment, StatsProvider};
use super::classifier::{fit_classifier, ClassifierModel, InnerFitConfig};
use super::generator::GeneratorModel;
use crate::data::{ClassId, LabeledSample};
use crate::numerics::SgdConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestConfig {
    pub n_aug: usize,
    pub fit: InnerFitConfig,
}

impl MetaTestConfig {
    /// Fixed-step inner training with the momentum optimizer; no tapes are
    /// needed at evaluation time.
    pub fn new(n_aug: usize) -> Self {
        MetaTestConfig {
            n_aug,
            fit: InnerFitConfig {
                steps: 300,
                optimizer: SgdConfig {
                    learning_rate: 0.01,
                    momentum: 0.9,
                    weight_decay: 0.0,
                    milestones: Vec::new(),
                    factor: 0.2,
                },
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetaTestReport {
    pub accuracy: f64,
    pub per_class: BTreeMap<ClassId, f64>,
    pub queries: usize,
}

/// Augments the support with the frozen generator, trains a fresh classifier
/// to the inner budget, and scores top-1 accuracy on the query set. The
/// class statistics fed to the generator come from `provider`, which for the
/// main method estimates each class mean from its support alone and inherits
/// from the nearest superclass.
pub fn meta_test<R: Rng>(
    gen: &GeneratorModel,
    support: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    query: &[LabeledSample],
    provider: &dyn StatsProvider,
    config: &MetaTestConfig,
    rng: &mut R,
) -> Result<MetaTestReport> {
    if query.is_empty() {
        return Err(Error::EvalSetup("query set is empty".into()));
    }
    for q in query {
        if !support.contains_key(&q.label) {
            return Err(Error::EvalSetup(format!(
                "query label {} has no support class",
                q.label
            )));
        }
    }
    let augmented = augment(gen, support, provider, config.n_aug, rng)?;
    let classes: Vec<ClassId> = support.keys().copied().collect();
    let mut clf = ClassifierModel::new_linear(gen.feature_dim(), classes)?;
    fit_classifier(&mut clf, &augmented, &config.fit)?;
    score(&clf, query)
}

/// Top-1 and per-class accuracy of a trained classifier on labeled queries.
pub fn score(clf: &ClassifierModel, query: &[LabeledSample]) -> Result<MetaTestReport> {
    let mut hits: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    for q in query {
        let predicted = clf.predict(&q.features)?;
        let entry = hits.entry(q.label).or_insert((0, 0));
        entry.1 += 1;
        if predicted == q.label {
            entry.0 += 1;
            correct += 1;
        }
    }
    Ok(MetaTestReport {
        accuracy: correct as f64 / query.len() as f64,
        per_class: hits
            .into_iter()
            .map(|(c, (h, t))| (c, h as f64 / t as f64))
            .collect(),
        queries: query.len(),
    })
}
