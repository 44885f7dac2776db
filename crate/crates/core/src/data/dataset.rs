//! Core dataset types.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Class identifier as it appears in data files.
pub type ClassId = u32;

/// A feature vector paired with its class label; the atom of every dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: ClassId,
}

/// Whether a class contributes abundant samples or only a handful.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassRole {
    ManyShot,
    FewShot,
}

/// Training data with an explicit many/few class partition. Immutable after
/// construction and safe for concurrent reads.
#[derive(Debug, Clone, PartialEq)]
pub struct UnbalancedDataset {
    dim: usize,
    roles: BTreeMap<ClassId, ClassRole>,
    samples: BTreeMap<ClassId, Vec<Vec<f64>>>,
}

impl UnbalancedDataset {
    pub fn new(
        dim: usize,
        roles: BTreeMap<ClassId, ClassRole>,
        samples: BTreeMap<ClassId, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if roles.is_empty() {
            return Err(Error::Data("dataset has no classes".into()));
        }
        if roles.len() != samples.len() || !roles.keys().eq(samples.keys()) {
            return Err(Error::Data(
                "class registry and sample groups disagree".into(),
            ));
        }
        for (class, group) in &samples {
            if group.is_empty() {
                return Err(Error::Data(format!("class {class} has no samples")));
            }
            for s in group {
                if s.len() != dim {
                    return Err(Error::Data(format!(
                        "class {class} has a sample of dimension {} (expected {dim})",
                        s.len()
                    )));
                }
                if !s.iter().all(|v| v.is_finite()) {
                    return Err(Error::Data(format!(
                        "class {class} has a non-finite feature value"
                    )));
                }
            }
        }
        Ok(UnbalancedDataset {
            dim,
            roles,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.roles.keys().copied()
    }

    pub fn class_count(&self) -> usize {
        self.roles.len()
    }

    pub fn role(&self, class: ClassId) -> Option<ClassRole> {
        self.roles.get(&class).copied()
    }

    pub fn many_shot_ids(&self) -> Vec<ClassId> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == ClassRole::ManyShot)
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn few_shot_ids(&self) -> Vec<ClassId> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == ClassRole::FewShot)
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn samples_of(&self, class: ClassId) -> Result<&[Vec<f64>]> {
        self.samples
            .get(&class)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Lookup(format!("class {class} not in dataset")))
    }

    pub fn sample_count(&self) -> usize {
        self.samples.values().map(Vec::len).sum()
    }

    /// Iterates `(class, features)` over all samples in class order.
    pub fn iter_samples(&self) -> impl Iterator<Item = (ClassId, &Vec<f64>)> + '_ {
        self.samples
            .iter()
            .flat_map(|(c, group)| group.iter().map(move |s| (*c, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> UnbalancedDataset {
        let mut roles = BTreeMap::new();
        roles.insert(0, ClassRole::ManyShot);
        roles.insert(1, ClassRole::FewShot);
        let mut samples = BTreeMap::new();
        samples.insert(0, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        samples.insert(1, vec![vec![5.0, 6.0]]);
        UnbalancedDataset::new(2, roles, samples).unwrap()
    }

    #[test]
    fn partition_covers_all_classes_disjointly() {
        let ds = toy();
        let many = ds.many_shot_ids();
        let few = ds.few_shot_ids();
        assert_eq!(many, vec![0]);
        assert_eq!(few, vec![1]);
        let all: Vec<ClassId> = ds.class_ids().collect();
        let mut union = many.clone();
        union.extend(&few);
        union.sort_unstable();
        assert_eq!(union, all);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut roles = BTreeMap::new();
        roles.insert(0, ClassRole::ManyShot);
        let mut samples = BTreeMap::new();
        samples.insert(0, vec![vec![1.0, 2.0, 3.0]]);
        assert!(UnbalancedDataset::new(2, roles, samples).is_err());
    }

    #[test]
    fn empty_class_is_rejected() {
        let mut roles = BTreeMap::new();
        roles.insert(0, ClassRole::ManyShot);
        let mut samples = BTreeMap::new();
        samples.insert(0, vec![]);
        assert!(UnbalancedDataset::new(2, roles, samples).is_err());
    }
}
