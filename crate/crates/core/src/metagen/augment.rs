//! Balanced augmentation of episode support sets.

use std::collections::BTreeMap;

use rand::Rng;

use super::generator::{sample_noise, GeneratorModel};
use crate::data::ClassId;
use crate::hierarchy::{InheritedStats, SuperclassTree};
use crate::regressor::{predict_class_mean, RegressorModel};
use crate::{Error, Result};

/// Where a sample in an augmented set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Seed,
    Generated,
}

/// Supplies the `(mu, sigma)` a class's generated samples are conditioned
/// on. Implementations cover tree-assignment lookup, nearest-superclass
/// lookup from an estimated mean, statistics masking, and neighbor transfer.
pub trait StatsProvider {
    fn stats_for(&self, class: ClassId, support: &[Vec<f64>]) -> Result<InheritedStats>;
}

/// Looks a class up by its tree assignment; the meta-training path, where
/// every episode class is a dataset class.
pub struct TreeAssignmentStats<'a> {
    pub tree: &'a SuperclassTree,
}

impl StatsProvider for TreeAssignmentStats<'_> {
    fn stats_for(&self, class: ClassId, _support: &[Vec<f64>]) -> Result<InheritedStats> {
        self.tree.inherit(class)
    }
}

/// Tree-assignment inheritance with a novel-class fallback: classes in the
/// tree inherit their assigned superclass's statistics; unknown classes are
/// attached to the nearest superclass center by their estimated support
/// mean (regressor when available). The evaluation path.
pub struct TreeLookupStats<'a> {
    pub tree: &'a SuperclassTree,
    pub regressor: Option<&'a RegressorModel>,
}

impl StatsProvider for TreeLookupStats<'_> {
    fn stats_for(&self, class: ClassId, support: &[Vec<f64>]) -> Result<InheritedStats> {
        if self.tree.assignment.contains_key(&class) {
            return self.tree.inherit(class);
        }
        let nearest = NearestSuperclassStats {
            tree: self.tree,
            regressor: self.regressor,
        };
        nearest.stats_for(class, support)
    }
}

/// Estimates the class mean from the support (regressor when available,
/// plain average otherwise) and inherits from the nearest superclass
/// center; the attach path for classes the tree has never seen.
pub struct NearestSuperclassStats<'a> {
    pub tree: &'a SuperclassTree,
    pub regressor: Option<&'a RegressorModel>,
}

impl NearestSuperclassStats<'_> {
    pub fn estimate_mean(&self, support: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self.regressor {
            Some(model) => predict_class_mean(model, support),
            None => {
                if support.is_empty() {
                    return Err(Error::InvalidInput("empty support set".into()));
                }
                let dim = support[0].len();
                Ok(crate::regressor::mean_of_features(support.iter(), dim))
            }
        }
    }
}

impl StatsProvider for NearestSuperclassStats<'_> {
    fn stats_for(&self, _class: ClassId, support: &[Vec<f64>]) -> Result<InheritedStats> {
        let mean = self.estimate_mean(support)?;
        Ok(self.tree.inherit_nearest(&mean))
    }
}

/// One planned synthetic sample: which seed it grows from and its noise.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub seed_index: usize,
    pub noise: Vec<f64>,
}

/// Per-class augmentation work order.
#[derive(Debug, Clone)]
pub struct ClassPlan {
    pub stats: InheritedStats,
    pub generated: Vec<GenSpec>,
}

/// Deterministic record of every random choice one augmentation makes, so
/// the same plan can be replayed by value-level generation and by the
/// differentiable outer step.
#[derive(Debug, Clone)]
pub struct AugmentationPlan {
    pub n_aug: usize,
    pub per_class: BTreeMap<ClassId, ClassPlan>,
}

impl AugmentationPlan {
    pub fn sample<R: Rng>(
        support: &BTreeMap<ClassId, Vec<Vec<f64>>>,
        provider: &dyn StatsProvider,
        n_aug: usize,
        noise_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut per_class = BTreeMap::new();
        for (&class, seeds) in support {
            if seeds.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "class {class} has no seed samples"
                )));
            }
            if seeds.len() > n_aug {
                return Err(Error::InvalidInput(format!(
                    "class {class} has {} seeds, more than n_aug = {n_aug}; cannot shrink",
                    seeds.len()
                )));
            }
            let stats = provider.stats_for(class, seeds)?;
            let generated = (0..n_aug - seeds.len())
                .map(|_| GenSpec {
                    seed_index: rng.gen_range(0..seeds.len()),
                    noise: sample_noise(noise_dim, rng),
                })
                .collect();
            per_class.insert(class, ClassPlan { stats, generated });
        }
        Ok(AugmentationPlan { n_aug, per_class })
    }
}

/// Balanced augmented training set: exactly `n_aug` samples per class, all
/// seeds retained, every generated sample labeled as its seed.
#[derive(Debug, Clone)]
pub struct AugmentedSet {
    pub n_aug: usize,
    pub per_class: BTreeMap<ClassId, Vec<(Vec<f64>, Provenance)>>,
}

impl AugmentedSet {
    pub fn classes(&self) -> Vec<ClassId> {
        self.per_class.keys().copied().collect()
    }

    pub fn total_samples(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    /// Flat `(features, class, provenance)` view in class order.
    pub fn iter_samples(&self) -> impl Iterator<Item = (&Vec<f64>, ClassId, Provenance)> + '_ {
        self.per_class
            .iter()
            .flat_map(|(c, group)| group.iter().map(move |(f, p)| (f, *c, *p)))
    }

    /// Embedding-CSV rows with the trailing provenance column.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (features, class, prov) in self.iter_samples() {
            write!(out, "{class}").unwrap();
            for v in features {
                write!(out, ",{v}").unwrap();
            }
            out.push_str(match prov {
                Provenance::Seed => ",seed\n",
                Provenance::Generated => ",gen\n",
            });
        }
        out
    }
}

/// Augments every support class to exactly `n_aug` samples by generating
/// `n_aug - |support_i|` synthetic samples from uniformly drawn seeds, the
/// class's inherited statistics and fresh noise.
pub fn augment<R: Rng>(
    generator: &GeneratorModel,
    support: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    provider: &dyn StatsProvider,
    n_aug: usize,
    rng: &mut R,
) -> Result<AugmentedSet> {
    let plan = AugmentationPlan::sample(support, provider, n_aug, generator.noise_dim(), rng)?;
    realize_plan(generator, support, &plan)
}

/// Value-level generation for a fixed plan.
pub fn realize_plan(
    generator: &GeneratorModel,
    support: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    plan: &AugmentationPlan,
) -> Result<AugmentedSet> {
    let mut per_class = BTreeMap::new();
    for (&class, seeds) in support {
        let cp = plan
            .per_class
            .get(&class)
            .ok_or_else(|| Error::Lookup(format!("class {class} missing from plan")))?;
        let mut group: Vec<(Vec<f64>, Provenance)> = seeds
            .iter()
            .map(|s| (s.clone(), Provenance::Seed))
            .collect();
        for spec in &cp.generated {
            let sample = generator.generate(&seeds[spec.seed_index], &cp.stats, &spec.noise)?;
            group.push((sample, Provenance::Generated));
        }
        assert_eq!(group.len(), plan.n_aug, "augmented class size must be n_aug");
        per_class.insert(class, group);
    }
    Ok(AugmentedSet {
        n_aug: plan.n_aug,
        per_class,
    })
}
