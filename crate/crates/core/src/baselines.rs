//! Reference methods the pipeline's ordering claims are tested against:
//! nearest-class-mean classification, the statistics-free hallucination
//! generator, and naive K-nearest-neighbor statistics transfer.

use std::collections::BTreeMap;

use crate::data::{ClassId, UnbalancedDataset};
use crate::hierarchy::InheritedStats;
use crate::metagen::{GeneratorModel, StatsProvider};
use crate::regressor::{mean_of_features, ClassMeanTable};
use crate::{Error, Result};

/// Nearest-class-mean classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeClassifier {
    pub prototypes: BTreeMap<ClassId, Vec<f64>>,
}

impl PrototypeClassifier {
    pub fn new(prototypes: BTreeMap<ClassId, Vec<f64>>) -> Result<Self> {
        if prototypes.is_empty() {
            return Err(Error::InvalidInput("no prototypes supplied".into()));
        }
        let dim = prototypes.values().next().unwrap().len();
        if prototypes.values().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput("prototype dimensions differ".into()));
        }
        Ok(PrototypeClassifier { prototypes })
    }

    /// Prototypes from per-class support means; the no-transfer control.
    pub fn from_support(support: &BTreeMap<ClassId, Vec<Vec<f64>>>) -> Result<Self> {
        let mut prototypes = BTreeMap::new();
        for (&class, samples) in support {
            if samples.is_empty() {
                return Err(Error::InvalidInput(format!("class {class} has no samples")));
            }
            prototypes.insert(class, mean_of_features(samples.iter(), samples[0].len()));
        }
        PrototypeClassifier::new(prototypes)
    }
}

/// Nearest prototype by Euclidean distance; ties break to the lowest
/// class id (map order is ascending).
pub fn proto_predict(clf: &PrototypeClassifier, x: &[f64]) -> Result<ClassId> {
    let dim = clf.prototypes.values().next().unwrap().len();
    if x.len() != dim {
        return Err(Error::InvalidInput(format!(
            "query has dimension {}, prototypes have {dim}",
            x.len()
        )));
    }
    let mut best: Option<(ClassId, f64)> = None;
    for (&class, proto) in &clf.prototypes {
        let d: f64 = proto
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((class, d));
        }
    }
    Ok(best.unwrap().0)
}

/// Statistics provider that zeroes the `mu` and `sigma` generator inputs;
/// the hallucination baseline is the same training loop run through this
/// mask, so the only measured difference is the inherited statistics.
pub struct MaskedStats {
    pub dim: usize,
}

impl StatsProvider for MaskedStats {
    fn stats_for(&self, _class: ClassId, _support: &[Vec<f64>]) -> Result<InheritedStats> {
        Ok(InheritedStats::zeros(self.dim))
    }
}

/// Generates from a seed and noise with the statistics slots hard-zeroed.
pub fn hallucinate_baseline(gen: &GeneratorModel, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    gen.generate(x, &InheritedStats::zeros(gen.feature_dim()), z)
}

/// Naive statistics transfer: pool the samples of the K many-shot classes
/// whose means are nearest to a query point.
#[derive(Debug, Clone)]
pub struct NeighborTransfer {
    pub k: usize,
    /// Means of the many-shot classes only.
    pub many_means: BTreeMap<ClassId, Vec<f64>>,
    /// Per-class samples to pool statistics from.
    pub samples: BTreeMap<ClassId, Vec<Vec<f64>>>,
}

impl NeighborTransfer {
    pub const DEFAULT_K: usize = 5;

    pub fn new(table: &ClassMeanTable, dataset: &UnbalancedDataset, k: usize) -> Result<Self> {
        let many: Vec<ClassId> = dataset.many_shot_ids();
        if k == 0 || k > many.len() {
            return Err(Error::InvalidInput(format!(
                "k = {k} must be in 1..={} (many-shot class count)",
                many.len()
            )));
        }
        let mut many_means = BTreeMap::new();
        let mut samples = BTreeMap::new();
        for class in many {
            many_means.insert(class, table.mean(class)?.to_vec());
            samples.insert(class, dataset.samples_of(class)?.to_vec());
        }
        Ok(NeighborTransfer {
            k,
            many_means,
            samples,
        })
    }

    /// The K many-shot classes nearest to `point`, closest first.
    pub fn nearest_classes(&self, point: &[f64]) -> Vec<ClassId> {
        let mut scored: Vec<(f64, ClassId)> = self
            .many_means
            .iter()
            .map(|(&c, m)| {
                (
                    m.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum(),
                    c,
                )
            })
            .collect();
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        scored.into_iter().take(self.k).map(|(_, c)| c).collect()
    }
}

/// Pools mean and population deviation over all samples of the K many-shot
/// classes nearest to `sample`; the same statistics form the superclass
/// tree uses.
pub fn knn_transfer_stats(sample: &[f64], transfer: &NeighborTransfer) -> Result<InheritedStats> {
    let neighbors = transfer.nearest_classes(sample);
    let dim = sample.len();
    let mut pooled: Vec<&Vec<f64>> = Vec::new();
    for class in &neighbors {
        pooled.extend(transfer.samples[class].iter());
    }
    let count = pooled.len();
    if count == 0 {
        return Err(Error::InvalidInput("no samples to pool".into()));
    }
    let mean = mean_of_features(pooled.iter().copied(), dim);
    let mut var = vec![0.0; dim];
    for s in &pooled {
        for (v, (x, m)) in var.iter_mut().zip(s.iter().zip(&mean)) {
            let d = x - m;
            *v += d * d;
        }
    }
    let deviation = var.iter().map(|v| (v / count as f64).sqrt()).collect();
    Ok(InheritedStats { mean, deviation })
}

/// Provider form of [`knn_transfer_stats`]: neighbors are found for the
/// plain support mean, mirroring the "directly use the samples" ablation.
pub struct KnnTransferStats<'a> {
    pub transfer: &'a NeighborTransfer,
}

impl StatsProvider for KnnTransferStats<'_> {
    fn stats_for(&self, _class: ClassId, support: &[Vec<f64>]) -> Result<InheritedStats> {
        if support.is_empty() {
            return Err(Error::InvalidInput("empty support set".into()));
        }
        let mean = mean_of_features(support.iter(), support[0].len());
        knn_transfer_stats(&mean, self.transfer)
    }
}
