//! Synthetic unbalanced datasets with recorded latent structure.
//!
//! Superclass centers are isotropic normal draws scaled by `s_sup`, class
//! centers sit at `superclass center + N(0, s_class^2 I)`, and samples add
//! per-superclass diagonal Gaussian noise. The latent structure is returned
//! as [`GroundTruth`] so tests can grade recovery.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};

use super::dataset::{ClassId, ClassRole, UnbalancedDataset};
use crate::{Error, Result};

/// Within-class deviation, per superclass.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviationSpec {
    /// Same isotropic deviation for every superclass.
    Shared(f64),
    /// One isotropic deviation per superclass.
    PerSuperclass(Vec<f64>),
    /// Per-superclass, per-dimension deviations.
    PerSuperclassDims(Vec<Vec<f64>>),
}

impl DeviationSpec {
    fn expand(&self, superclasses: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
        let vecs = match self {
            DeviationSpec::Shared(v) => vec![vec![*v; dim]; superclasses],
            DeviationSpec::PerSuperclass(per) => {
                if per.len() != superclasses {
                    return Err(Error::InvalidInput(format!(
                        "expected {superclasses} deviations, got {}",
                        per.len()
                    )));
                }
                per.iter().map(|&v| vec![v; dim]).collect()
            }
            DeviationSpec::PerSuperclassDims(per) => {
                if per.len() != superclasses || per.iter().any(|v| v.len() != dim) {
                    return Err(Error::InvalidInput(
                        "per-dimension deviations must be superclasses x dim".into(),
                    ));
                }
                per.clone()
            }
        };
        for v in vecs.iter().flatten() {
            if *v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidInput(
                    "deviations must be finite and non-negative".into(),
                ));
            }
        }
        Ok(vecs)
    }
}

/// How many training samples each few-shot class receives.
#[derive(Debug, Clone, PartialEq)]
pub enum FewShotSizing {
    Fixed(usize),
    /// Long-tail sizing: `round(min * U^(-1/alpha))` clamped to `[min, max]`.
    Pareto { alpha: f64, min: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub superclasses: usize,
    pub classes_per_superclass: usize,
    /// Scale of superclass centers.
    pub s_sup: f64,
    /// Scale of class centers around their superclass center.
    pub s_class: f64,
    pub deviation: DeviationSpec,
    /// Number of many-shot classes; the rest are few-shot.
    pub many_shot_classes: usize,
    pub many_shots: usize,
    pub few_shots: FewShotSizing,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn total_classes(&self) -> usize {
        self.superclasses * self.classes_per_superclass
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.superclasses == 0 || self.classes_per_superclass == 0 {
            return Err(Error::InvalidInput(
                "dim, superclasses and classes_per_superclass must be positive".into(),
            ));
        }
        if !(self.s_sup > self.s_class && self.s_class > 0.0) {
            return Err(Error::InvalidInput(
                "scales must satisfy s_sup > s_class > 0".into(),
            ));
        }
        if self.many_shot_classes > self.total_classes() {
            return Err(Error::InvalidInput(
                "many_shot_classes exceeds total class count".into(),
            ));
        }
        if self.many_shots == 0 {
            return Err(Error::InvalidInput("many_shots must be >= 1".into()));
        }
        match &self.few_shots {
            FewShotSizing::Fixed(k) if *k == 0 => {
                return Err(Error::InvalidInput("few shots must be >= 1".into()))
            }
            FewShotSizing::Pareto { alpha, min, max } => {
                if *alpha <= 0.0 || *min == 0 || min > max {
                    return Err(Error::InvalidInput(
                        "pareto sizing needs alpha > 0 and 1 <= min <= max".into(),
                    ));
                }
            }
            _ => {}
        }
        self.deviation.expand(self.superclasses, self.dim)?;
        Ok(())
    }
}

/// Latent structure behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub class_means: BTreeMap<ClassId, Vec<f64>>,
    /// Class id -> true superclass index.
    pub membership: BTreeMap<ClassId, usize>,
    pub superclass_centers: Vec<Vec<f64>>,
    /// Per-superclass, per-dimension sample deviations.
    pub superclass_deviations: Vec<Vec<f64>>,
}

fn normal_vec<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Few-shot class indices spread evenly over the class range.
fn few_shot_positions(total: usize, few: usize) -> Vec<usize> {
    (0..few)
        .map(|j| ((j as f64 + 0.5) * total as f64 / few as f64).floor() as usize)
        .collect()
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(UnbalancedDataset, GroundTruth)> {
    spec.validate()?;
    let total = spec.total_classes();
    let dim = spec.dim;
    let deviations = spec.deviation.expand(spec.superclasses, dim)?;

    let mut center_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    center_rng.set_stream(0);
    let mut class_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    class_rng.set_stream(1);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sample_rng.set_stream(2);
    let mut size_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    size_rng.set_stream(3);

    let superclass_centers: Vec<Vec<f64>> = (0..spec.superclasses)
        .map(|_| normal_vec(&mut center_rng, dim, spec.s_sup))
        .collect();

    let few_count = total - spec.many_shot_classes;
    let few_set: std::collections::BTreeSet<usize> =
        few_shot_positions(total, few_count).into_iter().collect();

    let mut roles = BTreeMap::new();
    let mut samples = BTreeMap::new();
    let mut class_means = BTreeMap::new();
    let mut membership = BTreeMap::new();

    for class_idx in 0..total {
        let class = class_idx as ClassId;
        let sup = class_idx / spec.classes_per_superclass;
        let offset = normal_vec(&mut class_rng, dim, spec.s_class);
        let mean: Vec<f64> = superclass_centers[sup]
            .iter()
            .zip(&offset)
            .map(|(c, o)| c + o)
            .collect();

        let is_few = few_set.contains(&class_idx);
        let shots = if is_few {
            match &spec.few_shots {
                FewShotSizing::Fixed(k) => *k,
                FewShotSizing::Pareto { alpha, min, max } => {
                    let pareto = Pareto::new(*min as f64, *alpha)
                        .map_err(|e| Error::InvalidInput(e.to_string()))?;
                    (pareto.sample(&mut size_rng).round() as usize).clamp(*min, *max)
                }
            }
        } else {
            spec.many_shots
        };

        let dev = &deviations[sup];
        let group: Vec<Vec<f64>> = (0..shots)
            .map(|_| {
                mean.iter()
                    .zip(dev)
                    .map(|(m, d)| {
                        m + d * <StandardNormal as Distribution<f64>>::sample(
                            &StandardNormal,
                            &mut sample_rng,
                        )
                    })
                    .collect()
            })
            .collect();

        roles.insert(
            class,
            if is_few {
                ClassRole::FewShot
            } else {
                ClassRole::ManyShot
            },
        );
        samples.insert(class, group);
        class_means.insert(class, mean);
        membership.insert(class, sup);
    }

    let dataset = UnbalancedDataset::new(dim, roles, samples)?;
    let truth = GroundTruth {
        class_means,
        membership,
        superclass_centers,
        superclass_deviations: deviations,
    };
    Ok((dataset, truth))
}

/// Like [`make_synthetic`], but also draws `eval_shots` fresh samples per
/// class from the same latent structure, disjoint from the training set by
/// construction (a separate noise stream). The evaluation pool supplies
/// query sets for classes whose training samples are too few to hold any
/// out.
pub fn make_synthetic_with_eval(
    spec: &SyntheticSpec,
    eval_shots: usize,
) -> Result<(
    UnbalancedDataset,
    BTreeMap<ClassId, Vec<Vec<f64>>>,
    GroundTruth,
)> {
    let (dataset, truth) = make_synthetic(spec)?;
    let deviations = spec.deviation.expand(spec.superclasses, spec.dim)?;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    eval_rng.set_stream(4);
    let mut pool = BTreeMap::new();
    for (class, mean) in &truth.class_means {
        let dev = &deviations[truth.membership[class]];
        let group: Vec<Vec<f64>> = (0..eval_shots)
            .map(|_| {
                mean.iter()
                    .zip(dev)
                    .map(|(m, d)| {
                        m + d * <StandardNormal as Distribution<f64>>::sample(
                            &StandardNormal,
                            &mut eval_rng,
                        )
                    })
                    .collect()
            })
            .collect();
        pool.insert(*class, group);
    }
    Ok((dataset, pool, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            dim: 16,
            superclasses: 4,
            classes_per_superclass: 3,
            s_sup: 10.0,
            s_class: 1.0,
            deviation: DeviationSpec::Shared(0.2),
            many_shot_classes: 9,
            many_shots: 20,
            few_shots: FewShotSizing::Fixed(2),
            seed: 5,
        }
    }

    #[test]
    fn zero_deviation_puts_every_sample_at_its_mean() {
        let mut spec = base_spec();
        spec.deviation = DeviationSpec::Shared(0.0);
        let (ds, truth) = make_synthetic(&spec).unwrap();
        for (class, features) in ds.iter_samples() {
            assert_eq!(features, &truth.class_means[&class]);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let spec = base_spec();
        let (a, ta) = make_synthetic(&spec).unwrap();
        let (b, tb) = make_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn partition_sizes_match_spec() {
        let spec = base_spec();
        let (ds, _) = make_synthetic(&spec).unwrap();
        assert_eq!(ds.many_shot_ids().len(), 9);
        assert_eq!(ds.few_shot_ids().len(), 3);
    }

    /// Law-of-large-numbers check via plain averaging of many-shot classes.
    #[test]
    fn many_shot_empirical_means_approach_truth() {
        let spec = SyntheticSpec {
            dim: 16,
            superclasses: 4,
            classes_per_superclass: 3,
            s_sup: 10.0,
            s_class: 1.0,
            deviation: DeviationSpec::Shared(0.2),
            many_shot_classes: 12,
            many_shots: 500,
            few_shots: FewShotSizing::Fixed(1),
            seed: 17,
        };
        let (ds, truth) = make_synthetic(&spec).unwrap();
        for class in ds.many_shot_ids() {
            let group = ds.samples_of(class).unwrap();
            let mut mean = vec![0.0; spec.dim];
            for s in group {
                for (m, v) in mean.iter_mut().zip(s) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= group.len() as f64;
            }
            let dist: f64 = mean
                .iter()
                .zip(&truth.class_means[&class])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(dist < 0.1, "class {class} empirical mean off by {dist}");
        }
    }

    /// With vanishing noise and s_sup >> s_class, assigning each class mean
    /// to the nearest true superclass center reproduces the membership.
    #[test]
    fn membership_recoverable_from_class_means() {
        let mut spec = base_spec();
        spec.deviation = DeviationSpec::Shared(1e-6);
        let (_, truth) = make_synthetic(&spec).unwrap();
        for (class, mean) in &truth.class_means {
            let nearest = truth
                .superclass_centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a.iter().zip(mean).map(|(x, y)| (x - y) * (x - y)).sum();
                    let db: f64 = b.iter().zip(mean).map(|(x, y)| (x - y) * (x - y)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(nearest, truth.membership[class]);
        }
    }

    #[test]
    fn pareto_sizing_stays_in_bounds() {
        let mut spec = base_spec();
        spec.few_shots = FewShotSizing::Pareto {
            alpha: 6.0,
            min: 2,
            max: 9,
        };
        let (ds, _) = make_synthetic(&spec).unwrap();
        for class in ds.few_shot_ids() {
            let n = ds.samples_of(class).unwrap().len();
            assert!((2..=9).contains(&n));
        }
    }

    #[test]
    fn invalid_scales_are_rejected() {
        let mut spec = base_spec();
        spec.s_class = 20.0;
        assert!(make_synthetic(&spec).is_err());
    }
}
