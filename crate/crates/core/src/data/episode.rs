//! Episodic sampling for meta-learning loops.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::dataset::{ClassId, LabeledSample, UnbalancedDataset};
use crate::{Error, Result};

/// One sampled task: a support set capped at `n` samples per class and a
/// disjoint query set over the same classes.
#[derive(Debug, Clone)]
pub struct Episode {
    pub support: BTreeMap<ClassId, Vec<Vec<f64>>>,
    pub query: Vec<LabeledSample>,
}

impl Episode {
    pub fn classes(&self) -> Vec<ClassId> {
        self.support.keys().copied().collect()
    }
}

/// Samples `class_count` many-shot classes uniformly, takes at most `n`
/// support samples per class and `query_per_class` queries from the
/// remainder. Support and query are disjoint by construction; every query
/// label appears in the support.
///
/// Episodes simulate few-shot conditions on classes rich enough to also
/// supply held-out queries, so only many-shot classes are eligible; a class
/// additionally needs more than `n` samples whenever queries are requested.
pub fn sample_episode<R: Rng>(
    dataset: &UnbalancedDataset,
    n: usize,
    class_count: usize,
    query_per_class: usize,
    rng: &mut R,
) -> Result<Episode> {
    if n == 0 {
        return Err(Error::Sampling("support budget n must be >= 1".into()));
    }
    let eligible: Vec<ClassId> = dataset
        .many_shot_ids()
        .into_iter()
        .filter(|&c| {
            let count = dataset.samples_of(c).map(|s| s.len()).unwrap_or(0);
            if query_per_class > 0 {
                count > n
            } else {
                count >= 1
            }
        })
        .collect();
    if eligible.len() < class_count {
        return Err(Error::Sampling(format!(
            "need {class_count} eligible classes but only {} qualify (n={n}, query_per_class={query_per_class})",
            eligible.len()
        )));
    }

    let mut chosen: Vec<ClassId> = eligible
        .choose_multiple(rng, class_count)
        .copied()
        .collect();
    chosen.sort_unstable();

    let mut support = BTreeMap::new();
    let mut query = Vec::new();
    for class in chosen {
        let samples = dataset.samples_of(class)?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(rng);
        let take_support = n.min(samples.len());
        let mut support_idx: Vec<usize> = order[..take_support].to_vec();
        support_idx.sort_unstable();
        let mut query_idx: Vec<usize> =
            order[take_support..(take_support + query_per_class.min(order.len() - take_support))]
                .to_vec();
        query_idx.sort_unstable();

        debug_assert!(support_idx.len() <= n);
        support.insert(
            class,
            support_idx.iter().map(|&i| samples[i].clone()).collect(),
        );
        for i in query_idx {
            query.push(LabeledSample {
                features: samples[i].clone(),
                label: class,
            });
        }
    }
    Ok(Episode { support, query })
}

/// Samples an evaluation episode over novel classes: support comes from the
/// classes' (few) training samples, truncated to `n`, and queries come from
/// an external evaluation pool of fresh samples. Generators never meta-train
/// on these classes, so the episode measures transfer rather than recall.
pub fn sample_eval_episode<R: Rng>(
    dataset: &UnbalancedDataset,
    eval_pool: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    class_pool: &[ClassId],
    n: usize,
    class_count: usize,
    query_per_class: usize,
    rng: &mut R,
) -> Result<Episode> {
    if n == 0 || query_per_class == 0 {
        return Err(Error::Sampling(
            "evaluation episodes need n >= 1 and queries".into(),
        ));
    }
    if class_pool.len() < class_count {
        return Err(Error::Sampling(format!(
            "need {class_count} classes but the evaluation pool has {}",
            class_pool.len()
        )));
    }
    let mut chosen: Vec<ClassId> = class_pool
        .choose_multiple(rng, class_count)
        .copied()
        .collect();
    chosen.sort_unstable();

    let mut support = BTreeMap::new();
    let mut query = Vec::new();
    for class in chosen {
        let samples = dataset.samples_of(class)?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(rng);
        let mut support_idx: Vec<usize> = order[..n.min(samples.len())].to_vec();
        support_idx.sort_unstable();
        support.insert(
            class,
            support_idx
                .iter()
                .map(|&i| samples[i].clone())
                .collect::<Vec<_>>(),
        );

        let pool = eval_pool
            .get(&class)
            .ok_or_else(|| Error::Sampling(format!("class {class} has no evaluation samples")))?;
        if pool.is_empty() {
            return Err(Error::Sampling(format!(
                "class {class} has an empty evaluation pool"
            )));
        }
        let mut q_order: Vec<usize> = (0..pool.len()).collect();
        q_order.shuffle(rng);
        let mut q_idx: Vec<usize> = q_order[..query_per_class.min(pool.len())].to_vec();
        q_idx.sort_unstable();
        for i in q_idx {
            query.push(LabeledSample {
                features: pool[i].clone(),
                label: class,
            });
        }
    }
    Ok(Episode { support, query })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::ClassRole;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset_with_counts(counts: &[usize]) -> UnbalancedDataset {
        let mut roles = BTreeMap::new();
        let mut samples = BTreeMap::new();
        for (i, &count) in counts.iter().enumerate() {
            let class = i as ClassId;
            roles.insert(class, ClassRole::ManyShot);
            samples.insert(
                class,
                (0..count)
                    .map(|k| vec![i as f64, k as f64])
                    .collect::<Vec<_>>(),
            );
        }
        UnbalancedDataset::new(2, roles, samples).unwrap()
    }

    #[test]
    fn single_sample_class_contributes_one_support() {
        let ds = dataset_with_counts(&[1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ep = sample_episode(&ds, 5, 2, 0, &mut rng).unwrap();
        for (_, sup) in &ep.support {
            assert_eq!(sup.len(), 1);
        }
        assert!(ep.query.is_empty());
    }

    #[test]
    fn support_and_query_are_disjoint() {
        let ds = dataset_with_counts(&[10, 10, 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let ep = sample_episode(&ds, 3, 2, 4, &mut rng).unwrap();
            for q in &ep.query {
                let sup = &ep.support[&q.label];
                assert!(!sup.contains(&q.features), "query sample found in support");
            }
            for (_, sup) in &ep.support {
                assert!(sup.len() <= 3);
            }
        }
    }

    #[test]
    fn query_labels_always_in_support() {
        let ds = dataset_with_counts(&[8, 8, 8, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ep = sample_episode(&ds, 2, 3, 3, &mut rng).unwrap();
        for q in &ep.query {
            assert!(ep.support.contains_key(&q.label));
        }
    }

    #[test]
    fn class_sampling_is_uniform() {
        let ds = dataset_with_counts(&vec![4; 20]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = vec![0usize; 20];
        let episodes = 1000;
        for _ in 0..episodes {
            let ep = sample_episode(&ds, 1, 5, 1, &mut rng).unwrap();
            for c in ep.classes() {
                hits[c as usize] += 1;
            }
        }
        for (c, &h) in hits.iter().enumerate() {
            let freq = h as f64 / episodes as f64;
            assert!(
                (freq - 0.25).abs() <= 0.05,
                "class {c} frequency {freq} outside 0.25 +/- 0.05"
            );
        }
    }

    #[test]
    fn insufficient_classes_error_mentions_requirements() {
        let ds = dataset_with_counts(&[5, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match sample_episode(&ds, 1, 3, 1, &mut rng) {
            Err(Error::Sampling(msg)) => assert!(msg.contains("3")),
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn eval_episodes_draw_queries_from_the_pool() {
        let ds = dataset_with_counts(&[5, 5, 5]);
        let pool: BTreeMap<ClassId, Vec<Vec<f64>>> = (0..3u32)
            .map(|c| {
                (
                    c,
                    (0..6)
                        .map(|k| vec![100.0 + c as f64, k as f64])
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let classes: Vec<ClassId> = vec![0, 1, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ep = sample_eval_episode(&ds, &pool, &classes, 2, 2, 3, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 2);
        for (_, sup) in &ep.support {
            assert_eq!(sup.len(), 2);
        }
        assert_eq!(ep.query.len(), 6);
        for q in &ep.query {
            assert!(q.features[0] >= 100.0, "query not from the eval pool");
            assert!(ep.support.contains_key(&q.label));
        }
    }

    #[test]
    fn eval_episode_support_truncates_to_n() {
        let ds = dataset_with_counts(&[5]);
        let pool: BTreeMap<ClassId, Vec<Vec<f64>>> =
            [(0u32, vec![vec![9.0, 9.0]])].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ep = sample_eval_episode(&ds, &pool, &[0], 1, 1, 1, &mut rng).unwrap();
        assert_eq!(ep.support[&0].len(), 1);
    }

    #[test]
    fn classes_without_query_candidates_are_ineligible() {
        // 3 classes but only 2 have more than n samples.
        let ds = dataset_with_counts(&[2, 5, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_episode(&ds, 2, 3, 1, &mut rng).is_err());
        assert!(sample_episode(&ds, 2, 2, 1, &mut rng).is_ok());
    }
}
