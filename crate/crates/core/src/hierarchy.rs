//! Superclass hierarchy: cluster class means, enforce balanced membership,
//! and pool per-superclass mean and per-dimension deviation for inheritance
//! by few-shot children.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassId, UnbalancedDataset};
use crate::regressor::ClassMeanTable;
use crate::{Error, Result};

/// Statistics a class inherits from its superclass: pooled mean and pooled
/// per-dimension standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct InheritedStats {
    pub mean: Vec<f64>,
    pub deviation: Vec<f64>,
}

impl InheritedStats {
    pub fn zeros(dim: usize) -> Self {
        InheritedStats {
            mean: vec![0.0; dim],
            deviation: vec![0.0; dim],
        }
    }
}

/// One superclass: pooled statistics plus its member classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Superclass {
    pub center: Vec<f64>,
    pub deviation: Vec<f64>,
    pub members: Vec<ClassId>,
}

/// Balanced two-level hierarchy over dataset classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperclassTree {
    pub superclasses: Vec<Superclass>,
    pub assignment: BTreeMap<ClassId, usize>,
    /// Superclasses whose members contributed fewer than two samples, so the
    /// deviation was zeroed.
    pub degenerate_warnings: Vec<String>,
}

impl SuperclassTree {
    pub fn n_sup(&self) -> usize {
        self.superclasses.len()
    }

    /// Stats of the superclass the given class belongs to.
    pub fn inherit(&self, class: ClassId) -> Result<InheritedStats> {
        let sup = *self
            .assignment
            .get(&class)
            .ok_or_else(|| Error::Lookup(format!("class {class} not assigned in the tree")))?;
        let s = &self.superclasses[sup];
        Ok(InheritedStats {
            mean: s.center.clone(),
            deviation: s.deviation.clone(),
        })
    }

    /// Index of the superclass whose pooled center is nearest to `point`.
    pub fn nearest_superclass(&self, point: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, s) in self.superclasses.iter().enumerate() {
            let d = dist_sq(&s.center, point);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    /// Stats of the superclass nearest to `point`.
    pub fn inherit_nearest(&self, point: &[f64]) -> InheritedStats {
        let s = &self.superclasses[self.nearest_superclass(point)];
        InheritedStats {
            mean: s.center.clone(),
            deviation: s.deviation.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TreeDoc {
            n_sup: self.n_sup(),
            assignments: self
                .assignment
                .iter()
                .map(|(c, s)| (c.to_string(), *s))
                .collect(),
            stats: self
                .superclasses
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    (
                        j.to_string(),
                        SupStats {
                            mu: s.center.clone(),
                            sigma: s.deviation.clone(),
                        },
                    )
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    n_sup: usize,
    assignments: BTreeMap<String, usize>,
    stats: BTreeMap<String, SupStats>,
}

#[derive(Serialize, Deserialize)]
struct SupStats {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

const LLOYD_RESTARTS: usize = 8;
const LLOYD_MAX_ITERS: usize = 100;

/// Lloyd's iterations over the class means with k-means++ seeding (first
/// seed uniform, later seeds distance-squared weighted, all from the
/// supplied RNG). The best of a fixed number of restarts is returned;
/// within-cluster cost never increases across Lloyd iterations.
pub fn cluster_superclasses<R: Rng>(
    means: &ClassMeanTable,
    n_sup: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let ids = means.class_ids();
    let n = ids.len();
    if n_sup == 0 {
        return Err(Error::InvalidInput("n_sup must be >= 1".into()));
    }
    if n_sup > n {
        return Err(Error::InvalidInput(format!(
            "n_sup {n_sup} exceeds class count {n}"
        )));
    }
    let points: Vec<&[f64]> = ids.iter().map(|c| means.mean(*c).unwrap()).collect();

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _restart in 0..LLOYD_RESTARTS {
        let centers = seed_centers(&points, n_sup, rng);
        let (cost, centers) = lloyd(&points, centers, n_sup);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, centers));
        }
    }
    Ok(best.unwrap().1)
}

fn seed_centers<R: Rng>(points: &[&[f64]], n_sup: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_sup);
    centers.push(points[rng.gen_range(0..n)].to_vec());
    while centers.len() < n_sup {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| dist_sq(c, p))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            // All remaining points coincide with existing centers.
            d2.iter().position(|&w| w == 0.0).unwrap_or(0)
        };
        centers.push(points[idx].to_vec());
    }
    centers
}

fn lloyd(points: &[&[f64]], mut centers: Vec<Vec<f64>>, n_sup: usize) -> (f64, Vec<Vec<f64>>) {
    let dim = points[0].len();
    let n = points.len();
    let mut assign = vec![0usize; n];
    let mut prev_cost = f64::INFINITY;
    for _iter in 0..LLOYD_MAX_ITERS {
        let mut cost = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = dist_sq(c, p);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assign[i] = best;
            cost += best_d;
        }
        debug_assert!(
            cost <= prev_cost + 1e-9,
            "Lloyd iteration increased cost: {prev_cost} -> {cost}"
        );
        let converged = (prev_cost - cost).abs() <= 1e-12 * cost.max(1.0);
        prev_cost = cost;

        let mut sums = vec![vec![0.0; dim]; n_sup];
        let mut counts = vec![0usize; n_sup];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(*p) {
                *s += v;
            }
        }
        for j in 0..n_sup {
            if counts[j] == 0 {
                // Reseed an empty cluster at the point farthest from its center.
                let (far_idx, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist_sq(&centers[assign[i]], p)))
                    .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .unwrap();
                centers[j] = points[far_idx].to_vec();
            } else {
                for (c, s) in centers[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        if converged {
            break;
        }
    }
    (prev_cost, centers)
}

/// Round-robin greedy balanced assignment: in each round every superclass,
/// in ascending id order, claims its nearest still-unassigned class mean.
/// Member counts end up differing by at most one.
pub fn balance_assign(
    means: &ClassMeanTable,
    centers: &[Vec<f64>],
) -> Result<BTreeMap<ClassId, usize>> {
    let ids = means.class_ids();
    let n = ids.len();
    let k = centers.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(
            "centers must be non-empty and not exceed the class count".into(),
        ));
    }
    let mut unassigned: Vec<ClassId> = ids;
    let mut assignment = BTreeMap::new();
    while !unassigned.is_empty() {
        for (j, center) in centers.iter().enumerate() {
            if unassigned.is_empty() {
                break;
            }
            let (pos, _) = unassigned
                .iter()
                .enumerate()
                .map(|(pos, c)| (pos, dist_sq(center, means.mean(*c).unwrap())))
                .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .unwrap();
            let class = unassigned.remove(pos);
            assignment.insert(class, j);
        }
    }
    Ok(assignment)
}

/// Plain nearest-center assignment; member counts are unconstrained. Kept to
/// measure what tree balancing buys.
pub fn nearest_assign(
    means: &ClassMeanTable,
    centers: &[Vec<f64>],
) -> Result<BTreeMap<ClassId, usize>> {
    if centers.is_empty() {
        return Err(Error::InvalidInput("centers must be non-empty".into()));
    }
    let mut assignment = BTreeMap::new();
    for class in means.class_ids() {
        let p = means.mean(class)?;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d = dist_sq(c, p);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment.insert(class, best);
    }
    Ok(assignment)
}

/// Fills pooled statistics for each superclass using all the samples of all
/// member classes (population deviation). A superclass whose members supply
/// fewer than two samples gets a zero deviation and a recorded warning.
pub fn superclass_stats(
    assignment: &BTreeMap<ClassId, usize>,
    n_sup: usize,
    dataset: &UnbalancedDataset,
) -> Result<SuperclassTree> {
    let dim = dataset.dim();
    let mut members: Vec<Vec<ClassId>> = vec![Vec::new(); n_sup];
    for (class, &sup) in assignment {
        if sup >= n_sup {
            return Err(Error::InvalidInput(format!(
                "class {class} assigned to out-of-range superclass {sup}"
            )));
        }
        members[sup].push(*class);
    }
    if members.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput(
            "every superclass needs at least one member class".into(),
        ));
    }

    let mut superclasses = Vec::with_capacity(n_sup);
    let mut warnings = Vec::new();
    for (j, member_ids) in members.iter().enumerate() {
        let mut mean = vec![0.0; dim];
        let mut count = 0usize;
        for &class in member_ids {
            for s in dataset.samples_of(class)? {
                for (m, v) in mean.iter_mut().zip(s) {
                    *m += v;
                }
                count += 1;
            }
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let deviation = if count < 2 {
            warnings.push(format!(
                "superclass {j} has only {count} sample(s); deviation set to zero"
            ));
            vec![0.0; dim]
        } else {
            let mut var = vec![0.0; dim];
            for &class in member_ids {
                for s in dataset.samples_of(class)? {
                    for (v, (x, m)) in var.iter_mut().zip(s.iter().zip(&mean)) {
                        let d = x - m;
                        *v += d * d;
                    }
                }
            }
            var.iter().map(|v| (v / count as f64).sqrt()).collect()
        };
        superclasses.push(Superclass {
            center: mean,
            deviation,
            members: member_ids.clone(),
        });
    }
    Ok(SuperclassTree {
        superclasses,
        assignment: assignment.clone(),
        degenerate_warnings: warnings,
    })
}

/// Chance-corrected agreement between two labelings of the same items.
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    let mut rows: BTreeMap<&A, usize> = BTreeMap::new();
    let mut cols: BTreeMap<&B, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |k: usize| (k * k.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.values().map(|&k| c2(k)).sum();
    let sum_a: f64 = rows.values().map(|&k| c2(k)).sum();
    let sum_b: f64 = cols.values().map(|&k| c2(k)).sum();
    let total = c2(n);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-15 {
        1.0
    } else {
        (sum_ij - expected) / (max - expected)
    }
}
