//! 2-D principal-component projection by power iteration, for plot data.

use crate::{Error, Result};

/// A projected point with its label and provenance tag carried through.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint {
    pub label: u32,
    pub coords: [f64; 2],
    pub provenance: String,
}

/// Result of a 2-D projection: coordinates plus the variance captured by
/// each component.
#[derive(Debug, Clone)]
pub struct Projection2d {
    pub points: Vec<ProjectedPoint>,
    pub captured_variance: [f64; 2],
    pub components: [Vec<f64>; 2],
}

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITERS: usize = 10_000;

fn normalize(v: &mut [f64]) -> f64 {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Dominant eigenpair of a symmetric matrix (row-major, `n x n`) by power
/// iteration from a fixed deterministic start.
fn power_iteration(matrix: &[f64], n: usize) -> (f64, Vec<f64>) {
    // Deterministic pseudo-random start so ties cannot stall on a fixed axis.
    let mut v: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.7548776662466927).fract() - 0.5)
        .collect();
    normalize(&mut v);
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITERS {
        for r in 0..n {
            let mut s = 0.0;
            for c in 0..n {
                s += matrix[r * n + c] * v[c];
            }
            next[r] = s;
        }
        let norm = normalize(&mut next);
        if norm == 0.0 {
            // Zero matrix: any unit vector is an eigenvector with value 0.
            return (0.0, v);
        }
        // Sign-align to measure convergence.
        let dot: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        if dot < 0.0 {
            for x in next.iter_mut() {
                *x = -*x;
            }
        }
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut v, &mut next);
        if delta < POWER_TOL {
            break;
        }
    }
    // Rayleigh quotient.
    let mut mv = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            mv[r] += matrix[r * n + c] * v[c];
        }
    }
    let lambda: f64 = mv.iter().zip(&v).map(|(a, b)| a * b).sum();
    (lambda, v)
}

/// Projects labeled, provenance-tagged vectors onto the top two principal
/// components of their centered covariance.
pub fn project_2d(samples: &[(u32, Vec<f64>, String)]) -> Result<Projection2d> {
    if samples.len() < 2 {
        return Err(Error::Projection(
            "projection needs at least two samples".into(),
        ));
    }
    let dim = samples[0].1.len();
    if dim < 2 {
        return Err(Error::Projection("projection needs dimension >= 2".into()));
    }
    if samples.iter().any(|(_, f, _)| f.len() != dim) {
        return Err(Error::Projection("samples have mixed dimensions".into()));
    }
    let distinct = samples
        .iter()
        .any(|(_, f, _)| f != &samples[0].1);
    if !distinct {
        return Err(Error::Projection(
            "projection needs at least two distinct points".into(),
        ));
    }

    let count = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for (_, f, _) in samples {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count;
    }

    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|(_, f, _)| f.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    // Population covariance.
    let mut cov = vec![0.0; dim * dim];
    for row in &centered {
        for r in 0..dim {
            for c in r..dim {
                cov[r * dim + c] += row[r] * row[c];
            }
        }
    }
    for r in 0..dim {
        for c in r..dim {
            let v = cov[r * dim + c] / count;
            cov[r * dim + c] = v;
            cov[c * dim + r] = v;
        }
    }

    let (lambda1, v1) = power_iteration(&cov, dim);
    // Deflate and repeat for the second component.
    let mut deflated = cov.clone();
    for r in 0..dim {
        for c in 0..dim {
            deflated[r * dim + c] -= lambda1 * v1[r] * v1[c];
        }
    }
    let (lambda2, v2) = power_iteration(&deflated, dim);
    let v2 = orthonormalize_against(&v2, &v1);

    let points = samples
        .iter()
        .zip(&centered)
        .map(|((label, _, prov), row)| ProjectedPoint {
            label: *label,
            coords: [
                row.iter().zip(&v1).map(|(a, b)| a * b).sum(),
                row.iter().zip(&v2).map(|(a, b)| a * b).sum(),
            ],
            provenance: prov.clone(),
        })
        .collect();

    Ok(Projection2d {
        points,
        captured_variance: [lambda1.max(0.0), lambda2.max(0.0)],
        components: [v1, v2],
    })
}

fn orthonormalize_against(v: &[f64], against: &[f64]) -> Vec<f64> {
    let dot: f64 = v.iter().zip(against).map(|(a, b)| a * b).sum();
    let mut out: Vec<f64> = v
        .iter()
        .zip(against)
        .map(|(a, b)| a - dot * b)
        .collect();
    if normalize(&mut out) == 0.0 {
        // Degenerate second direction: pick any axis orthogonal to `against`.
        for i in 0..out.len() {
            let mut candidate = vec![0.0; out.len()];
            candidate[i] = 1.0;
            let d: f64 = candidate.iter().zip(against).map(|(a, b)| a * b).sum();
            for (c, g) in candidate.iter_mut().zip(against) {
                *c -= d * g;
            }
            if normalize(&mut candidate) > 1e-9 {
                return candidate;
            }
        }
    }
    out
}
