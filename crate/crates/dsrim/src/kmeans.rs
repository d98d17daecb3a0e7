//! Lloyd's k-means with k-means++ seeding, used to build the topical
//! referential over object vectors.

use std::collections::HashSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::vecmath::squared_distance;

#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_history: Vec<f64>,
}

/// Cluster `points` into `k` groups. Deterministic per seed. Empty clusters
/// that appear mid-run are re-seeded at the point currently farthest from its
/// assigned centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<KmeansOutcome> {
    if points.is_empty() {
        return Err(Error::Config("kmeans needs at least one point".into()));
    }
    if k == 0 {
        return Err(Error::Config("kmeans needs k >= 1".into()));
    }
    let dims = points[0].len();
    let mut distinct: HashSet<Vec<u64>> = HashSet::new();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dims {
            return Err(Error::Dimension(format!(
                "point {i} has {} components, expected {dims}",
                p.len()
            )));
        }
        if let Some(bad) = p.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "point {i} contains non-finite component {bad}"
            )));
        }
        // +0.0 so that -0.0 and 0.0 share a key.
        distinct.insert(p.iter().map(|x| (x + 0.0).to_bits()).collect());
    }
    if k > distinct.len() {
        return Err(Error::Config(format!(
            "kmeans k={k} exceeds the {} distinct points",
            distinct.len()
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();

    for _ in 0..max_iter {
        let new_assignments: Vec<usize> = points
            .iter()
            .map(|p| nearest_centroid(p, &centroids))
            .collect();
        let mut assignments_now = new_assignments;
        // Re-seed empty clusters before recomputing means.
        loop {
            let mut sizes = vec![0usize; k];
            for &a in &assignments_now {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let farthest = points
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| {
                    let da = squared_distance(a, &centroids[assignments_now[*ia]]);
                    let db = squared_distance(b, &centroids[assignments_now[*ib]]);
                    da.partial_cmp(&db).unwrap().then(ib.cmp(ia)) // ties prefer the lowest index
                })
                .map(|(i, _)| i)
                .expect("points non-empty");
            centroids[empty] = points[farthest].clone();
            assignments_now[farthest] = empty;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignments_now)
                .filter(|&(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            for (d, slot) in centroid.iter_mut().enumerate() {
                *slot = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let objective: f64 = points
            .iter()
            .zip(&assignments_now)
            .map(|(p, &a)| squared_distance(p, &centroids[a]))
            .sum();
        history.push(objective);
        let converged = assignments_now == assignments;
        assignments = assignments_now;
        if converged {
            break;
        }
    }

    Ok(KmeansOutcome {
        assignments,
        centroids,
        objective_history: history,
    })
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// k-means++ seeding: first centroid uniform, the rest sampled proportional
/// to squared distance from the nearest chosen centroid.
fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..points.len());
    centroids.push(points[first].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let draw = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if draw < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with chosen centroids; cannot happen while
            // k <= distinct points, but keep a deterministic fallback.
            rng.random_range(0..points.len())
        };
        centroids.push(points[chosen].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, centroids.last().unwrap()));
        }
    }
    centroids
}
