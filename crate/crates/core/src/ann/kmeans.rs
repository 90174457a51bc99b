//! Lloyd's k-means with squared-L2 assignment, used to train PQ codebooks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kernel::{dot, l2_sq};

use super::IndexError;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    pub k: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f32>,
    /// Sum of squared distances to the assigned centroid, recorded at the
    /// assignment step of every iteration.
    pub objective: Vec<f64>,
}

impl KMeans {
    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Index of the nearest centroid; ties go to the lower index.
    pub fn assign(&self, x: &[f32]) -> usize {
        nearest(x, &self.centroids, self.dim, &centroid_norms(&self.centroids, self.dim)).0
    }
}

fn centroid_norms(centroids: &[f32], dim: usize) -> Vec<f32> {
    centroids.chunks_exact(dim).map(|c| dot(c, c)).collect()
}

/// Nearest centroid by `‖c‖² − 2⟨x, c⟩`, then the exact squared distance of
/// the winner.
pub(crate) fn nearest(x: &[f32], centroids: &[f32], dim: usize, norms: &[f32]) -> (usize, f32) {
    let mut best = 0;
    let mut best_val = f32::INFINITY;
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let v = norms[c] - 2.0 * dot(x, centroid);
        if v < best_val {
            best_val = v;
            best = c;
        }
    }
    (best, l2_sq(x, &centroids[best * dim..(best + 1) * dim]))
}

/// Clusters `n = data.len() / dim` points into `k` groups.
///
/// Initial centroids are `k` distinct data points sampled with the seeded
/// generator. A cluster that ends an iteration empty is re-seeded with the
/// point currently farthest from its own centroid.
pub fn kmeans(data: &[f32], dim: usize, k: usize, iters: usize, seed: u64) -> Result<KMeans, IndexError> {
    assert!(dim > 0, "dimension must be positive");
    let n = data.len() / dim;
    if k == 0 || n < k {
        return Err(IndexError::TooFewPoints { points: n, k });
    }
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<f32> = Vec::with_capacity(k * dim);
    let mut init = sample(&mut rng, n, k).into_vec();
    init.sort_unstable();
    for i in init {
        centroids.extend_from_slice(point(i));
    }

    let mut assignment = vec![0usize; n];
    let mut dist = vec![0f32; n];
    let mut objective = Vec::with_capacity(iters);
    for _ in 0..iters {
        let norms = centroid_norms(&centroids, dim);
        let mut total = 0f64;
        for i in 0..n {
            let (c, d) = nearest(point(i), &centroids, dim, &norms);
            assignment[i] = c;
            dist[i] = d;
            total += f64::from(d);
        }
        objective.push(total);

        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += f64::from(x);
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            let target = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (t, &s) in target.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *t = (s * inv) as f32;
                }
            } else {
                // Farthest point not already used to re-seed another cluster.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("n >= k");
                taken[far] = true;
                dist[far] = 0.0;
                target.copy_from_slice(point(far));
            }
        }
    }
    Ok(KMeans {
        dim,
        k,
        centroids,
        objective,
    })
}
