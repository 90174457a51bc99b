//! Seeded synthetic corpora for tests and benchmarks.
//!
//! Real passage embeddings concentrate around topics, split into subtopics,
//! and vary along a few directions within each. [`ClusteredSpec`] imitates
//! that: a point is a random cluster centre, plus the offset of one of the
//! cluster's subtopics, plus a low-rank Gaussian displacement specific to
//! the cluster, plus a little isotropic noise, then L2-normalised.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::store::{normalize_rows, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteredSpec {
    pub dim: usize,
    pub clusters: usize,
    /// Subtopics per cluster.
    pub subclusters: usize,
    /// Scale of a subtopic offset relative to the unit centre.
    pub sub_spread: f32,
    /// Rank of each cluster's displacement subspace.
    pub latent_dim: usize,
    /// Scale of the in-cluster displacement relative to the unit centre.
    pub spread: f32,
    /// Scale of the isotropic noise.
    pub noise: f32,
    pub seed: u64,
}

impl ClusteredSpec {
    pub fn new(dim: usize, clusters: usize, seed: u64) -> Self {
        Self {
            dim,
            clusters,
            subclusters: 1,
            sub_spread: 0.0,
            latent_dim: 12,
            spread: 0.8,
            noise: 0.05,
            seed,
        }
    }

    /// 16 topics of 24 subtopics each with tight subtopics: the shape used
    /// for speed/recall benchmarks.
    pub fn topical(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            clusters: 16,
            subclusters: 24,
            sub_spread: 0.8,
            latent_dim: 8,
            spread: 0.2,
            noise: 0.05,
            seed,
        }
    }
}

/// Cluster centres and bases drawn from a [`ClusteredSpec`]; sample corpora
/// and queries from the same mixture with different streams.
#[derive(Debug, Clone)]
pub struct ClusteredMixture {
    spec: ClusteredSpec,
    centers: Vec<Vec<f32>>,
    /// Per cluster: `subclusters` offsets of length `dim`.
    offsets: Vec<Vec<Vec<f32>>>,
    /// Per cluster: `latent_dim` basis vectors of length `dim`.
    bases: Vec<Vec<Vec<f32>>>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    StandardNormal.sample(rng)
}

impl ClusteredMixture {
    pub fn new(spec: ClusteredSpec) -> Self {
        assert!(spec.dim > 0 && spec.clusters > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scale = 1.0 / (spec.dim as f32).sqrt();
        let mut centers = Vec::with_capacity(spec.clusters);
        let mut bases = Vec::with_capacity(spec.clusters);
        let mut offsets = Vec::with_capacity(spec.clusters);
        for _ in 0..spec.clusters {
            centers.push((0..spec.dim).map(|_| gaussian(&mut rng) * scale).collect());
            bases.push(
                (0..spec.latent_dim)
                    .map(|_| (0..spec.dim).map(|_| gaussian(&mut rng) * scale).collect())
                    .collect(),
            );
            offsets.push(
                (0..spec.subclusters.max(1))
                    .map(|_| (0..spec.dim).map(|_| gaussian(&mut rng) * scale * spec.sub_spread).collect())
                    .collect(),
            );
        }
        Self {
            spec,
            centers,
            offsets,
            bases,
        }
    }

    pub fn spec(&self) -> &ClusteredSpec {
        &self.spec
    }

    fn point(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f32>) {
        let spec = &self.spec;
        let c = rng.random_range(0..spec.clusters);
        let start = out.len();
        out.extend_from_slice(&self.centers[c]);
        let sub = &self.offsets[c][rng.random_range(0..self.offsets[c].len())];
        for (o, &x) in out[start..].iter_mut().zip(sub) {
            *o += x;
        }
        let latent_scale = spec.spread / (spec.latent_dim.max(1) as f32).sqrt();
        for basis in &self.bases[c] {
            let z = gaussian(rng) * latent_scale;
            for (o, &b) in out[start..].iter_mut().zip(basis) {
                *o += z * b;
            }
        }
        let noise = spec.noise / (spec.dim as f32).sqrt();
        for o in &mut out[start..] {
            *o += gaussian(rng) * noise;
        }
    }

    /// `count` normalised points drawn with the given stream id.
    pub fn sample(&self, count: usize, stream: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut values = Vec::with_capacity(count * self.spec.dim);
        for _ in 0..count {
            self.point(&mut rng, &mut values);
        }
        let raw = EmbeddingMatrix::new(self.spec.dim, values).expect("finite by construction");
        normalize_rows(&raw).expect("non-zero with probability one")
    }
}

/// Uniform-on-the-sphere vectors.
pub fn uniform_corpus(count: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..count * dim).map(|_| gaussian(&mut rng)).collect();
    normalize_rows(&EmbeddingMatrix::new(dim, values).expect("finite")).expect("non-zero")
}
