//! Synthetic keypoint-matching sample generator: random planar keypoints,
//! Delaunay graph structure, class-vector descriptors with Gaussian noise
//! and optional unmatched outliers in the second graph.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::delaunay::delaunay;
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, TrainSample};

/// Configuration of [`generate_pair`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Number of matched keypoints (>= 3, Delaunay needs a triangle).
    pub n_points: usize,
    /// Dimension of the class descriptors (>= 1). With
    /// `descriptor_dim >= n_points` the classes are orthonormal one-hot
    /// vectors; smaller dimensions wrap around (`i mod descriptor_dim`).
    pub descriptor_dim: usize,
    /// Standard deviation of the Gaussian perturbation applied to the
    /// second graph's descriptors.
    pub noise_sigma: f64,
    /// Extra unmatched points added to the second graph.
    pub outlier_count: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::InvalidConfig(format!(
                "n_points must be >= 3, got {}",
                self.n_points
            )));
        }
        if self.descriptor_dim == 0 {
            return Err(Error::InvalidConfig("descriptor_dim must be >= 1".into()));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Samples one training pair:
///
/// * `n_points` keypoints uniform in the unit square; the first graph gets
///   clean one-hot class descriptors,
/// * the second graph holds the same keypoints in shuffled order plus
///   `outlier_count` extra random points; its descriptors are the class
///   vectors (zero vectors for outliers) plus `N(0, noise_sigma^2)` noise,
/// * both graphs are triangulated independently and every undirected
///   Delaunay edge is expanded into two opposing arcs,
/// * arc descriptors are tail descriptor minus head descriptor,
/// * `v_gt` encodes the generating permutation; outliers stay unmatched.
///
/// Deterministic given the seed. The noise stream is drawn (and scaled by
/// `noise_sigma`) even when the sigma is zero, so configs differing only in
/// noise level share their geometry and permutation.
pub fn generate_pair(config: &GeneratorConfig) -> Result<TrainSample> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n1 = config.n_points;
    let n2 = n1 + config.outlier_count;
    let dim = config.descriptor_dim;

    // Rejection-resample exactly-degenerate draws; with continuous
    // coordinates this effectively never loops.
    for _attempt in 0..32 {
        let points1: Vec<(f64, f64)> = (0..n1)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let outlier_points: Vec<(f64, f64)> = (0..config.outlier_count)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();

        let desc1: Vec<Vec<f64>> = (0..n1).map(|i| one_hot(i % dim, dim)).collect();
        let noisy: Vec<Vec<f64>> = (0..n2)
            .map(|slot| {
                let mut d = if slot < n1 {
                    desc1[slot].clone()
                } else {
                    vec![0.0; dim]
                };
                for x in &mut d {
                    let eps: f64 = rng.sample(StandardNormal);
                    *x += config.noise_sigma * eps;
                }
                d
            })
            .collect();

        // slot s of the pre-shuffle list goes to index position[s] of g2
        let mut position: Vec<usize> = (0..n2).collect();
        position.shuffle(&mut rng);

        let mut points2 = vec![(0.0, 0.0); n2];
        let mut desc2 = vec![Vec::new(); n2];
        for slot in 0..n2 {
            let target = position[slot];
            points2[target] = if slot < n1 {
                points1[slot]
            } else {
                outlier_points[slot - n1]
            };
            desc2[target] = noisy[slot].clone();
        }

        let (Ok(edges1), Ok(edges2)) = (delaunay(&points1), delaunay(&points2)) else {
            continue;
        };

        let g1 = build_graph(n1, &edges1, desc1)?;
        let g2 = build_graph(n2, &edges2, desc2)?;

        let mut v_gt = vec![false; n1 * n2];
        for (i, &target) in position.iter().take(n1).enumerate() {
            v_gt[target * n1 + i] = true;
        }
        return TrainSample::new(g1, g2, v_gt);
    }
    Err(Error::DegenerateGeometry(
        "could not sample a non-degenerate point set".into(),
    ))
}

fn one_hot(index: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    v
}

fn build_graph(
    n: usize,
    undirected_edges: &[(usize, usize)],
    descriptors: Vec<Vec<f64>>,
) -> Result<AttributedGraph> {
    let mut arcs = Vec::with_capacity(2 * undirected_edges.len());
    for &(a, b) in undirected_edges {
        arcs.push((a, b));
        arcs.push((b, a));
    }
    let arc_descriptors: Vec<Vec<f64>> = arcs
        .iter()
        .map(|&(tail, head)| {
            descriptors[tail]
                .iter()
                .zip(&descriptors[head])
                .map(|(t, h)| t - h)
                .collect()
        })
        .collect();
    AttributedGraph::new(n, arcs, descriptors, arc_descriptors)
}
