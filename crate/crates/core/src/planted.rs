//! Ground-truth generators: planted two-community coupling instances on a
//! lifted QC graph, and two-blob feature surrogates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::features::FeatureMatrix;
use crate::qc_graph::{lift, project_to_image_graph, ExponentMatrix, ImageGraph};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct PlantedInstance {
    pub graph: ImageGraph,
    /// `+1` / `-1` per node.
    pub labels: Vec<i8>,
    /// One coupling per graph edge.
    pub couplings: Vec<f64>,
    pub j0: f64,
    pub nu2: f64,
    pub seed: u64,
}

impl PlantedInstance {
    /// `J0 / nu^2`, undefined for noiseless instances.
    pub fn beta_n(&self) -> Option<f64> {
        (self.nu2 > 0.0).then(|| self.j0 / self.nu2)
    }

    /// Couplings as `u v J` lines under an `N edges` header.
    pub fn couplings_text(&self) -> String {
        let mut out = format!("{} {}\n", self.graph.node_count(), self.graph.edge_count());
        for (&(u, v), j) in self.graph.edges().iter().zip(&self.couplings) {
            out.push_str(&format!("{u} {v} {j:?}\n"));
        }
        out
    }
}

/// Balanced `+-1` labels in seeded random order: `ceil(n/2)` of `+1`.
pub fn balanced_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<i8> {
    let mut labels: Vec<i8> = (0..n).map(|i| if i < n.div_ceil(2) { 1 } else { -1 }).collect();
    labels.shuffle(rng);
    labels
}

/// Planted instance on the projection of `lift(exponent)` onto `n` nodes.
/// Each edge draws `J ~ N(s_i s_j J0, nu2)`.
pub fn generate_planted(exponent: &ExponentMatrix, n: usize, j0: f64, nu2: f64, seed: u64) -> Result<PlantedInstance> {
    if !(nu2 >= 0.0) || !nu2.is_finite() {
        return Err(Error::Domain(format!("nu2 must be >= 0, got {nu2}")));
    }
    if !j0.is_finite() {
        return Err(Error::Domain(format!("J0 must be finite, got {j0}")));
    }
    let graph = project_to_image_graph(&lift(exponent), n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = balanced_labels(n, &mut rng);
    let sd = nu2.sqrt();
    let couplings = graph
        .edges()
        .iter()
        .map(|&(u, v)| {
            let g: f64 = StandardNormal.sample(&mut rng);
            f64::from(labels[u] * labels[v]) * j0 + sd * g
        })
        .collect();
    Ok(PlantedInstance {
        graph,
        labels,
        couplings,
        j0,
        nu2,
        seed,
    })
}

/// `n/2` unit-covariance Gaussian samples around each of `+-(sep/2) e_1`, in
/// seeded random order. Label `1` marks the `+` blob.
pub fn generate_feature_surrogate(n: usize, d: usize, separation: f64, seed: u64) -> Result<FeatureMatrix> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Domain(format!("surrogate needs an even N >= 2, got {n}")));
    }
    if d < 2 {
        return Err(Error::Domain(format!("surrogate needs d >= 2, got {d}")));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::Domain(format!("separation must be >= 0, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    labels.shuffle(&mut rng);
    let mut values = Vec::with_capacity(n * d);
    for &l in &labels {
        let shift = if l == 1 { separation / 2.0 } else { -separation / 2.0 };
        for j in 0..d {
            let g: f64 = StandardNormal.sample(&mut rng);
            values.push(if j == 0 { g + shift } else { g });
        }
    }
    FeatureMatrix::new(n, d, values, Some(labels))
}
