//! Self-referential progress rewards.
//!
//! Successful trajectories of a group are embedded and clustered; each
//! failed trajectory is scored by its squared distance `d_i` to the nearest
//! cluster center. Distances are standardized over the failures of the
//! group and mapped through `alpha * logistic(-z)`, so that closer failures
//! earn more while every failure stays strictly below `alpha`. Successes
//! always receive 1.

mod curve;
pub mod dbscan;

pub use curve::{
    normalize_distances, pixel_progress_curve, pixel_progress_frames, progress_curve,
    progress_curve_from_embeddings, CurveTarget, ProgressCurve,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::Embedding;
use crate::{Error, Result};
use dbscan::{dbscan, k_distance_eps, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eps {
    /// Median k-distance heuristic.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub eps: Eps,
    pub min_pts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            eps: Eps::Auto,
            min_pts: 2,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_pts < 1 {
            return Err(Error::Config("min_pts must be at least 1".into()));
        }
        if let Eps::Fixed(e) = self.eps {
            if !(e > 0.0) {
                return Err(Error::Config(format!("eps {e} must be positive")));
            }
        }
        Ok(())
    }

    pub fn resolve_eps(&self, points: &[Embedding]) -> f64 {
        match self.eps {
            Eps::Auto => k_distance_eps(points, self.min_pts),
            Eps::Fixed(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterMode {
    /// Mean of each cluster, plus every noise point on its own.
    Centroid,
    /// Every success embedding is its own center.
    NearestSuccess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSource {
    InBatch,
    ExternalFixed,
}

/// The success set `S` and its centers `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessReferenceSet {
    pub success_embeddings: Vec<Embedding>,
    pub centers: Vec<Embedding>,
    pub source: ReferenceSource,
    pub center_mode: CenterMode,
    /// Cluster label per success embedding (centroid mode only).
    pub labels: Vec<Label>,
}

impl SuccessReferenceSet {
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// SHA-256 over the center coordinates, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.centers {
            h.update((c.dim() as u64).to_le_bytes());
            for v in &c.0 {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressRewardConfig {
    pub alpha: f64,
    pub cluster: ClusterConfig,
    pub center_mode: CenterMode,
    pub source: ReferenceSource,
    pub sigma_floor: f64,
}

impl Default for ProgressRewardConfig {
    fn default() -> Self {
        ProgressRewardConfig {
            alpha: 0.8,
            cluster: ClusterConfig::default(),
            center_mode: CenterMode::Centroid,
            source: ReferenceSource::InBatch,
            sigma_floor: 1e-6,
        }
    }
}

impl ProgressRewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config("sigma_floor must be positive".into()));
        }
        self.cluster.validate()
    }
}

/// Builds the reference set `C = DBSCAN(S)` (or the raw successes in
/// nearest-success mode).
pub fn build_reference(
    successes: Vec<Embedding>,
    cluster: &ClusterConfig,
    center_mode: CenterMode,
    source: ReferenceSource,
) -> SuccessReferenceSet {
    let (centers, labels) = match center_mode {
        CenterMode::NearestSuccess => (successes.clone(), Vec::new()),
        CenterMode::Centroid => {
            let eps = cluster.resolve_eps(&successes);
            let (labels, n_clusters) = dbscan(&successes, eps, cluster.min_pts);
            (cluster_centers(&successes, &labels, n_clusters), labels)
        }
    };
    SuccessReferenceSet {
        success_embeddings: successes,
        centers,
        source,
        center_mode,
        labels,
    }
}

/// Per-cluster means in cluster order, then noise points in index order.
pub fn cluster_centers(points: &[Embedding], labels: &[Label], n_clusters: usize) -> Vec<Embedding> {
    let dim = points.first().map_or(0, Embedding::dim);
    let mut sums = vec![vec![0.0; dim]; n_clusters];
    let mut counts = vec![0usize; n_clusters];
    let mut noise = Vec::new();
    for (p, l) in points.iter().zip(labels) {
        match l {
            Label::Cluster(c) => {
                counts[*c] += 1;
                for (s, v) in sums[*c].iter_mut().zip(&p.0) {
                    *s += v;
                }
            }
            Label::Noise => noise.push(p.clone()),
        }
    }
    let mut centers: Vec<Embedding> = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| Embedding(s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    centers.extend(noise);
    centers
}

/// `d = min_j ||h - c_j||^2` and the index of the nearest center (lowest
/// index on ties).
pub fn nearest_center(h: &Embedding, reference: &SuccessReferenceSet) -> Result<(f64, usize)> {
    if reference.centers.is_empty() {
        return Err(Error::Contract("distance to an empty reference set".into()));
    }
    let mut best = (f64::INFINITY, 0);
    for (j, c) in reference.centers.iter().enumerate() {
        if c.dim() != h.dim() {
            return Err(Error::shape(c.dim(), h.dim()));
        }
        let d = h.sq_dist(c);
        if d < best.0 {
            best = (d, j);
        }
    }
    Ok(best)
}

pub fn min_center_distance(h: &Embedding, reference: &SuccessReferenceSet) -> Result<f64> {
    nearest_center(h, reference).map(|(d, _)| d)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardDiagnostic {
    pub distance: Option<f64>,
    pub nearest_center: Option<usize>,
}

/// Rewards `g` for one group, with the distance diagnostics behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedRewardVector {
    pub rewards: Vec<f64>,
    pub diagnostics: Vec<RewardDiagnostic>,
}

/// Shapes trajectory-level rewards for one group.
///
/// With an empty reference (no successes to refer to) every failure gets 0.
/// A single failure is standardized with `sigma_floor`, giving `alpha / 2`.
pub fn shape_rewards(
    embeddings: &[Embedding],
    outcomes: &[bool],
    reference: &SuccessReferenceSet,
    cfg: &ProgressRewardConfig,
) -> Result<ShapedRewardVector> {
    if embeddings.len() != outcomes.len() {
        return Err(Error::shape(
            format!("{} outcomes", embeddings.len()),
            outcomes.len(),
        ));
    }
    let mut diagnostics = vec![
        RewardDiagnostic {
            distance: None,
            nearest_center: None,
        };
        embeddings.len()
    ];
    if !reference.is_empty() {
        for (h, diag) in embeddings.iter().zip(&mut diagnostics) {
            let (d, j) = nearest_center(h, reference)?;
            *diag = RewardDiagnostic {
                distance: Some(d),
                nearest_center: Some(j),
            };
        }
    }
    let failed: Vec<f64> = outcomes
        .iter()
        .zip(&diagnostics)
        .filter(|(o, _)| !**o)
        .filter_map(|(_, d)| d.distance)
        .collect();
    let (mean, sigma) = if failed.is_empty() {
        (0.0, cfg.sigma_floor)
    } else {
        let n = failed.len() as f64;
        let mean = failed.iter().sum::<f64>() / n;
        let var = failed.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        (mean, var.sqrt().max(cfg.sigma_floor))
    };
    let rewards = outcomes
        .iter()
        .zip(&diagnostics)
        .map(|(&ok, diag)| match (ok, diag.distance) {
            (true, _) => 1.0,
            (false, None) => 0.0,
            (false, Some(d)) => cfg.alpha * logistic(-(d - mean) / sigma),
        })
        .collect();
    Ok(ShapedRewardVector {
        rewards,
        diagnostics,
    })
}
