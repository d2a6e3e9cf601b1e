//! Linear-softmax policy over rendered observations.
//!
//! Policy file format: a header `srpo-policy v1 <feature_dim> <action_count>`
//! followed by `feature_dim` lines of `action_count` reals (row-major).

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::trajectory::Observation;
use crate::{Error, Result};

/// Observation features: the flattened grid followed by a constant bias.
pub fn features(obs: &Observation) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.grid.len() + 1);
    x.extend_from_slice(&obs.grid);
    x.push(1.0);
    x
}

pub fn feature_dim(grid_h: usize, grid_w: usize) -> usize {
    crate::trajectory::CHANNELS * grid_h * grid_w + 1
}

/// Stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Policy weights `theta`, shape `feature_dim x action_count`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub feature_dim: usize,
    pub action_count: usize,
    pub weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(feature_dim: usize, action_count: usize) -> Self {
        PolicyParams {
            feature_dim,
            action_count,
            weights: vec![0.0; feature_dim * action_count],
        }
    }

    pub fn from_weights(feature_dim: usize, action_count: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != feature_dim * action_count {
            return Err(Error::shape(feature_dim * action_count, weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Contract("policy weights must be finite".into()));
        }
        Ok(PolicyParams {
            feature_dim,
            action_count,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim {
            return Err(Error::shape(self.feature_dim, x.len()));
        }
        let a = self.action_count;
        let mut z = vec![0.0; a];
        for (f, &xf) in x.iter().enumerate() {
            if xf == 0.0 {
                continue;
            }
            for (zk, w) in z.iter_mut().zip(&self.weights[f * a..(f + 1) * a]) {
                *zk += xf * w;
            }
        }
        Ok(z)
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits(x).map(|z| softmax(&z))
    }

    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits(x).map(|z| log_softmax(&z))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("srpo-policy v1 {} {}\n", self.feature_dim, self.action_count);
        for row in self.weights.chunks(self.action_count) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", cells.join(" ")).expect("string write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ctx = path.display().to_string();
        let mut tokens = text.split_whitespace();
        let head: Vec<&str> = tokens.by_ref().take(4).collect();
        if head.len() != 4 || head[0] != "srpo-policy" || head[1] != "v1" {
            return Err(Error::parse(&ctx, "malformed policy header"));
        }
        let dims: Vec<usize> = head[2..]
            .iter()
            .map(|t| t.parse().map_err(|_| Error::parse(&ctx, format!("bad dimension {t}"))))
            .collect::<Result<_>>()?;
        let weights: Vec<f64> = tokens
            .map(|t| t.parse().map_err(|_| Error::parse(&ctx, format!("bad weight {t}"))))
            .collect::<Result<_>>()?;
        PolicyParams::from_weights(dims[0], dims[1], weights)
    }
}

/// `pi_theta(. | o)` for a single observation.
pub fn action_distribution(params: &PolicyParams, obs: &Observation) -> Result<Vec<f64>> {
    params.probs(&features(obs))
}

/// A frozen copy of the parameters (`pi_theta_old` or `pi_ref`).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot(Arc<PolicyParams>);

impl PolicySnapshot {
    pub fn capture(params: &PolicyParams) -> Self {
        PolicySnapshot(Arc::new(params.clone()))
    }

    pub fn params(&self) -> &PolicyParams {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ACTION_COUNT;
    use crate::trajectory::StateSnapshot;

    fn obs() -> Observation {
        Observation::render(
            2,
            2,
            StateSnapshot { agent: (0, 1), held: None, objects: vec![(0, (1, 1))], target_object: 0, target_cell: (1, 0) },
        )
    }

    #[test]
    fn zero_weights_are_uniform() {
        let p = PolicyParams::zeros(feature_dim(2, 2), ACTION_COUNT);
        let d = action_distribution(&p, &obs()).unwrap();
        assert!(d.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn shift_invariance_and_dominance() {
        let z = [0.3, -1.0, 2.0, 0.0, 0.5, -0.2];
        let shifted: Vec<f64> = z.iter().map(|v| v + 7.5).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut big = [0.0; 6];
        big[2] = 10.0;
        // e^10 / (e^10 + 5) = 0.99977...
        assert!(softmax(&big)[2] > 0.999);
        let ls = log_softmax(&z);
        for (l, p) in ls.iter().zip(&a) {
            assert!((l.exp() - p).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = PolicyParams::zeros(5, 6);
        assert!(matches!(action_distribution(&p, &obs()), Err(Error::Shape { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w: Vec<f64> = (0..13 * 6).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = PolicyParams::from_weights(13, 6, w).unwrap();
        let path = dir.path().join("p.policy");
        p.save(&path).unwrap();
        assert_eq!(PolicyParams::load(&path).unwrap(), p);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("srpo-policy v1 13 6\n"));
    }
}
