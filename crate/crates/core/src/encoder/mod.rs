//! Frozen trajectory encoders mapping frame sequences to latent embeddings.
//!
//! The random-projection encoder is the task-agnostic stand-in for a
//! pretrained video world model: a fixed seeded Gaussian projection of the
//! rendered frames, pooled over time. The oracle encoders read the discrete
//! snapshots and exist for tests and for building benchmark datasets of
//! controlled quality.

mod io;

pub use io::{export_embeddings, import_external_embeddings, window_key};

use std::borrow::Borrow;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::progress_of;
use crate::seed;
use crate::trajectory::{Observation, Trajectory, CHANNELS};
use crate::{Error, Result};

/// A latent trajectory representation `h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Squared Euclidean distance.
    pub fn sq_dist(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(v: Vec<f64>) -> Self {
        Embedding(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    RandomProjection,
    OracleState,
    NoisyOracle,
    ExternalImport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalPool {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "last")]
    Last,
    /// First half of the embedding pools the mean frame, second half the
    /// last frame.
    #[serde(rename = "mean+last")]
    MeanLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    pub seed: u64,
    pub pool: TemporalPool,
    /// Only read by [`EncoderKind::NoisyOracle`].
    pub noise_sigma: f64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            kind: EncoderKind::RandomProjection,
            dim: 16,
            seed: 0,
            pool: TemporalPool::MeanLast,
            noise_sigma: 0.0,
        }
    }
}

/// Frames at which successive cumulative windows end (inclusive), for a
/// sequence of `n_frames` frames.
///
/// The first window covers frames `0..=10` and each later window adds one
/// frame, the last one ending at the penultimate frame. Sequences too short
/// for that rule (fewer than 12 frames) get a single window of all frames.
pub fn window_ends(n_frames: usize) -> Vec<usize> {
    const FIRST_END: usize = 10;
    if n_frames == 0 {
        Vec::new()
    } else if n_frames < FIRST_END + 2 {
        vec![n_frames - 1]
    } else {
        (FIRST_END..=n_frames - 2).collect()
    }
}

/// A constructed encoder `W`. Immutable, so `encode` may run concurrently.
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    grid_h: usize,
    grid_w: usize,
    /// Row-major `dim x (3*H*W)`, random-projection only.
    projection: Vec<f64>,
}

const PROJECTION_STREAM: u64 = 0x50_524f_4a;
const NOISE_STREAM: u64 = 0x4e4f_4953_45;

impl Encoder {
    pub fn new(spec: EncoderSpec, grid_h: usize, grid_w: usize) -> Result<Self> {
        if spec.dim < 2 {
            return Err(Error::Config(format!("encoder dim {} < 2", spec.dim)));
        }
        if spec.kind == EncoderKind::NoisyOracle && !(spec.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        let pixels = CHANNELS * grid_h * grid_w;
        let projection = if spec.kind == EncoderKind::RandomProjection {
            let mut rng = seed::stream(spec.seed, &[PROJECTION_STREAM]);
            let scale = 1.0 / (pixels as f64).sqrt();
            (0..spec.dim * pixels)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
                .collect()
        } else {
            Vec::new()
        };
        Ok(Encoder {
            spec,
            grid_h,
            grid_w,
            projection,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// The projection matrix (empty unless random-projection).
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    fn check_frames<O: Borrow<Observation>>(&self, frames: &[O]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::Contract("cannot encode an empty frame sequence".into()));
        }
        for f in frames {
            let f = f.borrow();
            if f.grid_h != self.grid_h || f.grid_w != self.grid_w || f.grid.len() != f.pixel_count() {
                return Err(Error::shape(
                    format!("{}x{} frames", self.grid_h, self.grid_w),
                    format!("{}x{} frame with {} values", f.grid_h, f.grid_w, f.grid.len()),
                ));
            }
        }
        Ok(())
    }

    fn project(&self, rows: std::ops::Range<usize>, grid: &[f64]) -> Vec<f64> {
        let p = grid.len();
        let mut out = vec![0.0; rows.len()];
        for (k, v) in grid.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(rows.clone()) {
                *o += self.projection[r * p + k] * v;
            }
        }
        out
    }

    /// `h = W(o_{0:T})` for a non-empty frame sequence.
    pub fn encode<O: Borrow<Observation>>(&self, frames: &[O]) -> Result<Embedding> {
        self.check_frames(frames)?;
        match self.spec.kind {
            EncoderKind::RandomProjection => Ok(self.encode_projection(frames)),
            EncoderKind::OracleState => Ok(self.encode_oracle(frames)),
            EncoderKind::NoisyOracle => {
                let mut e = self.encode_oracle(frames);
                let mut rng = seed::stream(self.spec.seed, &[NOISE_STREAM, frames_digest(frames)]);
                for v in &mut e.0 {
                    *v += self.spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                Ok(e)
            }
            EncoderKind::ExternalImport => Err(Error::Config(
                "external-import encoders look embeddings up by key; nothing to compute".into(),
            )),
        }
    }

    pub fn encode_trajectory(&self, traj: &Trajectory) -> Result<Embedding> {
        self.encode(&traj.frames())
    }

    fn encode_projection<O: Borrow<Observation>>(&self, frames: &[O]) -> Embedding {
        let d = self.spec.dim;
        let mean_frame = || {
            let mut acc = vec![0.0; frames[0].borrow().grid.len()];
            for f in frames {
                for (a, v) in acc.iter_mut().zip(&f.borrow().grid) {
                    *a += v;
                }
            }
            let n = frames.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        };
        let last = &frames[frames.len() - 1].borrow().grid;
        let v = match self.spec.pool {
            TemporalPool::Mean => self.project(0..d, &mean_frame()),
            TemporalPool::Last => self.project(0..d, last),
            TemporalPool::MeanLast => {
                let half = d.div_ceil(2);
                let mut v = self.project(0..half, &mean_frame());
                v.extend(self.project(half..d, last));
                v
            }
        };
        Embedding(v)
    }

    fn encode_oracle<O: Borrow<Observation>>(&self, frames: &[O]) -> Embedding {
        let feats: Vec<[f64; ORACLE_FEATURES]> =
            frames.iter().map(|f| oracle_features(f.borrow())).collect();
        let mean = || {
            let mut m = [0.0; ORACLE_FEATURES];
            for f in &feats {
                for (a, v) in m.iter_mut().zip(f) {
                    *a += v;
                }
            }
            m.iter_mut().for_each(|a| *a /= feats.len() as f64);
            m
        };
        let last = feats[feats.len() - 1];
        let pooled: Vec<f64> = match self.spec.pool {
            TemporalPool::Mean => mean().to_vec(),
            TemporalPool::Last => last.to_vec(),
            TemporalPool::MeanLast => mean().into_iter().chain(last).collect(),
        };
        let final_frame = frames[frames.len() - 1].borrow();
        let mut v = Vec::with_capacity(self.spec.dim);
        v.push(progress_of(&final_frame.snapshot, final_frame.grid_h, final_frame.grid_w));
        v.extend(pooled.into_iter().take(self.spec.dim - 1));
        v.resize(self.spec.dim, 0.0);
        Embedding(v)
    }

    /// One embedding per cumulative window (see [`window_ends`]); embedding
    /// `k` encodes the prefix ending at `window_ends(n)[k]`.
    pub fn cumulative_window_embeddings<O: Borrow<Observation>>(
        &self,
        frames: &[O],
    ) -> Result<Vec<Embedding>> {
        if frames.is_empty() {
            return Err(Error::Contract("cumulative windows of an empty sequence".into()));
        }
        window_ends(frames.len())
            .into_iter()
            .map(|end| self.encode(&frames[..=end]))
            .collect()
    }
}

const ORACLE_FEATURES: usize = 5;

/// Normalized agent row/col, target-object row/col and a held flag.
fn oracle_features(o: &Observation) -> [f64; ORACLE_FEATURES] {
    let s = &o.snapshot;
    let rn = (o.grid_h.max(2) - 1) as f64;
    let cn = (o.grid_w.max(2) - 1) as f64;
    let obj = s.object_cell(s.target_object).unwrap_or(s.agent);
    [
        s.agent.0 as f64 / rn,
        s.agent.1 as f64 / cn,
        obj.0 as f64 / rn,
        obj.1 as f64 / cn,
        f64::from(u8::from(s.held == Some(s.target_object))),
    ]
}

fn frames_digest<O: Borrow<Observation>>(frames: &[O]) -> u64 {
    let mut h = Sha256::new();
    h.update((frames.len() as u64).to_le_bytes());
    for f in frames {
        let s = &f.borrow().snapshot;
        for x in [s.agent.0, s.agent.1, s.target_cell.0, s.target_cell.1] {
            h.update((x as u64).to_le_bytes());
        }
        h.update(s.held.map_or(u64::MAX, u64::from).to_le_bytes());
        h.update(u64::from(s.target_object).to_le_bytes());
        for &(id, (r, c)) in &s.objects {
            h.update(u64::from(id).to_le_bytes());
            h.update((r as u64).to_le_bytes());
            h.update((c as u64).to_le_bytes());
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Flattened final frame, the representation used by the pixel baseline.
pub fn final_frame_pixels<O: Borrow<Observation>>(frames: &[O]) -> Result<Vec<f64>> {
    frames
        .last()
        .map(|f| f.borrow().grid.clone())
        .ok_or_else(|| Error::Contract("no frames".into()))
}
