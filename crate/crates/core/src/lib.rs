//! Self-referential policy optimization on toy manipulation tasks.
//!
//! Failed rollouts are rewarded by how close their latent trajectory
//! embedding lands to the cluster centers of the successful rollouts in the
//! same group. The crate contains the pieces needed to train and evaluate
//! that idea end to end:
//!
//! - [`env`]: seedable grid-world pick-and-place environments.
//! - [`trajectory`]: rollout data model and the line-oriented trajectory store.
//! - [`encoder`]: frozen trajectory encoders and the embedding file format.
//! - [`reward`]: DBSCAN success references, shaped rewards and progress curves.
//! - [`optimize`]: linear-softmax policy, SRPO / GRPO updates and offline AWR.
//! - [`rollout`]: episode sampling and evaluation.
//! - [`bench`]: progress-reward quality metrics and a synthetic benchmark.

pub mod bench;
pub mod encoder;
pub mod env;
mod error;
pub mod optimize;
pub mod reward;
pub mod rollout;
pub mod seed;
pub mod trajectory;

pub use encoder::{Embedding, Encoder, EncoderKind, EncoderSpec, TemporalPool};
pub use env::{Action, Cell, EnvConfig, EnvState, TaskSpec};
pub use error::{Error, Result};
pub use optimize::{OptimConfig, PolicyParams, PolicySnapshot};
pub use reward::{ProgressRewardConfig, ShapedRewardVector, SuccessReferenceSet};
pub use trajectory::{Observation, RolloutGroup, StateSnapshot, Step, Trajectory, TrajectoryStore};
