//! Run configuration: one flat TOML table, `--set key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use srpo_core::encoder::{EncoderKind, EncoderSpec, TemporalPool};
use srpo_core::env::TaskSuite;
use srpo_core::optimize::{AwrConfig, OptimConfig};
use srpo_core::reward::{CenterMode, ClusterConfig, Eps, ProgressRewardConfig, ReferenceSource};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Srpo,
    Grpo,
    AwrOffline,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Srpo => "srpo",
            Algorithm::Grpo => "grpo",
            Algorithm::AwrOffline => "awr-offline",
        })
    }
}

/// `"auto"` or a positive radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Suite file, or `builtin` for the bundled single-task suite.
    pub suite: String,
    pub algorithm: Algorithm,
    /// Gradient iterations per run.
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Success rate that counts as solved in comparisons.
    pub threshold: f64,
    pub algorithms: Vec<Algorithm>,
    pub alphas: Vec<f64>,
    pub out: String,
    /// Also checkpoint every this many iterations; 0 keeps only the final one.
    pub checkpoint_every: usize,

    /// Scripted demonstrations per task used to warm-start the policy.
    pub warm_start_demos: usize,
    pub warm_start_steps: usize,
    pub warm_start_lr: f64,
    /// Trajectory store read by `awr-offline`.
    pub demo_store: String,
    /// Trajectory store whose successes form the external-fixed reference.
    pub reference_store: String,

    pub encoder_kind: EncoderKind,
    pub encoder_dim: usize,
    pub encoder_seed: u64,
    pub encoder_pool: TemporalPool,
    pub encoder_noise_sigma: f64,

    pub alpha: f64,
    pub cluster_eps: EpsSetting,
    pub cluster_min_pts: usize,
    pub center_mode: CenterMode,
    pub reference_source: ReferenceSource,
    pub sigma_floor: f64,

    pub learning_rate: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub group_size: usize,
    pub epochs_per_batch: usize,
    pub norm_eps: f64,
    /// 0 disables gradient-norm clipping.
    pub max_grad_norm: f64,
    pub awr_temperature: f64,
    pub awr_weight_cap: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderSpec::default();
        let rw = ProgressRewardConfig::default();
        let op = OptimConfig::default();
        RunConfig {
            suite: "builtin".into(),
            algorithm: Algorithm::Srpo,
            iterations: 50,
            seeds: vec![0],
            eval_episodes: 50,
            eval_seed: 7_777,
            threshold: 0.9,
            algorithms: vec![Algorithm::Srpo, Algorithm::Grpo],
            alphas: vec![0.0, 0.3, 0.5, 0.8, 1.0],
            out: "runs".into(),
            checkpoint_every: 0,
            warm_start_demos: 1,
            warm_start_steps: 60,
            warm_start_lr: 1.0,
            demo_store: String::new(),
            reference_store: String::new(),
            encoder_kind: enc.kind,
            encoder_dim: enc.dim,
            encoder_seed: enc.seed,
            encoder_pool: enc.pool,
            encoder_noise_sigma: enc.noise_sigma,
            alpha: rw.alpha,
            cluster_eps: EpsSetting::Named("auto".into()),
            cluster_min_pts: rw.cluster.min_pts,
            center_mode: rw.center_mode,
            reference_source: rw.source,
            sigma_floor: rw.sigma_floor,
            learning_rate: op.learning_rate,
            clip_eps: op.clip_eps,
            kl_beta: op.kl_beta,
            group_size: op.group_size,
            epochs_per_batch: op.epochs_per_batch,
            norm_eps: op.norm_eps,
            max_grad_norm: 0.0,
            awr_temperature: op.awr.temperature,
            awr_weight_cap: op.awr.weight_cap,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

impl RunConfig {
    /// Reads `path` (if given), applies `key=value` overrides and validates.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
                let mut t = toml::from_str::<toml::Table>(&text)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                // Paths inside a config file are relative to that file.
                for key in ["suite", "demo_store", "reference_store"] {
                    if let Some(toml::Value::String(s)) = t.get_mut(key) {
                        if !s.is_empty() && s != "builtin" && Path::new(s.as_str()).is_relative() {
                            let base = p.parent().unwrap_or(Path::new(""));
                            *s = base.join(&*s).display().to_string();
                        }
                    }
                }
                t
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_err(format!("override {o:?} is not key=value")))?;
            table.insert(k.trim().to_string(), parse_override(v.trim()));
        }
        // Absolute paths keep the echoed config usable from any directory.
        for key in ["suite", "demo_store", "reference_store"] {
            if let Some(toml::Value::String(s)) = table.get_mut(key) {
                if !s.is_empty() && s != "builtin" {
                    if let Ok(abs) = std::path::absolute(s.as_str()) {
                        *s = abs.display().to_string();
                    }
                }
            }
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds must not be empty"));
        }
        if self.iterations == 0 {
            return Err(config_err("iterations must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(config_err("eval_episodes must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) || self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(config_err("alpha values must lie in [0, 1]"));
        }
        if self.suite != "builtin" && !Path::new(&self.suite).is_file() {
            return Err(config_err(format!("suite file {} does not exist", self.suite)));
        }
        for (name, p) in [("demo_store", &self.demo_store), ("reference_store", &self.reference_store)] {
            if !p.is_empty() && !Path::new(p).is_file() {
                return Err(config_err(format!("{name} {p} does not exist")));
            }
        }
        if self.algorithm == Algorithm::AwrOffline && self.demo_store.is_empty() {
            return Err(config_err("awr-offline needs demo_store"));
        }
        if self.reference_source == ReferenceSource::ExternalFixed && self.reference_store.is_empty() {
            return Err(config_err("external-fixed reference needs reference_store"));
        }
        self.cluster()?;
        self.reward()?.validate().map_err(CliError::from_core_config)?;
        self.optim().validate().map_err(CliError::from_core_config)?;
        Ok(())
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            kind: self.encoder_kind,
            dim: self.encoder_dim,
            seed: self.encoder_seed,
            pool: self.encoder_pool,
            noise_sigma: self.encoder_noise_sigma,
        }
    }

    fn cluster(&self) -> Result<ClusterConfig, CliError> {
        let eps = match &self.cluster_eps {
            EpsSetting::Fixed(e) => Eps::Fixed(*e),
            EpsSetting::Named(s) if s == "auto" => Eps::Auto,
            EpsSetting::Named(s) => return Err(config_err(format!("cluster_eps {s:?} is neither a number nor \"auto\""))),
        };
        Ok(ClusterConfig { eps, min_pts: self.cluster_min_pts })
    }

    pub fn reward(&self) -> Result<ProgressRewardConfig, CliError> {
        Ok(ProgressRewardConfig {
            alpha: self.alpha,
            cluster: self.cluster()?,
            center_mode: self.center_mode,
            source: self.reference_source,
            sigma_floor: self.sigma_floor,
        })
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            learning_rate: self.learning_rate,
            clip_eps: self.clip_eps,
            kl_beta: self.kl_beta,
            group_size: self.group_size,
            epochs_per_batch: self.epochs_per_batch,
            norm_eps: self.norm_eps,
            max_grad_norm: (self.max_grad_norm > 0.0).then_some(self.max_grad_norm),
            awr: AwrConfig {
                temperature: self.awr_temperature,
                weight_cap: self.awr_weight_cap,
            },
        }
    }

    pub fn load_suite(&self) -> Result<TaskSuite, CliError> {
        if self.suite == "builtin" {
            Ok(TaskSuite::default())
        } else {
            TaskSuite::load(&self.suite).map_err(CliError::from_core_config)
        }
    }
}
