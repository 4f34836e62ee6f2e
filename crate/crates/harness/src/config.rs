//! Flat key-value run configuration.
//!
//! Values resolve as command-line flags, then the TOML file, then built-in
//! defaults. Every key is optional in the file:
//!
//! | key | type | default |
//! |---|---|---|
//! | `profile` | `small` \| `default` | `small` |
//! | `seed` | integer | 0 |
//! | `scheduler` | `kais` \| `greedy-native` \| `cmmac-native` \| `greedy-gpg` \| `random` | `kais` |
//! | `pattern` | `p1`..`p4` | `p1` |
//! | `trace` | path to a request CSV (replaces `pattern`) | none |
//! | `episodes` | integer | 100 |
//! | `frames` | frames per episode | profile value |
//! | `beta` | slots per frame | profile value |
//! | `slot_seconds` | float | profile value |
//! | `high_value_nodes` | integer | profile value |
//! | `gamma` | float | profile value |
//! | `epsilon_lb` | float | profile value |
//! | `queue_cap` | integer | profile value |
//! | `intensity` | requests per second | 6.0 |
//! | `amplitude` | float in `[0, 1]` | 0.8 |
//! | `deadline_factor` | float | 1.5 |
//! | `work_sigma` | float | 0.2 |
//! | `actor_lr` / `critic_lr` / `gpg_lr` | float | 5e-4 / 5e-4 / 1e-3 |
//! | `target_utilization` | autoscaler target | 0.5 |
//! | `eval_sequences` | evaluation traces | 50 |
//! | `eval_policy` | `sample` \| `greedy` | `sample` |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use edgesched_core::baselines::AutoscalerConfig;
use edgesched_core::domain::{ConfigError, SimConfig};
use edgesched_core::trace::{PatternKind, WorkloadConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("{key} must be {expected}, got {value}")]
    Invalid {
        key: &'static str,
        expected: &'static str,
        value: String,
    },
    #[error(transparent)]
    Sim(#[from] ConfigError),
}

/// Which dispatcher and orchestrator run together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerSpec {
    /// Learned dispatch and learned orchestration.
    Kais,
    GreedyNative,
    CmmacNative,
    GreedyGpg,
    /// Uniform dispatch over valid targets on a static deployment.
    Random,
}

impl SchedulerSpec {
    pub const ALL: [SchedulerSpec; 5] = [
        Self::Kais,
        Self::GreedyNative,
        Self::CmmacNative,
        Self::GreedyGpg,
        Self::Random,
    ];

    pub fn learns_dispatch(self) -> bool {
        matches!(self, Self::Kais | Self::CmmacNative)
    }

    pub fn learns_orchestration(self) -> bool {
        matches!(self, Self::Kais | Self::GreedyGpg)
    }

    pub fn is_learned(self) -> bool {
        self.learns_dispatch() || self.learns_orchestration()
    }
}

impl FromStr for SchedulerSpec {
    type Err = HarnessConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|spec| spec.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| HarnessConfigError::UnknownScheduler(s.to_string()))
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kais => "kais",
            Self::GreedyNative => "greedy-native",
            Self::CmmacNative => "cmmac-native",
            Self::GreedyGpg => "greedy-gpg",
            Self::Random => "random",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Small,
    Default,
}

impl FromStr for Profile {
    type Err = HarnessConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Self::Small),
            "default" => Ok(Self::Default),
            _ => Err(HarnessConfigError::UnknownProfile(s.to_string())),
        }
    }
}

impl Profile {
    pub fn sim_config(self) -> SimConfig {
        match self {
            Self::Small => SimConfig::small_profile(),
            Self::Default => SimConfig::default_profile(),
        }
    }
}

/// How learned policies act outside training. Both variants skip updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPolicy {
    /// Draw from the learned distributions.
    #[default]
    Sample,
    /// Take the most probable dispatch target, top-scoring nodes and argmax
    /// scaling.
    Greedy,
}

/// One layer of settings; unset keys defer to the next layer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub scheduler: Option<SchedulerSpec>,
    pub pattern: Option<PatternKind>,
    pub trace: Option<PathBuf>,
    pub episodes: Option<usize>,
    pub frames: Option<usize>,
    pub beta: Option<u32>,
    pub slot_seconds: Option<f64>,
    pub high_value_nodes: Option<usize>,
    pub gamma: Option<f64>,
    pub epsilon_lb: Option<f64>,
    pub queue_cap: Option<usize>,
    pub intensity: Option<f64>,
    pub amplitude: Option<f64>,
    pub deadline_factor: Option<f64>,
    pub work_sigma: Option<f64>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub gpg_lr: Option<f64>,
    pub target_utilization: Option<f64>,
    pub eval_sequences: Option<usize>,
    pub eval_policy: Option<EvalPolicy>,
}

macro_rules! overlay {
    ($top:expr, $bottom:expr, $($field:ident),*) => {
        ConfigLayer { $($field: $top.$field.or($bottom.$field)),* }
    };
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| HarnessConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// `self` wins wherever it sets a key.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        overlay!(
            self,
            lower,
            profile,
            seed,
            scheduler,
            pattern,
            trace,
            episodes,
            frames,
            beta,
            slot_seconds,
            high_value_nodes,
            gamma,
            epsilon_lb,
            queue_cap,
            intensity,
            amplitude,
            deadline_factor,
            work_sigma,
            actor_lr,
            critic_lr,
            gpg_lr,
            target_utilization,
            eval_sequences,
            eval_policy
        )
    }
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarnessConfig {
    pub seed: u64,
    pub scheduler: SchedulerSpec,
    pub pattern: PatternKind,
    pub trace: Option<PathBuf>,
    pub episodes: usize,
    pub eval_sequences: usize,
    pub eval_policy: EvalPolicy,
    pub sim: SimConfig,
    pub workload: WorkloadConfig,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gpg_lr: f64,
    pub autoscaler: AutoscalerConfig,
}

fn positive(key: &'static str, value: f64) -> Result<f64, HarnessConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(HarnessConfigError::Invalid {
            key,
            expected: "positive and finite",
            value: value.to_string(),
        })
    }
}

impl HarnessConfig {
    /// Resolves `flags` over `file` over the defaults and validates the result.
    pub fn resolve(flags: ConfigLayer, file: ConfigLayer) -> Result<Self, HarnessConfigError> {
        let layer = flags.over(file);
        let mut sim = layer.profile.unwrap_or_default().sim_config();
        sim.seed = layer.seed.unwrap_or(0);
        if let Some(frames) = layer.frames {
            sim.episode_frames = frames;
        }
        if let Some(beta) = layer.beta {
            sim.beta = beta;
        }
        if let Some(s) = layer.slot_seconds {
            sim.slot_seconds = s;
        }
        if let Some(h) = layer.high_value_nodes {
            sim.high_value_nodes = h;
        }
        if let Some(g) = layer.gamma {
            sim.gamma = g;
        }
        if let Some(e) = layer.epsilon_lb {
            sim.epsilon_lb = e;
        }
        if let Some(q) = layer.queue_cap {
            sim.queue_cap = q;
        }
        let sim = sim.validate()?;
        let defaults = WorkloadConfig::default();
        let workload = WorkloadConfig {
            intensity: positive("intensity", layer.intensity.unwrap_or(defaults.intensity))?,
            amplitude: layer.amplitude.unwrap_or(defaults.amplitude),
            deadline_factor: positive(
                "deadline_factor",
                layer.deadline_factor.unwrap_or(defaults.deadline_factor),
            )?,
            work_sigma: layer.work_sigma.unwrap_or(defaults.work_sigma),
        };
        if !(0.0..=1.0).contains(&workload.amplitude) {
            return Err(HarnessConfigError::Invalid {
                key: "amplitude",
                expected: "within [0, 1]",
                value: workload.amplitude.to_string(),
            });
        }
        let autoscaler = AutoscalerConfig {
            target_utilization: positive(
                "target_utilization",
                layer.target_utilization.unwrap_or(0.5),
            )?,
            ..AutoscalerConfig::default()
        };
        Ok(Self {
            seed: sim.seed,
            scheduler: layer.scheduler.unwrap_or(SchedulerSpec::Kais),
            pattern: layer.pattern.unwrap_or(PatternKind::P1),
            trace: layer.trace,
            episodes: layer.episodes.unwrap_or(100),
            eval_sequences: layer.eval_sequences.unwrap_or(50),
            eval_policy: layer.eval_policy.unwrap_or_default(),
            sim,
            workload,
            actor_lr: positive("actor_lr", layer.actor_lr.unwrap_or(5e-4))?,
            critic_lr: positive("critic_lr", layer.critic_lr.unwrap_or(5e-4))?,
            gpg_lr: positive("gpg_lr", layer.gpg_lr.unwrap_or(1e-3))?,
            autoscaler,
        })
    }

    pub fn frames(&self) -> usize {
        self.sim.episode_frames
    }
}
