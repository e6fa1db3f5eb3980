//! Run configuration: a single JSON file drives dataset generation,
//! training, evaluation, and rendering.
//!
//! Every field has a default, so a config file only names what it
//! changes. Unknown fields are rejected rather than silently ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use occlugrid_core::net::NetConfig;

use crate::errors::{CliError, CliResult};

/// Which of the two architectures a run trains or loads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vector,
    Baseline,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Vector => 0,
            ModelKind::Baseline => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ModelKind::Vector),
            1 => Some(ModelKind::Baseline),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Vector => "vector",
            ModelKind::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vector" => Some(ModelKind::Vector),
            "baseline" => Some(ModelKind::Baseline),
            _ => None,
        }
    }
}

/// Where a run's samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated intersection scenes, one per seed.
    Synthetic { seed_start: u64, seed_count: u64 },
    /// A line-oriented JSON dataset file written by `gen`.
    Dataset { path: String },
    /// Recorded tracks plus a road map, converted on load.
    Tracks { csv: String, map: String },
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::Synthetic { seed_start, seed_count } => {
                format!("synthetic seeds {seed_start}..{}", seed_start + seed_count)
            }
            DataSource::Dataset { path } => format!("dataset {path}"),
            DataSource::Tracks { csv, map } => format!("tracks {csv} + map {map}"),
        }
    }
}

/// Serializable mirror of the model hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSettings {
    pub d_model: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_blocks: usize,
    pub patch: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_polylines: usize,
    pub max_vectors: usize,
    pub include_trajectory: bool,
    pub include_context: bool,
    pub include_occlusion: bool,
    pub grid_height: usize,
    pub grid_width: usize,
}

impl Default for NetSettings {
    fn default() -> Self {
        NetConfig::default().into()
    }
}

impl From<NetConfig> for NetSettings {
    fn from(c: NetConfig) -> Self {
        NetSettings {
            d_model: c.d_model,
            heads: c.heads,
            enc_layers: c.enc_layers,
            dec_blocks: c.dec_blocks,
            patch: c.patch,
            alpha: c.alpha,
            beta: c.beta,
            max_polylines: c.max_polylines,
            max_vectors: c.max_vectors,
            include_trajectory: c.include_trajectory,
            include_context: c.include_context,
            include_occlusion: c.include_occlusion,
            grid_height: c.grid_height,
            grid_width: c.grid_width,
        }
    }
}

impl NetSettings {
    pub fn to_net(&self) -> NetConfig {
        NetConfig {
            d_model: self.d_model,
            heads: self.heads,
            enc_layers: self.enc_layers,
            dec_blocks: self.dec_blocks,
            patch: self.patch,
            alpha: self.alpha,
            beta: self.beta,
            max_polylines: self.max_polylines,
            max_vectors: self.max_vectors,
            include_trajectory: self.include_trajectory,
            include_context: self.include_context,
            include_occlusion: self.include_occlusion,
            grid_height: self.grid_height,
            grid_width: self.grid_width,
        }
    }
}

/// Everything one run needs, mirrored one-to-one in the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub net: NetSettings,
    pub data: DataSource,
    pub epochs: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of samples held out for evaluation, in (0, 1).
    pub eval_split: f64,
    pub out_dir: String,
    pub seed: u64,
    /// A numbered checkpoint is written every this many epochs.
    pub checkpoint_every: u64,
    /// Stop once eval overall accuracy reaches this value, if set.
    pub stop_at_acc: Option<f64>,
    /// Score on every cell instead of only the occluded ones (debugging).
    pub eval_all_cells: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Vector,
            net: NetSettings::default(),
            data: DataSource::Synthetic { seed_start: 0, seed_count: 16 },
            epochs: 50,
            batch_size: 4,
            lr: 1e-3,
            eval_split: 0.25,
            out_dir: "out".into(),
            seed: 0,
            checkpoint_every: 10,
            stop_at_acc: None,
            eval_all_cells: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.eval_split > 0.0 && self.eval_split < 1.0) {
            return Err(CliError::Config(format!(
                "eval_split must lie strictly between 0 and 1, got {}",
                self.eval_split
            )));
        }
        if self.epochs == 0 {
            return Err(CliError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be at least 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(CliError::Config("checkpoint_every must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CliError::Config(format!("lr must be finite and positive, got {}", self.lr)));
        }
        if let Some(t) = self.stop_at_acc {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Config(format!("stop_at_acc must lie in [0, 1], got {t}")));
            }
        }
        if let DataSource::Synthetic { seed_count, .. } = self.data {
            if seed_count == 0 {
                return Err(CliError::Config("synthetic seed range is empty".into()));
            }
        }
        self.net
            .to_net()
            .validate()
            .map_err(|e| CliError::Config(format!("net: {e}")))
    }

    /// Number of sample ids between consecutive eval samples.
    pub fn eval_stride(&self) -> u64 {
        ((1.0 / self.eval_split).round() as u64).max(1)
    }
}

/// Which polyline classes a model admits: trajectories always, scene
/// context ("env") and occlusion boundaries optionally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSubset {
    Traj,
    TrajOcc,
    TrajEnv,
    All,
}

impl InputSubset {
    pub const ROWS: [InputSubset; 4] =
        [InputSubset::Traj, InputSubset::TrajOcc, InputSubset::TrajEnv, InputSubset::All];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "traj" => Some(InputSubset::Traj),
            "traj+occ" => Some(InputSubset::TrajOcc),
            "traj+env" => Some(InputSubset::TrajEnv),
            "all" => Some(InputSubset::All),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InputSubset::Traj => "traj",
            InputSubset::TrajOcc => "traj+occ",
            InputSubset::TrajEnv => "traj+env",
            InputSubset::All => "all",
        }
    }

    pub fn apply(self, net: &mut NetSettings) {
        net.include_trajectory = true;
        net.include_context = matches!(self, InputSubset::TrajEnv | InputSubset::All);
        net.include_occlusion = matches!(self, InputSubset::TrajOcc | InputSubset::All);
    }

    /// Classifies a model's include flags.
    pub fn of(net: &NetSettings) -> Self {
        match (net.include_context, net.include_occlusion) {
            (false, false) => InputSubset::Traj,
            (false, true) => InputSubset::TrajOcc,
            (true, false) => InputSubset::TrajEnv,
            (true, true) => InputSubset::All,
        }
    }
}

/// The fields that pin down a training trajectory. Two runs with equal
/// fingerprints walk identical parameter sequences; fields that only
/// decide when to stop or what to write on disk stay out, so a run can
/// be resumed with a larger epoch budget.
#[derive(Serialize)]
struct TrainFingerprint<'a> {
    model: ModelKind,
    net: &'a NetSettings,
    data: &'a DataSource,
    batch_size: usize,
    lr: f64,
    eval_split: f64,
    seed: u64,
}

pub fn train_fingerprint(cfg: &RunConfig) -> [u8; 32] {
    let fp = TrainFingerprint {
        model: cfg.model,
        net: &cfg.net,
        data: &cfg.data,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        eval_split: cfg.eval_split,
        seed: cfg.seed,
    };
    let bytes = serde_json::to_vec(&fp).expect("fingerprint serialization cannot fail");
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(&bytes));
    out
}
