use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::model::{canonical_json, HeadConfig, ModelConfig};
use crate::{Error, Result};

/// Every knob of a training run. Serialized canonically into checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_epochs: Vec<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling applied before each step; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Classification,
            model: ModelConfig::default(),
            epochs: 50,
            batch_size: 4,
            lr0: 0.01,
            decay_factor: 0.1,
            decay_epochs: vec![20, 30],
            momentum: 0.9,
            weight_decay: 0.0,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad(format!("decay_factor must be positive, got {}", self.decay_factor));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("decay_epochs must be strictly ascending, got {:?}", self.decay_epochs));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "need 0 <= momentum < 1 and weight_decay >= 0, got {} and {}",
                self.momentum, self.weight_decay
            ));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return bad(format!("grad_clip must be finite and non-negative, got {}", self.grad_clip));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let head_task = match self.model.head {
            HeadConfig::Classification { .. } => Task::Classification,
            HeadConfig::Segmentation { .. } => Task::Segmentation,
        };
        if head_task != self.task {
            return bad(format!("task {} does not match a {} head", self.task, self.model.head.task_name()));
        }
        Ok(())
    }

    /// Canonical JSON: compact, keys sorted at every level.
    pub fn canonical_json(&self) -> String {
        canonical_json(&serde_json::to_value(self).expect("config serializes"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `lr0 · decay_factor^(number of decay epochs ≤ epoch)`, applied as one
/// multiplication per passed decay epoch (so 0.01 → 0.001 → 0.0001 exactly).
pub fn lr_at(epoch: usize, cfg: &RunConfig) -> f64 {
    cfg.decay_epochs
        .iter()
        .filter(|&&e| e <= epoch)
        .fold(cfg.lr0, |lr, _| lr * cfg.decay_factor)
}
