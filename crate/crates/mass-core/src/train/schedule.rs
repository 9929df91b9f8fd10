//! Learning-rate schedule: linear warmup to the peak, cosine decay to the
//! floor.

use serde::{Deserialize, Serialize};

use crate::error::{MassError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { total_epochs: 100, warmup_epochs: 10, peak_lr: 1e-4, min_lr: 1e-6 }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs >= self.total_epochs {
            return Err(MassError::Config {
                key: "warmup_epochs".into(),
                reason: format!("{} must be below total_epochs {}", self.warmup_epochs, self.total_epochs),
            });
        }
        if self.min_lr >= self.peak_lr {
            return Err(MassError::Config {
                key: "min_lr".into(),
                reason: format!("{} must be below peak_lr {}", self.min_lr, self.peak_lr),
            });
        }
        Ok(())
    }
}

/// Learning rate at a training epoch: `peak * epoch / warmup` during
/// warmup, then `min + (peak - min) * (1 + cos(pi * t)) / 2` with `t`
/// the fraction of the decay phase elapsed.
pub fn lr_at(epoch: usize, cfg: &ScheduleConfig) -> f64 {
    if epoch < cfg.warmup_epochs {
        return cfg.peak_lr * epoch as f64 / cfg.warmup_epochs as f64;
    }
    if epoch >= cfg.total_epochs {
        return cfg.min_lr;
    }
    let t = (epoch - cfg.warmup_epochs) as f64 / (cfg.total_epochs - cfg.warmup_epochs) as f64;
    cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}
