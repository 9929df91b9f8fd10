//! Training: objective, optimizer, schedule, and the step loop.

mod lion;
mod losses;
mod schedule;

pub use lion::{lion_step, LionConfig, OptimState};
pub use losses::{
    cosine_loss, stage_ce_loss, total_loss, transition_labels, transition_loss, LossTerms,
    LossWeights,
};
pub use schedule::{lr_at, ScheduleConfig};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MassError, Result};
use crate::masking::{gen_mask, gen_mask_contiguous, MaskPlan};
use crate::model::{forward, MassConfig, MassParams};
use crate::nn::{save_params, Graph};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::spectral::SpectralEpochs;

/// How mask ratios are chosen for each training instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// No masking (everything visible).
    Off,
    /// Fixed ratios, fresh pattern per instance.
    Fixed,
    /// Ratios drawn uniformly from the 0.1-step grid up to the maxima,
    /// fresh pattern per instance.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSampling {
    pub mode: MaskMode,
    pub r_a: f64,
    pub r_e: f64,
    pub r_a_max: f64,
    pub r_e_max: f64,
    /// Mask whole contiguous runs of epochs instead of arbitrary subsets.
    pub contiguous: bool,
}

impl Default for MaskSampling {
    fn default() -> Self {
        Self { mode: MaskMode::Uniform, r_a: 0.5, r_e: 0.2, r_a_max: 0.8, r_e_max: 0.5, contiguous: false }
    }
}

impl MaskSampling {
    /// Draw one plan for a sequence of `e` epochs.
    pub fn sample(&self, e: usize, rng: &mut SplitMix64) -> Result<MaskPlan> {
        let (r_a, r_e) = match self.mode {
            MaskMode::Off => (0.0, 0.0),
            MaskMode::Fixed => (self.r_a, self.r_e),
            MaskMode::Uniform => {
                let a_steps = (self.r_a_max * 10.0).round() as u64;
                let e_steps = (self.r_e_max * 10.0).round() as u64;
                (
                    rng.next_below(a_steps + 1) as f64 / 10.0,
                    rng.next_below(e_steps + 1) as f64 / 10.0,
                )
            }
        };
        let seed = rng.next_u64();
        if self.contiguous {
            gen_mask_contiguous(e, r_a, r_e, seed)
        } else {
            gen_mask(e, r_a, r_e, seed)
        }
    }
}

/// Full training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: MassConfig,
    pub schedule: ScheduleConfig,
    pub weights: LossWeights,
    pub lion: LionConfig,
    pub mask: MaskSampling,
    pub batch_size: usize,
    /// Stop after this many optimizer steps regardless of epoch count.
    pub max_steps: Option<usize>,
    /// Restrict the transition loss to masked epochs.
    pub transition_masked_only: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: MassConfig::default(),
            schedule: ScheduleConfig::default(),
            weights: LossWeights::default(),
            lion: LionConfig::default(),
            mask: MaskSampling::default(),
            batch_size: 8,
            max_steps: None,
            transition_masked_only: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(MassError::Config { key: "batch_size".into(), reason: "must be positive".into() });
        }
        Ok(())
    }
}

/// Fixed-length training sequences cut from epoched records.
#[derive(Debug, Clone)]
pub struct SequenceDataset<S: Scalar> {
    sequences: Vec<SpectralEpochs<S>>,
}

impl<S: Scalar> SequenceDataset<S> {
    /// Non-overlapping windows of `e` consecutive epochs per record; a
    /// final window shorter than `e` is dropped.
    pub fn from_records(records: &[SpectralEpochs<S>], e: usize) -> Self {
        let mut sequences = Vec::new();
        for rec in records {
            let mut start = 0;
            while start + e <= rec.n_epochs() {
                sequences.push(rec.window(start, e));
                start += e;
            }
        }
        Self { sequences }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &SpectralEpochs<S> {
        &self.sequences[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SpectralEpochs<S>> {
        self.sequences.iter()
    }
}

/// One logged optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss_ce: f64,
    pub loss_cos: f64,
    pub loss_trans: f64,
    pub loss_total: f64,
}

/// Trained parameters plus the per-step loss curve.
#[derive(Debug)]
pub struct TrainOutcome<S: Scalar> {
    pub params: MassParams<S>,
    pub log: Vec<StepLog>,
}

/// Run the training loop. When `out_dir` is given, writes
/// `loss_curve.csv` plus one `ckpt_epoch{N}` checkpoint per epoch.
///
/// Deterministic for a fixed seed: batch order, mask plans, dropout, and
/// init all derive from named substreams of `cfg.seed`.
pub fn train<S: Scalar>(
    dataset: &SequenceDataset<S>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(MassError::InvalidArg("training dataset has no sequences".into()));
    }

    let mut params = MassParams::<S>::init(cfg.model, cfg.seed)?;
    let mut opt = OptimState::new(&params.store);
    let mut shuffle_rng = SplitMix64::substream(cfg.seed, 0x5348);
    let mut mask_rng = SplitMix64::substream(cfg.seed, 0x4d41);
    let mut drop_rng = SplitMix64::substream(cfg.seed, 0x4452);

    let mut csv = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("loss_curve.csv"))?);
            writeln!(w, "step,epoch,lr,loss_ce,loss_cos,loss_trans,loss_total")?;
            Some(w)
        }
        None => None,
    };

    let mut log = Vec::new();
    let mut step = 0usize;
    let n = dataset.len();

    'epochs: for epoch in 0..cfg.schedule.total_epochs {
        let lr = lr_at(epoch, &cfg.schedule);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = shuffle_rng.next_below((i + 1) as u64) as usize;
            order.swap(i, j);
        }

        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let bind = params.store.bind(&mut g);
            let mut term_values = [0.0f64; 4];
            let mut totals = Vec::with_capacity(batch.len());
            for &seq_idx in batch {
                let seq = dataset.sequence(seq_idx);
                let plan = cfg.mask.sample(cfg.model.e, &mut mask_rng)?;
                let out = forward(&mut g, &bind, &params, seq, &plan, true, &mut drop_rng)?;
                let scope: Option<Vec<usize>> = if cfg.transition_masked_only {
                    let masked: Vec<usize> =
                        (0..cfg.model.e).filter(|i| !plan.is_epoch_visible(*i)).collect();
                    if masked.is_empty() { None } else { Some(masked) }
                } else {
                    None
                };
                let terms = total_loss(
                    &mut g,
                    out.stage_logits,
                    out.transition_logits,
                    seq.labels(),
                    &cfg.weights,
                    scope.as_deref(),
                );
                term_values[0] += g.scalar_value(terms.ce).to_f64_c();
                term_values[1] += g.scalar_value(terms.cos).to_f64_c();
                term_values[2] += g.scalar_value(terms.trans).to_f64_c();
                term_values[3] += g.scalar_value(terms.total).to_f64_c();
                totals.push(terms.total);
            }
            let inv_b = S::one() / S::from_usize_c(totals.len());
            let sum = totals[1..].iter().fold(totals[0], |acc, &t| g.add(acc, t));
            let batch_loss = g.scale(sum, inv_b);

            let loss_value = g.scalar_value(batch_loss).to_f64_c();
            if !loss_value.is_finite() {
                return Err(MassError::NonFiniteLoss { step, value: loss_value });
            }
            let grads = g.backward(batch_loss)?;
            lion_step(&mut params.store, &grads, &bind, &mut opt, &cfg.lion, lr)
                .map_err(|_| MassError::NonFiniteLoss { step, value: loss_value })?;

            let b = batch.len() as f64;
            let entry = StepLog {
                step,
                epoch,
                lr,
                loss_ce: term_values[0] / b,
                loss_cos: term_values[1] / b,
                loss_trans: term_values[2] / b,
                loss_total: term_values[3] / b,
            };
            if let Some(w) = csv.as_mut() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    entry.step, entry.epoch, entry.lr, entry.loss_ce, entry.loss_cos,
                    entry.loss_trans, entry.loss_total
                )?;
            }
            log.push(entry);
            step += 1;
            if cfg.max_steps.is_some_and(|m| step >= m) {
                if let Some(dir) = out_dir {
                    save_params(&dir.join(format!("ckpt_epoch{epoch}")), &params.store)?;
                }
                break 'epochs;
            }
        }

        if let Some(dir) = out_dir {
            save_params(&dir.join(format!("ckpt_epoch{epoch}")), &params.store)?;
        }
    }

    if let Some(w) = csv.as_mut() {
        w.flush()?;
    }
    Ok(TrainOutcome { params, log })
}
