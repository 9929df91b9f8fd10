//! Confusion-matrix metrics, efficiency ratios, and the mask-ratio sweep.

use std::time::Instant;

use serde::Serialize;

use crate::error::{MassError, Result};
use crate::ingest::{StageLabel, N_CLASSES};
use crate::masking::{gen_mask, power_estimate, signal_integrity, AmplifierSpec};
use crate::model::{forward, predictions, MassParams};
use crate::nn::Graph;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::train::SequenceDataset;

/// Confusion counts, rows = true stage, cols = predicted stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, truth: StageLabel, pred: StageLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, t: usize) -> u64 {
        self.counts[t].iter().sum()
    }

    pub fn col_sum(&self, p: usize) -> u64 {
        (0..N_CLASSES).map(|t| self.counts[t][p]).sum()
    }
}

/// Tally predictions against ground truth.
pub fn score(preds: &[StageLabel], truth: &[StageLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() || preds.is_empty() {
        return Err(MassError::LengthMismatch(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::new();
    for (&p, &t) in preds.iter().zip(truth) {
        cm.add(t, p);
    }
    Ok(cm)
}

/// Derived classification metrics, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub acc: f64,
    pub per_class_f1: [f64; N_CLASSES],
    pub mf1: f64,
    pub kappa: f64,
    pub mgm: f64,
}

/// Compute accuracy, per-class F1, macro F1, Cohen's kappa, and the macro
/// geometric mean of sensitivity and specificity.
///
/// Degenerate classes (no support and no predictions) contribute 0 to the
/// averaged scores.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let total = cm.total();
    assert!(total > 0, "metrics need at least one scored epoch");
    let total_f = total as f64;
    let acc = cm.trace() as f64 / total_f;

    let mut per_class_f1 = [0.0; N_CLASSES];
    let mut mgm_sum = 0.0;
    for c in 0..N_CLASSES {
        let tp = cm.count(c, c) as f64;
        let fp = cm.col_sum(c) as f64 - tp;
        let fneg = cm.row_sum(c) as f64 - tp;
        let tn = total_f - tp - fp - fneg;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        per_class_f1[c] = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let sensitivity = recall;
        let specificity = if tn + fp > 0.0 { tn / (tn + fp) } else { 0.0 };
        mgm_sum += (sensitivity * specificity).sqrt();
    }
    let mf1 = per_class_f1.iter().sum::<f64>() / N_CLASSES as f64;
    let mgm = mgm_sum / N_CLASSES as f64;

    let p_e = (0..N_CLASSES)
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (total_f * total_f);
    let kappa = if (1.0 - p_e).abs() < 1e-15 {
        if (acc - 1.0).abs() < 1e-15 {
            1.0
        } else {
            0.0
        }
    } else {
        (acc - p_e) / (1.0 - p_e)
    };

    Metrics { acc, per_class_f1, mf1, kappa, mgm }
}

/// Efficiency ratios: accuracy (%) per million parameters and per
/// millisecond of inference time per epoch.
pub fn efficiency(acc: f64, param_count: usize, infer_seconds_per_epoch: f64) -> Result<(f64, f64)> {
    if param_count == 0 || infer_seconds_per_epoch <= 0.0 {
        return Err(MassError::InvalidArg("efficiency needs positive denominators".into()));
    }
    let acc_percent = acc * 100.0;
    let params_m = param_count as f64 / 1e6;
    let time_ms = infer_seconds_per_epoch * 1e3;
    Ok((acc_percent / params_m, acc_percent / time_ms))
}

/// Evaluation of one mask-ratio cell.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub r_a: f64,
    pub r_e: f64,
    pub integrity: f64,
    pub n_epochs: usize,
    pub acc: f64,
    pub per_class_f1: [f64; N_CLASSES],
    pub mf1: f64,
    pub kappa: f64,
    pub mgm: f64,
    pub eta_p: f64,
    pub eta_t: f64,
    pub infer_ms_per_epoch: f64,
    pub param_count: usize,
    /// Duty-cycled power estimate per reference amplifier, in mW.
    pub power_mw: Vec<(String, f64)>,
}

/// Predict every sequence of `dataset` under masks at (r_a, r_e) drawn
/// from `eval_seed` (one substream per sequence), argmax over stage
/// logits. Returns predictions, truths, and inference seconds per epoch.
pub fn evaluate<S: Scalar>(
    params: &MassParams<S>,
    dataset: &SequenceDataset<S>,
    r_a: f64,
    r_e: f64,
    eval_seed: u64,
) -> Result<(Vec<StageLabel>, Vec<StageLabel>, f64)> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut rng = SplitMix64::new(0); // dropout never fires with train=false
    let start = Instant::now();
    for (i, seq) in dataset.iter().enumerate() {
        let plan_seed = SplitMix64::substream(eval_seed, i as u64).next_u64();
        let plan = gen_mask(params.config.e, r_a, r_e, plan_seed)?;
        let mut g = Graph::new();
        let bind = params.store.bind(&mut g);
        let out = forward(&mut g, &bind, params, seq, &plan, false, &mut rng)?;
        for idx in predictions(&g, &out) {
            preds.push(StageLabel::from_index(idx).expect("class index in range"));
        }
        truths.extend_from_slice(seq.labels());
    }
    let secs_per_epoch = start.elapsed().as_secs_f64() / preds.len().max(1) as f64;
    Ok((preds, truths, secs_per_epoch))
}

/// Evaluate one (r_a, r_e) cell into a full report.
pub fn eval_report<S: Scalar>(
    params: &MassParams<S>,
    dataset: &SequenceDataset<S>,
    r_a: f64,
    r_e: f64,
    eval_seed: u64,
) -> Result<EvalReport> {
    let (preds, truths, secs_per_epoch) = evaluate(params, dataset, r_a, r_e, eval_seed)?;
    let cm = score(&preds, &truths)?;
    let m = metrics(&cm);
    let (eta_p, eta_t) = efficiency(m.acc, params.param_count(), secs_per_epoch)?;
    let integrity = signal_integrity(r_a, r_e);
    let power_mw = AmplifierSpec::reference_set()
        .into_iter()
        .map(|amp| {
            let p = power_estimate(&amp, integrity);
            (amp.name, p)
        })
        .collect();
    Ok(EvalReport {
        r_a,
        r_e,
        integrity,
        n_epochs: truths.len(),
        acc: m.acc,
        per_class_f1: m.per_class_f1,
        mf1: m.mf1,
        kappa: m.kappa,
        mgm: m.mgm,
        eta_p,
        eta_t,
        infer_ms_per_epoch: secs_per_epoch * 1e3,
        param_count: params.param_count(),
        power_mw,
    })
}

/// The 9 x 6 ratio grid used by the sweep.
pub fn default_sweep_grid() -> (Vec<f64>, Vec<f64>) {
    let r_a: Vec<f64> = (0..=8).map(|k| k as f64 / 10.0).collect();
    let r_e: Vec<f64> = (0..=5).map(|k| k as f64 / 10.0).collect();
    (r_a, r_e)
}

/// Evaluate every grid cell. Cells run on up to `threads` workers; each
/// cell is seeded independently so the result is identical at any worker
/// count. Row-major over (r_e, r_a).
pub fn mask_sweep<S: Scalar>(
    params: &MassParams<S>,
    dataset: &SequenceDataset<S>,
    grid_a: &[f64],
    grid_e: &[f64],
    eval_seed: u64,
    threads: usize,
) -> Result<Vec<EvalReport>> {
    let cells: Vec<(usize, f64, f64)> = grid_e
        .iter()
        .enumerate()
        .flat_map(|(i, &re)| {
            grid_a.iter().enumerate().map(move |(j, &ra)| (i * grid_a.len() + j, ra, re))
        })
        .collect();
    let workers = threads.max(1).min(cells.len());
    let mut results: Vec<Option<EvalReport>> = vec![None; cells.len()];
    if workers == 1 {
        for &(idx, ra, re) in &cells {
            results[idx] = Some(eval_report(params, dataset, ra, re, eval_seed)?);
        }
    } else {
        let chunks: Vec<Vec<(usize, f64, f64)>> =
            (0..workers).map(|w| cells.iter().copied().skip(w).step_by(workers).collect()).collect();
        let outcomes: Vec<Result<Vec<(usize, EvalReport)>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|(idx, ra, re)| {
                                eval_report(params, dataset, ra, re, eval_seed).map(|r| (idx, r))
                            })
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for outcome in outcomes {
            for (idx, report) in outcome? {
                results[idx] = Some(report);
            }
        }
    }
    Ok(results.into_iter().map(|r| r.expect("all cells evaluated")).collect())
}

/// CSV emission: one row per grid cell, header first. Column order is
/// fixed and documented in the README.
pub fn sweep_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "r_a,r_e,integrity,acc,mf1,kappa,mgm,f1_w,f1_n1,f1_n2,f1_n3,f1_rem,\
         eta_p,eta_t,infer_ms_per_epoch,n_epochs",
    );
    for amp in AmplifierSpec::reference_set() {
        out.push_str(&format!(",power_{}_mw", amp.name.to_ascii_lowercase().replace('-', "_")));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.r_a,
            r.r_e,
            r.integrity,
            r.acc,
            r.mf1,
            r.kappa,
            r.mgm,
            r.per_class_f1[0],
            r.per_class_f1[1],
            r.per_class_f1[2],
            r.per_class_f1[3],
            r.per_class_f1[4],
            r.eta_p,
            r.eta_t,
            r.infer_ms_per_epoch,
            r.n_epochs
        ));
        for (_, p) in &r.power_mw {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    out
}

/// Accuracy grid in percent, rows r_e and columns r_a, matching the
/// sweep-table layout.
pub fn sweep_grid_text(reports: &[EvalReport], grid_a: &[f64], grid_e: &[f64]) -> String {
    let mut out = String::from("acc%  ");
    for ra in grid_a {
        out.push_str(&format!("r_a={ra:<5.1} "));
    }
    out.push('\n');
    for (i, re) in grid_e.iter().enumerate() {
        out.push_str(&format!("r_e={re:<3.1} "));
        for j in 0..grid_a.len() {
            let r = &reports[i * grid_a.len() + j];
            out.push_str(&format!("{:<9.2} ", r.acc * 100.0));
        }
        out.push('\n');
    }
    out
}
