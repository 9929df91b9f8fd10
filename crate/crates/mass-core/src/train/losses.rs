//! Transition labels and the three-term training objective:
//! cross-entropy + cosine distance for staging, binary cross-entropy for
//! transition prediction, combined as `CE + l1*Cos + l2*Trans`.

use serde::{Deserialize, Serialize};

use crate::ingest::StageLabel;
use crate::nn::{Graph, NodeId};
use crate::scalar::Scalar;

/// Loss term weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_cos: f64,
    pub lambda_trans: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cos: 2.0, lambda_trans: 0.5 }
    }
}

/// Binary transition flags: an epoch is stable (0) when its stage equals
/// both neighbors; boundary epochs compare only the neighbor that exists.
pub fn transition_labels(stages: &[StageLabel]) -> Vec<u8> {
    let n = stages.len();
    assert!(n >= 1, "transition labels need at least one epoch");
    (0..n)
        .map(|i| {
            let left_ok = i == 0 || stages[i - 1] == stages[i];
            let right_ok = i + 1 == n || stages[i + 1] == stages[i];
            u8::from(!(left_ok && right_ok))
        })
        .collect()
}

/// Mean cross-entropy: `-log softmax(logits)[label]` averaged over epochs.
pub fn stage_ce_loss<S: Scalar>(g: &mut Graph<S>, logits: NodeId, labels: &[StageLabel]) -> NodeId {
    let (e, classes) = g.shape(logits);
    assert_eq!(e, labels.len(), "one label per epoch");
    let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    assert!(idx.iter().all(|&i| i < classes), "label out of range");
    let logp = g.log_softmax_rows(logits);
    let picked = g.gather_cols(logp, &idx);
    let mean = g.mean_all(picked);
    g.scale(mean, -S::one())
}

/// Mean cosine distance between softmax probabilities and the one-hot
/// target: `1 - p[label] / ||p||_2` averaged over epochs.
pub fn cosine_loss<S: Scalar>(g: &mut Graph<S>, logits: NodeId, labels: &[StageLabel]) -> NodeId {
    let (e, _) = g.shape(logits);
    assert_eq!(e, labels.len(), "one label per epoch");
    let idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let probs = g.softmax_rows(logits);
    let picked = g.gather_cols(probs, &idx);
    let sq = g.mul(probs, probs);
    let norm_sq = g.sum_rows(sq);
    let norm = g.sqrt(norm_sq);
    let cos = g.div(picked, norm);
    let ones = g.ones(e, 1);
    let dist = g.sub(ones, cos);
    g.mean_all(dist)
}

/// Mean binary cross-entropy on transition logits. Computed through a
/// two-class log-softmax over `[0, x]`, which is the numerically stable
/// log-sigmoid pair. `scope` restricts the average to the given epoch
/// indices when present.
pub fn transition_loss<S: Scalar>(
    g: &mut Graph<S>,
    transition_logits: NodeId,
    labels: &[u8],
    scope: Option<&[usize]>,
) -> NodeId {
    let (e, one) = g.shape(transition_logits);
    assert_eq!(one, 1, "transition logits are a column");
    assert_eq!(e, labels.len(), "one transition label per epoch");
    let (logits, idx): (NodeId, Vec<usize>) = match scope {
        None => (transition_logits, labels.iter().map(|&b| b as usize).collect()),
        Some(epochs) => {
            assert!(!epochs.is_empty(), "empty transition scope");
            let rows: Vec<NodeId> =
                epochs.iter().map(|&i| g.slice_rows(transition_logits, i, 1)).collect();
            let cat = g.concat_rows(&rows);
            (cat, epochs.iter().map(|&i| labels[i] as usize).collect())
        }
    };
    let (rows, _) = g.shape(logits);
    let zeros = g.zeros(rows, 1);
    let two_class = g.concat_cols(&[zeros, logits]);
    let logp = g.log_softmax_rows(two_class);
    let picked = g.gather_cols(logp, &idx);
    let mean = g.mean_all(picked);
    g.scale(mean, -S::one())
}

/// All four loss nodes of one sequence.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub ce: NodeId,
    pub cos: NodeId,
    pub trans: NodeId,
    pub total: NodeId,
}

/// Combine the three terms: `CE + l1*Cos + l2*Trans`.
pub fn total_loss<S: Scalar>(
    g: &mut Graph<S>,
    stage_logits: NodeId,
    transition_logits: NodeId,
    stages: &[StageLabel],
    weights: &LossWeights,
    transition_scope: Option<&[usize]>,
) -> LossTerms {
    let ce = stage_ce_loss(g, stage_logits, stages);
    let cos = cosine_loss(g, stage_logits, stages);
    let t_labels = transition_labels(stages);
    let trans = transition_loss(g, transition_logits, &t_labels, transition_scope);
    let cos_w = g.scale(cos, S::from_f64_c(weights.lambda_cos));
    let trans_w = g.scale(trans, S::from_f64_c(weights.lambda_trans));
    let partial = g.add(ce, cos_w);
    let total = g.add(partial, trans_w);
    LossTerms { ce, cos, trans, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use StageLabel::{N1, N2, Rem, Wake as W};

    #[test]
    fn transition_labels_examples() {
        assert_eq!(transition_labels(&[N2, N2, N2, N2]), vec![0, 0, 0, 0]);
        assert_eq!(transition_labels(&[W, N1, N1]), vec![1, 1, 0]);
        assert_eq!(transition_labels(&[W]), vec![0]);
        assert_eq!(transition_labels(&[W, N1]), vec![1, 1]);
    }

    #[test]
    fn transition_labels_match_exhaustive_triples() {
        // Brute force over all 125 interior triples: the middle epoch is
        // stable iff all three stages agree.
        for a in StageLabel::ALL {
            for b in StageLabel::ALL {
                for c in StageLabel::ALL {
                    let got = transition_labels(&[a, b, c]);
                    let want_mid = u8::from(!(a == b && b == c));
                    assert_eq!(got[1], want_mid, "triple {a} {b} {c}");
                }
            }
        }
    }

    #[test]
    fn uniform_logits_give_ln5() {
        let mut g = Graph::<f64>::new();
        let logits = g.constant(3, 5, vec![0.7; 15]);
        let ce = stage_ce_loss(&mut g, logits, &[W, N1, N2]);
        assert!((g.scalar_value(ce) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_probs_give_zero_cosine() {
        let mut g = Graph::<f64>::new();
        // saturated logits approximate a one-hot softmax
        let mut data = vec![-60.0; 10];
        data[0] = 60.0; // row 0 -> class 0
        data[5 + 3] = 60.0; // row 1 -> class 3
        let logits = g.constant(2, 5, data);
        let cos = cosine_loss(&mut g, logits, &[W, StageLabel::N3]);
        assert!(g.scalar_value(cos).abs() < 1e-9);
    }

    #[test]
    fn uniform_probs_cosine_distance() {
        let mut g = Graph::<f64>::new();
        let logits = g.constant(1, 5, vec![0.0; 5]);
        let cos = cosine_loss(&mut g, logits, &[N2]);
        let want = 1.0 - 1.0 / 5f64.sqrt();
        assert!((g.scalar_value(cos) - want).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_reduce_total_to_ce() {
        let mut g = Graph::<f64>::new();
        let mut rng = crate::rng::SplitMix64::new(5);
        let stage: Vec<f64> = (0..20).map(|_| rng.next_gaussian()).collect();
        let trans: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
        let stage_logits = g.constant(4, 5, stage);
        let trans_logits = g.constant(4, 1, trans);
        let weights = LossWeights { lambda_cos: 0.0, lambda_trans: 0.0 };
        let terms =
            total_loss(&mut g, stage_logits, trans_logits, &[W, W, N1, Rem], &weights, None);
        assert_eq!(g.scalar_value(terms.total), g.scalar_value(terms.ce));
    }

    #[test]
    fn saturated_perfect_predictions_drive_total_to_zero() {
        let mut g = Graph::<f64>::new();
        let stages = [W, W, N1, N1];
        let t = transition_labels(&stages); // [0, 1, 1, 0]
        let mut stage_data = vec![-80.0; 20];
        for (i, s) in stages.iter().enumerate() {
            stage_data[i * 5 + s.index()] = 80.0;
        }
        let trans_data: Vec<f64> = t.iter().map(|&b| if b == 1 { 80.0 } else { -80.0 }).collect();
        let stage_logits = g.constant(4, 5, stage_data);
        let trans_logits = g.constant(4, 1, trans_data);
        let terms = total_loss(
            &mut g,
            stage_logits,
            trans_logits,
            &stages,
            &LossWeights::default(),
            None,
        );
        assert!(g.scalar_value(terms.total) < 1e-9);
    }

    /// Plain-f64 re-implementation of all three terms.
    fn scalar_total(
        stage: &[f64],
        trans: &[f64],
        stages: &[StageLabel],
        w: &LossWeights,
    ) -> (f64, f64, f64, f64) {
        let e = stages.len();
        let mut ce = 0.0;
        let mut cos = 0.0;
        for i in 0..e {
            let row = &stage[i * 5..(i + 1) * 5];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let p: Vec<f64> = exps.iter().map(|v| v / z).collect();
            ce -= p[stages[i].index()].ln();
            let norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            cos += 1.0 - p[stages[i].index()] / norm;
        }
        ce /= e as f64;
        cos /= e as f64;
        let labels = transition_labels(stages);
        let mut bce = 0.0;
        for i in 0..e {
            let x = trans[i];
            let y = labels[i] as f64;
            bce += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        }
        bce /= e as f64;
        (ce, cos, bce, ce + w.lambda_cos * cos + w.lambda_trans * bce)
    }

    #[test]
    fn total_matches_scalar_reference() {
        let mut rng = crate::rng::SplitMix64::new(9);
        for trial in 0..5 {
            let stages = [W, N1, N2, N2, Rem, N1];
            let stage: Vec<f64> = (0..30).map(|_| rng.next_gaussian() * 2.0).collect();
            let trans: Vec<f64> = (0..6).map(|_| rng.next_gaussian() * 2.0).collect();
            let w = LossWeights::default();
            let (ce, cos, bce, total) = scalar_total(&stage, &trans, &stages, &w);
            let mut g = Graph::<f64>::new();
            let sl = g.constant(6, 5, stage);
            let tl = g.constant(6, 1, trans);
            let terms = total_loss(&mut g, sl, tl, &stages, &w, None);
            assert!((g.scalar_value(terms.ce) - ce).abs() < 1e-8, "trial {trial} ce");
            assert!((g.scalar_value(terms.cos) - cos).abs() < 1e-8, "trial {trial} cos");
            assert!((g.scalar_value(terms.trans) - bce).abs() < 1e-8, "trial {trial} bce");
            assert!((g.scalar_value(terms.total) - total).abs() < 1e-8, "trial {trial} total");
        }
    }

    #[test]
    fn masked_scope_restricts_the_average() {
        let mut g = Graph::<f64>::new();
        let logits = g.constant(4, 1, vec![3.0, -44.0, 55.0, 1.0]);
        let labels = [1u8, 0, 1, 0];
        // scope keeps only rows 0 and 3
        let scoped = transition_loss(&mut g, logits, &labels, Some(&[0, 3]));
        let x0: f64 = 3.0;
        let x3: f64 = 1.0;
        let want = ((x0.max(0.0) - x0 + (-x0.abs()).exp().ln_1p())
            + (x3.max(0.0) + (-x3.abs()).exp().ln_1p()))
            / 2.0;
        assert!((g.scalar_value(scoped) - want).abs() < 1e-10);
    }
}
