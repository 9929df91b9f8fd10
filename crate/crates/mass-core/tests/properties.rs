//! Property tests for the pipeline's structural invariants.

use proptest::prelude::*;

use mass_core::error::MassError;
use mass_core::ingest::StageLabel;
use mass_core::masking::{
    gen_mask, power_estimate, signal_integrity, AmplifierSpec, PATCHES_PER_EPOCH,
};
use mass_core::spectral::hamming_window;
use mass_core::train::transition_labels;

proptest! {
    #[test]
    fn mask_counts_match_floor_formulas(
        e in 1usize..=64,
        ka in 0usize..10,
        ke in 0usize..10,
        seed in any::<u64>(),
    ) {
        let r_a = ka as f64 / 10.0;
        let r_e = ke as f64 / 10.0;
        let want_epochs = e * (10 - ke) / 10;
        let want_patches = PATCHES_PER_EPOCH * (10 - ka) / 10;
        match gen_mask(e, r_a, r_e, seed) {
            Ok(plan) => {
                prop_assert_eq!(plan.visible_epochs.len(), want_epochs);
                for patches in plan.visible_patches.values() {
                    prop_assert_eq!(patches.len(), want_patches);
                }
                prop_assert_eq!(plan.visible_patches.len(), plan.visible_epochs.len());
                // sorted, in-range, unique
                prop_assert!(plan.visible_epochs.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(plan.visible_epochs.iter().all(|&i| i < e));
                // deterministic
                let again = gen_mask(e, r_a, r_e, seed).unwrap();
                prop_assert_eq!(plan, again);
            }
            Err(MassError::DegenerateMask(_)) => {
                prop_assert!(want_epochs == 0 || want_patches == 0);
            }
            Err(other) => return Err(TestCaseError::fail(format!("unexpected: {other}"))),
        }
    }

    #[test]
    fn power_is_affine_between_endpoints(
        normal in 1.0f64..100.0,
        standby_frac in 0.01f64..0.99,
        integrity in 0.0f64..=1.0,
    ) {
        let standby = normal * standby_frac;
        let amp = AmplifierSpec::new("t", normal, standby);
        let p = power_estimate(&amp, integrity);
        prop_assert!(p >= standby - 1e-12 && p <= normal + 1e-12);
        let direct = integrity * normal + (1.0 - integrity) * standby;
        prop_assert!((p - direct).abs() < 1e-12);
    }

    #[test]
    fn integrity_is_symmetric_and_bounded(ra in 0.0f64..=1.0, re in 0.0f64..=1.0) {
        let s = signal_integrity(ra, re);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, signal_integrity(re, ra));
    }

    #[test]
    fn hamming_window_is_symmetric(n in 2usize..512) {
        let w = hamming_window::<f64>(n).unwrap();
        prop_assert_eq!(w.len(), n);
        for k in 0..n {
            prop_assert!((w[k] - w[n - 1 - k]).abs() < 1e-12);
            prop_assert!(w[k] > 0.0 && w[k] <= 1.0);
        }
    }

    #[test]
    fn transition_labels_flag_exactly_the_unstable_epochs(
        stages in prop::collection::vec(0usize..5, 1..40),
    ) {
        let stages: Vec<StageLabel> =
            stages.into_iter().map(|i| StageLabel::from_index(i).unwrap()).collect();
        let flags = transition_labels(&stages);
        prop_assert_eq!(flags.len(), stages.len());
        let n = stages.len();
        for i in 0..n {
            let left_ok = i == 0 || stages[i - 1] == stages[i];
            let right_ok = i + 1 == n || stages[i + 1] == stages[i];
            prop_assert_eq!(flags[i] == 0, left_ok && right_ok, "epoch {}", i);
        }
    }

    #[test]
    fn metrics_survive_class_relabeling(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 10..200),
        shift in 1usize..5,
    ) {
        use mass_core::eval::{metrics, score};
        let preds: Vec<StageLabel> =
            pairs.iter().map(|(p, _)| StageLabel::from_index(*p).unwrap()).collect();
        let truth: Vec<StageLabel> =
            pairs.iter().map(|(_, t)| StageLabel::from_index(*t).unwrap()).collect();
        let base = metrics(&score(&preds, &truth).unwrap());

        let perm = |s: &StageLabel| StageLabel::from_index((s.index() + shift) % 5).unwrap();
        let p2: Vec<StageLabel> = preds.iter().map(perm).collect();
        let t2: Vec<StageLabel> = truth.iter().map(perm).collect();
        let moved = metrics(&score(&p2, &t2).unwrap());

        prop_assert!((base.acc - moved.acc).abs() < 1e-12);
        prop_assert!((base.mf1 - moved.mf1).abs() < 1e-12);
        prop_assert!((base.kappa - moved.kappa).abs() < 1e-12);
        prop_assert!((base.mgm - moved.mgm).abs() < 1e-12);
    }
}
