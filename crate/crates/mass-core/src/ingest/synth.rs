//! Synthetic dataset generator for desk-scale runs.
//!
//! Every stage class gets a distinct spectral signature: a dominant tone
//! in its own frequency band (delta/theta/alpha/sigma/beta) over a low
//! white-noise floor. Stage sequences follow a Markov chain with high
//! self-transition probability so transition labels are nontrivial.
//! Generation is fully deterministic given the seed.

use crate::ingest::{EpochedSignal, StageLabel, SAMPLES_PER_EPOCH};
use crate::rng::SplitMix64;

/// Dominant tone of each stage class (Hz).
pub fn signature_tone_hz(stage: StageLabel) -> f64 {
    match stage {
        StageLabel::Wake => 22.0, // beta
        StageLabel::N1 => 10.0,   // alpha
        StageLabel::N2 => 14.0,   // sigma
        StageLabel::N3 => 2.0,    // delta
        StageLabel::Rem => 6.0,   // theta
    }
}

/// Signature band of each class: tone +/- 2 Hz.
pub fn signature_band_hz(stage: StageLabel) -> (f64, f64) {
    let f = signature_tone_hz(stage);
    (f - 2.0, f + 2.0)
}

const TONE_AMPLITUDE: f64 = 1.0;
const NOISE_SIGMA: f64 = 0.05;

// Row-stochastic stage transition matrix (rows: from, cols: to), strictly
// positive so every class appears in long runs. Self-transition mass sits
// near 0.85, giving stage bouts of a handful of epochs the way real
// hypnograms do; masked epochs then stay inferable from their neighbors.
const TRANSITIONS: [[f64; 5]; 5] = [
    [0.86, 0.09, 0.02, 0.01, 0.02], // W
    [0.04, 0.82, 0.10, 0.01, 0.03], // N1
    [0.02, 0.04, 0.84, 0.07, 0.03], // N2
    [0.01, 0.01, 0.09, 0.87, 0.02], // N3
    [0.03, 0.04, 0.06, 0.01, 0.86], // REM
];

/// Generate `n_records` independent records of `e_per_record` epochs each.
pub fn synth_dataset(seed: u64, n_records: usize, e_per_record: usize) -> Vec<EpochedSignal> {
    assert!(n_records >= 1, "need at least one record");
    assert!(e_per_record >= 3, "need at least three epochs per record");
    (0..n_records)
        .map(|r| synth_record(SplitMix64::substream(seed, r as u64), e_per_record))
        .collect()
}

fn synth_record(mut rng: SplitMix64, e: usize) -> EpochedSignal {
    let mut labels = Vec::with_capacity(e);
    let mut stage = StageLabel::Wake;
    for _ in 0..e {
        labels.push(stage);
        stage = next_stage(stage, rng.next_f64());
    }

    let mut samples = Vec::with_capacity(e * SAMPLES_PER_EPOCH);
    for &label in &labels {
        let tone = signature_tone_hz(label);
        let phase = rng.next_f64() * std::f64::consts::TAU;
        for k in 0..SAMPLES_PER_EPOCH {
            let t = k as f64 / 100.0;
            let x = TONE_AMPLITUDE * (std::f64::consts::TAU * tone * t + phase).sin()
                + NOISE_SIGMA * rng.next_gaussian();
            samples.push(x);
        }
    }
    EpochedSignal::new(samples, labels)
}

fn next_stage(from: StageLabel, u: f64) -> StageLabel {
    let row = &TRANSITIONS[from.index()];
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return StageLabel::from_index(i).unwrap();
        }
    }
    StageLabel::Rem
}
