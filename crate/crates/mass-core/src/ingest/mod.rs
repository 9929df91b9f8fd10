//! Recording ingestion: EDF and CSV parsing, resampling to 100 Hz,
//! 30-second epoch segmentation, label normalization, and the synthetic
//! dataset generator used for desk-scale runs.

mod container;
mod edf;
mod resample;
mod synth;

pub use container::{
    load_record, read_container, read_labels_csv, save_record, write_container, write_labels_csv,
};
pub use edf::{build_annotation_signal, parse_edf, write_edf, EdfCalibration, EdfFile, EdfSignal};
pub use resample::{resample, resample_100hz};
pub use synth::{signature_band_hz, signature_tone_hz, synth_dataset};

use serde::{Deserialize, Serialize};

use crate::error::{MassError, Result};

/// Samples per 30-second epoch at the canonical 100 Hz rate.
pub const SAMPLES_PER_EPOCH: usize = 3000;
/// Canonical sample rate after resampling.
pub const CANONICAL_RATE_HZ: f64 = 100.0;
/// Seconds per sleep epoch.
pub const EPOCH_SECONDS: f64 = 30.0;
/// Wake context kept on each side of the scored sleep region (30 min).
pub const WAKE_CONTEXT_EPOCHS: usize = 60;

/// Sleep stage after normalization (N4 merged into N3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageLabel {
    Wake = 0,
    N1 = 1,
    N2 = 2,
    N3 = 3,
    Rem = 4,
}

/// Number of stage classes.
pub const N_CLASSES: usize = 5;

impl StageLabel {
    pub const ALL: [StageLabel; N_CLASSES] =
        [StageLabel::Wake, StageLabel::N1, StageLabel::N2, StageLabel::N3, StageLabel::Rem];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<StageLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StageLabel::Wake => "W",
            StageLabel::N1 => "N1",
            StageLabel::N2 => "N2",
            StageLabel::N3 => "N3",
            StageLabel::Rem => "REM",
        }
    }
}

impl std::fmt::Display for StageLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalize an annotation label to a stage, merging N4 into N3.
///
/// Returns `None` for unscored content (UNKNOWN, movement, artefacts),
/// which segmentation drops.
pub fn parse_stage_text(text: &str) -> Option<StageLabel> {
    let t = text.trim();
    let t = t.strip_prefix("Sleep stage").map(str::trim).unwrap_or(t);
    match t.to_ascii_uppercase().as_str() {
        "W" | "WAKE" | "0" => Some(StageLabel::Wake),
        "1" | "N1" => Some(StageLabel::N1),
        "2" | "N2" => Some(StageLabel::N2),
        "3" | "N3" => Some(StageLabel::N3),
        "4" | "N4" => Some(StageLabel::N3),
        "R" | "REM" => Some(StageLabel::Rem),
        _ => None,
    }
}

/// One signal channel of a raw recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub samples: Vec<f64>,
    pub rate_hz: f64,
}

/// A stage or event annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub onset_s: f64,
    pub duration_s: f64,
    pub label: String,
}

/// Continuous multi-channel recording with annotations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRecording {
    pub channels: Vec<Channel>,
    pub annotations: Vec<Annotation>,
}

impl RawRecording {
    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn duration_s(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.samples.len() as f64 / c.rate_hz)
            .fold(0.0, f64::max)
    }
}

/// 30-second epochs at 100 Hz with one stage label each.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochedSignal {
    samples: Vec<f64>,
    labels: Vec<StageLabel>,
}

impl EpochedSignal {
    pub fn new(samples: Vec<f64>, labels: Vec<StageLabel>) -> Self {
        assert_eq!(samples.len(), labels.len() * SAMPLES_PER_EPOCH);
        Self { samples, labels }
    }

    pub fn n_epochs(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[StageLabel] {
        &self.labels
    }

    pub fn epoch(&self, i: usize) -> &[f64] {
        &self.samples[i * SAMPLES_PER_EPOCH..(i + 1) * SAMPLES_PER_EPOCH]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Outcome counters for annotation cleanup during segmentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentStats {
    /// Annotations whose onset was snapped to the 30-s grid.
    pub snapped: usize,
    /// Grid cells written more than once by overlapping annotations.
    pub overlaps: usize,
    /// Unscored (UNKNOWN / movement) epochs dropped.
    pub dropped_unscored: usize,
    /// Wake epochs trimmed outside the 30-min context window.
    pub trimmed_wake: usize,
}

/// Segment a recording into labeled 30-s epochs on the given channel.
///
/// The channel is resampled to 100 Hz first. Stage annotations are snapped
/// to the 30-s grid (overlaps resolve to the latest annotation), unscored
/// epochs are dropped, N4 is merged into N3 by label parsing, wake context
/// is trimmed to 30 minutes on each side of the scored sleep region, and a
/// trailing epoch without a full 3000 samples is discarded.
pub fn segment_epochs(rec: &RawRecording, channel: &str) -> Result<(EpochedSignal, SegmentStats)> {
    let ch = rec
        .channel(channel)
        .ok_or_else(|| MassError::ChannelNotFound(channel.to_string()))?;
    let resampled = resample_100hz(&ch.samples, ch.rate_hz)?;

    let mut stats = SegmentStats::default();

    // Hypnogram on the 30-s grid: grid index -> raw label text.
    let mut grid: std::collections::BTreeMap<usize, String> = std::collections::BTreeMap::new();
    for ann in &rec.annotations {
        if parse_stage_text(&ann.label).is_none() && !is_unscored_text(&ann.label) {
            continue; // not a hypnogram entry
        }
        let exact = ann.onset_s / EPOCH_SECONDS;
        let snapped = exact.round();
        if (exact - snapped).abs() > 1e-9 {
            stats.snapped += 1;
        }
        if snapped < 0.0 {
            continue;
        }
        let start = snapped as usize;
        let n = (ann.duration_s / EPOCH_SECONDS).round().max(1.0) as usize;
        for k in 0..n {
            if grid.insert(start + k, ann.label.clone()).is_some() {
                stats.overlaps += 1;
            }
        }
    }
    if grid.is_empty() {
        return Err(MassError::NoScoredEpochs);
    }

    // Ordered (grid index, stage) pairs with unscored entries removed.
    let mut scored: Vec<(usize, StageLabel)> = Vec::with_capacity(grid.len());
    for (idx, text) in &grid {
        match parse_stage_text(text) {
            Some(stage) => scored.push((*idx, stage)),
            None => stats.dropped_unscored += 1,
        }
    }
    if scored.is_empty() {
        return Err(MassError::NoScoredEpochs);
    }

    // Trim wake context to 30 minutes around the scored sleep region. If
    // the recording is all wake there is no sleep region; keep everything.
    let first_sleep = scored.iter().position(|(_, s)| *s != StageLabel::Wake);
    let last_sleep = scored.iter().rposition(|(_, s)| *s != StageLabel::Wake);
    let (keep_from, keep_to) = match (first_sleep, last_sleep) {
        (Some(a), Some(b)) => (a.saturating_sub(WAKE_CONTEXT_EPOCHS), (b + WAKE_CONTEXT_EPOCHS).min(scored.len() - 1)),
        _ => (0, scored.len() - 1),
    };
    stats.trimmed_wake = scored.len() - (keep_to - keep_from + 1);
    let scored = &scored[keep_from..=keep_to];

    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for &(idx, stage) in scored {
        let start = idx * SAMPLES_PER_EPOCH;
        let end = start + SAMPLES_PER_EPOCH;
        if end > resampled.len() {
            break; // trailing partial epoch
        }
        samples.extend_from_slice(&resampled[start..end]);
        labels.push(stage);
    }
    if labels.is_empty() {
        return Err(MassError::NoScoredEpochs);
    }
    Ok((EpochedSignal::new(samples, labels), stats))
}

fn is_unscored_text(text: &str) -> bool {
    let t = text.trim().to_ascii_uppercase();
    t.contains("UNKNOWN") || t.contains("MOVEMENT") || t.contains('?')
}
