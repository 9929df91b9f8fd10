//! Dataset directory handling shared by the train/eval/sweep commands.
//!
//! A dataset directory holds one record per stem: `<stem>.csv` (signal
//! container) plus `<stem>.labels.csv`, and optionally `<stem>.msf` (the
//! binary feature cache). When the cache is present it is used directly
//! and the raw container is not re-featurized.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mass_core::ingest::{load_record, read_labels_csv};
use mass_core::spectral::{featurize, read_cache, SpectralEpochs};
use mass_core::train::SequenceDataset;
use mass_core::Real;

/// Record stems in a dataset directory, sorted for determinism.
pub fn record_stems(dir: &Path) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_suffix(".labels.csv") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    if stems.is_empty() {
        bail!("no records found in {} (expected <stem>.labels.csv files)", dir.display());
    }
    Ok(stems)
}

fn labels_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.labels.csv"))
}

/// Load and featurize every record in the directory.
pub fn load_features(dir: &Path) -> Result<Vec<SpectralEpochs<Real>>> {
    let mut out = Vec::new();
    for stem in record_stems(dir)? {
        let cache = dir.join(format!("{stem}.msf"));
        let feats = if cache.exists() {
            let labels = read_labels_csv(&labels_path(dir, &stem))?;
            read_cache(&cache, labels).with_context(|| format!("reading cache for {stem}"))?
        } else {
            let csv = dir.join(format!("{stem}.csv"));
            let record = load_record(&csv, &labels_path(dir, &stem))
                .with_context(|| format!("loading record {stem}"))?;
            featurize(&record)?
        };
        out.push(feats);
    }
    Ok(out)
}

/// Load features and window them into sequences of `e` epochs.
pub fn load_sequences(dir: &Path, e: usize) -> Result<SequenceDataset<Real>> {
    let features = load_features(dir)?;
    let ds = SequenceDataset::from_records(&features, e);
    if ds.is_empty() {
        bail!(
            "dataset in {} yields no sequences of {e} consecutive epochs; \
             records may be shorter than e",
            dir.display()
        );
    }
    Ok(ds)
}
