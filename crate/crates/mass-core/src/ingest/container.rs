//! Plain-text container for raw signals and per-epoch labels.
//!
//! Signal file: header line `rate_hz,n_channels`, then one comma-separated
//! row per sample. Labels sidecar: header line `epoch_index,label`, then
//! one row per epoch. Floats print in shortest round-trip form so a
//! write/read cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{MassError, Result};
use crate::ingest::{
    parse_stage_text, resample_100hz, Channel, EpochedSignal, StageLabel, SAMPLES_PER_EPOCH,
};

pub fn write_container(path: &Path, channels: &[Channel]) -> Result<()> {
    assert!(!channels.is_empty(), "container needs at least one channel");
    let rate = channels[0].rate_hz;
    let len = channels[0].samples.len();
    assert!(
        channels.iter().all(|c| c.rate_hz == rate && c.samples.len() == len),
        "container channels must share rate and length"
    );
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{rate},{}", channels.len())?;
    for i in 0..len {
        for (k, ch) in channels.iter().enumerate() {
            if k > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", ch.samples[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Vec<Channel>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| MassError::MalformedContainer("empty file".into()))??;
    let mut parts = header.split(',');
    let rate_hz: f64 = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| MassError::MalformedContainer(format!("bad header {header:?}")))?;
    let n_channels: usize = parts
        .next()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| MassError::MalformedContainer(format!("bad header {header:?}")))?;
    if n_channels == 0 {
        return Err(MassError::MalformedContainer("zero channels".into()));
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); n_channels];
    for (row_idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != n_channels {
            return Err(MassError::MalformedContainer(format!(
                "row {} has {} values, expected {n_channels}",
                row_idx + 2,
                values.len()
            )));
        }
        for (c, v) in values.iter().enumerate() {
            samples[c].push(v.trim().parse().map_err(|_| {
                MassError::MalformedContainer(format!("bad value {v:?} on row {}", row_idx + 2))
            })?);
        }
    }
    Ok(samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| Channel { name: format!("ch{i}"), samples: s, rate_hz })
        .collect())
}

pub fn write_labels_csv(path: &Path, labels: &[StageLabel]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch_index,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<StageLabel>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| MassError::MalformedContainer("empty labels file".into()))??;
    if header.trim() != "epoch_index,label" {
        return Err(MassError::MalformedContainer(format!("bad labels header {header:?}")));
    }
    let mut labels = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (idx, text) = line.split_once(',').ok_or_else(|| {
            MassError::MalformedContainer(format!("bad labels row {}", n + 2))
        })?;
        let idx: usize = idx.trim().parse().map_err(|_| {
            MassError::MalformedContainer(format!("bad epoch index {idx:?}"))
        })?;
        if idx != n {
            return Err(MassError::MalformedContainer(format!(
                "labels row {} carries index {idx}, expected {n}",
                n + 2
            )));
        }
        let label = parse_stage_text(text).ok_or_else(|| {
            MassError::MalformedContainer(format!("unknown stage label {text:?}"))
        })?;
        labels.push(label);
    }
    Ok(labels)
}

/// Write one epoched record as `<stem>.csv` + `<stem>.labels.csv`.
pub fn save_record(dir: &Path, stem: &str, signal: &EpochedSignal) -> Result<()> {
    let channel = Channel {
        name: "ch0".into(),
        samples: signal.samples().to_vec(),
        rate_hz: crate::ingest::CANONICAL_RATE_HZ,
    };
    write_container(&dir.join(format!("{stem}.csv")), &[channel])?;
    write_labels_csv(&dir.join(format!("{stem}.labels.csv")), signal.labels())
}

/// Load one epoched record written by [`save_record`]; resamples to 100 Hz
/// if the container carries another rate and drops a trailing partial
/// epoch.
pub fn load_record(csv_path: &Path, labels_path: &Path) -> Result<EpochedSignal> {
    let channels = read_container(csv_path)?;
    let labels = read_labels_csv(labels_path)?;
    let samples = resample_100hz(&channels[0].samples, channels[0].rate_hz)?;
    let n_epochs = (samples.len() / SAMPLES_PER_EPOCH).min(labels.len());
    if n_epochs == 0 {
        return Err(MassError::NoScoredEpochs);
    }
    Ok(EpochedSignal::new(
        samples[..n_epochs * SAMPLES_PER_EPOCH].to_vec(),
        labels[..n_epochs].to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_bit_exact() {
        let dir = std::env::temp_dir().join("mass_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sig.csv");
        let mut rng = crate::rng::SplitMix64::new(3);
        let channels = vec![
            Channel {
                name: "ch0".into(),
                samples: (0..500).map(|_| rng.next_gaussian()).collect(),
                rate_hz: 100.0,
            },
            Channel {
                name: "ch1".into(),
                samples: (0..500).map(|_| rng.next_gaussian()).collect(),
                rate_hz: 100.0,
            },
        ];
        write_container(&path, &channels).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].samples, channels[0].samples);
        assert_eq!(back[1].samples, channels[1].samples);
        assert_eq!(back[0].rate_hz, 100.0);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn labels_round_trip() {
        let dir = std::env::temp_dir().join("mass_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("labels.csv");
        let labels = vec![StageLabel::Wake, StageLabel::N3, StageLabel::Rem];
        write_labels_csv(&path, &labels).unwrap();
        assert_eq!(read_labels_csv(&path).unwrap(), labels);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn record_round_trip() {
        let dir = std::env::temp_dir().join("mass_record_test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = crate::rng::SplitMix64::new(8);
        let samples: Vec<f64> = (0..2 * SAMPLES_PER_EPOCH).map(|_| rng.next_gaussian()).collect();
        let signal = EpochedSignal::new(samples, vec![StageLabel::N2, StageLabel::N1]);
        save_record(&dir, "rec0", &signal).unwrap();
        let back = load_record(&dir.join("rec0.csv"), &dir.join("rec0.labels.csv")).unwrap();
        assert_eq!(back, signal);
    }

    #[test]
    fn mismatched_row_width_rejected() {
        let dir = std::env::temp_dir().join("mass_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "100,2\n0.5,0.5\n0.5\n").unwrap();
        assert!(matches!(read_container(&path), Err(MassError::MalformedContainer(_))));
        std::fs::remove_file(&path).ok();
    }
}
