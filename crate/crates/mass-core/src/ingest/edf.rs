//! Minimal EDF reader/writer.
//!
//! Covers the subset the cited polysomnography datasets use: continuous
//! recordings (EDF and EDF+C), 16-bit little-endian samples, optional
//! "EDF Annotations" channel with TAL-encoded onset/duration/label triples.
//! EDF+D (discontinuous) files are rejected. Writing exists to build test
//! fixtures and round-trip checks, not as a general-purpose exporter.

use crate::error::{MassError, Result};
use crate::ingest::{Annotation, Channel, RawRecording};

const HEADER_BYTES: usize = 256;
const PER_SIGNAL_BYTES: usize = 256;
const ANNOTATION_LABEL: &str = "EDF Annotations";

/// Digital-to-physical affine calibration of one signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdfCalibration {
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i32,
    pub dig_max: i32,
}

impl EdfCalibration {
    pub fn gain(&self) -> f64 {
        (self.phys_max - self.phys_min) / (self.dig_max - self.dig_min) as f64
    }

    pub fn to_physical(&self, digital: i16) -> f64 {
        (digital as i32 - self.dig_min) as f64 * self.gain() + self.phys_min
    }

    pub fn to_digital(&self, physical: f64) -> i16 {
        let d = ((physical - self.phys_min) / self.gain()).round() as i64 + self.dig_min as i64;
        d.clamp(self.dig_min as i64, self.dig_max as i64) as i16
    }
}

/// Header of one EDF signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignal {
    pub label: String,
    pub transducer: String,
    pub phys_dim: String,
    pub calibration: EdfCalibration,
    pub prefilter: String,
    pub samples_per_record: usize,
    /// Digital samples concatenated over records. Raw TAL bytes are kept
    /// here verbatim for the annotations channel.
    pub digital: Vec<i16>,
}

impl EdfSignal {
    pub fn is_annotations(&self) -> bool {
        self.label.trim() == ANNOTATION_LABEL
    }
}

/// A parsed EDF file: headers plus digital data.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfFile {
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub reserved: String,
    pub n_records: usize,
    pub record_seconds: f64,
    pub signals: Vec<EdfSignal>,
}

impl EdfFile {
    /// Convert to the channel/annotation view used by segmentation. The
    /// annotations channel, when present, is decoded into triples instead
    /// of appearing as a signal.
    pub fn to_recording(&self) -> RawRecording {
        let mut channels = Vec::new();
        let mut annotations = Vec::new();
        for sig in &self.signals {
            if sig.is_annotations() {
                annotations.extend(decode_tals(&digital_to_bytes(&sig.digital)));
            } else {
                channels.push(Channel {
                    name: sig.label.trim().to_string(),
                    samples: sig.digital.iter().map(|&d| sig.calibration.to_physical(d)).collect(),
                    rate_hz: sig.samples_per_record as f64 / self.record_seconds,
                });
            }
        }
        RawRecording { channels, annotations }
    }
}

/// Parse an EDF byte stream.
pub fn parse_edf(bytes: &[u8]) -> Result<EdfFile> {
    if bytes.len() < HEADER_BYTES {
        return Err(MassError::MalformedHeader(format!(
            "file is {} bytes, shorter than the {HEADER_BYTES}-byte header",
            bytes.len()
        )));
    }
    let field = |start: usize, len: usize| -> Result<String> {
        let raw = &bytes[start..start + len];
        let s = std::str::from_utf8(raw)
            .map_err(|_| MassError::MalformedHeader(format!("non-ASCII bytes at offset {start}")))?;
        Ok(s.trim_end().to_string())
    };
    let num_field = |start: usize, len: usize, name: &str| -> Result<f64> {
        let s = field(start, len)?;
        s.trim().parse::<f64>().map_err(|_| {
            MassError::MalformedHeader(format!("field `{name}` is not numeric: {s:?}"))
        })
    };

    let version = field(0, 8)?;
    if version.trim() != "0" {
        return Err(MassError::MalformedHeader(format!("unknown version {version:?}")));
    }
    let patient = field(8, 80)?;
    let recording = field(88, 80)?;
    let start_date = field(168, 8)?;
    let start_time = field(176, 8)?;
    let header_bytes = num_field(184, 8, "header bytes")? as usize;
    let reserved = field(192, 44)?;
    if reserved.starts_with("EDF+D") {
        return Err(MassError::UnsupportedFeature("discontinuous EDF+D recording".into()));
    }
    let n_records_raw = num_field(236, 8, "number of data records")?;
    let record_seconds = num_field(244, 8, "record duration")?;
    let ns = num_field(252, 4, "number of signals")? as usize;
    if ns == 0 {
        return Err(MassError::MalformedHeader("zero signals".into()));
    }
    if record_seconds <= 0.0 {
        return Err(MassError::MalformedHeader(format!(
            "record duration must be positive, got {record_seconds}"
        )));
    }
    let expect_header = HEADER_BYTES + ns * PER_SIGNAL_BYTES;
    if header_bytes != expect_header {
        return Err(MassError::MalformedHeader(format!(
            "header byte count {header_bytes} does not match {expect_header} for {ns} signals"
        )));
    }
    if bytes.len() < expect_header {
        return Err(MassError::MalformedHeader(format!(
            "file is {} bytes, shorter than the declared {expect_header}-byte header",
            bytes.len()
        )));
    }

    // Per-signal arrays: each field stored for all signals consecutively.
    let sig_field = |table_offset: usize, width: usize, i: usize| -> usize {
        HEADER_BYTES + table_offset * ns + width * i
    };
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let label = field(sig_field(0, 16, i), 16)?;
        let transducer = field(sig_field(16, 80, i), 80)?;
        let phys_dim = field(sig_field(96, 8, i), 8)?;
        let phys_min = num_field(sig_field(104, 8, i), 8, "physical minimum")?;
        let phys_max = num_field(sig_field(112, 8, i), 8, "physical maximum")?;
        let dig_min = num_field(sig_field(120, 8, i), 8, "digital minimum")? as i32;
        let dig_max = num_field(sig_field(128, 8, i), 8, "digital maximum")? as i32;
        let prefilter = field(sig_field(136, 80, i), 80)?;
        let spr = num_field(sig_field(216, 8, i), 8, "samples per record")? as usize;
        if dig_max == dig_min {
            return Err(MassError::MalformedHeader(format!(
                "signal {i} has empty digital range [{dig_min}, {dig_max}]"
            )));
        }
        if spr == 0 {
            return Err(MassError::MalformedHeader(format!("signal {i} has zero samples/record")));
        }
        signals.push(EdfSignal {
            label,
            transducer,
            phys_dim,
            calibration: EdfCalibration { phys_min, phys_max, dig_min, dig_max },
            prefilter,
            samples_per_record: spr,
            digital: Vec::new(),
        });
    }

    let record_size: usize = signals.iter().map(|s| s.samples_per_record * 2).sum();
    let data = &bytes[expect_header..];
    let n_records = if n_records_raw < 0.0 {
        // unknown record count (live recording); infer from length
        if !data.len().is_multiple_of(record_size) {
            return Err(MassError::TruncatedData(format!(
                "{} data bytes is not a whole number of {record_size}-byte records",
                data.len()
            )));
        }
        data.len() / record_size
    } else {
        n_records_raw as usize
    };
    if data.len() < n_records * record_size {
        return Err(MassError::TruncatedData(format!(
            "header promises {n_records} records of {record_size} bytes but only {} data bytes present",
            data.len()
        )));
    }

    for sig in &mut signals {
        sig.digital.reserve(n_records * sig.samples_per_record);
    }
    let mut off = 0usize;
    for _ in 0..n_records {
        for sig in &mut signals {
            for _ in 0..sig.samples_per_record {
                sig.digital.push(i16::from_le_bytes([data[off], data[off + 1]]));
                off += 2;
            }
        }
    }

    Ok(EdfFile {
        patient,
        recording,
        start_date,
        start_time,
        reserved,
        n_records,
        record_seconds,
        signals,
    })
}

/// Serialize an [`EdfFile`] back to bytes. Digital samples round-trip
/// bit-exactly.
pub fn write_edf(file: &EdfFile) -> Result<Vec<u8>> {
    let ns = file.signals.len();
    for sig in &file.signals {
        if sig.digital.len() != file.n_records * sig.samples_per_record {
            return Err(MassError::InvalidArg(format!(
                "signal {:?} has {} samples, expected {} records * {}",
                sig.label,
                sig.digital.len(),
                file.n_records,
                sig.samples_per_record
            )));
        }
    }
    let mut out = Vec::new();
    let mut put = |s: &str, width: usize| {
        let mut bytes = s.as_bytes().to_vec();
        assert!(bytes.len() <= width, "field {s:?} exceeds {width} bytes");
        bytes.resize(width, b' ');
        out_extend(&mut out, &bytes);
    };
    put("0", 8);
    put(&file.patient, 80);
    put(&file.recording, 80);
    put(&file.start_date, 8);
    put(&file.start_time, 8);
    put(&(HEADER_BYTES + ns * PER_SIGNAL_BYTES).to_string(), 8);
    put(&file.reserved, 44);
    put(&file.n_records.to_string(), 8);
    put(&format_edf_number(file.record_seconds), 8);
    put(&ns.to_string(), 4);

    for sig in &file.signals {
        put(&sig.label, 16);
    }
    for sig in &file.signals {
        put(&sig.transducer, 80);
    }
    for sig in &file.signals {
        put(&sig.phys_dim, 8);
    }
    for sig in &file.signals {
        put(&format_edf_number(sig.calibration.phys_min), 8);
    }
    for sig in &file.signals {
        put(&format_edf_number(sig.calibration.phys_max), 8);
    }
    for sig in &file.signals {
        put(&sig.calibration.dig_min.to_string(), 8);
    }
    for sig in &file.signals {
        put(&sig.calibration.dig_max.to_string(), 8);
    }
    for sig in &file.signals {
        put(&sig.prefilter, 80);
    }
    for sig in &file.signals {
        put(&sig.samples_per_record.to_string(), 8);
    }
    for _ in &file.signals {
        put("", 32);
    }

    for r in 0..file.n_records {
        for sig in &file.signals {
            let start = r * sig.samples_per_record;
            for &d in &sig.digital[start..start + sig.samples_per_record] {
                out_extend(&mut out, &d.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn out_extend(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(bytes);
}

/// EDF numeric fields are 8 ASCII chars; print integers bare and keep
/// fractional values within the width.
fn format_edf_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e7 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.6}");
        s.chars().take(8).collect()
    }
}

/// Decode TAL-encoded annotations from raw annotation-channel bytes.
fn decode_tals(bytes: &[u8]) -> Vec<Annotation> {
    let mut out = Vec::new();
    for block in bytes.split(|&b| b == 0x00) {
        if block.is_empty() {
            continue;
        }
        let mut fields = block.split(|&b| b == 0x14);
        let Some(head) = fields.next() else { continue };
        let head = String::from_utf8_lossy(head);
        let (onset_str, duration_str) = match head.split_once('\u{15}') {
            Some((o, d)) => (oglue(o), Some(d.to_string())),
            None => (oglue(&head), None),
        };
        let Ok(onset) = onset_str.parse::<f64>() else { continue };
        let duration = duration_str.and_then(|d| d.parse::<f64>().ok()).unwrap_or(0.0);
        for label in fields {
            if label.is_empty() {
                continue;
            }
            out.push(Annotation {
                onset_s: onset,
                duration_s: duration,
                label: String::from_utf8_lossy(label).to_string(),
            });
        }
    }
    out
}

fn oglue(s: &str) -> String {
    s.trim_start_matches('+').to_string()
}

fn digital_to_bytes(digital: &[i16]) -> Vec<u8> {
    digital.iter().flat_map(|d| d.to_le_bytes()).collect()
}

fn bytes_to_digital(bytes: &[u8]) -> Vec<i16> {
    bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect()
}

/// Encode annotations into an "EDF Annotations" signal covering
/// `n_records` records of `record_seconds` each.
pub fn build_annotation_signal(
    annotations: &[Annotation],
    n_records: usize,
    record_seconds: f64,
) -> EdfSignal {
    let mut per_record: Vec<Vec<u8>> = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let t0 = r as f64 * record_seconds;
        let t1 = t0 + record_seconds;
        // timestamp TAL marking the record start; every TAL ends with 0x00
        let mut buf = format!("+{}\u{14}\u{14}\u{0}", format_tal_number(t0)).into_bytes();
        for ann in annotations {
            if ann.onset_s >= t0 && ann.onset_s < t1 {
                buf.extend(
                    format!(
                        "+{}\u{15}{}\u{14}{}\u{14}\u{0}",
                        format_tal_number(ann.onset_s),
                        format_tal_number(ann.duration_s),
                        ann.label
                    )
                    .into_bytes(),
                );
            }
        }
        per_record.push(buf);
    }
    let max_len = per_record.iter().map(Vec::len).max().unwrap_or(2);
    let spr = max_len.div_ceil(2).max(1);
    let mut digital = Vec::with_capacity(n_records * spr);
    for mut buf in per_record {
        buf.resize(spr * 2, 0x00);
        digital.extend(bytes_to_digital(&buf));
    }
    EdfSignal {
        label: ANNOTATION_LABEL.to_string(),
        transducer: String::new(),
        phys_dim: String::new(),
        calibration: EdfCalibration { phys_min: 0.0, phys_max: 1.0, dig_min: -32768, dig_max: 32767 },
        prefilter: String::new(),
        samples_per_record: spr,
        digital,
    }
}

fn format_tal_number(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        let mut s = format!("{v}");
        if let Some(stripped) = s.strip_suffix(".0") {
            s = stripped.to_string();
        }
        s
    }
}
