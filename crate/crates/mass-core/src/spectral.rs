//! Spectral featurization: 30 one-second PSD patches of 128 bins per epoch.
//!
//! Each 3000-sample epoch (100 Hz) is cut into 30 non-overlapping 100-sample
//! segments. Every segment is Hamming-windowed, zero-padded to 256 points,
//! transformed with a radix-2 FFT, and reduced to
//! `20 * log10(|X| + 1e-8)` over the first 128 bins (0 to 49.6 Hz; the
//! Nyquist bin is dropped to keep DC and land on 128 bins).
//!
//! The optional feature cache is a binary dump: a 16-byte header
//! (magic `MSF1`, then `e`, `patches`, `bins` as u32 little-endian)
//! followed by `e * patches * bins` f64 little-endian values in row-major
//! order. Labels are not part of the cache; they travel in the labels
//! sidecar CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{MassError, Result};
use crate::ingest::{EpochedSignal, StageLabel, SAMPLES_PER_EPOCH};
use crate::masking::PATCHES_PER_EPOCH;
use crate::scalar::Scalar;

/// Frequency bins retained per patch.
pub const BINS_PER_PATCH: usize = 128;
/// FFT size for the 100-sample windows.
pub const FFT_SIZE: usize = 256;
/// Samples per 1-second patch at 100 Hz.
pub const SAMPLES_PER_PATCH: usize = 100;
/// Floor constant inside the log.
pub const PSD_EPSILON: f64 = 1e-8;

/// PSD features for a run of epochs, shape `[e, 30, 128]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEpochs<S: Scalar> {
    psd: Vec<S>,
    labels: Vec<StageLabel>,
}

impl<S: Scalar> SpectralEpochs<S> {
    pub fn new(psd: Vec<S>, labels: Vec<StageLabel>) -> Self {
        assert_eq!(psd.len(), labels.len() * PATCHES_PER_EPOCH * BINS_PER_PATCH);
        Self { psd, labels }
    }

    pub fn n_epochs(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[StageLabel] {
        &self.labels
    }

    pub fn values(&self) -> &[S] {
        &self.psd
    }

    /// One patch: 128 PSD values.
    pub fn patch(&self, epoch: usize, patch: usize) -> &[S] {
        let base = (epoch * PATCHES_PER_EPOCH + patch) * BINS_PER_PATCH;
        &self.psd[base..base + BINS_PER_PATCH]
    }

    /// Mutable patch access (used by perturbation tests).
    pub fn patch_mut(&mut self, epoch: usize, patch: usize) -> &mut [S] {
        let base = (epoch * PATCHES_PER_EPOCH + patch) * BINS_PER_PATCH;
        &mut self.psd[base..base + BINS_PER_PATCH]
    }

    /// Borrow a contiguous window of epochs as a new feature block.
    pub fn window(&self, start: usize, len: usize) -> SpectralEpochs<S> {
        let stride = PATCHES_PER_EPOCH * BINS_PER_PATCH;
        SpectralEpochs {
            psd: self.psd[start * stride..(start + len) * stride].to_vec(),
            labels: self.labels[start..start + len].to_vec(),
        }
    }
}

/// Hamming window `w[k] = 0.54 - 0.46 cos(2 pi k / (n-1))`.
pub fn hamming_window<S: Scalar>(n: usize) -> Result<Vec<S>> {
    if n < 2 {
        return Err(MassError::InvalidArg(format!("hamming window needs n >= 2, got {n}")));
    }
    let a0 = S::from_f64_c(0.54);
    let a1 = S::from_f64_c(0.46);
    let denom = S::from_usize_c(n - 1);
    Ok((0..n)
        .map(|k| {
            let phase = S::from_usize_c(2 * k) * S::PI() / denom;
            a0 - a1 * phase.cos()
        })
        .collect())
}

/// In-place iterative radix-2 FFT over (re, im) pairs. `n` must be a power
/// of two.
pub fn fft_radix2<S: Scalar>(re: &mut [S], im: &mut [S]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft size must be a power of two");
    if n < 2 {
        return;
    }

    // bit-reversal permutation
    let mut j = 0usize;
    for i in 0..n - 1 {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut m = n >> 1;
        while m >= 1 && j & m != 0 {
            j ^= m;
            m >>= 1;
        }
        j |= m;
    }

    let mut len = 2;
    while len <= n {
        let ang = -S::from_f64_c(2.0) * S::PI() / S::from_usize_c(len);
        let (w_im, w_re) = ang.sin_cos();
        let mut start = 0;
        while start < n {
            let mut cur_re = S::one();
            let mut cur_im = S::zero();
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let t_re = cur_re * re[b] - cur_im * im[b];
                let t_im = cur_re * im[b] + cur_im * re[b];
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// PSD of one 100-sample segment: window, zero-pad to 256, magnitude, dB.
pub fn segment_psd<S: Scalar>(segment: &[S], window: &[S]) -> Vec<S> {
    assert_eq!(segment.len(), SAMPLES_PER_PATCH);
    assert_eq!(window.len(), SAMPLES_PER_PATCH);
    let mut re = vec![S::zero(); FFT_SIZE];
    let mut im = vec![S::zero(); FFT_SIZE];
    for (k, (&x, &w)) in segment.iter().zip(window).enumerate() {
        re[k] = x * w;
    }
    fft_radix2(&mut re, &mut im);
    let eps = S::from_f64_c(PSD_EPSILON);
    let twenty = S::from_f64_c(20.0);
    (0..BINS_PER_PATCH)
        .map(|f| {
            let mag = (re[f] * re[f] + im[f] * im[f]).sqrt();
            twenty * (mag + eps).log10()
        })
        .collect()
}

/// PSD patches for a whole 3000-sample epoch, shape `[30, 128]` row-major.
pub fn epoch_psd<S: Scalar>(epoch: &[S]) -> Result<Vec<S>> {
    if epoch.len() != SAMPLES_PER_EPOCH {
        return Err(MassError::WrongLength { expected: SAMPLES_PER_EPOCH, got: epoch.len() });
    }
    let window = hamming_window::<S>(SAMPLES_PER_PATCH)?;
    let mut out = Vec::with_capacity(PATCHES_PER_EPOCH * BINS_PER_PATCH);
    for p in 0..PATCHES_PER_EPOCH {
        let seg = &epoch[p * SAMPLES_PER_PATCH..(p + 1) * SAMPLES_PER_PATCH];
        out.extend(segment_psd(seg, &window));
    }
    Ok(out)
}

/// Featurize every epoch of a segmented recording.
pub fn featurize<S: Scalar>(signal: &EpochedSignal) -> Result<SpectralEpochs<S>> {
    let mut psd = Vec::with_capacity(signal.n_epochs() * PATCHES_PER_EPOCH * BINS_PER_PATCH);
    for e in 0..signal.n_epochs() {
        let epoch: Vec<S> = signal.epoch(e).iter().map(|&x| S::from_f64_c(x)).collect();
        psd.extend(epoch_psd(&epoch)?);
    }
    Ok(SpectralEpochs::new(psd, signal.labels().to_vec()))
}

const CACHE_MAGIC: &[u8; 4] = b"MSF1";

/// Write the PSD tensor to the binary cache format.
pub fn write_cache<S: Scalar>(path: &Path, features: &SpectralEpochs<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&(features.n_epochs() as u32).to_le_bytes())?;
    w.write_all(&(PATCHES_PER_EPOCH as u32).to_le_bytes())?;
    w.write_all(&(BINS_PER_PATCH as u32).to_le_bytes())?;
    for &v in features.values() {
        w.write_all(&v.to_f64_c().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a PSD tensor from the binary cache; labels must be supplied by the
/// caller (they live in the sidecar CSV).
pub fn read_cache<S: Scalar>(path: &Path, labels: Vec<StageLabel>) -> Result<SpectralEpochs<S>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(MassError::InvalidArg("bad feature cache magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let e = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let patches = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let bins = u32::from_le_bytes(u32buf) as usize;
    if patches != PATCHES_PER_EPOCH || bins != BINS_PER_PATCH {
        return Err(MassError::InvalidArg(format!(
            "cache dims [{e}, {patches}, {bins}] do not match [e, {PATCHES_PER_EPOCH}, {BINS_PER_PATCH}]"
        )));
    }
    if e != labels.len() {
        return Err(MassError::LengthMismatch(format!(
            "cache has {e} epochs but {} labels supplied",
            labels.len()
        )));
    }
    let mut data = Vec::with_capacity(e * patches * bins);
    let mut f64buf = [0u8; 8];
    for _ in 0..e * patches * bins {
        r.read_exact(&mut f64buf)?;
        data.push(S::from_f64_c(f64::from_le_bytes(f64buf)));
    }
    Ok(SpectralEpochs::new(data, labels))
}
