//! Rational-rate resampling to 100 Hz.
//!
//! Polyphase windowed-sinc interpolation with a Kaiser window (beta = 8)
//! and cutoff at 0.9x the Nyquist frequency of the lower rate. Tap sums
//! are normalized per output sample, which keeps DC exact (including at
//! the edges, where the window shrinks). Correctness is asserted
//! spectrally: a tone below the cutoff stays in its FFT bin.

use crate::error::{MassError, Result};
use crate::scalar::Scalar;

const KAISER_BETA: f64 = 8.0;
/// Window half-width in input samples.
const HALF_WIDTH: usize = 16;

/// Resample `signal` from `rate_hz` to 100 Hz.
pub fn resample_100hz<S: Scalar>(signal: &[S], rate_hz: f64) -> Result<Vec<S>> {
    resample(signal, rate_hz, crate::ingest::CANONICAL_RATE_HZ)
}

/// Resample between two positive rates related by a small rational factor.
pub fn resample<S: Scalar>(signal: &[S], rate_in: f64, rate_out: f64) -> Result<Vec<S>> {
    if rate_in <= 0.0 || !rate_in.is_finite() {
        return Err(MassError::NonPositiveRate(rate_in));
    }
    if rate_out <= 0.0 || !rate_out.is_finite() {
        return Err(MassError::NonPositiveRate(rate_out));
    }
    if rate_in == rate_out {
        return Ok(signal.to_vec());
    }
    if signal.is_empty() {
        return Ok(Vec::new());
    }

    // rate_in/rate_out as a reduced fraction m/l: output j sits at input
    // position j*m/l.
    let (num_in, den_in) = rational_approx(rate_in, 1 << 16);
    let (num_out, den_out) = rational_approx(rate_out, 1 << 16);
    let m_raw = num_in * den_out;
    let l_raw = num_out * den_in;
    let g = gcd(m_raw, l_raw);
    let (m, l) = (m_raw / g, l_raw / g);

    let n_in = signal.len();
    let n_out = (n_in as f64 * rate_out / rate_in).round() as usize;
    let cutoff_hz = 0.45 * rate_in.min(rate_out);
    // cycles per input sample
    let nu = cutoff_hz / rate_in;
    let i0_beta = bessel_i0(KAISER_BETA);

    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        // input-domain position of output sample j
        let t_num = j as u64 * m;
        let t = t_num as f64 / l as f64;
        let lo = ((t - HALF_WIDTH as f64).ceil() as i64).max(0) as usize;
        let hi = ((t + HALF_WIDTH as f64).floor() as i64).min(n_in as i64 - 1) as usize;
        let mut acc = S::zero();
        let mut norm = 0.0f64;
        for i in lo..=hi {
            let u = i as f64 - t;
            let tap = sinc(2.0 * nu * u) * kaiser(u / HALF_WIDTH as f64, i0_beta);
            acc += signal[i] * S::from_f64_c(tap);
            norm += tap;
        }
        if norm.abs() > 1e-12 {
            acc /= S::from_f64_c(norm);
        }
        out.push(acc);
    }
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn kaiser(frac: f64, i0_beta: f64) -> f64 {
    let z = 1.0 - frac * frac;
    if z <= 0.0 {
        0.0
    } else {
        bessel_i0(KAISER_BETA * z.sqrt()) / i0_beta
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=30 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}

/// Best rational approximation p/q of `x` with q <= max_den (continued
/// fractions). Rates in practice are integers or simple decimals.
fn rational_approx(x: f64, max_den: u64) -> (u64, u64) {
    assert!(x > 0.0);
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut frac = x;
    for _ in 0..64 {
        let a = frac.floor() as u64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let rem = frac - a as f64;
        if rem.abs() < 1e-12 {
            break;
        }
        frac = 1.0 / rem;
    }
    (p1, q1)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
