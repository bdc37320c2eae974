//! Synchrony order parameter over a rolling spike window and the persistence
//! rule that turns it into overload warnings.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub const MIN_WINDOW: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Largest eigenvalue of the windowed spike covariance over its trace.
    #[default]
    Covariance,
    /// Kuramoto order parameter of Hilbert phases of low-passed spike trains.
    Kuramoto,
}

/// Time constant (slots) of each of the two cascaded low-pass stages used in
/// Kuramoto mode.
pub const LOWPASS_TAU: f64 = 3.0;

/// `R ∈ [0, 1]` for a window laid out as `window[t][i]` (time-major).
/// Windows with no spikes at all give 0.
pub fn sync_order(window: &[Vec<bool>], mode: SyncMode) -> f64 {
    let n = window.first().map_or(0, Vec::len);
    if n == 0 || window.iter().all(|row| row.iter().all(|&s| !s)) {
        return 0.0;
    }
    match mode {
        SyncMode::Covariance => covariance_ratio(window, n),
        SyncMode::Kuramoto => kuramoto(window, n),
    }
}

fn covariance_ratio(window: &[Vec<bool>], n: usize) -> f64 {
    let len = window.len() as f64;
    let mut mean = vec![0.0; n];
    for row in window {
        for (m, &s) in mean.iter_mut().zip(row) {
            if s {
                *m += 1.0;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= len);
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for row in window {
        for i in 0..n {
            let di = f64::from(u8::from(row[i])) - mean[i];
            for j in i..n {
                let dj = f64::from(u8::from(row[j])) - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    let trace = cov.trace();
    if trace <= 0.0 {
        // Constant trains carry no fluctuation to synchronise.
        return 0.0;
    }
    let top = cov
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &l| acc.max(l));
    (top / trace).clamp(0.0, 1.0)
}

fn kuramoto(window: &[Vec<bool>], n: usize) -> f64 {
    let len = window.len();
    let alpha = 1.0 - (-1.0 / LOWPASS_TAU).exp();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..n {
        // Two cascaded first-order stages, both started at the first sample so
        // a constant train passes through unchanged.
        let x0 = f64::from(u8::from(window[0][i]));
        let (mut s1, mut s2) = (x0, x0);
        let mut filtered: Vec<f64> = window
            .iter()
            .map(|row| {
                let x = f64::from(u8::from(row[i]));
                s1 += alpha * (x - s1);
                s2 += alpha * (s1 - s2);
                s2
            })
            .collect();
        let mean = filtered.iter().sum::<f64>() / len as f64;
        filtered.iter_mut().for_each(|x| *x -= mean);

        let mut buf: Vec<Complex64> = filtered.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.process(&mut buf);
        // Analytic signal: keep DC (and Nyquist), double positive frequencies.
        for (k, c) in buf.iter_mut().enumerate() {
            if k == 0 || (len % 2 == 0 && k == len / 2) {
                continue;
            } else if k < len.div_ceil(2) {
                *c *= 2.0;
            } else {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        ifft.process(&mut buf);
        let z = buf[len - 1] / len as f64;
        if z.norm() > 0.0 {
            sum += z / z.norm();
        }
    }
    sum.norm() / n as f64
}

/// Linear-interpolated percentile, `p ∈ [0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// A slot is flagged when R has exceeded the 95th percentile of the
/// light-load calibration sample for at least `persistence` consecutive
/// slots (the current one included).
pub fn warn(r_trace: &[f64], light_load: &[f64], persistence: usize) -> Vec<bool> {
    let threshold = percentile(light_load, 95.0);
    let mut run = 0usize;
    r_trace
        .iter()
        .map(|&r| {
            run = if r > threshold { run + 1 } else { 0 };
            persistence > 0 && run >= persistence
        })
        .collect()
}
