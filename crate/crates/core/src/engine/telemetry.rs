//! Per-frame telemetry banded for the control surface.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const NUM_BANDS: usize = 16;
pub const LOWEST_BAND_HZ: f64 = 100.0;

/// One telemetry record. Field names are the wire/log format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub frame: u64,
    pub band_cdr: [f64; NUM_BANDS],
    pub band_gain: [f64; NUM_BANDS],
    pub mean_coh: f64,
}

impl Default for Telemetry {
    fn default() -> Self {
        Self {
            frame: 0,
            band_cdr: [0.0; NUM_BANDS],
            band_gain: [1.0; NUM_BANDS],
            mean_coh: 0.0,
        }
    }
}

/// Contiguous bin ranges for 16 logarithmic bands from 100 Hz to Nyquist.
#[derive(Debug, Clone)]
pub struct BandLayout {
    ranges: [(usize, usize); NUM_BANDS],
    edges: [f64; NUM_BANDS + 1],
}

impl BandLayout {
    pub fn new(sample_rate_hz: u32, fft_len: usize) -> Self {
        let nyquist = sample_rate_hz as f64 / 2.0;
        let bin_hz = sample_rate_hz as f64 / fft_len as f64;
        let last_bin = fft_len / 2;
        let ratio = nyquist / LOWEST_BAND_HZ;
        let mut edges = [0.0; NUM_BANDS + 1];
        for (i, e) in edges.iter_mut().enumerate() {
            *e = LOWEST_BAND_HZ * ratio.powf(i as f64 / NUM_BANDS as f64);
        }
        let mut ranges = [(0, 0); NUM_BANDS];
        for (b, range) in ranges.iter_mut().enumerate() {
            let lo = (edges[b] / bin_hz).ceil() as usize;
            let hi = if b + 1 == NUM_BANDS {
                last_bin + 1
            } else {
                ((edges[b + 1] / bin_hz).ceil() as usize).min(last_bin + 1)
            };
            *range = if hi > lo {
                (lo, hi)
            } else {
                // Band narrower than a bin: use the bin nearest its geometric centre.
                let centre = (edges[b] * edges[b + 1]).sqrt();
                let k = ((centre / bin_hz).round() as usize).min(last_bin);
                (k, k + 1)
            };
        }
        Self { ranges, edges }
    }

    pub fn ranges(&self) -> &[(usize, usize); NUM_BANDS] {
        &self.ranges
    }

    pub fn edges(&self) -> &[f64; NUM_BANDS + 1] {
        &self.edges
    }

    /// Averages per-bin `values` into bands.
    pub fn band_means(&self, values: &[f64], out: &mut [f64; NUM_BANDS]) {
        for (dst, &(lo, hi)) in out.iter_mut().zip(&self.ranges) {
            *dst = values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        }
    }

    pub fn fill(&self, frame: u64, cdr: &[f64], gain: &[f64], gamma: &[Complex64], out: &mut Telemetry) {
        out.frame = frame;
        self.band_means(cdr, &mut out.band_cdr);
        self.band_means(gain, &mut out.band_gain);
        out.mean_coh = if gamma.is_empty() {
            0.0
        } else {
            gamma.iter().map(|g| g.norm()).sum::<f64>() / gamma.len() as f64
        };
    }
}

/// Writes telemetry as newline-delimited JSON.
pub struct TelemetryLog<W: Write> {
    out: W,
}

impl<W: Write> TelemetryLog<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, t: &Telemetry) -> Result<()> {
        serde_json::to_writer(&mut self.out, t)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
