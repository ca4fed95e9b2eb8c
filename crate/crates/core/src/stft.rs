//! Short-time analysis and weighted overlap-add (WOLA) synthesis.
//!
//! Frames are built from a sliding history of `window_len` samples that
//! advances by `hop` samples per call. The history starts out as zeros, so
//! every output sample lags its input by exactly `window_len - hop` samples
//! (see [`StftConfig::delay_samples`]). With 50% overlap this is the
//! half-segment output schedule: each emitted block is the second half of the
//! previous frame overlapped with the first half of the current one.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StftMode {
    Offline,
    Streaming,
}

/// Framing parameters shared by analysis and synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate_hz: u32,
    pub window_len: usize,
    pub fft_len: usize,
    pub hop: usize,
    pub window_kind: WindowKind,
    pub mode: StftMode,
}

impl StftConfig {
    /// 16 kHz, window 1024, FFT 1024, hop 128.
    pub fn offline() -> Self {
        Self {
            sample_rate_hz: 16_000,
            window_len: 1024,
            fft_len: 1024,
            hop: 128,
            window_kind: WindowKind::Hann,
            mode: StftMode::Offline,
        }
    }

    /// 32 kHz, window 512 with 50% overlap, FFT 1024.
    pub fn streaming() -> Self {
        Self {
            sample_rate_hz: 32_000,
            window_len: 512,
            fft_len: 1024,
            hop: 256,
            window_kind: WindowKind::Hann,
            mode: StftMode::Streaming,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || self.window_len == 0 || self.fft_len == 0 || self.hop == 0 {
            return Err(Error::Config("sample rate, window, FFT and hop must be positive".into()));
        }
        if self.fft_len < self.window_len {
            return Err(Error::Config(format!(
                "fft_len {} is shorter than window_len {}",
                self.fft_len, self.window_len
            )));
        }
        if !self.fft_len.is_power_of_two() {
            return Err(Error::Config(format!("fft_len {} is not a power of two", self.fft_len)));
        }
        if self.hop > self.window_len || !self.window_len.is_multiple_of(self.hop) {
            return Err(Error::Config(format!(
                "hop {} must divide window_len {}",
                self.hop, self.window_len
            )));
        }
        if self.window_len / self.hop < 2 {
            return Err(Error::Config("at least 50% overlap is required".into()));
        }
        Ok(())
    }

    /// One-sided bin count, `fft_len / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz as f64 / self.fft_len as f64
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        (0..self.num_bins()).map(|k| self.bin_frequency(k)).collect()
    }

    /// Fixed input-to-output delay of the analysis/synthesis chain.
    pub fn delay_samples(&self) -> usize {
        self.window_len - self.hop
    }
}

/// Algorithmic delay of the half-segment streaming schedule, in samples.
pub fn streaming_output_schedule(cfg: &StftConfig) -> Result<usize> {
    cfg.validate()?;
    if cfg.mode != StftMode::Streaming {
        return Err(Error::Config("output schedule is only defined for streaming mode".into()));
    }
    if 2 * cfg.hop != cfg.window_len {
        return Err(Error::Config("streaming schedule requires 50% overlap".into()));
    }
    Ok(cfg.delay_samples())
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// WOLA synthesis window for `analysis` at the given hop.
///
/// Each sample is divided by the sum of squared analysis weights that land on
/// the same output position, so the shifted analysis*synthesis products sum
/// to one.
pub fn synthesis_window(analysis: &[f64], hop: usize) -> Vec<f64> {
    let len = analysis.len();
    (0..len)
        .map(|n| {
            let norm: f64 = (n % hop..len).step_by(hop).map(|m| analysis[m] * analysis[m]).sum();
            analysis[n] / norm
        })
        .collect()
}

/// One frame of one-sided spectra for both ears.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpectra {
    pub index: u64,
    pub left: Vec<Complex64>,
    pub right: Vec<Complex64>,
}

impl FrameSpectra {
    pub fn zeros(num_bins: usize) -> Self {
        Self {
            index: 0,
            left: vec![Complex64::default(); num_bins],
            right: vec![Complex64::default(); num_bins],
        }
    }

    pub fn num_bins(&self) -> usize {
        self.left.len()
    }
}

/// Sliding-window analysis for a two-channel stream.
pub struct Analyzer {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn RealToComplex<f64>>,
    history: [Vec<f64>; 2],
    input: Vec<f64>,
    scratch: Vec<Complex64>,
    frames: u64,
}

impl Analyzer {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        let window = match cfg.window_kind {
            WindowKind::Hann => hann(cfg.window_len),
        };
        Ok(Self::with_window(cfg, window))
    }

    pub(crate) fn with_window(cfg: &StftConfig, window: Vec<f64>) -> Self {
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(cfg.fft_len);
        let scratch = fft.make_scratch_vec();
        Self {
            cfg: cfg.clone(),
            window,
            history: [vec![0.0; cfg.window_len], vec![0.0; cfg.window_len]],
            input: fft.make_input_vec(),
            scratch,
            fft,
            frames: 0,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Pushes one hop-sized block per channel and writes the next frame.
    pub fn analyze(&mut self, left: &[f64], right: &[f64], out: &mut FrameSpectra) -> Result<()> {
        let hop = self.cfg.hop;
        for block in [left, right] {
            if block.len() != hop {
                return Err(Error::Config(format!(
                    "input block has {} samples, hop is {hop}",
                    block.len()
                )));
            }
        }
        let bins = self.cfg.num_bins();
        if out.left.len() != bins || out.right.len() != bins {
            return Err(Error::SizeMismatch { expected: bins, actual: out.left.len().min(out.right.len()) });
        }

        for (ch, block) in [left, right].into_iter().enumerate() {
            let history = &mut self.history[ch];
            history.copy_within(hop.., 0);
            let keep = history.len() - hop;
            history[keep..].copy_from_slice(block);

            for ((dst, &x), &w) in self.input.iter_mut().zip(history.iter()).zip(&self.window) {
                *dst = x * w;
            }
            self.input[self.cfg.window_len..].fill(0.0);

            let spectrum = if ch == 0 { &mut out.left } else { &mut out.right };
            self.fft
                .process_with_scratch(&mut self.input, spectrum, &mut self.scratch)
                .expect("forward FFT buffer sizes are fixed at construction");
        }
        out.index = self.frames;
        self.frames += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        for h in &mut self.history {
            h.fill(0.0);
        }
        self.frames = 0;
    }
}

/// Weighted overlap-add synthesis for a two-channel stream.
pub struct Synthesizer {
    cfg: StftConfig,
    window: Vec<f64>,
    ifft: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Complex64>,
    time: Vec<f64>,
    scratch: Vec<Complex64>,
    overlap: [Vec<f64>; 2],
}

impl Synthesizer {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        let analysis = match cfg.window_kind {
            WindowKind::Hann => hann(cfg.window_len),
        };
        let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(cfg.fft_len);
        Ok(Self {
            cfg: cfg.clone(),
            window: synthesis_window(&analysis, cfg.hop),
            spectrum: ifft.make_input_vec(),
            time: ifft.make_output_vec(),
            scratch: ifft.make_scratch_vec(),
            ifft,
            overlap: [vec![0.0; cfg.window_len], vec![0.0; cfg.window_len]],
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Overlap-adds one frame and emits `hop` finished samples per channel.
    pub fn synthesize(&mut self, frame: &FrameSpectra, left: &mut [f64], right: &mut [f64]) -> Result<()> {
        let bins = self.cfg.num_bins();
        let hop = self.cfg.hop;
        if frame.left.len() != bins || frame.right.len() != bins {
            return Err(Error::SizeMismatch { expected: bins, actual: frame.left.len().min(frame.right.len()) });
        }
        if left.len() != hop || right.len() != hop {
            return Err(Error::SizeMismatch { expected: hop, actual: left.len().min(right.len()) });
        }
        let scale = 1.0 / self.cfg.fft_len as f64;
        let window_len = self.cfg.window_len;

        for (ch, out) in [left, right].into_iter().enumerate() {
            let src = if ch == 0 { &frame.left } else { &frame.right };
            self.spectrum.copy_from_slice(src);
            // A real signal has purely real DC and Nyquist bins.
            self.spectrum[0].im = 0.0;
            self.spectrum[bins - 1].im = 0.0;
            self.ifft
                .process_with_scratch(&mut self.spectrum, &mut self.time, &mut self.scratch)
                .expect("inverse FFT buffer sizes are fixed at construction");

            let overlap = &mut self.overlap[ch];
            for ((acc, &y), &w) in overlap.iter_mut().zip(&self.time[..window_len]).zip(&self.window) {
                *acc += y * scale * w;
            }
            out.copy_from_slice(&overlap[..hop]);
            overlap.copy_within(hop.., 0);
            overlap[window_len - hop..].fill(0.0);
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        for o in &mut self.overlap {
            o.fill(0.0);
        }
    }
}
