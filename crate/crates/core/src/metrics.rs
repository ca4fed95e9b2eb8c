//! Intrusive quality metrics: LPC cepstral distance and segmental SNR.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::engine::BinStats;
use crate::error::{Error, Result};
use crate::scenes::{Binaural, GroundTruth, Scene};
use crate::stft::hann;

pub const CD_ORDER: usize = 10;
pub const FRAME_MS: f64 = 32.0;
/// Frames more than 40 dB below the loudest reference frame are skipped.
const ACTIVITY_FLOOR: f64 = 1e-4;
const LPC_REGULARIZATION: f64 = 1e-9;
pub const SEGSNR_MIN: f64 = -10.0;
pub const SEGSNR_MAX: f64 = 35.0;

/// Samples in a 32 ms frame.
pub fn frame_len_for(sample_rate: u32) -> usize {
    (sample_rate as f64 * FRAME_MS / 1000.0).round() as usize
}

fn check_lengths(reference: &[f64], processed: &[f64]) -> Result<()> {
    if reference.len() != processed.len() {
        return Err(Error::SizeMismatch { expected: reference.len(), actual: processed.len() });
    }
    Ok(())
}

/// LPC coefficients `a[1..=order]` of `A(z) = 1 + sum a_k z^-k` by Levinson-Durbin.
pub fn lpc(frame: &[f64], order: usize) -> Vec<f64> {
    let mut r: Vec<f64> = (0..=order)
        .map(|lag| frame.iter().zip(frame.iter().skip(lag)).map(|(a, b)| a * b).sum())
        .collect();
    let mut a = vec![0.0; order + 1];
    if r[0] <= 0.0 {
        return a[1..].to_vec();
    }
    r[0] *= 1.0 + LPC_REGULARIZATION;
    a[0] = 1.0;
    let mut err = r[0];
    let mut prev = a.clone();
    for i in 1..=order {
        let acc: f64 = (1..i).map(|j| prev[j] * r[i - j]).sum::<f64>() + r[i];
        let k = -acc / err;
        a[i] = k;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
        prev.copy_from_slice(&a);
    }
    a[1..].to_vec()
}

/// Cepstrum `c[1..=n]` of the all-pole model `1 / A(z)`.
pub fn lpc_cepstrum(a: &[f64]) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; p + 1];
    for n in 1..=p {
        let sum: f64 = (1..n).map(|k| k as f64 / n as f64 * c[k] * a[n - k - 1]).sum();
        c[n] = -a[n - 1] - sum;
    }
    c[1..].to_vec()
}

fn frame_energies(x: &[f64], frame_len: usize, hop: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + frame_len <= x.len() {
        out.push(x[start..start + frame_len].iter().map(|v| v * v).sum());
        start += hop;
    }
    out
}

/// Mean LPC-cepstral distance in dB over active reference frames.
///
/// Hann-windowed frames with 50% overlap; `c0` is excluded so the result
/// ignores overall gain.
pub fn cepstral_distance(reference: &[f64], processed: &[f64], frame_len: usize, order: usize) -> Result<f64> {
    check_lengths(reference, processed)?;
    if frame_len < 2 || order == 0 {
        return Err(Error::Config("cepstral distance needs frame_len >= 2 and order >= 1".into()));
    }
    let hop = frame_len / 2;
    let energies = frame_energies(reference, frame_len, hop);
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::SilentReference);
    }
    let window = hann(frame_len);
    let mut wr = vec![0.0; frame_len];
    let mut wp = vec![0.0; frame_len];
    let (mut total, mut count) = (0.0, 0usize);
    for (i, &e) in energies.iter().enumerate() {
        if e < peak * ACTIVITY_FLOOR {
            continue;
        }
        let start = i * hop;
        for j in 0..frame_len {
            wr[j] = reference[start + j] * window[j];
            wp[j] = processed[start + j] * window[j];
        }
        let cr = lpc_cepstrum(&lpc(&wr, order));
        let cp = lpc_cepstrum(&lpc(&wp, order));
        let sq: f64 = cr.iter().zip(&cp).map(|(a, b)| (a - b) * (a - b)).sum();
        total += 10.0 / LN_10 * (2.0 * sq).sqrt();
        count += 1;
    }
    Ok(total / count as f64)
}

/// Mean per-frame SNR over active reference frames, each clamped to [-10, 35] dB.
pub fn segmental_snr(reference: &[f64], processed: &[f64], frame_len: usize) -> Result<f64> {
    check_lengths(reference, processed)?;
    if frame_len == 0 {
        return Err(Error::Config("segmental SNR needs frame_len >= 1".into()));
    }
    let energies = frame_energies(reference, frame_len, frame_len);
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::SilentReference);
    }
    let (mut total, mut count) = (0.0, 0usize);
    for (i, &e) in energies.iter().enumerate() {
        if e < peak * ACTIVITY_FLOOR {
            continue;
        }
        let start = i * frame_len;
        let noise: f64 = reference[start..start + frame_len]
            .iter()
            .zip(&processed[start..start + frame_len])
            .map(|(r, p)| (r - p) * (r - p))
            .sum();
        let snr = if noise == 0.0 { SEGSNR_MAX } else { 10.0 * (e / noise).log10() };
        total += snr.clamp(SEGSNR_MIN, SEGSNR_MAX);
        count += 1;
    }
    Ok(total / count as f64)
}

/// Both metrics, computed per channel and averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub cepstral_distance: f64,
    pub segmental_snr: f64,
}

pub fn compare(reference: &Binaural, processed: &Binaural, sample_rate: u32) -> Result<PairMetrics> {
    let frame_len = frame_len_for(sample_rate);
    let mut cd = 0.0;
    let mut snr = 0.0;
    for (r, p) in [(&reference.left, &processed.left), (&reference.right, &processed.right)] {
        cd += cepstral_distance(r, p, frame_len, CD_ORDER)?;
        snr += segmental_snr(r, p, frame_len)?;
    }
    Ok(PairMetrics { cepstral_distance: cd / 2.0, segmental_snr: snr / 2.0 })
}

/// Estimator bias in one octave band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandBias {
    pub center_hz: f64,
    #[serde(serialize_with = "ser_ratio")]
    pub true_ratio: f64,
    pub mean_cdr: f64,
    pub mean_gain: f64,
}

fn ser_ratio<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub enhanced: PairMetrics,
    pub unprocessed: Option<PairMetrics>,
    /// Enhanced minus unprocessed segmental SNR.
    pub delta_segmental_snr: Option<f64>,
    pub delta_cepstral_distance: Option<f64>,
    pub mean_gain: Option<f64>,
    pub mean_cdr: Option<f64>,
    #[serde(default)]
    pub bands: Vec<BandBias>,
}

impl MetricReport {
    /// Flattened `(metric, value)` pairs for CSV output.
    pub fn flat(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("cepstral_distance".to_string(), self.enhanced.cepstral_distance),
            ("segmental_snr".to_string(), self.enhanced.segmental_snr),
        ];
        if let Some(u) = self.unprocessed {
            rows.push(("unprocessed_cepstral_distance".into(), u.cepstral_distance));
            rows.push(("unprocessed_segmental_snr".into(), u.segmental_snr));
        }
        let optional = [
            ("delta_segmental_snr", self.delta_segmental_snr),
            ("delta_cepstral_distance", self.delta_cepstral_distance),
            ("mean_gain", self.mean_gain),
            ("mean_cdr", self.mean_cdr),
        ];
        rows.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        for b in &self.bands {
            let c = b.center_hz;
            rows.push((format!("band_{c}_true_ratio"), b.true_ratio));
            rows.push((format!("band_{c}_mean_cdr"), b.mean_cdr));
            rows.push((format!("band_{c}_mean_gain"), b.mean_gain));
        }
        rows
    }
}

/// Per-band mean of per-bin values whose frequency falls in `[lo, hi)`.
fn band_mean(values: &[f64], bin_freqs: &[f64], lo: f64, hi: f64) -> f64 {
    let (sum, n) = values
        .iter()
        .zip(bin_freqs)
        .filter(|(_, &f)| f >= lo && f < hi)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Builds the estimator-bias table from per-bin engine statistics.
pub fn bias_table(truth: &GroundTruth, stats: &BinStats, bin_freqs: &[f64]) -> Vec<BandBias> {
    let cdr = stats.mean_cdr();
    let gain = stats.mean_gain();
    truth
        .bands
        .iter()
        .map(|b| BandBias {
            center_hz: b.center_hz,
            true_ratio: b.ratio,
            mean_cdr: band_mean(&cdr, bin_freqs, b.lo_hz, b.hi_hz),
            mean_gain: band_mean(&gain, bin_freqs, b.lo_hz, b.hi_hz),
        })
        .collect()
}

/// Scores an enhanced scene against its clean direct component.
///
/// `engine` carries the enhancer's per-bin statistics and bin frequencies.
pub fn evaluate_scene(scene: &Scene, enhanced: &Binaural, engine: Option<(&BinStats, &[f64])>) -> Result<MetricReport> {
    if enhanced.len() != scene.mix.len() || enhanced.right.len() != enhanced.left.len() {
        return Err(Error::SizeMismatch { expected: scene.mix.len(), actual: enhanced.len() });
    }
    let fs = scene.sample_rate;
    let enh = compare(&scene.direct, enhanced, fs)?;
    let raw = compare(&scene.direct, &scene.mix, fs)?;
    let (mean_gain, mean_cdr, bands) = match engine {
        Some((stats, freqs)) => {
            (Some(stats.overall_gain()), Some(stats.overall_cdr()), bias_table(&scene.truth, stats, freqs))
        }
        None => (None, None, Vec::new()),
    };
    Ok(MetricReport {
        enhanced: enh,
        unprocessed: Some(raw),
        delta_segmental_snr: Some(enh.segmental_snr - raw.segmental_snr),
        delta_cepstral_distance: Some(enh.cepstral_distance - raw.cepstral_distance),
        mean_gain,
        mean_cdr,
        bands,
    })
}

/// Reference-versus-processed report without scene context.
pub fn evaluate_pair(reference: &Binaural, processed: &Binaural, sample_rate: u32) -> Result<MetricReport> {
    if reference.len() != processed.len() {
        return Err(Error::SizeMismatch { expected: reference.len(), actual: processed.len() });
    }
    Ok(MetricReport {
        enhanced: compare(reference, processed, sample_rate)?,
        unprocessed: None,
        delta_segmental_snr: None,
        delta_cepstral_distance: None,
        mean_gain: None,
        mean_cdr: None,
        bands: Vec::new(),
    })
}
