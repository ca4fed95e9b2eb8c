//! Synthetic binaural scenes with known direct and diffuse composition.
//!
//! A scene is a sum of spatialised components. Directional sources get a
//! pure interaural time difference; diffuse noise gets the spherically
//! isotropic sinc coherence imposed per frequency. Every component is kept
//! separately so ground truth can be measured exactly.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::RealFftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::audio::{read_mono_wav, SampleFormat, StereoAudio};
use crate::cdr::diffuse_coherence;
use crate::error::{Error, Result};
use crate::stft::hann;

/// RMS of a component at 0 dB.
pub const REFERENCE_RMS: f64 = 0.05;
const FRACTIONAL_TAPS: usize = 64;
const CLIP_TARGET: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSignal {
    SpeechShapedNoise,
    WhiteNoise,
    Tone { freq_hz: f64 },
    /// First channel of a WAV file at the scene rate, truncated or zero-padded.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectSpec {
    pub source: SourceSignal,
    #[serde(default)]
    pub azimuth_deg: f64,
    #[serde(default)]
    pub level_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffuseSpec {
    #[serde(default)]
    pub level_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowpassNoiseSpec {
    pub cutoff_hz: f64,
    #[serde(default)]
    pub level_db: f64,
}

fn default_d_mic() -> f64 {
    0.17
}

fn default_c() -> f64 {
    343.0
}

/// Scene description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub sample_rate: u32,
    pub duration_s: f64,
    #[serde(default)]
    pub direct: Option<DirectSpec>,
    /// Interfering directional sources.
    #[serde(default)]
    pub maskers: Vec<DirectSpec>,
    #[serde(default)]
    pub diffuse: Option<DiffuseSpec>,
    /// Low-pass filtered noise, spatially diffuse below the cutoff.
    #[serde(default)]
    pub lowpass_noise: Option<LowpassNoiseSpec>,
    #[serde(default = "default_d_mic")]
    pub d_mic: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    /// Broadside speech-shaped target at `direct_db` over diffuse noise at `diffuse_db`.
    pub fn broadside(sample_rate: u32, duration_s: f64, direct_db: Option<f64>, diffuse_db: Option<f64>, seed: u64) -> Self {
        Self {
            sample_rate,
            duration_s,
            direct: direct_db.map(|level_db| DirectSpec {
                source: SourceSignal::SpeechShapedNoise,
                azimuth_deg: 0.0,
                level_db,
            }),
            maskers: Vec::new(),
            diffuse: diffuse_db.map(|level_db| DiffuseSpec { level_db }),
            lowpass_noise: None,
            d_mic: default_d_mic(),
            c: default_c(),
            seed,
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config("scene needs a positive sample rate and duration".into()));
        }
        if !(self.d_mic > 0.0 && self.c > 0.0 && self.d_mic.is_finite() && self.c.is_finite()) {
            return Err(Error::Config("d_mic and c must be positive".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for src in self.direct.iter().chain(&self.maskers) {
            if !(-90.0..=90.0).contains(&src.azimuth_deg) {
                return Err(Error::Config(format!("azimuth {} outside [-90, 90]", src.azimuth_deg)));
            }
            if !src.level_db.is_finite() {
                return Err(Error::Config("levels must be finite".into()));
            }
            if let SourceSignal::Tone { freq_hz } = src.source {
                if !(freq_hz > 0.0 && freq_hz < nyquist) {
                    return Err(Error::Config(format!("tone frequency {freq_hz} Hz outside (0, Nyquist)")));
                }
            }
        }
        if self.diffuse.is_some_and(|d| !d.level_db.is_finite()) {
            return Err(Error::Config("levels must be finite".into()));
        }
        if let Some(lp) = self.lowpass_noise {
            if !lp.level_db.is_finite() || !(lp.cutoff_hz > 0.0 && lp.cutoff_hz <= nyquist) {
                return Err(Error::Config("lowpass noise needs a finite level and cutoff in (0, Nyquist]".into()));
            }
        }
        Ok(())
    }
}

/// A two-channel signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Binaural {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Binaural {
    pub fn zeros(n: usize) -> Self {
        Self { left: vec![0.0; n], right: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    /// RMS over both channels.
    pub fn rms(&self) -> f64 {
        let n = 2 * self.len();
        if n == 0 {
            return 0.0;
        }
        (self.left.iter().chain(&self.right).map(|x| x * x).sum::<f64>() / n as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.left.iter().chain(&self.right).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&mut self, g: f64) {
        for x in self.left.iter_mut().chain(self.right.iter_mut()) {
            *x *= g;
        }
    }

    pub fn add(&mut self, other: &Binaural) {
        for (a, b) in self.left.iter_mut().zip(&other.left) {
            *a += b;
        }
        for (a, b) in self.right.iter_mut().zip(&other.right) {
            *a += b;
        }
    }

    pub fn into_audio(self, sample_rate: u32) -> StereoAudio {
        StereoAudio { sample_rate, format: SampleFormat::F32, left: self.left, right: self.right }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Interaural delay in seconds; positive when the left ear lags.
pub fn itd_seconds(azimuth_deg: f64, d_mic: f64, c: f64) -> f64 {
    d_mic * azimuth_deg.to_radians().sin() / c
}

/// Delays `x` by `delay` samples (may be fractional) with a 64-tap
/// Blackman-windowed sinc. Output has the input's length.
pub fn fractional_delay(x: &[f64], delay: f64) -> Vec<f64> {
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole as isize;
    if frac == 0.0 {
        return (0..x.len() as isize)
            .map(|n| usize::try_from(n - whole).ok().and_then(|i| x.get(i)).copied().unwrap_or(0.0))
            .collect();
    }
    let half = (FRACTIONAL_TAPS / 2) as isize;
    let taps: Vec<(isize, f64)> = (1 - half..=half)
        .map(|j| {
            let t = j as f64 - frac;
            let sinc = (PI * t).sin() / (PI * t);
            let w = 0.42 + 0.5 * (PI * t / half as f64).cos() + 0.08 * (2.0 * PI * t / half as f64).cos();
            (j, sinc * w)
        })
        .collect();
    (0..x.len() as isize)
        .map(|n| {
            taps.iter()
                .filter_map(|&(j, h)| usize::try_from(n - whole - j).ok().and_then(|i| x.get(i)).map(|&v| v * h))
                .sum()
        })
        .collect()
}

/// Places a mono source at `azimuth_deg` by delaying the far ear.
///
/// Positive azimuth is to the right, so the left channel lags.
pub fn synth_direct(signal: &[f64], azimuth_deg: f64, d_mic: f64, c: f64, sample_rate: u32) -> Binaural {
    let delay = itd_seconds(azimuth_deg, d_mic, c) * sample_rate as f64;
    if delay == 0.0 {
        return Binaural { left: signal.to_vec(), right: signal.to_vec() };
    }
    let far = fractional_delay(signal, delay.abs());
    if delay > 0.0 {
        Binaural { left: far, right: signal.to_vec() }
    } else {
        Binaural { left: signal.to_vec(), right: far }
    }
}

/// Two-channel noise with long-term coherence `sinc(2 pi f d_mic / c)`.
///
/// Bins above `cutoff_hz` are zeroed when given.
pub fn synth_diffuse_band(
    n: usize,
    sample_rate: u32,
    d_mic: f64,
    c: f64,
    seed: u64,
    cutoff_hz: Option<f64>,
) -> Binaural {
    if n == 0 {
        return Binaural::default();
    }
    let mut rng = rng_for(seed, 1);
    let mut n1 = gaussian(n, &mut rng);
    let mut n2 = gaussian(n, &mut rng);

    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut s1 = fwd.make_output_vec();
    let mut s2 = fwd.make_output_vec();
    fwd.process(&mut n1, &mut s1).expect("buffer sizes come from the plan");
    fwd.process(&mut n2, &mut s2).expect("buffer sizes come from the plan");

    let bin_hz = sample_rate as f64 / n as f64;
    let (mut x1, mut x2) = (s1.clone(), s1);
    for (k, (a, b)) in x1.iter_mut().zip(x2.iter_mut()).enumerate() {
        let f = k as f64 * bin_hz;
        if cutoff_hz.is_some_and(|fc| f > fc) {
            *a = Complex64::default();
            *b = Complex64::default();
            continue;
        }
        let g = diffuse_coherence(f, d_mic, c);
        *b = *b * g + s2[k] * (1.0 - g * g).max(0.0).sqrt();
    }
    // Inverse transform needs exactly real DC and Nyquist bins.
    x1[0].im = 0.0;
    x2[0].im = 0.0;
    if n.is_multiple_of(2) {
        x1[n / 2].im = 0.0;
        x2[n / 2].im = 0.0;
    }
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    inv.process(&mut x1, &mut left).expect("buffer sizes come from the plan");
    inv.process(&mut x2, &mut right).expect("buffer sizes come from the plan");
    let mut out = Binaural { left, right };
    out.scale(1.0 / n as f64);
    out
}

pub fn synth_diffuse(duration_s: f64, sample_rate: u32, d_mic: f64, c: f64, seed: u64) -> Binaural {
    let n = (duration_s * sample_rate as f64).round() as usize;
    synth_diffuse_band(n, sample_rate, d_mic, c, seed, None)
}

/// Gaussian noise with a long-term speech spectrum: flat to 500 Hz, falling
/// 9 dB per octave above, nothing below 100 Hz.
pub fn speech_shaped_noise(n: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut x = gaussian(n, rng);
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut x, &mut spec).expect("buffer sizes come from the plan");
    let bin_hz = sample_rate as f64 / n as f64;
    for (k, z) in spec.iter_mut().enumerate() {
        let f = k as f64 * bin_hz;
        *z *= if f < 100.0 {
            0.0
        } else if f <= 500.0 {
            1.0
        } else {
            (500.0 / f).powf(1.5)
        };
    }
    if n.is_multiple_of(2) {
        spec[n / 2].im = 0.0;
    }
    inv.process(&mut spec, &mut x).expect("buffer sizes come from the plan");
    x
}

fn set_rms(x: &mut Binaural, level_db: f64) {
    let rms = x.rms();
    if rms > 0.0 {
        x.scale(REFERENCE_RMS * 10f64.powf(level_db / 20.0) / rms);
    }
}

fn source_samples(src: &SourceSignal, n: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    Ok(match src {
        SourceSignal::SpeechShapedNoise => speech_shaped_noise(n, sample_rate, rng),
        SourceSignal::WhiteNoise => gaussian(n, rng),
        SourceSignal::Tone { freq_hz } => {
            let w = 2.0 * PI * freq_hz / sample_rate as f64;
            (0..n).map(|i| (w * i as f64).sin()).collect()
        }
        SourceSignal::File { path } => {
            let (rate, mut x) = read_mono_wav(path)?;
            if rate != sample_rate {
                return Err(Error::SampleRate { expected: sample_rate, actual: rate });
            }
            x.resize(n, 0.0);
            x
        }
    })
}

/// One octave band of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandTruth {
    pub center_hz: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// Direct power over interference power; `inf` without interference,
    /// 0 without a direct component.
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sample_rate: u32,
    /// Factor applied to every component to avoid clipping (1 when none).
    pub scale: f64,
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub broadband_ratio: f64,
    pub bands: Vec<BandTruth>,
}

fn ser_ratio<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_ratio<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
    }
}

fn ratio(direct: f64, interference: f64) -> f64 {
    if interference <= 0.0 {
        if direct > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        direct / interference
    }
}

/// Octave bands centred on 125 Hz, 250 Hz, ... whose lower edge is below Nyquist.
pub fn octave_bands(sample_rate: u32) -> Vec<(f64, f64, f64)> {
    let nyquist = sample_rate as f64 / 2.0;
    let mut out = Vec::new();
    let mut fc = 125.0;
    while fc / 2f64.sqrt() < nyquist {
        out.push((fc, fc / 2f64.sqrt(), (fc * 2f64.sqrt()).min(nyquist)));
        fc *= 2.0;
    }
    out
}

/// Power of `x` (both channels summed) inside each `(lo, hi)` range.
pub fn band_powers(x: &Binaural, sample_rate: u32, bands: &[(f64, f64)]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; bands.len()];
    if n == 0 {
        return out;
    }
    let fwd = RealFftPlanner::<f64>::new().plan_fft_forward(n);
    let bin_hz = sample_rate as f64 / n as f64;
    for ch in [&x.left, &x.right] {
        let mut buf = ch.clone();
        let mut spec = fwd.make_output_vec();
        fwd.process(&mut buf, &mut spec).expect("buffer sizes come from the plan");
        for (p, &(lo, hi)) in out.iter_mut().zip(bands) {
            *p += spec
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = *k as f64 * bin_hz;
                    f >= lo && f < hi
                })
                .map(|(_, z)| z.norm_sqr())
                .sum::<f64>();
        }
    }
    out
}

/// A rendered scene with its separated components.
#[derive(Debug, Clone)]
pub struct Scene {
    pub sample_rate: u32,
    pub mix: Binaural,
    /// Target component as it arrives at the ears (zero when absent).
    pub direct: Binaural,
    /// Everything else: maskers, diffuse and low-pass noise.
    pub interference: Binaural,
    pub truth: GroundTruth,
}

/// Renders every component, calibrates levels and sums them.
pub fn mix_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let n = spec.num_samples();
    let fs = spec.sample_rate;

    let mut direct = Binaural::zeros(n);
    if let Some(d) = &spec.direct {
        let mono = source_samples(&d.source, n, fs, &mut rng_for(spec.seed, 0))?;
        direct = synth_direct(&mono, d.azimuth_deg, spec.d_mic, spec.c, fs);
        set_rms(&mut direct, d.level_db);
    }

    let mut interference = Binaural::zeros(n);
    for (i, m) in spec.maskers.iter().enumerate() {
        let mono = source_samples(&m.source, n, fs, &mut rng_for(spec.seed, 16 + i as u64))?;
        let mut part = synth_direct(&mono, m.azimuth_deg, spec.d_mic, spec.c, fs);
        set_rms(&mut part, m.level_db);
        interference.add(&part);
    }
    if let Some(d) = spec.diffuse {
        let mut part = synth_diffuse_band(n, fs, spec.d_mic, spec.c, spec.seed, None);
        set_rms(&mut part, d.level_db);
        interference.add(&part);
    }
    if let Some(lp) = spec.lowpass_noise {
        let mut part = synth_diffuse_band(n, fs, spec.d_mic, spec.c, spec.seed ^ 0x9E37_79B9_7F4A_7C15, Some(lp.cutoff_hz));
        set_rms(&mut part, lp.level_db);
        interference.add(&part);
    }

    let mut mix = direct.clone();
    mix.add(&interference);
    let peak = mix.peak();
    let scale = if peak > CLIP_TARGET { CLIP_TARGET / peak } else { 1.0 };
    if scale != 1.0 {
        log::warn!("scene would clip (peak {peak:.3}), scaled by {scale:.4}");
        for b in [&mut mix, &mut direct, &mut interference] {
            b.scale(scale);
        }
    }

    let octaves = octave_bands(fs);
    let edges: Vec<(f64, f64)> = octaves.iter().map(|&(_, lo, hi)| (lo, hi)).collect();
    let pd = band_powers(&direct, fs, &edges);
    let pi = band_powers(&interference, fs, &edges);
    let bands = octaves
        .iter()
        .zip(pd.iter().zip(&pi))
        .map(|(&(center_hz, lo_hz, hi_hz), (&d, &i))| BandTruth { center_hz, lo_hz, hi_hz, ratio: ratio(d, i) })
        .collect();
    let energy = |b: &Binaural| b.left.iter().chain(&b.right).map(|x| x * x).sum::<f64>();
    let truth = GroundTruth {
        sample_rate: fs,
        scale,
        broadband_ratio: ratio(energy(&direct), energy(&interference)),
        bands,
    };
    Ok(Scene { sample_rate: fs, mix, direct, interference, truth })
}

/// Welch-averaged complex coherence with Hann frames of `frame_len` and
/// 50% overlap. Returns `frame_len / 2 + 1` bins.
pub fn long_term_coherence(left: &[f64], right: &[f64], frame_len: usize) -> Vec<Complex64> {
    let bins = frame_len / 2 + 1;
    let hop = frame_len / 2;
    let window = hann(frame_len);
    let fwd = RealFftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut sll = vec![0.0; bins];
    let mut srr = vec![0.0; bins];
    let mut slr = vec![Complex64::default(); bins];
    let mut bl = vec![0.0; frame_len];
    let mut br = vec![0.0; frame_len];
    let mut xl = fwd.make_output_vec();
    let mut xr = fwd.make_output_vec();
    let n = left.len().min(right.len());
    let mut start = 0;
    while start + frame_len <= n {
        for i in 0..frame_len {
            bl[i] = left[start + i] * window[i];
            br[i] = right[start + i] * window[i];
        }
        fwd.process(&mut bl, &mut xl).expect("buffer sizes come from the plan");
        fwd.process(&mut br, &mut xr).expect("buffer sizes come from the plan");
        for k in 0..bins {
            sll[k] += xl[k].norm_sqr();
            srr[k] += xr[k].norm_sqr();
            slr[k] += xl[k] * xr[k].conj();
        }
        start += hop;
    }
    (0..bins)
        .map(|k| {
            let den = (sll[k] * srr[k]).sqrt();
            if den > 0.0 {
                slr[k] / den
            } else {
                Complex64::default()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn broadside_duplicates() {
        let mut rng = rng_for(1, 0);
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = synth_direct(&x, 0.0, 0.17, 343.0, 16_000);
        assert_eq!(b.left, b.right);
        assert_eq!(b.left, x);
    }

    #[test]
    fn itd_at_ninety_degrees() {
        let samples = itd_seconds(90.0, 0.17, 343.0) * 32_000.0;
        assert!((samples - 15.860058309037901).abs() < 1e-12);
        assert!((itd_seconds(90.0, 0.17, 343.0) * 1e3 - 0.4956).abs() < 1e-4);
    }

    #[test]
    fn mirror_azimuth_swaps_channels() {
        let mut rng = rng_for(2, 0);
        let x: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = synth_direct(&x, 35.0, 0.17, 343.0, 32_000);
        let b = synth_direct(&x, -35.0, 0.17, 343.0, 32_000);
        assert_eq!(a.left, b.right);
        assert_eq!(a.right, b.left);
        assert_eq!(a.right, x);
    }

    #[test]
    fn fractional_delay_of_band_limited_tone() {
        let fs = 16_000.0;
        let w = 2.0 * PI * 440.0 / fs;
        let x: Vec<f64> = (0..2000).map(|i| (w * i as f64).sin()).collect();
        let y = fractional_delay(&x, 3.37);
        for (i, v) in y.iter().enumerate().take(1900).skip(100) {
            assert!((v - (w * (i as f64 - 3.37)).sin()).abs() < 1e-3, "{i}");
        }
    }

    #[test]
    fn integer_delay_is_exact_shift() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y = fractional_delay(&x, 4.0);
        assert_eq!(&y[..4], &[0.0; 4]);
        assert_eq!(&y[4..], &x[..46]);
    }

    #[test]
    fn diffuse_low_and_zero_crossing_coherence() {
        let fs = 16_000;
        let d = synth_diffuse(10.0, fs, 0.17, 343.0, 3);
        let gamma = long_term_coherence(&d.left, &d.right, 512);
        let bin_hz = fs as f64 / 512.0;
        assert!(gamma[1].re > 0.9);
        let zero = 343.0 / (2.0 * 0.17);
        let k0 = (zero / bin_hz).round() as usize;
        for (k, g) in gamma.iter().enumerate().take(k0 + 2).skip(k0 - 1) {
            assert!(g.norm() < 0.15, "bin {k}: {}", g.norm());
        }
    }

    #[test]
    fn seeds_decorrelate_but_share_profile() {
        let fs = 16_000;
        let a = synth_diffuse(10.0, fs, 0.17, 343.0, 10);
        let b = synth_diffuse(10.0, fs, 0.17, 343.0, 11);
        let cross = long_term_coherence(&a.left, &b.left, 512);
        let mean_cross = cross.iter().map(|g| g.norm()).sum::<f64>() / cross.len() as f64;
        assert!(mean_cross < 0.1, "{mean_cross}");
        let ga = long_term_coherence(&a.left, &a.right, 512);
        let gb = long_term_coherence(&b.left, &b.right, 512);
        let diff = ga.iter().zip(&gb).map(|(x, y)| (x.re - y.re).abs()).sum::<f64>() / ga.len() as f64;
        assert!(diff < 0.05, "{diff}");
    }

    #[test]
    fn reproducible() {
        let mut spec = SceneSpec::broadside(16_000, 1.0, Some(0.0), Some(-6.0), 99);
        spec.lowpass_noise = Some(LowpassNoiseSpec { cutoff_hz: 400.0, level_db: -10.0 });
        spec.maskers.push(DirectSpec { source: SourceSignal::WhiteNoise, azimuth_deg: 60.0, level_db: -6.0 });
        let a = mix_scene(&spec).unwrap();
        let b = mix_scene(&spec).unwrap();
        assert_eq!(a.mix, b.mix);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn sentinels() {
        let direct_only = mix_scene(&SceneSpec::broadside(16_000, 1.0, Some(0.0), None, 1)).unwrap();
        assert!(direct_only.truth.broadband_ratio.is_infinite());
        assert!(direct_only.truth.bands.iter().skip(1).all(|b| b.ratio.is_infinite()));
        let json = serde_json::to_value(&direct_only.truth).unwrap();
        assert_eq!(json["broadband_ratio"], "inf");
        let back: GroundTruth = serde_json::from_value(json).unwrap();
        assert_eq!(back, direct_only.truth);

        let diffuse_only = mix_scene(&SceneSpec::broadside(16_000, 1.0, None, Some(0.0), 1)).unwrap();
        assert_eq!(diffuse_only.truth.broadband_ratio, 0.0);
        assert!(diffuse_only.truth.bands.iter().all(|b| b.ratio == 0.0));
    }

    #[test]
    fn flat_direct_and_diffuse_at_equal_level() {
        let spec = SceneSpec {
            direct: Some(DirectSpec { source: SourceSignal::WhiteNoise, azimuth_deg: 0.0, level_db: 0.0 }),
            ..SceneSpec::broadside(16_000, 4.0, None, Some(0.0), 5)
        };
        let scene = mix_scene(&spec).unwrap();
        for b in &scene.truth.bands {
            let db = 10.0 * b.ratio.log10();
            assert!(db.abs() < 1.0, "{} Hz: {db} dB", b.center_hz);
        }
        assert!((10.0 * scene.truth.broadband_ratio.log10()).abs() < 0.1);
    }

    #[test]
    fn clipping_is_normalised() {
        let scene = mix_scene(&SceneSpec::broadside(16_000, 1.0, Some(30.0), Some(20.0), 2)).unwrap();
        assert!(scene.truth.scale < 1.0);
        assert!(scene.mix.peak() <= CLIP_TARGET + 1e-12);
        let mut sum = scene.direct.clone();
        sum.add(&scene.interference);
        let err = sum.left.iter().zip(&scene.mix.left).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-15);
    }

    #[test]
    fn levels_are_calibrated() {
        let scene = mix_scene(&SceneSpec::broadside(16_000, 2.0, Some(-6.0), Some(0.0), 4)).unwrap();
        assert!((scene.direct.rms() - REFERENCE_RMS * 10f64.powf(-0.3)).abs() < 1e-12);
        assert!((scene.interference.rms() - REFERENCE_RMS).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut spec = SceneSpec::broadside(16_000, 1.0, Some(0.0), None, 0);
        spec.direct.as_mut().unwrap().azimuth_deg = 120.0;
        assert!(mix_scene(&spec).is_err());
        let json = r#"{"sample_rate":16000,"duration_s":0.5,"direct":{"source":{"kind":"tone","freq_hz":500},"azimuth_deg":45}}"#;
        let spec: SceneSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.d_mic, 0.17);
        let scene = mix_scene(&spec).unwrap();
        assert_eq!(scene.mix.len(), 8000);
    }
}
