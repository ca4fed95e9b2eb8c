//! WAV file and raw PCM I/O.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUPPORTED_RATES: [u32; 2] = [16_000, 32_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    S16,
    F32,
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s16" => Ok(Self::S16),
            "f32" => Ok(Self::F32),
            other => Err(Error::Format(format!("unknown sample format '{other}' (expected s16 or f32)"))),
        }
    }
}

impl SampleFormat {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            Self::S16 => 2,
            Self::F32 => 4,
        }
    }
}

/// Decoded two-channel audio at full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoAudio {
    pub sample_rate: u32,
    pub format: SampleFormat,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl StereoAudio {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.left.iter().chain(&self.right).fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn read_channels<R: Read>(reader: WavReader<R>) -> Result<(WavSpec, Vec<Vec<f64>>)> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (HoundFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => return Err(Error::Format(format!("{bits}-bit {fmt:?} PCM is not supported"))),
    };
    let mut out = vec![Vec::with_capacity(samples.len() / channels.max(1)); channels];
    for frame in samples.chunks_exact(channels) {
        for (ch, &s) in frame.iter().enumerate() {
            out[ch].push(s);
        }
    }
    Ok((spec, out))
}

fn format_of(spec: &WavSpec) -> SampleFormat {
    match spec.sample_format {
        HoundFormat::Float => SampleFormat::F32,
        HoundFormat::Int => SampleFormat::S16,
    }
}

/// Reads a two-channel 16-bit or float WAV at 16 or 32 kHz.
pub fn read_stereo_wav(path: impl AsRef<Path>) -> Result<StereoAudio> {
    let (spec, mut channels) = read_channels(WavReader::open(path)?)?;
    if spec.channels != 2 {
        return Err(Error::ChannelCount(spec.channels));
    }
    if !SUPPORTED_RATES.contains(&spec.sample_rate) {
        return Err(Error::Format(format!(
            "sample rate {} Hz is not supported (16000 or 32000)",
            spec.sample_rate
        )));
    }
    let right = channels.pop().unwrap_or_default();
    let left = channels.pop().unwrap_or_default();
    Ok(StereoAudio { sample_rate: spec.sample_rate, format: format_of(&spec), left, right })
}

/// Reads the first channel of any 16-bit or float WAV, with its sample rate.
pub fn read_mono_wav(path: impl AsRef<Path>) -> Result<(u32, Vec<f64>)> {
    let (spec, channels) = read_channels(WavReader::open(path)?)?;
    Ok((spec.sample_rate, channels.into_iter().next().unwrap_or_default()))
}

pub fn write_stereo_wav(path: impl AsRef<Path>, audio: &StereoAudio) -> Result<()> {
    let spec = WavSpec {
        channels: 2,
        sample_rate: audio.sample_rate,
        bits_per_sample: match audio.format {
            SampleFormat::S16 => 16,
            SampleFormat::F32 => 32,
        },
        sample_format: match audio.format {
            SampleFormat::S16 => HoundFormat::Int,
            SampleFormat::F32 => HoundFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    for (&l, &r) in audio.left.iter().zip(&audio.right) {
        for s in [l, r] {
            match audio.format {
                SampleFormat::S16 => writer.write_sample(to_i16(s))?,
                SampleFormat::F32 => writer.write_sample(s as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[inline]
fn to_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Decodes interleaved little-endian stereo PCM into two channels.
///
/// `bytes.len()` must be `2 * left.len() * bytes_per_sample`.
pub fn decode_interleaved(bytes: &[u8], format: SampleFormat, left: &mut [f64], right: &mut [f64]) {
    let width = format.bytes_per_sample();
    for (i, frame) in bytes.chunks_exact(2 * width).enumerate() {
        let (a, b) = frame.split_at(width);
        left[i] = decode_sample(a, format);
        right[i] = decode_sample(b, format);
    }
}

#[inline]
fn decode_sample(b: &[u8], format: SampleFormat) -> f64 {
    match format {
        SampleFormat::S16 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        SampleFormat::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
    }
}

pub fn encode_interleaved(left: &[f64], right: &[f64], format: SampleFormat, bytes: &mut [u8]) {
    let width = format.bytes_per_sample();
    for ((frame, &l), &r) in bytes.chunks_exact_mut(2 * width).zip(left).zip(right) {
        let (a, b) = frame.split_at_mut(width);
        encode_sample(l, format, a);
        encode_sample(r, format, b);
    }
}

#[inline]
fn encode_sample(s: f64, format: SampleFormat, out: &mut [u8]) {
    match format {
        SampleFormat::S16 => out.copy_from_slice(&to_i16(s).to_le_bytes()),
        SampleFormat::F32 => out.copy_from_slice(&(s as f32).to_le_bytes()),
    }
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
pub fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn write_all<W: Write>(writer: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    writer.write_all(bytes)
}
