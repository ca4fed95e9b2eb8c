//! Orchestration of analysis, coherence, CDR, gain and synthesis.
//!
//! [`Enhancer`] is the per-stream processor. It owns all buffers up front and
//! does no allocation per block, so the same object backs both offline file
//! processing ([`process_signal`]) and the real-time loop in [`stream`].

pub mod control;
pub mod server;
pub mod stream;
pub mod telemetry;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::StereoAudio;
use crate::cdr::{CdrMapper, EnhancerParams, Estimator};
use crate::coherence::{PsdState, DEFAULT_REL_FLOOR};
use crate::error::{Error, Result};
use crate::gain::{apply_gain, gain_for, GainRule};
use crate::stft::{Analyzer, FrameSpectra, StftConfig, Synthesizer};

use control::{ControlCommand, ControlReceiver, EngineState, TelemetrySender};
use telemetry::{BandLayout, Telemetry};

/// Everything needed to build an [`Enhancer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub params: EnhancerParams,
    pub estimator: Estimator,
    pub gain_rule: GainRule,
    pub telemetry_stride: usize,
}

impl PipelineConfig {
    pub fn offline() -> Self {
        Self {
            stft: StftConfig::offline(),
            params: EnhancerParams::default(),
            estimator: Estimator::New,
            gain_rule: GainRule::SquaredWiener,
            telemetry_stride: 1,
        }
    }

    pub fn streaming() -> Self {
        Self { stft: StftConfig::streaming(), ..Self::offline() }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.params.validate()?;
        if self.telemetry_stride == 0 {
            return Err(Error::Config("telemetry_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Running per-bin sums of CDR and gain over processed frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub cdr_sum: Vec<f64>,
    pub gain_sum: Vec<f64>,
    pub frames: u64,
}

impl BinStats {
    fn new(bins: usize) -> Self {
        Self { cdr_sum: vec![0.0; bins], gain_sum: vec![0.0; bins], frames: 0 }
    }

    pub fn mean_cdr(&self) -> Vec<f64> {
        self.cdr_sum.iter().map(|s| s / self.frames.max(1) as f64).collect()
    }

    pub fn mean_gain(&self) -> Vec<f64> {
        self.gain_sum.iter().map(|s| s / self.frames.max(1) as f64).collect()
    }

    /// Mean over every bin and frame.
    pub fn overall_cdr(&self) -> f64 {
        self.cdr_sum.iter().sum::<f64>() / (self.frames.max(1) as f64 * self.cdr_sum.len() as f64)
    }

    pub fn overall_gain(&self) -> f64 {
        self.gain_sum.iter().sum::<f64>() / (self.frames.max(1) as f64 * self.gain_sum.len() as f64)
    }
}

/// Streaming binaural enhancer. One instance per stream, single owner.
pub struct Enhancer {
    cfg: PipelineConfig,
    bypass: bool,
    analyzer: Analyzer,
    synthesizer: Synthesizer,
    psd: PsdState,
    mapper: CdrMapper,
    bands: BandLayout,
    frame: FrameSpectra,
    gamma: Vec<Complex64>,
    cdr: Vec<f64>,
    gain: Vec<f64>,
    telemetry: Telemetry,
    stats: BinStats,
    rejected_frames: u64,
}

impl Enhancer {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let bins = cfg.stft.num_bins();
        Ok(Self {
            analyzer: Analyzer::new(&cfg.stft)?,
            synthesizer: Synthesizer::new(&cfg.stft)?,
            psd: PsdState::new(bins, cfg.params.lambda)?,
            mapper: CdrMapper::new(cfg.estimator, &cfg.stft.bin_frequencies(), &cfg.params),
            bands: BandLayout::new(cfg.stft.sample_rate_hz, cfg.stft.fft_len),
            frame: FrameSpectra::zeros(bins),
            gamma: vec![Complex64::default(); bins],
            cdr: vec![0.0; bins],
            gain: vec![1.0; bins],
            telemetry: Telemetry::default(),
            stats: BinStats::new(bins),
            rejected_frames: 0,
            bypass: false,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn params(&self) -> &EnhancerParams {
        &self.cfg.params
    }

    pub fn bypass(&self) -> bool {
        self.bypass
    }

    pub fn state(&self) -> EngineState {
        EngineState {
            params: self.cfg.params,
            bypass: self.bypass,
            estimator: self.cfg.estimator,
            gain_rule: self.cfg.gain_rule,
        }
    }

    pub fn hop(&self) -> usize {
        self.cfg.stft.hop
    }

    /// Frames processed so far.
    pub fn frames(&self) -> u64 {
        self.stats.frames
    }

    pub fn rejected_frames(&self) -> u64 {
        self.rejected_frames
    }

    pub fn coherence(&self) -> &[Complex64] {
        &self.gamma
    }

    pub fn cdr(&self) -> &[f64] {
        &self.cdr
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    /// Telemetry of the most recent frame.
    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn stats(&self) -> &BinStats {
        &self.stats
    }

    /// False until a frame with any nonzero power has been seen.
    pub fn has_signal(&self) -> bool {
        self.psd.phi_ll().iter().chain(self.psd.phi_rr()).any(|&p| p > 0.0)
    }

    /// Applies one control command. Values are assumed to be validated by the
    /// protocol layer; anything the estimator cannot accept is ignored.
    pub fn apply(&mut self, cmd: ControlCommand) {
        match cmd {
            ControlCommand::Bypass(on) => self.bypass = on,
            ControlCommand::SetParam(name, value) => {
                let mut next = self.cfg.params;
                name.apply(&mut next, value);
                if next.validate().is_ok() && self.psd.set_lambda(next.lambda).is_ok() {
                    self.cfg.params = next;
                }
            }
        }
    }

    /// Applies every pending mailbox command. Called at frame boundaries only,
    /// so each frame sees a single parameter snapshot.
    pub fn drain(&mut self, mailbox: &ControlReceiver) {
        while let Some(cmd) = mailbox.try_recv() {
            self.apply(cmd);
        }
    }

    /// Processes one hop of input and writes one hop of output per channel.
    pub fn process_block(
        &mut self,
        in_left: &[f64],
        in_right: &[f64],
        out_left: &mut [f64],
        out_right: &mut [f64],
    ) -> Result<()> {
        self.analyzer.analyze(in_left, in_right, &mut self.frame)?;

        match self.psd.update(&self.frame) {
            Ok(()) => {
                self.psd.coherence_into(DEFAULT_REL_FLOOR, &mut self.gamma);
                self.mapper.map_into(&self.gamma, &self.cfg.params, &mut self.cdr)?;
                let p = &self.cfg.params;
                for (g, &c) in self.gain.iter_mut().zip(&self.cdr) {
                    *g = if self.bypass { 1.0 } else { gain_for(c, p.mu, p.g_min, self.cfg.gain_rule) };
                }
                apply_gain(&mut self.frame, &self.gain)?;
            }
            Err(Error::NonFinite { .. }) => {
                // Drop the frame rather than poison the smoothed spectra.
                self.rejected_frames += 1;
                for z in self.frame.left.iter_mut().chain(self.frame.right.iter_mut()) {
                    *z = Complex64::default();
                }
            }
            Err(e) => return Err(e),
        }

        self.synthesizer.synthesize(&self.frame, out_left, out_right)?;

        self.bands.fill(self.frame.index, &self.cdr, &self.gain, &self.gamma, &mut self.telemetry);
        for ((cs, gs), (&c, &g)) in self
            .stats
            .cdr_sum
            .iter_mut()
            .zip(self.stats.gain_sum.iter_mut())
            .zip(self.cdr.iter().zip(&self.gain))
        {
            *cs += c;
            *gs += g;
        }
        self.stats.frames += 1;
        Ok(())
    }

    /// Whether the frame just processed is due for a telemetry record.
    pub fn telemetry_due(&self) -> bool {
        self.frame.index.is_multiple_of(self.cfg.telemetry_stride as u64)
    }

    pub fn publish(&self, queue: &TelemetrySender) -> bool {
        queue.offer(&self.telemetry)
    }
}

/// Result of offline processing.
#[derive(Debug, Clone)]
pub struct Processed {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub telemetry: Vec<Telemetry>,
    pub stats: BinStats,
}

/// Enhances a whole two-channel signal.
///
/// Output has the input's length; the fixed STFT delay is trimmed so output
/// sample `n` lines up with input sample `n`.
pub fn process_signal(left: &[f64], right: &[f64], cfg: &PipelineConfig) -> Result<Processed> {
    process_signal_with(left, right, cfg, |_, _| {})
}

/// Like [`process_signal`], calling `before_frame(frame_index, enhancer)`
/// ahead of every frame (used to script parameter changes).
pub fn process_signal_with<F>(left: &[f64], right: &[f64], cfg: &PipelineConfig, mut before_frame: F) -> Result<Processed>
where
    F: FnMut(u64, &mut Enhancer),
{
    if left.len() != right.len() {
        return Err(Error::SizeMismatch { expected: left.len(), actual: right.len() });
    }
    let mut enhancer = Enhancer::new(cfg)?;
    let hop = cfg.stft.hop;
    let delay = cfg.stft.delay_samples();
    let n = left.len();
    let total = (n + delay).div_ceil(hop) * hop;

    let mut out_l = vec![0.0; total];
    let mut out_r = vec![0.0; total];
    let mut block_l = vec![0.0; hop];
    let mut block_r = vec![0.0; hop];
    let mut telemetry = Vec::new();

    for (i, start) in (0..total).step_by(hop).enumerate() {
        for (j, (bl, br)) in block_l.iter_mut().zip(block_r.iter_mut()).enumerate() {
            let idx = start + j;
            (*bl, *br) = if idx < n { (left[idx], right[idx]) } else { (0.0, 0.0) };
        }
        before_frame(i as u64, &mut enhancer);
        enhancer.process_block(&block_l, &block_r, &mut out_l[start..start + hop], &mut out_r[start..start + hop])?;
        if enhancer.telemetry_due() {
            telemetry.push(*enhancer.telemetry());
        }
    }

    Ok(Processed {
        left: out_l[delay..delay + n].to_vec(),
        right: out_r[delay..delay + n].to_vec(),
        telemetry,
        stats: enhancer.stats,
    })
}

/// Enhances a decoded stereo file; the sample rate must match the config.
pub fn process_audio(input: &StereoAudio, cfg: &PipelineConfig) -> Result<(StereoAudio, Processed)> {
    if input.sample_rate != cfg.stft.sample_rate_hz {
        return Err(Error::SampleRate { expected: cfg.stft.sample_rate_hz, actual: input.sample_rate });
    }
    let processed = process_signal(&input.left, &input.right, cfg)?;
    let audio = StereoAudio {
        sample_rate: input.sample_rate,
        format: input.format,
        left: processed.left.clone(),
        right: processed.right.clone(),
    };
    Ok((audio, processed))
}

#[cfg(test)]
mod tests {
    use super::control::ParamName;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn silence_in_silence_out() {
        let z = vec![0.0; 8000];
        let out = process_signal(&z, &z, &PipelineConfig::offline()).unwrap();
        assert_eq!(out.left.len(), 8000);
        assert!(out.left.iter().chain(&out.right).all(|&x| x == 0.0));
        assert!(out.telemetry.iter().all(|t| t.band_cdr.iter().chain(&t.band_gain).all(|v| v.is_finite())));
    }

    #[test]
    fn identical_channels_pass_nearly_unchanged() {
        let x = noise(16_000, 4);
        let out = process_signal(&x, &x, &PipelineConfig::offline()).unwrap();
        assert!(out.stats.overall_gain() >= 0.9, "{}", out.stats.overall_gain());
    }

    #[test]
    fn bypass_is_delayed_identity() {
        let l = noise(9000, 1);
        let r = noise(9000, 2);
        let out = process_signal_with(&l, &r, &PipelineConfig::streaming(), |_, e| e.apply(ControlCommand::Bypass(true)))
            .unwrap();
        let err = l.iter().zip(&out.left).chain(r.iter().zip(&out.right)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn deterministic() {
        let l = noise(12_000, 5);
        let r = noise(12_000, 6);
        let a = process_signal(&l, &r, &PipelineConfig::offline()).unwrap();
        let b = process_signal(&l, &r, &PipelineConfig::offline()).unwrap();
        assert_eq!(a.left, b.left);
        assert_eq!(a.right, b.right);
    }

    #[test]
    fn non_finite_input_is_contained() {
        let mut l = noise(4096, 7);
        let r = noise(4096, 8);
        l[2000] = f64::NAN;
        let out = process_signal(&l, &r, &PipelineConfig::streaming()).unwrap();
        assert!(out.left.iter().chain(&out.right).all(|x| x.is_finite()));
    }

    #[test]
    fn invalid_params_ignored_on_apply() {
        let mut e = Enhancer::new(&PipelineConfig::streaming()).unwrap();
        e.apply(ControlCommand::SetParam(ParamName::S, -1.0));
        assert_eq!(e.params().s, 1.0);
        e.apply(ControlCommand::SetParam(ParamName::Lambda, 0.5));
        assert_eq!(e.params().lambda, 0.5);
    }

    #[test]
    fn rejects_zero_stride() {
        let cfg = PipelineConfig { telemetry_stride: 0, ..PipelineConfig::offline() };
        assert!(Enhancer::new(&cfg).is_err());
    }
}
