//! Binaural speech enhancement driven by a parameterised
//! coherence-to-diffuse power ratio (CDR) estimator.
//!
//! The processing chain is
//! [`stft`] analysis → [`coherence`] → [`cdr`] → [`gain`] → WOLA synthesis,
//! orchestrated by [`engine`] for offline files and low-latency streams.
//! [`scenes`] generates synthetic binaural test material with known ground
//! truth and [`metrics`] scores the results.

pub mod audio;
pub mod cdr;
pub mod coherence;
pub mod engine;
pub mod error;
pub mod gain;
pub mod locus;
pub mod metrics;
pub mod scenes;
pub mod stft;

pub use audio::{read_mono_wav, read_stereo_wav, write_stereo_wav, SampleFormat, StereoAudio};
pub use cdr::{
    baseline_cdr_p3, cdr_frame, diffuse_coherence, new_cdr, CdrFrame, CdrMapper, EnhancerParams, Estimator,
    DEFAULT_CDR_MAX,
};
pub use coherence::{clamp_coherence, ComplexCoherence, PsdState, COHERENCE_EPS};
pub use engine::control::{
    mailbox, telemetry_queue, ClientMessage, ControlCommand, ControlReceiver, ControlSender, ControlState, EngineState,
    ParamName, ServerMessage, TelemetryReceiver, TelemetrySender,
};
pub use engine::server::ControlServer;
pub use engine::stream::{run_stream, StreamOptions, StreamReport};
pub use engine::telemetry::{BandLayout, Telemetry, TelemetryLog, NUM_BANDS};
pub use engine::{process_audio, process_signal, process_signal_with, BinStats, Enhancer, PipelineConfig, Processed};
pub use error::{Error, Result};
pub use gain::{apply_gain, compute_gain, gain_for, GainFrame, GainRule};
pub use locus::{locus, LocusPoint, LocusSettings};
pub use metrics::{cepstral_distance, evaluate_pair, evaluate_scene, segmental_snr, MetricReport, PairMetrics};
pub use scenes::{mix_scene, synth_diffuse, synth_direct, Binaural, GroundTruth, Scene, SceneSpec, SourceSignal};
pub use stft::{streaming_output_schedule, Analyzer, FrameSpectra, StftConfig, StftMode, Synthesizer, WindowKind};
