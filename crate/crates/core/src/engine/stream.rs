//! Real-time loop over interleaved little-endian PCM pipes.
//!
//! Each iteration reads one hop of stereo samples, drains the control
//! mailbox, processes one frame and writes one hop. All buffers are sized
//! before the first block.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::Serialize;

use crate::audio::{decode_interleaved, encode_interleaved, read_full, SampleFormat};
use crate::engine::control::{ControlReceiver, TelemetrySender};
use crate::engine::{Enhancer, PipelineConfig};
use crate::error::{Error, Result};
use crate::stft::{streaming_output_schedule, StftMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamOptions {
    pub format: SampleFormat,
    /// After EOF, push zeros through until every input sample has left the
    /// synthesis stage.
    pub flush_tail: bool,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self { format: SampleFormat::F32, flush_tail: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StreamReport {
    /// Hop-sized blocks processed, including tail flush.
    pub blocks: u64,
    /// Blocks that arrived short and were completed with zeros.
    pub zero_filled: u64,
    /// Frames dropped for non-finite input.
    pub rejected_frames: u64,
    pub telemetry_sent: u64,
    pub telemetry_dropped: u64,
    /// Algorithmic input-to-output delay in samples.
    pub latency_samples: usize,
}

/// Processes `input` into `output` until EOF or `stop` is raised.
pub fn run_stream<R: Read, W: Write>(
    input: &mut R,
    output: &mut W,
    cfg: &PipelineConfig,
    opts: StreamOptions,
    control: Option<&ControlReceiver>,
    telemetry: Option<&TelemetrySender>,
    stop: &AtomicBool,
) -> Result<StreamReport> {
    if cfg.stft.mode != StftMode::Streaming {
        return Err(Error::Config("run_stream needs a streaming STFT config".into()));
    }
    let latency = streaming_output_schedule(&cfg.stft)?;
    let mut enhancer = Enhancer::new(cfg)?;
    let hop = cfg.stft.hop;
    let block_bytes = 2 * hop * opts.format.bytes_per_sample();
    let mut in_bytes = vec![0u8; block_bytes];
    let mut out_bytes = vec![0u8; block_bytes];
    let mut in_l = vec![0.0; hop];
    let mut in_r = vec![0.0; hop];
    let mut out_l = vec![0.0; hop];
    let mut out_r = vec![0.0; hop];

    let mut report = StreamReport { latency_samples: latency, ..Default::default() };
    let tail_blocks = if opts.flush_tail { latency.div_ceil(hop) } else { 0 };
    let mut tail_left = None;

    while !stop.load(Ordering::Relaxed) {
        match tail_left {
            Some(0) => break,
            Some(ref mut n) => {
                *n -= 1;
                in_bytes.fill(0);
            }
            None => {
                let got = read_full(input, &mut in_bytes)?;
                if got == 0 {
                    tail_left = Some(tail_blocks);
                    continue;
                }
                if got < block_bytes {
                    in_bytes[got..].fill(0);
                    report.zero_filled += 1;
                    log::warn!("short read of {got} bytes, block zero-filled");
                }
            }
        }
        decode_interleaved(&in_bytes, opts.format, &mut in_l, &mut in_r);

        if let Some(mailbox) = control {
            enhancer.drain(mailbox);
        }
        enhancer.process_block(&in_l, &in_r, &mut out_l, &mut out_r)?;
        if let Some(queue) = telemetry {
            if enhancer.telemetry_due() {
                if enhancer.publish(queue) {
                    report.telemetry_sent += 1;
                } else {
                    report.telemetry_dropped += 1;
                }
            }
        }

        encode_interleaved(&out_l, &out_r, opts.format, &mut out_bytes);
        output.write_all(&out_bytes)?;
        report.blocks += 1;
    }
    output.flush()?;
    report.rejected_frames = enhancer.rejected_frames();
    Ok(report)
}
