//! Real-time path properties: no allocation per block, stream/offline
//! equivalence and the I/O delay.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use binaural_cdr::audio::{decode_interleaved, encode_interleaved};
use binaural_cdr::engine::control::{mailbox, telemetry_queue, ControlCommand, ParamName};
use binaural_cdr::{
    process_signal, run_stream, streaming_output_schedule, Enhancer, Estimator, PipelineConfig, SampleFormat,
    StreamOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static ALLOCATIONS: AtomicUsize = AtomicUsize::new(0);
static COUNTING: AtomicBool = AtomicBool::new(false);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        if COUNTING.load(Ordering::Relaxed) {
            ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        }
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        if COUNTING.load(Ordering::Relaxed) {
            ALLOCATIONS.fetch_add(1, Ordering::Relaxed);
        }
        System.realloc(ptr, layout, new_size)
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Noise quantised to f32 so the PCM pipe carries it losslessly.
fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-0.5f32..0.5) as f64).collect()
}

#[test]
fn block_path_does_not_allocate() {
    for estimator in [Estimator::New, Estimator::P3] {
        let cfg = PipelineConfig { estimator, ..PipelineConfig::streaming() };
        let hop = cfg.stft.hop;
        let mut e = Enhancer::new(&cfg).unwrap();
        let (tx, rx) = mailbox(8);
        let (ttx, _trx) = telemetry_queue(4);
        let l = noise(hop * 64, 1);
        let r = noise(hop * 64, 2);
        let (mut ol, mut or) = (vec![0.0; hop], vec![0.0; hop]);
        let mut bytes = vec![0u8; hop * 8];

        e.process_block(&l[..hop], &r[..hop], &mut ol, &mut or).unwrap();
        ALLOCATIONS.store(0, Ordering::SeqCst);
        COUNTING.store(true, Ordering::SeqCst);
        for b in 1..64 {
            if b % 8 == 0 {
                tx.send(ControlCommand::SetParam(ParamName::S, b as f64));
                tx.send(ControlCommand::Bypass(b % 16 == 0));
            }
            e.drain(&rx);
            let s = b * hop;
            e.process_block(&l[s..s + hop], &r[s..s + hop], &mut ol, &mut or).unwrap();
            if e.telemetry_due() {
                e.publish(&ttx);
            }
            encode_interleaved(&ol, &or, SampleFormat::F32, &mut bytes);
            decode_interleaved(&bytes, SampleFormat::F32, &mut ol, &mut or);
        }
        COUNTING.store(false, Ordering::SeqCst);
        assert_eq!(ALLOCATIONS.load(Ordering::SeqCst), 0, "{estimator}");
    }
}

#[test]
fn stream_matches_offline_after_delay() {
    let cfg = PipelineConfig::streaming();
    let n = 32_000 + 77;
    let (l, r) = (noise(n, 3), noise(n, 4));
    let offline = process_signal(&l, &r, &cfg).unwrap();

    let mut pcm = vec![0u8; n * 8];
    encode_interleaved(&l, &r, SampleFormat::F32, &mut pcm);
    let mut out = Vec::new();
    let stop = AtomicBool::new(false);
    let report = run_stream(&mut &pcm[..], &mut out, &cfg, StreamOptions::default(), None, None, &stop).unwrap();
    let m = out.len() / 8;
    let (mut sl, mut sr) = (vec![0.0; m], vec![0.0; m]);
    decode_interleaved(&out, SampleFormat::F32, &mut sl, &mut sr);

    let d = report.latency_samples;
    assert!(m >= n + d);
    for i in 0..n {
        assert_eq!(sl[i + d], offline.left[i] as f32 as f64, "left sample {i}");
        assert_eq!(sr[i + d], offline.right[i] as f32 as f64, "right sample {i}");
    }
}

#[test]
fn streaming_impulse_delay_matches_schedule() {
    let cfg = PipelineConfig::streaming();
    let schedule = streaming_output_schedule(&cfg.stft).unwrap();
    for at in [0usize, 1, 255, 256, 1000] {
        let n = 4096;
        let mut x = vec![0.0; n];
        x[at] = 0.25;
        let mut pcm = vec![0u8; n * 8];
        encode_interleaved(&x, &x, SampleFormat::F32, &mut pcm);
        let (tx, rx) = mailbox(1);
        tx.send(ControlCommand::Bypass(true));
        let mut out = Vec::new();
        let stop = AtomicBool::new(false);
        run_stream(&mut &pcm[..], &mut out, &cfg, StreamOptions::default(), Some(&rx), None, &stop).unwrap();
        let m = out.len() / 8;
        let (mut yl, mut yr) = (vec![0.0; m], vec![0.0; m]);
        decode_interleaved(&out, SampleFormat::F32, &mut yl, &mut yr);
        let peak = (0..m).max_by(|&a, &b| yl[a].abs().total_cmp(&yl[b].abs())).unwrap();
        assert_eq!(peak, at + schedule);
        assert!((yl[peak] - 0.25).abs() < 1e-6);
    }
}

#[test]
fn s16_pipe_round_trip_in_bypass() {
    let cfg = PipelineConfig::streaming();
    let n = 5000;
    let x: Vec<f64> = (0..n).map(|i| (((i * 37) % 2001) as f64 - 1000.0) / 32768.0).collect();
    let mut pcm = vec![0u8; n * 4];
    encode_interleaved(&x, &x, SampleFormat::S16, &mut pcm);
    let (tx, rx) = mailbox(1);
    tx.send(ControlCommand::Bypass(true));
    let mut out = Vec::new();
    let stop = AtomicBool::new(false);
    let opts = StreamOptions { format: SampleFormat::S16, flush_tail: true };
    let report = run_stream(&mut &pcm[..], &mut out, &cfg, opts, Some(&rx), None, &stop).unwrap();
    let m = out.len() / 4;
    let (mut yl, mut yr) = (vec![0.0; m], vec![0.0; m]);
    decode_interleaved(&out, SampleFormat::S16, &mut yl, &mut yr);
    let d = report.latency_samples;
    for i in 0..n {
        assert_eq!(yl[i + d], x[i]);
        assert_eq!(yr[i + d], x[i]);
    }
}
