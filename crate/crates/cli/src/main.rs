use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use binaural_cdr::engine::control::{mailbox, telemetry_queue};
use binaural_cdr::{
    evaluate_pair, locus, mix_scene, process_audio, read_stereo_wav, run_stream, write_stereo_wav, Binaural,
    ControlServer, EnhancerParams, Enhancer, Estimator, GainRule, LocusSettings, MetricReport, PipelineConfig,
    SampleFormat, SceneSpec, StftConfig, StftMode, StreamOptions, TelemetryLog, DEFAULT_CDR_MAX,
};

/// Binaural coherence-to-diffuse ratio speech enhancement.
#[derive(Parser, Debug)]
#[command(name = "bcdr", version, about)]
struct Cli {
    /// JSON file supplying defaults for any flag of the chosen subcommand.
    /// Keys are flag names without dashes; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Enhance a two-channel WAV file.
    Enhance(EnhanceArgs),
    /// Enhance interleaved PCM from a pipe in real time.
    Stream(StreamArgs),
    /// Tabulate estimator and gain over the coherence plane.
    Locus(LocusArgs),
    /// Dump per-bin coherence and CDR of a WAV file.
    Scatter(ScatterArgs),
    /// Render a synthetic scene from a JSON spec.
    Synth(SynthArgs),
    /// Score a processed file against a reference.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ParamArgs {
    /// CDR estimator: new or p3.
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Directivity parameter S (> 0).
    #[arg(long = "S", value_name = "S")]
    #[serde(rename = "S")]
    s: Option<f64>,
    /// PSD smoothing factor in [0, 1); defaults to 0.72 (0.68 for p3).
    #[arg(long)]
    lambda: Option<f64>,
    /// Over-subtraction factor.
    #[arg(long)]
    mu: Option<f64>,
    /// Gain floor in (0, 1].
    #[arg(long)]
    gmin: Option<f64>,
    /// Gain rule: squared_wiener or magnitude_subtraction.
    #[arg(long)]
    gain: Option<GainRule>,
    /// Microphone spacing in metres for the diffuse model.
    #[arg(long)]
    d_mic: Option<f64>,
}

impl ParamArgs {
    fn pipeline(&self, stft: StftConfig) -> Result<PipelineConfig> {
        let estimator = self.estimator.unwrap_or(Estimator::New);
        let base = match estimator {
            Estimator::New => EnhancerParams::default(),
            Estimator::P3 => EnhancerParams::baseline(),
        };
        let params = EnhancerParams {
            s: self.s.unwrap_or(base.s),
            lambda: self.lambda.unwrap_or(base.lambda),
            mu: self.mu.unwrap_or(base.mu),
            g_min: self.gmin.unwrap_or(base.g_min),
            d_mic: self.d_mic.unwrap_or(base.d_mic),
            ..base
        };
        let cfg = PipelineConfig {
            stft,
            params,
            estimator,
            gain_rule: self.gain.unwrap_or_default(),
            telemetry_stride: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn stft_for_rate(rate: u32) -> Result<StftConfig> {
    match rate {
        16_000 => Ok(StftConfig::offline()),
        32_000 => Ok(StftConfig::streaming()),
        other => bail!("sample rate {other} Hz is not supported (16000 or 32000)"),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EnhanceArgs {
    /// Input WAV (two channels, 16 or 32 kHz).
    #[arg(long = "in", value_name = "WAV")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// Output WAV, written in the input's sample format.
    #[arg(long, value_name = "WAV")]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    /// Write newline-delimited JSON telemetry here.
    #[arg(long, value_name = "PATH")]
    telemetry: Option<PathBuf>,
    /// Frames per telemetry record.
    #[arg(long)]
    telemetry_stride: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct StreamArgs {
    /// Interleaved little-endian PCM input; `-` for stdin.
    #[arg(long = "in", value_name = "PATH")]
    #[serde(rename = "in")]
    input: Option<String>,
    /// Output PCM; `-` for stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    /// Sample format: s16 or f32.
    #[arg(long)]
    format: Option<SampleFormat>,
    /// Sample rate in Hz (16000 or 32000).
    #[arg(long)]
    rate: Option<u32>,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    /// Serve the WebSocket control protocol on this address, e.g. 127.0.0.1:8765.
    #[arg(long, value_name = "ADDR", conflicts_with = "telemetry")]
    control: Option<String>,
    /// Write newline-delimited JSON telemetry here.
    #[arg(long, value_name = "PATH")]
    telemetry: Option<PathBuf>,
    /// Frames per telemetry record.
    #[arg(long)]
    telemetry_stride: Option<usize>,
    /// Stop at end of input without flushing the synthesis tail.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    no_flush: bool,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct LocusArgs {
    /// Comma-separated S values.
    #[arg(long = "S", value_name = "LIST")]
    #[serde(rename = "S")]
    s: Option<String>,
    /// Comma-separated magnitudes, or `lo..hi[:n]` for n evenly spaced values.
    #[arg(long = "A", value_name = "LIST")]
    #[serde(rename = "A")]
    a: Option<String>,
    /// Phase steps over [0, 2 pi] (at least 8).
    #[arg(long)]
    theta_steps: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gmin: Option<f64>,
    #[arg(long)]
    gain: Option<GainRule>,
    /// Output CSV.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ScatterArgs {
    #[arg(long = "in", value_name = "WAV")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    params: ParamArgs,
    /// Keep every n-th frame.
    #[arg(long)]
    frame_step: Option<usize>,
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct SynthArgs {
    /// Scene spec JSON.
    #[arg(long, value_name = "JSON")]
    spec: Option<PathBuf>,
    /// Output WAV; the clean direct component goes to `<stem>.direct.wav`
    /// and ground truth to `<stem>.truth.json`.
    #[arg(long, value_name = "WAV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvalArgs {
    /// Clean reference WAV.
    #[arg(long = "ref", value_name = "WAV")]
    #[serde(rename = "ref")]
    reference: Option<PathBuf>,
    /// Processed WAV.
    #[arg(long = "proc", value_name = "WAV")]
    #[serde(rename = "proc")]
    processed: Option<PathBuf>,
    /// Unprocessed mixture, for improvement figures.
    #[arg(long, value_name = "WAV")]
    unprocessed: Option<PathBuf>,
    /// JSON report path.
    #[arg(long, value_name = "JSON")]
    report: Option<PathBuf>,
    /// Also write `metric,value` rows here.
    #[arg(long, value_name = "CSV")]
    csv: Option<PathBuf>,
}

/// Overlays explicitly given flags on the config file's values.
fn merged<T: Serialize + DeserializeOwned>(cli: &T, config: &Value) -> Result<T> {
    let mut base = match config {
        Value::Object(m) => m.clone(),
        Value::Null => Default::default(),
        _ => bail!("config file must hold a JSON object"),
    };
    if let Value::Object(flags) = serde_json::to_value(cli)? {
        for (k, v) in flags {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).context("invalid config value")
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().with_context(|| format!("missing required flag --{flag}"))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config: Value = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Value::Null,
    };
    match cli.command {
        Command::Enhance(a) => enhance(merged(&a, &config)?),
        Command::Stream(a) => stream(merged(&a, &config)?),
        Command::Locus(a) => locus_cmd(merged(&a, &config)?),
        Command::Scatter(a) => scatter(merged(&a, &config)?),
        Command::Synth(a) => synth(merged(&a, &config)?),
        Command::Eval(a) => eval(merged(&a, &config)?),
    }
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let input = required(&a.input, "in")?;
    let out = required(&a.out, "out")?;
    // Parameter errors surface before any file is touched.
    a.params.pipeline(StftConfig::offline())?;
    let audio = read_stereo_wav(input).with_context(|| format!("reading {}", input.display()))?;
    let mut cfg = a.params.pipeline(stft_for_rate(audio.sample_rate)?)?;
    cfg.telemetry_stride = a.telemetry_stride.unwrap_or(1);
    cfg.validate()?;
    log::info!("{} Hz input, STFT {:?}", audio.sample_rate, cfg.stft);

    let (enhanced, processed) = process_audio(&audio, &cfg)?;
    write_stereo_wav(out, &enhanced).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = &a.telemetry {
        let mut log = TelemetryLog::new(BufWriter::new(File::create(path)?));
        for t in &processed.telemetry {
            log.write(t)?;
        }
        log.flush()?;
    }
    log::info!(
        "mean gain {:.3}, mean CDR {:.3}",
        processed.stats.overall_gain(),
        processed.stats.overall_cdr()
    );
    Ok(())
}

fn stream(a: StreamArgs) -> Result<()> {
    let rate = a.rate.unwrap_or(32_000);
    let stft = StftConfig { sample_rate_hz: rate, ..StftConfig::streaming() };
    let mut cfg = a.params.pipeline(stft)?;
    cfg.telemetry_stride = a.telemetry_stride.unwrap_or(1);
    cfg.validate()?;
    debug_assert_eq!(cfg.stft.mode, StftMode::Streaming);
    let opts = StreamOptions { format: a.format.unwrap_or_default(), flush_tail: !a.no_flush };

    let mut input: Box<dyn Read> = match a.input.as_deref() {
        None | Some("-") => Box::new(io::stdin().lock()),
        Some(path) => Box::new(BufReader::new(File::open(path).with_context(|| format!("opening {path}"))?)),
    };
    let mut output: Box<dyn Write> = match a.out.as_deref() {
        None | Some("-") => Box::new(io::stdout().lock()),
        Some(path) => Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {path}"))?)),
    };

    let (ctl_tx, ctl_rx) = mailbox(64);
    let (tel_tx, tel_rx) = telemetry_queue(256);
    let stop = AtomicBool::new(false);

    let mut server = None;
    let mut logger = None;
    if let Some(addr) = &a.control {
        let state = Enhancer::new(&cfg)?.state();
        let s = ControlServer::spawn(addr.as_str(), state, ctl_tx, tel_rx)?;
        eprintln!("control: ws://{}", s.local_addr());
        server = Some(s);
    } else if let Some(path) = &a.telemetry {
        let mut log = TelemetryLog::new(BufWriter::new(File::create(path)?));
        logger = Some(thread::spawn(move || -> binaural_cdr::Result<()> {
            for t in tel_rx {
                log.write(&t)?;
            }
            log.flush()
        }));
    } else {
        drop(tel_rx);
    }

    let telemetry = (server.is_some() || logger.is_some()).then_some(&tel_tx);
    let report = run_stream(&mut input, &mut output, &cfg, opts, Some(&ctl_rx), telemetry, &stop)?;
    drop(tel_tx);
    if let Some(handle) = logger {
        handle.join().map_err(|_| anyhow::anyhow!("telemetry writer panicked"))??;
    }
    if let Some(s) = server {
        s.shutdown();
    }
    log::info!("{}", serde_json::to_string(&report)?);
    if report.zero_filled > 0 {
        eprintln!("warning: {} short block(s) zero-filled", report.zero_filled);
    }
    Ok(())
}

/// Parses `a,b,c` or `lo..hi[:n]`.
fn parse_list(text: &str) -> Result<Vec<f64>> {
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, n) = match rest.split_once(':') {
            Some((hi, n)) => (hi, n.trim().parse::<usize>().context("range count")?),
            None => (rest, 10),
        };
        let lo: f64 = lo.trim().parse().context("range start")?;
        let hi: f64 = hi.trim().parse().context("range end")?;
        if n < 2 {
            return Ok(vec![lo]);
        }
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect());
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("not a number: {s:?}")))
        .collect()
}

fn locus_cmd(a: LocusArgs) -> Result<()> {
    let out = required(&a.out, "out")?;
    let s = parse_list(a.s.as_deref().unwrap_or("1"))?;
    let amps = parse_list(a.a.as_deref().unwrap_or("1"))?;
    let settings = LocusSettings {
        theta_steps: a.theta_steps.unwrap_or(360),
        mu: a.mu.unwrap_or(1.0),
        g_min: a.gmin.unwrap_or(0.1),
        cdr_max: DEFAULT_CDR_MAX,
        rule: a.gain.unwrap_or_default(),
    };
    let points = locus(&amps, &s, &settings)?;
    let mut w = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
    for p in &points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ScatterRow {
    frame: u64,
    bin: usize,
    freq: f64,
    re_gamma: f64,
    im_gamma: f64,
    cdr: f64,
}

fn scatter(a: ScatterArgs) -> Result<()> {
    let input = required(&a.input, "in")?;
    let out = required(&a.out, "out")?;
    let step = a.frame_step.unwrap_or(1).max(1) as u64;
    a.params.pipeline(StftConfig::offline())?;
    let audio = read_stereo_wav(input).with_context(|| format!("reading {}", input.display()))?;
    let cfg = a.params.pipeline(stft_for_rate(audio.sample_rate)?)?;
    let freqs = cfg.stft.bin_frequencies();
    let hop = cfg.stft.hop;
    let mut enhancer = Enhancer::new(&cfg)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out)
        .with_context(|| format!("creating {}", out.display()))?;
    w.write_record(["frame", "bin", "freq", "re_gamma", "im_gamma", "cdr"])?;
    let (mut ol, mut or) = (vec![0.0; hop], vec![0.0; hop]);
    let (mut bl, mut br) = (vec![0.0; hop], vec![0.0; hop]);
    for (frame, start) in (0..audio.len()).step_by(hop).enumerate() {
        let end = (start + hop).min(audio.len());
        bl.fill(0.0);
        br.fill(0.0);
        bl[..end - start].copy_from_slice(&audio.left[start..end]);
        br[..end - start].copy_from_slice(&audio.right[start..end]);
        enhancer.process_block(&bl, &br, &mut ol, &mut or)?;
        if !(frame as u64).is_multiple_of(step) || !enhancer.has_signal() {
            continue;
        }
        for (bin, (g, &cdr)) in enhancer.coherence().iter().zip(enhancer.cdr()).enumerate() {
            w.serialize(ScatterRow { frame: frame as u64, bin, freq: freqs[bin], re_gamma: g.re, im_gamma: g.im, cdr })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec_path = required(&a.spec, "spec")?;
    let out = required(&a.out, "out")?;
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: SceneSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    let scene = mix_scene(&spec)?;
    if scene.truth.scale != 1.0 {
        eprintln!("warning: scene normalised by {:.4} to avoid clipping", scene.truth.scale);
    }
    write_stereo_wav(out, &scene.mix.clone().into_audio(spec.sample_rate))?;
    write_stereo_wav(sidecar(out, "direct.wav"), &scene.direct.clone().into_audio(spec.sample_rate))?;
    let truth = File::create(sidecar(out, "truth.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(truth), &scene.truth)?;
    Ok(())
}

fn read_binaural(path: &Path) -> Result<(u32, Binaural)> {
    let a = read_stereo_wav(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((a.sample_rate, Binaural { left: a.left, right: a.right }))
}

fn eval(a: EvalArgs) -> Result<()> {
    let reference = required(&a.reference, "ref")?;
    let processed = required(&a.processed, "proc")?;
    let report_path = required(&a.report, "report")?;
    let (rate, r) = read_binaural(reference)?;
    let (prate, p) = read_binaural(processed)?;
    if rate != prate {
        bail!("sample rates differ: {rate} Hz vs {prate} Hz");
    }
    if r.len() != p.len() {
        bail!("length mismatch: reference has {} samples, processed has {}", r.len(), p.len());
    }
    let mut report: MetricReport = evaluate_pair(&r, &p, rate)?;
    if let Some(path) = &a.unprocessed {
        let (urate, u) = read_binaural(path)?;
        if urate != rate || u.len() != r.len() {
            bail!("unprocessed file does not match the reference's rate and length");
        }
        let raw = evaluate_pair(&r, &u, rate)?.enhanced;
        report.delta_segmental_snr = Some(report.enhanced.segmental_snr - raw.segmental_snr);
        report.delta_cepstral_distance = Some(report.enhanced.cepstral_distance - raw.cepstral_distance);
        report.unprocessed = Some(raw);
    }
    serde_json::to_writer_pretty(BufWriter::new(File::create(report_path)?), &report)?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value"])?;
        for (k, v) in report.flat() {
            w.write_record([k, v.to_string()])?;
        }
        w.flush()?;
    }
    println!(
        "CD {:.3} dB, segSNR {:.2} dB",
        report.enhanced.cepstral_distance, report.enhanced.segmental_snr
    );
    Ok(())
}
