use binaural_cdr::cdr::{baseline_cdr_p3, new_cdr};
use binaural_cdr::{Analyzer, Enhancer, Estimator, FrameSpectra, PipelineConfig, PsdState, DEFAULT_CDR_MAX};
use binaural_cdr_bench::scene_for;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use num_complex::Complex64;

fn estimators(c: &mut Criterion) {
    let gammas: Vec<Complex64> = (0..513)
        .map(|k| Complex64::from_polar(0.05 + 0.9 * (k as f64 / 513.0), 0.37 * k as f64))
        .collect();
    let mut g = c.benchmark_group("estimator");
    g.throughput(Throughput::Elements(gammas.len() as u64));
    g.bench_function("new", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &z in &gammas {
                acc += new_cdr(black_box(z), 1.0, DEFAULT_CDR_MAX).unwrap();
            }
            acc
        })
    });
    g.bench_function("p3", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &z in &gammas {
                acc += baseline_cdr_p3(black_box(z), 0.3, DEFAULT_CDR_MAX).unwrap();
            }
            acc
        })
    });
    g.finish();
}

fn psd(c: &mut Criterion) {
    let cfg = PipelineConfig::streaming();
    let (l, r) = scene_for(&cfg);
    let hop = cfg.stft.hop;
    let mut analyzer = Analyzer::new(&cfg.stft).unwrap();
    let mut frame = FrameSpectra::zeros(cfg.stft.num_bins());
    for i in 0..8 {
        analyzer.analyze(&l[i * hop..(i + 1) * hop], &r[i * hop..(i + 1) * hop], &mut frame).unwrap();
    }
    let mut state = PsdState::new(cfg.stft.num_bins(), 0.72).unwrap();
    let mut gamma = vec![Complex64::default(); cfg.stft.num_bins()];
    c.bench_function("psd_update_and_coherence", |b| {
        b.iter(|| {
            state.update(black_box(&frame)).unwrap();
            state.coherence_into(1e-12, &mut gamma);
        })
    });
}

fn blocks(c: &mut Criterion) {
    let mut g = c.benchmark_group("process_block");
    for (name, base) in [("streaming", PipelineConfig::streaming()), ("offline", PipelineConfig::offline())] {
        for estimator in [Estimator::New, Estimator::P3] {
            let cfg = PipelineConfig { estimator, ..base.clone() };
            let (l, r) = scene_for(&cfg);
            let hop = cfg.stft.hop;
            let blocks = l.len() / hop;
            let mut enhancer = Enhancer::new(&cfg).unwrap();
            let (mut ol, mut or) = (vec![0.0; hop], vec![0.0; hop]);
            let mut i = 0;
            g.throughput(Throughput::Elements(hop as u64));
            g.bench_with_input(BenchmarkId::new(name, format!("{estimator:?}")), &(), |b, _| {
                b.iter(|| {
                    let s = (i % blocks) * hop;
                    enhancer.process_block(&l[s..s + hop], &r[s..s + hop], &mut ol, &mut or).unwrap();
                    i += 1;
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, estimators, psd, blocks);
criterion_main!(benches);
