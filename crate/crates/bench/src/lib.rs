//! Fixtures shared by the benchmarks.

use binaural_cdr::{mix_scene, PipelineConfig, SceneSpec};

/// One second of speech-shaped noise at broadside in a diffuse field,
/// at the rate of `cfg`.
pub fn scene_for(cfg: &PipelineConfig) -> (Vec<f64>, Vec<f64>) {
    let spec = SceneSpec::broadside(cfg.stft.sample_rate_hz, 1.0, Some(0.0), Some(0.0), 11);
    let scene = mix_scene(&spec).expect("fixture scene");
    (scene.mix.left, scene.mix.right)
}
