//! CDR-to-gain mapping and bilateral application.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cdr::CdrFrame;
use crate::error::{Error, Result};
use crate::stft::FrameSpectra;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainRule {
    /// `max(g_min, (1 - mu / (cdr + 1))^2)`
    #[default]
    SquaredWiener,
    /// `max(g_min, 1 - sqrt(mu / (cdr + 1)))`
    MagnitudeSubtraction,
}

impl FromStr for GainRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_wiener" => Ok(Self::SquaredWiener),
            "magnitude_subtraction" => Ok(Self::MagnitudeSubtraction),
            other => Err(Error::Param(format!(
                "unknown gain rule '{other}' (expected squared_wiener or magnitude_subtraction)"
            ))),
        }
    }
}

/// Gain for a single CDR value.
///
/// The pre-square term is floored at zero so that `mu > 1` cannot re-inflate
/// the gain of strongly diffuse bins.
#[inline]
pub fn gain_for(cdr: f64, mu: f64, g_min: f64, rule: GainRule) -> f64 {
    let g = match rule {
        GainRule::SquaredWiener => {
            let w = (1.0 - mu / (cdr + 1.0)).max(0.0);
            w * w
        }
        GainRule::MagnitudeSubtraction => 1.0 - (mu / (cdr + 1.0)).sqrt(),
    };
    g.clamp(g_min, 1.0)
}

/// Per-bin real gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainFrame {
    pub values: Vec<f64>,
}

pub fn compute_gain(cdr: &CdrFrame, mu: f64, g_min: f64) -> GainFrame {
    compute_gain_with(cdr, mu, g_min, GainRule::SquaredWiener)
}

pub fn compute_gain_with(cdr: &CdrFrame, mu: f64, g_min: f64, rule: GainRule) -> GainFrame {
    GainFrame {
        values: cdr.values.iter().map(|&c| gain_for(c, mu, g_min, rule)).collect(),
    }
}

/// Scales both ears by the same real gain per bin, leaving interaural
/// phase and level differences untouched.
pub fn apply_gain(frame: &mut FrameSpectra, gain: &[f64]) -> Result<()> {
    let bins = frame.num_bins();
    if gain.len() != bins || frame.right.len() != bins {
        return Err(Error::SizeMismatch { expected: bins, actual: gain.len() });
    }
    for ((l, r), &g) in frame.left.iter_mut().zip(frame.right.iter_mut()).zip(gain) {
        *l *= g;
        *r *= g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdr::DEFAULT_CDR_MAX;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squared_wiener_examples() {
        assert_eq!(gain_for(0.0, 1.0, 0.1, GainRule::SquaredWiener), 0.1);
        assert_eq!(gain_for(1.0, 1.0, 0.1, GainRule::SquaredWiener), 0.25);
        let top = gain_for(DEFAULT_CDR_MAX, 1.0, 0.1, GainRule::SquaredWiener);
        assert!((1.0 - top) < 2e-4 && top < 1.0);
    }

    #[test]
    fn magnitude_subtraction_form() {
        for (cdr, mu) in [(0.5, 1.0), (1.0, 1.0), (3.0, 0.5), (100.0, 2.0)] {
            let ms = gain_for(cdr, mu, 0.0001, GainRule::MagnitudeSubtraction);
            let expected: f64 = 1.0 - (mu / (cdr + 1.0)).sqrt();
            assert!((ms - expected.max(0.0001)).abs() < 1e-15);
        }
        assert_eq!(gain_for(0.0, 1.0, 0.1, GainRule::MagnitudeSubtraction), 0.1);
    }

    #[test]
    fn over_subtraction_stays_monotone() {
        let mut prev = 0.0;
        for i in 0..200 {
            let g = gain_for(i as f64 * 0.05, 1.8, 0.05, GainRule::SquaredWiener);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn frame_gain() {
        let cdr = CdrFrame { values: vec![0.0, 1.0, 3.0] };
        let g = compute_gain(&cdr, 1.0, 0.1);
        assert_eq!(g.values, vec![0.1, 0.25, 0.5625]);
    }

    fn random_frame(rng: &mut ChaCha8Rng, bins: usize) -> FrameSpectra {
        let mut draw = || Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        FrameSpectra {
            index: 0,
            left: (0..bins).map(|_| draw()).collect(),
            right: (0..bins).map(|_| draw()).collect(),
        }
    }

    #[test]
    fn unit_gain_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = random_frame(&mut rng, 33);
        let mut out = frame.clone();
        apply_gain(&mut out, &[1.0; 33]).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn floor_gain_scales_both_ears() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = random_frame(&mut rng, 17);
        let mut out = frame.clone();
        apply_gain(&mut out, &[0.1; 17]).unwrap();
        for k in 0..17 {
            assert_eq!(out.left[k], frame.left[k] * 0.1);
            assert_eq!(out.right[k], frame.right[k] * 0.1);
            let ild_before = frame.left[k].norm() / frame.right[k].norm();
            let ild_after = out.left[k].norm() / out.right[k].norm();
            assert!((ild_before - ild_after).abs() <= 1e-12 * ild_before);
        }
    }

    #[test]
    fn interaural_phase_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let frame = random_frame(&mut rng, 65);
            let gain: Vec<f64> = (0..65).map(|_| rng.gen_range(0.1..=1.0)).collect();
            let mut out = frame.clone();
            apply_gain(&mut out, &gain).unwrap();
            for k in 0..65 {
                let before = (frame.left[k] / frame.right[k]).arg();
                let after = (out.left[k] / out.right[k]).arg();
                assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn size_mismatch() {
        let mut frame = FrameSpectra::zeros(8);
        assert!(apply_gain(&mut frame, &[1.0; 7]).is_err());
    }

    proptest! {
        #[test]
        fn gain_range_and_monotonicity(a in 0.0..DEFAULT_CDR_MAX, b in 0.0..DEFAULT_CDR_MAX, mu in 0.01..=1.0f64, g_min in 0.001..=1.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for rule in [GainRule::SquaredWiener, GainRule::MagnitudeSubtraction] {
                let (gl, gh) = (gain_for(lo, mu, g_min, rule), gain_for(hi, mu, g_min, rule));
                prop_assert!(gl >= g_min && gl <= 1.0);
                prop_assert!(gl <= gh);
            }
        }
    }
}
