//! Recursive auto/cross power spectra and the complex interaural coherence.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::FrameSpectra;

/// Smallest coherence magnitude handed to the estimators. Keeps `ln` finite.
pub const COHERENCE_EPS: f64 = 1e-6;

/// Default denominator floor, relative to the running peak of `sqrt(phi_ll * phi_rr)`.
pub const DEFAULT_REL_FLOOR: f64 = 1e-12;

/// First-order recursively smoothed power spectra for a binaural pair.
#[derive(Debug, Clone)]
pub struct PsdState {
    phi_ll: Vec<f64>,
    phi_rr: Vec<f64>,
    phi_lr: Vec<Complex64>,
    lambda: f64,
    initialized: bool,
    peak_norm: f64,
}

impl PsdState {
    pub fn new(num_bins: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            phi_ll: vec![0.0; num_bins],
            phi_rr: vec![0.0; num_bins],
            phi_lr: vec![Complex64::default(); num_bins],
            lambda,
            initialized: false,
            peak_norm: 0.0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn num_bins(&self) -> usize {
        self.phi_lr.len()
    }

    pub fn phi_ll(&self) -> &[f64] {
        &self.phi_ll
    }

    pub fn phi_rr(&self) -> &[f64] {
        &self.phi_rr
    }

    pub fn phi_lr(&self) -> &[Complex64] {
        &self.phi_lr
    }

    /// Folds one frame into the smoothed spectra.
    ///
    /// The first accepted frame seeds the state with its own periodograms.
    /// Frames carrying NaN or infinity are rejected and leave the state as it was.
    pub fn update(&mut self, frame: &FrameSpectra) -> Result<()> {
        let bins = self.num_bins();
        if frame.left.len() != bins || frame.right.len() != bins {
            return Err(Error::SizeMismatch { expected: bins, actual: frame.left.len().min(frame.right.len()) });
        }
        for (channel, spectrum) in [("left", &frame.left), ("right", &frame.right)] {
            if let Some(bin) = spectrum.iter().position(|z| !z.is_finite()) {
                return Err(Error::NonFinite { channel, bin });
            }
        }

        let (keep, take) = if self.initialized {
            (self.lambda, 1.0 - self.lambda)
        } else {
            (0.0, 1.0)
        };
        let mut peak = self.peak_norm;
        for k in 0..bins {
            let (xl, xr) = (frame.left[k], frame.right[k]);
            // All three products go through the same complex multiply so that
            // identical channels give bit-identical auto and cross terms.
            let pll = (xl * xl.conj()).re;
            let prr = (xr * xr.conj()).re;
            let plr = xl * xr.conj();
            self.phi_ll[k] = keep * self.phi_ll[k] + take * pll;
            self.phi_rr[k] = keep * self.phi_rr[k] + take * prr;
            self.phi_lr[k] = self.phi_lr[k] * keep + plr * take;
            peak = peak.max((self.phi_ll[k] * self.phi_rr[k]).sqrt());
        }
        self.peak_norm = peak;
        self.initialized = true;
        Ok(())
    }

    /// Writes the clamped coherence of every bin into `out`.
    ///
    /// `rel_floor` scales the running peak of `sqrt(phi_ll * phi_rr)` to form
    /// the denominator floor used for silent bins.
    pub fn coherence_into(&self, rel_floor: f64, out: &mut [Complex64]) {
        let floor = (rel_floor * self.peak_norm).max(f64::MIN_POSITIVE);
        for (k, g) in out.iter_mut().enumerate() {
            let norm = (self.phi_ll[k] * self.phi_rr[k]).sqrt().max(floor);
            *g = clamp_coherence(self.phi_lr[k] / norm);
        }
    }

    pub fn coherence(&self, rel_floor: f64) -> ComplexCoherence {
        let mut gamma = vec![Complex64::default(); self.num_bins()];
        self.coherence_into(rel_floor, &mut gamma);
        ComplexCoherence { gamma }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Param(format!("lambda must lie in [0, 1), got {lambda}")));
    }
    Ok(())
}

/// Limits the magnitude to `[COHERENCE_EPS, 1]` and keeps the phase.
///
/// The upper bound is exactly one: the new estimator is zero on the real axis
/// below unity, so a fully coherent bin must stay at `1 + 0j`.
pub fn clamp_coherence(gamma: Complex64) -> Complex64 {
    let mag = gamma.norm();
    if mag > 1.0 {
        gamma / mag
    } else if mag < COHERENCE_EPS {
        if mag == 0.0 {
            Complex64::new(COHERENCE_EPS, 0.0)
        } else {
            gamma * (COHERENCE_EPS / mag)
        }
    } else {
        gamma
    }
}

/// Per-bin complex interaural coherence of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCoherence {
    pub gamma: Vec<Complex64>,
}

impl ComplexCoherence {
    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.gamma.iter().map(|g| g.norm())
    }

    pub fn phases(&self) -> impl Iterator<Item = f64> + '_ {
        self.gamma.iter().map(|g| g.arg())
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.gamma.is_empty() {
            return 0.0;
        }
        self.magnitudes().sum::<f64>() / self.gamma.len() as f64
    }
}
