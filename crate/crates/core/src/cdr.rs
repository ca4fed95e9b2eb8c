//! Coherence-to-diffuse power ratio estimators.
//!
//! [`new_cdr`] is the parameterised directional estimator driven only by the
//! complex coherence and the directivity parameter `S`. [`baseline_cdr_p3`] is
//! the DOA-independent reference estimator that needs the diffuse-field model
//! from [`diffuse_coherence`].

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coherence::{ComplexCoherence, COHERENCE_EPS};
use crate::error::{Error, Result};

pub const DEFAULT_CDR_MAX: f64 = 1e4;

/// Quotient denominators below this magnitude map to `cdr_max`.
const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// Every tunable of the enhancer, swapped as one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancerParams {
    #[serde(rename = "S")]
    pub s: f64,
    pub mu: f64,
    pub g_min: f64,
    pub cdr_max: f64,
    pub d_mic: f64,
    pub c: f64,
    pub lambda: f64,
}

impl Default for EnhancerParams {
    fn default() -> Self {
        Self {
            s: 1.0,
            mu: 1.0,
            g_min: 0.1,
            cdr_max: DEFAULT_CDR_MAX,
            d_mic: 0.17,
            c: 343.0,
            lambda: 0.72,
        }
    }
}

impl EnhancerParams {
    /// Defaults for the P3 baseline (smoothing 0.68).
    pub fn baseline() -> Self {
        Self { lambda: 0.68, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Param(msg.to_string()));
        if !(self.s.is_finite() && self.s > 0.0) {
            return bad("S must be positive");
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad("mu must be positive");
        }
        if !(self.g_min > 0.0 && self.g_min <= 1.0) {
            return bad("g_min must lie in (0, 1]");
        }
        if !(self.cdr_max.is_finite() && self.cdr_max >= 1.0) {
            return bad("cdr_max must be at least 1");
        }
        if !(self.d_mic.is_finite() && self.d_mic > 0.0) {
            return bad("d_mic must be positive");
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad("speed of sound must be positive");
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    New,
    P3,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" => Ok(Self::New),
            "p3" => Ok(Self::P3),
            other => Err(Error::Param(format!("unknown estimator '{other}' (expected new or p3)"))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::New => "new",
            Self::P3 => "p3",
        })
    }
}

fn check_domain(gamma: Complex64) -> Result<()> {
    if !gamma.is_finite() {
        return Err(Error::CoherenceDomain(format!("{gamma} is not finite")));
    }
    let mag = gamma.norm();
    // A tiny tolerance keeps normalized unit phasors from tripping the check.
    if !(COHERENCE_EPS * (1.0 - 1e-12)..=1.0 + 1e-12).contains(&mag) {
        return Err(Error::CoherenceDomain(format!("|{gamma}| = {mag}")));
    }
    Ok(())
}

/// Parameterised directional CDR estimate for one coherence value.
///
/// Evaluates
/// `Re{ exp(g + cos((1 - pi/2) arg g)) / sqrt(g + S ln g - cos(arg g)) }`
/// with principal branches, clamped to `[0, cdr_max]`. The estimate peaks
/// for broadside coherence near `1 + 0j`; a vanishing denominator (which
/// happens exactly there) returns `cdr_max`.
pub fn new_cdr(gamma: Complex64, s: f64, cdr_max: f64) -> Result<f64> {
    check_domain(gamma)?;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Param("S must be positive".into()));
    }
    let theta = gamma.arg();
    let numerator = (gamma + ((1.0 - FRAC_PI_2) * theta).cos()).exp();
    // cos(theta + pi) == -cos(theta)
    let denominator = (gamma + gamma.ln() * s - theta.cos()).sqrt();
    if denominator.norm() < SINGULAR_DENOMINATOR {
        return Ok(cdr_max);
    }
    Ok(clamp_cdr((numerator / denominator).re, cdr_max))
}

/// Two-point coherence of a spherically isotropic field, `sin(x) / x` with
/// `x = 2 pi f d / c`.
pub fn diffuse_coherence(freq_hz: f64, d_mic: f64, c: f64) -> f64 {
    let x = 2.0 * PI * freq_hz * d_mic / c;
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// DOA-independent baseline estimate from the coherence and the diffuse model value.
pub fn baseline_cdr_p3(gamma: Complex64, gamma_n: f64, cdr_max: f64) -> Result<f64> {
    check_domain(gamma)?;
    if !(gamma_n > -1.0 && gamma_n < 1.0) {
        return Err(Error::CoherenceDomain(format!("diffuse model value {gamma_n} outside (-1, 1)")));
    }
    let re = gamma.re;
    let mag2 = gamma.norm_sqr();
    // gn^2 re^2 - gn^2 |g|^2 + gn^2 - 2 gn re + |g|^2, factored so that it is
    // non-negative by construction and exactly zero for g == gn.
    let radicand = (gamma_n - re).powi(2) + gamma.im * gamma.im * (1.0 - gamma_n * gamma_n);
    let numerator = gamma_n * re - mag2 - radicand.sqrt();
    let denominator = mag2 - 1.0;
    if denominator.abs() < SINGULAR_DENOMINATOR {
        return Ok(if numerator < 0.0 { cdr_max } else { 0.0 });
    }
    Ok(clamp_cdr(numerator / denominator, cdr_max))
}

fn clamp_cdr(value: f64, cdr_max: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(0.0, cdr_max)
    }
}

/// Per-bin CDR estimates for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrFrame {
    pub values: Vec<f64>,
}

/// Maps a coherence frame to CDR values with a fixed estimator.
///
/// The diffuse model per bin is computed once up front so that frame mapping
/// does not allocate.
#[derive(Debug, Clone)]
pub struct CdrMapper {
    estimator: Estimator,
    diffuse: Vec<f64>,
}

impl CdrMapper {
    pub fn new(estimator: Estimator, bin_freqs: &[f64], params: &EnhancerParams) -> Self {
        let diffuse = bin_freqs
            .iter()
            .map(|&f| diffuse_coherence(f, params.d_mic, params.c).clamp(-1.0 + COHERENCE_EPS, 1.0 - COHERENCE_EPS))
            .collect();
        Self { estimator, diffuse }
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn diffuse_model(&self) -> &[f64] {
        &self.diffuse
    }

    pub fn map_into(&self, gamma: &[Complex64], params: &EnhancerParams, out: &mut [f64]) -> Result<()> {
        if gamma.len() != self.diffuse.len() || out.len() != gamma.len() {
            return Err(Error::SizeMismatch { expected: self.diffuse.len(), actual: gamma.len() });
        }
        for ((dst, &g), &gn) in out.iter_mut().zip(gamma).zip(&self.diffuse) {
            *dst = match self.estimator {
                Estimator::New => new_cdr(g, params.s, params.cdr_max)?,
                Estimator::P3 => baseline_cdr_p3(g, gn, params.cdr_max)?,
            };
        }
        Ok(())
    }
}

/// Applies the chosen estimator bin-wise; `bin_freqs` gives each bin's centre frequency.
pub fn cdr_frame(
    coh: &ComplexCoherence,
    params: &EnhancerParams,
    estimator: Estimator,
    bin_freqs: &[f64],
) -> Result<CdrFrame> {
    let mapper = CdrMapper::new(estimator, bin_freqs, params);
    let mut values = vec![0.0; coh.gamma.len()];
    mapper.map_into(&coh.gamma, params, &mut values)?;
    Ok(CdrFrame { values })
}
