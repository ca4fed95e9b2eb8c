//! Phasor-response grids of the new estimator and its gain.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::cdr::new_cdr;
use crate::error::{Error, Result};
use crate::gain::{gain_for, GainRule};

pub const MIN_THETA_STEPS: usize = 8;

/// One grid point; field names are the CSV header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocusPoint {
    #[serde(rename = "A")]
    pub a: f64,
    pub theta: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub cdr: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusSettings {
    pub theta_steps: usize,
    pub mu: f64,
    pub g_min: f64,
    pub cdr_max: f64,
    pub rule: GainRule,
}

/// Evaluates `gamma = A e^{j theta}` for `theta = 2 pi i / theta_steps`,
/// `i = 0..=theta_steps`, for every `A` and `S`.
///
/// Points at `theta` and `2 pi - theta` use exactly conjugate coherence, so
/// each curve is mirror-symmetric about `pi` bit for bit.
pub fn locus(amplitudes: &[f64], s_values: &[f64], settings: &LocusSettings) -> Result<Vec<LocusPoint>> {
    if amplitudes.is_empty() || s_values.is_empty() {
        return Err(Error::Param("locus needs at least one A and one S".into()));
    }
    let n = settings.theta_steps;
    if n < MIN_THETA_STEPS {
        return Err(Error::Param(format!("theta-steps must be at least {MIN_THETA_STEPS}")));
    }
    let mut out = Vec::with_capacity(amplitudes.len() * s_values.len() * (n + 1));
    for &a in amplitudes {
        for &s in s_values {
            for i in 0..=n {
                let k = i.min(n - i);
                let base = Complex64::from_polar(a, 2.0 * PI * k as f64 / n as f64);
                let gamma = if i > n - i { base.conj() } else { base };
                let cdr = new_cdr(gamma, s, settings.cdr_max)?;
                out.push(LocusPoint {
                    a,
                    theta: 2.0 * PI * i as f64 / n as f64,
                    s,
                    cdr,
                    gain: gain_for(cdr, settings.mu, settings.g_min, settings.rule),
                });
            }
        }
    }
    Ok(out)
}
