//! Vector-Laplace source model `f(s) ∝ exp(-||s||)`, its score, the
//! auxiliary nonlinearity and per-frame norms with optional pilot.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::dot_h;
use crate::model::SeparatingVectors;
use crate::stft::{self, SpectralTensor, StftConfig};
use crate::wav;

/// Floor applied to norms before dividing by them.
pub const EPS_R: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceKind {
    #[default]
    VectorLaplace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    pub kind: SourceKind,
    pub eps_r: f64,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            kind: SourceKind::VectorLaplace,
            eps_r: EPS_R,
        }
    }
}

impl SourceModel {
    /// `-log f(s)` up to a constant.
    pub fn neg_log_density(&self, s: &[Complex64]) -> f64 {
        match self.kind {
            SourceKind::VectorLaplace => crate::linalg::norm(s),
        }
    }

    pub fn score(&self, s: &[Complex64]) -> Vec<Complex64> {
        let n = crate::linalg::norm(s).max(self.eps_r);
        s.iter().map(|v| v / n).collect()
    }

    pub fn aux_nonlinearity(&self, r: f64) -> f64 {
        1.0 / r.max(self.eps_r)
    }
}

/// `phi_k(s) = s_k / ||s||` with the norm floored at [`EPS_R`].
pub fn score(s: &[Complex64]) -> Vec<Complex64> {
    SourceModel::default().score(s)
}

/// `1 / max(r, EPS_R)`.
#[inline]
pub fn aux_nonlinearity(r: f64) -> f64 {
    1.0 / r.max(EPS_R)
}

/// Per-frame magnitudes dependent on the SOI, weighted by `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSignal {
    pub o: Vec<f64>,
    pub delta: f64,
}

impl PilotSignal {
    pub fn new(o: Vec<f64>, delta: f64) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::Config(format!("pilot weight {delta} must be >= 0")));
        }
        if o.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Config("pilot magnitudes must be finite and >= 0".into()));
        }
        Ok(Self { o, delta })
    }

    /// Pilot from the per-frame spectral norm of a single-channel STFT,
    /// scaled to unit mean square.
    pub fn from_spectrum(s: &SpectralTensor, delta: f64) -> Result<Self> {
        let mut o = vec![0.0; s.frames()];
        for k in 0..s.bins() {
            for (l, v) in o.iter_mut().enumerate() {
                *v += s.get(k, l, 0).norm_sqr();
            }
        }
        let o: Vec<f64> = o.into_iter().map(f64::sqrt).collect();
        Self::new(unit_rms(o), delta)
    }

    pub fn from_wav(path: impl AsRef<Path>, config: &StftConfig, rate: u32, delta: f64) -> Result<Self> {
        let w = wav::read_wav(path, Some(rate))?;
        if w.num_channels() != 1 {
            return Err(Error::Config("pilot WAV must have a single channel".into()));
        }
        Self::from_spectrum(&stft::analyze(&w, config)?, delta)
    }

    /// One magnitude per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str, delta: f64) -> Result<Self> {
        let mut o = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Config(format!("pilot line {}: cannot parse {line:?}", i + 1)))?;
            o.push(v);
        }
        Self::new(o, delta)
    }

    pub fn len(&self) -> usize {
        self.o.len()
    }

    pub fn is_empty(&self) -> bool {
        self.o.is_empty()
    }
}

fn unit_rms(o: Vec<f64>) -> Vec<f64> {
    let ms = o.iter().map(|v| v * v).sum::<f64>() / o.len().max(1) as f64;
    if ms > 0.0 {
        let s = ms.sqrt();
        o.into_iter().map(|v| v / s).collect()
    } else {
        o
    }
}

/// `sqrt(sum_k |w_k^H x_{k,l}|^2 [+ delta^2 o_l^2])` for frame `l`.
pub fn frame_norm(w: &SeparatingVectors, x: &SpectralTensor, l: usize, pilot: Option<(f64, f64)>) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.bins() {
        acc += dot_h(w.get(k), x.frame(k, l)).norm_sqr();
    }
    with_pilot(acc, pilot)
}

#[inline]
fn with_pilot(sum_sq: f64, pilot: Option<(f64, f64)>) -> f64 {
    match pilot {
        Some((o, delta)) if delta != 0.0 => (sum_sq + delta * delta * o * o).sqrt(),
        _ => sum_sq.sqrt(),
    }
}

/// Frame norms for all frames from precomputed `s_hat[k * N + l]`.
pub fn frame_norms_from_estimates(
    s_hat: &[Complex64],
    bins: usize,
    frames: usize,
    pilot: Option<&PilotSignal>,
) -> Vec<f64> {
    let mut acc = vec![0.0; frames];
    for k in 0..bins {
        for (l, a) in acc.iter_mut().enumerate() {
            *a += s_hat[k * frames + l].norm_sqr();
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(l, s)| with_pilot(s, pilot.map(|p| (p.o[l], p.delta))))
        .collect()
}
