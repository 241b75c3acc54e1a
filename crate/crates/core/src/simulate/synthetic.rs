//! Instantaneous CSV mixtures with known ground truth, vector-Laplace
//! sampling and a speech-like test signal.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_h, mat_vec, ZERO};
use crate::model::{build_mixing_matrix, BlockLayout, MixingVectors, SeparatingVectors};
use crate::stft::{self, SpectralTensor, StftConfig, Waveform};

fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `frames` i.i.d. draws of a `bins`-dimensional circular vector-Laplace
/// variable with density `f(s) ∝ exp(-||s||)`, laid out `s[k * frames + l]`.
/// The norm follows `Gamma(2K, 1)` and each bin has variance `2(2K + 1)`.
pub fn sample_vector_laplace(bins: usize, frames: usize, seed: u64) -> Vec<Complex64> {
    vector_laplace(bins, frames, &mut ChaCha8Rng::seed_from_u64(seed), 1.0)
}

/// Per-bin variance of the unit-scale vector-Laplace law.
pub fn vector_laplace_bin_variance(bins: usize) -> f64 {
    2.0 * (2.0 * bins as f64 + 1.0)
}

pub(crate) fn vector_laplace(bins: usize, frames: usize, rng: &mut impl Rng, scale: f64) -> Vec<Complex64> {
    let gamma = Gamma::new(2.0 * bins as f64, 1.0).expect("shape is positive");
    let mut out = vec![ZERO; bins * frames];
    let mut dir = vec![ZERO; bins];
    for l in 0..frames {
        for v in dir.iter_mut() {
            *v = complex_normal(rng);
        }
        let n = crate::linalg::norm(&dir).max(f64::MIN_POSITIVE);
        let rho: f64 = gamma.sample(rng);
        for k in 0..bins {
            out[k * frames + l] = dir[k] * (rho * scale / n);
        }
    }
    out
}

fn unit_variance_laplace(bins: usize, frames: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    vector_laplace(bins, frames, rng, vector_laplace_bin_variance(bins).sqrt().recip())
}

/// Shape of an instantaneous synthetic mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub bins: usize,
    pub channels: usize,
    pub blocks: usize,
    pub block_len: usize,
    /// Variance of the SOI is drawn log-uniformly in
    /// `[1 / sigma_range, sigma_range]` per (bin, block).
    #[serde(default = "default_range")]
    pub sigma_range: f64,
    /// Mixing vectors change between blocks; otherwise `g` is shared.
    #[serde(default = "default_true")]
    pub moving: bool,
}

fn default_range() -> f64 {
    4.0
}

fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    pub fn new(bins: usize, channels: usize, blocks: usize, block_len: usize) -> Self {
        Self {
            bins,
            channels,
            blocks,
            block_len,
            sigma_range: default_range(),
            moving: true,
        }
    }

    pub fn frames(&self) -> usize {
        self.blocks * self.block_len
    }
}

/// Observed mixture with every latent quantity that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticMixture {
    pub x: SpectralTensor,
    /// `a_{k,t} s_{k,l}`.
    pub soi_image: SpectralTensor,
    /// `x - soi_image`.
    pub background_image: SpectralTensor,
    pub w: SeparatingVectors,
    pub a: MixingVectors,
    /// `sigma[k * T + t]` of the SOI.
    pub sigma: Vec<f64>,
    /// SOI `s[k * N + l]`.
    pub soi: Vec<Complex64>,
    pub layout: BlockLayout,
}

/// Draw `x_{k,l} = A_{k,t} [s_{k,l}; z_{k,l}]` with `A_{k,t}` built from a
/// shared `w_k = [beta_k; h_k]` and block-dependent `g_{k,t}`, where
/// `gamma_{k,t} = (1 - h_k^H g_{k,t}) / conj(beta_k)` so that
/// `w_k^H a_{k,t} = 1`. `s` is vector-Laplace across bins, `z` circular
/// Gaussian with identity covariance.
pub fn synthetic_csv_mixture(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticMixture> {
    let SyntheticSpec {
        bins,
        channels: d,
        blocks: nt,
        block_len,
        sigma_range,
        moving,
    } = *spec;
    if bins == 0 || d < 2 || nt == 0 || block_len == 0 || !(sigma_range >= 1.0) {
        return Err(Error::InvalidScenario(format!("invalid synthetic spec {spec:?}")));
    }
    let n = nt * block_len;
    let layout = BlockLayout::with_block_len(n, block_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut w_data = Vec::with_capacity(bins * d);
    let mut a = MixingVectors::zeros(bins, nt, d);
    let mut mixing = vec![Vec::new(); bins * nt];
    for k in 0..bins {
        let beta = loop {
            let b = complex_normal(&mut rng) + Complex64::new(1.0, 0.0);
            if b.norm() > 0.3 {
                break b;
            }
        };
        let h: Vec<Complex64> = (0..d - 1).map(|_| complex_normal(&mut rng) * 0.5).collect();
        let mut g_shared: Option<Vec<Complex64>> = None;
        for t in 0..nt {
            let (g, gamma) = loop {
                let g: Vec<Complex64> = match (&g_shared, moving) {
                    (Some(g), false) => g.clone(),
                    _ => (0..d - 1).map(|_| complex_normal(&mut rng)).collect(),
                };
                let gamma = (Complex64::new(1.0, 0.0) - dot_h(&h, &g)) / beta.conj();
                if gamma.norm() > 0.2 {
                    break (g, gamma);
                }
                g_shared = None;
            };
            g_shared = Some(g.clone());
            let akt = a.get_mut(k, t);
            akt[0] = gamma;
            akt[1..].copy_from_slice(&g);
            mixing[k * nt + t] = build_mixing_matrix(akt, &h)?;
        }
        w_data.push(beta);
        w_data.extend(h);
    }
    let w = SeparatingVectors::new(bins, d, w_data)?;

    let log_r = sigma_range.ln();
    let sigma: Vec<f64> = (0..bins * nt)
        .map(|_| (rng.random_range(-log_r..=log_r)).exp().sqrt())
        .collect();
    let mut soi = unit_variance_laplace(bins, n, &mut rng);
    for k in 0..bins {
        for l in 0..n {
            soi[k * n + l] *= sigma[k * nt + layout.block_of(l)];
        }
    }

    let mut x = vec![ZERO; bins * n * d];
    let mut img = vec![ZERO; bins * n * d];
    let mut src = vec![ZERO; d];
    for k in 0..bins {
        for l in 0..n {
            let t = layout.block_of(l);
            src[0] = soi[k * n + l];
            for v in src[1..].iter_mut() {
                *v = complex_normal(&mut rng);
            }
            let y = mat_vec(&mixing[k * nt + t], d, &src);
            let base = (k * n + l) * d;
            x[base..base + d].copy_from_slice(&y);
            for (i, ai) in a.get(k, t).iter().enumerate() {
                img[base + i] = ai * src[0];
            }
        }
    }
    let fft_len = (2 * bins.saturating_sub(1)).max(2);
    let config = StftConfig {
        fft_len,
        hop: fft_len / 2,
        ..StftConfig::default()
    };
    let bg: Vec<Complex64> = x.iter().zip(&img).map(|(a, b)| a - b).collect();
    let x = SpectralTensor::from_raw(x, bins, n, d, config, 16000)?;
    let soi_image = x.with_coeffs(img, d)?;
    let background_image = x.with_coeffs(bg, d)?;
    Ok(SyntheticMixture {
        x,
        soi_image,
        background_image,
        w,
        a,
        sigma,
        soi,
        layout,
    })
}

/// Speech-like signal: vector-Laplace spectra with a falling spectral
/// envelope whose frame energy is shared across groups of frames and
/// modulated at a syllabic rate with pauses. RMS is 0.1.
pub fn speech_surrogate(len: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
    let config = StftConfig::default();
    if len < config.fft_len {
        return Err(Error::SignalTooShort {
            len,
            fft_len: config.fft_len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = config.frames_for(len) + 1;
    let bins = config.bins();
    let group = 4;
    let groups = frames.div_ceil(group);
    let mut s = unit_variance_laplace(bins, groups, &mut rng);
    // per-group energy shared; fresh phases per frame
    let syllable_frames = (0.2 * sample_rate as f64 / config.hop as f64).max(1.0) as usize;
    let mut gains = Vec::with_capacity(frames);
    let mut current = 1.0;
    for l in 0..frames {
        if l % syllable_frames == 0 {
            current = if rng.random_bool(0.2) {
                0.03
            } else {
                (rng.sample::<f64, _>(StandardNormal) * 0.6).exp()
            };
        }
        gains.push(current);
    }
    let mut coeffs = vec![ZERO; bins * frames];
    for k in 0..bins {
        let f = k as f64 * sample_rate as f64 / config.fft_len as f64;
        let env = 1.0 / (1.0 + f / 400.0);
        for l in 0..frames {
            let mag = s[k * groups + l / group].norm();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            coeffs[k * frames + l] = Complex64::from_polar(mag * env * gains[l], phase);
        }
        if k == 0 || k == bins - 1 {
            for l in 0..frames {
                coeffs[k * frames + l] = Complex64::new(coeffs[k * frames + l].re, 0.0);
            }
        }
    }
    s.clear();
    let tensor = SpectralTensor::from_raw(coeffs, bins, frames, 1, config, sample_rate)?;
    let y = stft::synthesize(&tensor)?;
    let mut samples = y.into_channels().swap_remove(0);
    samples.resize(len, 0.0);
    let rms = (samples.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        samples.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    Waveform::mono(samples, sample_rate)
}

/// White Gaussian noise with unit variance.
pub fn white_noise(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}
