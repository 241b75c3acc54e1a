//! Multichannel short-time Fourier transform with weighted overlap-add
//! inverse.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-domain multichannel signal, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidWaveform("no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidWaveform("channels differ in length".into()));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            channels: vec![vec![0.0; len]; num_channels],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Zero-pad or truncate every channel to `len`.
    pub fn resized(mut self, len: usize) -> Self {
        for c in &mut self.channels {
            c.resize(len, 0.0);
        }
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / nf;
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub fft_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_len: 512,
            hop: 128,
            window: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    pub fn new(fft_len: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let c = Self { fft_len, hop, window };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_len < 2 || !self.fft_len.is_multiple_of(2) {
            return Err(Error::InvalidStft(format!(
                "fft_len {} must be even and at least 2",
                self.fft_len
            )));
        }
        if self.hop == 0 || !self.fft_len.is_multiple_of(self.hop) || self.hop > self.fft_len / 2 {
            return Err(Error::InvalidStft(format!(
                "hop {} must divide fft_len {} and be at most half of it",
                self.hop, self.fft_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of complete frames for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        if len < self.fft_len {
            0
        } else {
            (len - self.fft_len) / self.hop + 1
        }
    }

    /// Samples of a length-`len` signal covered by the full set of
    /// overlapping frames; reconstruction guarantees apply here only.
    pub fn interior(&self, len: usize) -> std::ops::Range<usize> {
        let frames = self.frames_for(len);
        let start = self.fft_len - self.hop;
        let end = frames * self.hop;
        start..end.max(start)
    }
}

/// One-sided STFT coefficients, laid out bin-major: index
/// `(k * frames + l) * channels + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    coeffs: Vec<Complex64>,
    bins: usize,
    frames: usize,
    channels: usize,
    config: StftConfig,
    sample_rate: u32,
    source_len: Option<usize>,
}

impl SpectralTensor {
    pub fn from_raw(
        coeffs: Vec<Complex64>,
        bins: usize,
        frames: usize,
        channels: usize,
        config: StftConfig,
        sample_rate: u32,
    ) -> Result<Self> {
        if coeffs.len() != bins * frames * channels {
            return Err(Error::Dimension(format!(
                "{} coefficients for {bins}x{frames}x{channels}",
                coeffs.len()
            )));
        }
        if frames == 0 || channels == 0 {
            return Err(Error::Dimension("empty tensor".into()));
        }
        Ok(Self {
            coeffs,
            bins,
            frames,
            channels,
            config,
            sample_rate,
            source_len: None,
        })
    }

    pub fn zeros(bins: usize, frames: usize, channels: usize, config: StftConfig, sample_rate: u32) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); bins * frames * channels],
            bins,
            frames,
            channels,
            config,
            sample_rate,
            source_len: None,
        }
    }

    /// Length of the waveform this tensor was analyzed from, if known.
    pub fn source_len(&self) -> Option<usize> {
        self.source_len
    }

    pub fn with_source_len(mut self, len: usize) -> Self {
        self.source_len = Some(len);
        self
    }

    /// Same shape and metadata with new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<Complex64>, channels: usize) -> Result<Self> {
        let mut out = Self::from_raw(coeffs, self.bins, self.frames, channels, self.config, self.sample_rate)?;
        out.source_len = self.source_len;
        Ok(out)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, i: usize) -> Complex64 {
        self.coeffs[(k * self.frames + l) * self.channels + i]
    }

    /// Observation vector `x_{k,l}` across channels.
    #[inline]
    pub fn frame(&self, k: usize, l: usize) -> &[Complex64] {
        let start = (k * self.frames + l) * self.channels;
        &self.coeffs[start..start + self.channels]
    }

    #[inline]
    pub fn frame_mut(&mut self, k: usize, l: usize) -> &mut [Complex64] {
        let start = (k * self.frames + l) * self.channels;
        &mut self.coeffs[start..start + self.channels]
    }

    /// All frames of bin `k`, `frames * channels` values.
    #[inline]
    pub fn bin(&self, k: usize) -> &[Complex64] {
        let n = self.frames * self.channels;
        &self.coeffs[k * n..(k + 1) * n]
    }

    /// Frequency in Hz of bin `k`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.config.fft_len as f64
    }

    /// Keep a single channel.
    pub fn select_channel(&self, i: usize) -> SpectralTensor {
        let coeffs = self.coeffs.chunks(self.channels).map(|c| c[i]).collect();
        SpectralTensor {
            coeffs,
            bins: self.bins,
            frames: self.frames,
            channels: 1,
            config: self.config,
            sample_rate: self.sample_rate,
            source_len: self.source_len,
        }
    }

    /// `a * self + b * other`, elementwise.
    pub fn combine(&self, a: f64, other: &SpectralTensor, b: f64) -> Result<SpectralTensor> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::Dimension("tensor shapes differ".into()));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(SpectralTensor {
            coeffs,
            bins: self.bins,
            frames: self.frames,
            channels: self.channels,
            config: self.config,
            sample_rate: self.sample_rate,
            source_len: self.source_len,
        })
    }
}

/// Windowed one-sided DFT frames of every channel.
pub fn analyze(w: &Waveform, config: &StftConfig) -> Result<SpectralTensor> {
    config.validate()?;
    let len = w.len();
    if len < config.fft_len {
        return Err(Error::SignalTooShort {
            len,
            fft_len: config.fft_len,
        });
    }
    let frames = config.frames_for(len);
    let bins = config.bins();
    let d = w.num_channels();
    let window = config.window.coefficients(config.fft_len);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(config.fft_len);

    // per channel: frames x bins
    let per_channel: Vec<Vec<Complex64>> = w
        .channels()
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(frames * bins);
            let mut buf = vec![Complex64::new(0.0, 0.0); config.fft_len];
            for l in 0..frames {
                let off = l * config.hop;
                for (n, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(window[n] * x[off + n], 0.0);
                }
                fft.process(&mut buf);
                out.extend_from_slice(&buf[..bins]);
            }
            out
        })
        .collect();

    let mut coeffs = vec![Complex64::new(0.0, 0.0); bins * frames * d];
    for (i, ch) in per_channel.iter().enumerate() {
        for l in 0..frames {
            for k in 0..bins {
                coeffs[(k * frames + l) * d + i] = ch[l * bins + k];
            }
        }
    }
    Ok(SpectralTensor::from_raw(coeffs, bins, frames, d, *config, w.sample_rate())?.with_source_len(len))
}

/// Weighted overlap-add inverse, normalized per sample by the summed
/// squared synthesis windows. Output length is `(N-1) * hop + fft_len`.
pub fn synthesize(s: &SpectralTensor) -> Result<Waveform> {
    let config = s.config();
    config.validate()?;
    let l_fft = config.fft_len;
    if s.bins() != config.bins() {
        return Err(Error::Dimension(format!("{} bins for fft length {}", s.bins(), l_fft)));
    }
    let frames = s.frames();
    let out_len = (frames - 1) * config.hop + l_fft;
    let window = config.window.coefficients(l_fft);
    let ifft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(l_fft);

    let mut norm = vec![0.0; out_len];
    for l in 0..frames {
        let off = l * config.hop;
        for (n, wv) in window.iter().enumerate() {
            norm[off + n] += wv * wv;
        }
    }
    let peak = norm.iter().cloned().fold(0.0_f64, f64::max);
    let floor = 1e-10 * peak;

    let bins = s.bins();
    let channels: Vec<Vec<f64>> = (0..s.channels())
        .into_par_iter()
        .map(|i| {
            let mut y = vec![0.0; out_len];
            let mut buf = vec![Complex64::new(0.0, 0.0); l_fft];
            for l in 0..frames {
                for k in 0..bins {
                    buf[k] = s.get(k, l, i);
                }
                for k in 1..(l_fft - bins + 1) {
                    buf[l_fft - k] = buf[k].conj();
                }
                buf[0].im = 0.0;
                buf[l_fft / 2].im = 0.0;
                ifft.process(&mut buf);
                let off = l * config.hop;
                for n in 0..l_fft {
                    y[off + n] += window[n] * buf[n].re / l_fft as f64;
                }
            }
            for (v, nv) in y.iter_mut().zip(&norm) {
                *v = if *nv > floor { *v / nv } else { 0.0 };
            }
            y
        })
        .collect();
    Waveform::new(channels, s.sample_rate())
}
