//! Image-source room impulse responses for shoebox rooms.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Position = [f64; 3];

/// Half-width of the windowed-sinc fractional delay kernel (10 taps).
const SINC_HALF: i64 = 5;

/// Cutoff of the high-pass applied to reverberant responses, Hz. Image
/// amplitudes are all positive, so the dense tail otherwise accumulates a
/// DC component that stretches the broadband energy decay.
const HIGHPASS_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Width, length, height in metres.
    pub dimensions: [f64; 3],
    /// Reverberation time in seconds; `0` is anechoic.
    pub t60: f64,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
}

fn default_c() -> f64 {
    343.0
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], t60: f64) -> Result<Self> {
        let r = Self {
            dimensions,
            t60,
            speed_of_sound: default_c(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidGeometry("room dimensions must be positive".into()));
        }
        if !(self.t60 >= 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidGeometry("t60 must be >= 0 and c > 0".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.iter().zip(&self.dimensions).all(|(x, l)| *x >= 0.0 && *x <= *l)
    }

    /// Wall reflection coefficient from Sabine's formula with uniform
    /// absorption.
    pub fn reflection_coefficient(&self) -> f64 {
        if self.t60 <= 0.0 {
            return 0.0;
        }
        let [w, l, h] = self.dimensions;
        let volume = w * l * h;
        let surface = 2.0 * (w * l + w * h + l * h);
        let alpha = 24.0 * 10f64.ln() * volume / (self.speed_of_sound * surface * self.t60);
        (1.0 - alpha.min(1.0)).sqrt()
    }
}

fn distance(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Impulse response from `src` to `mic` sampled at `fs`. Image sources are
/// summed up to `max_order` reflections (`None` for as many as fit in the
/// response length), each placed with a windowed-sinc fractional delay.
/// Reverberant responses (`t60 > 0`) are then high-passed at 100 Hz by a
/// causal second-order Butterworth section; anechoic ones are left as is.
pub fn image_method_rir(
    room: &RoomSpec,
    src: &Position,
    mic: &Position,
    fs: f64,
    max_order: Option<usize>,
) -> Result<Vec<f64>> {
    room.validate()?;
    if !room.contains(src) || !room.contains(mic) {
        return Err(Error::InvalidGeometry(format!(
            "source {src:?} or microphone {mic:?} outside room"
        )));
    }
    let direct = distance(src, mic);
    if direct < 1e-9 {
        return Err(Error::InvalidGeometry("source and microphone coincide".into()));
    }
    let c = room.speed_of_sound;
    let beta = room.reflection_coefficient();
    let direct_delay = direct / c * fs;
    let len = ((room.t60 * fs).ceil() as usize).max(direct_delay.ceil() as usize + SINC_HALF as usize + 1);
    let mut h = vec![0.0; len];
    let max_dist = len as f64 * c / fs;

    let orders: Vec<i64> = (0..3)
        .map(|j| {
            if beta == 0.0 {
                0
            } else {
                (max_dist / (2.0 * room.dimensions[j])).ceil() as i64 + 1
            }
        })
        .collect();

    for nx in -orders[0]..=orders[0] {
        for ny in -orders[1]..=orders[1] {
            for nz in -orders[2]..=orders[2] {
                for p in 0..8u8 {
                    let n = [nx, ny, nz];
                    let parity = [(p & 1) as i64, ((p >> 1) & 1) as i64, ((p >> 2) & 1) as i64];
                    let mut img = [0.0; 3];
                    let mut refl = 0i64;
                    for j in 0..3 {
                        img[j] = (1 - 2 * parity[j]) as f64 * src[j] + 2.0 * n[j] as f64 * room.dimensions[j];
                        refl += (n[j] - parity[j]).abs() + n[j].abs();
                    }
                    if max_order.is_some_and(|m| refl as usize > m) {
                        continue;
                    }
                    if beta == 0.0 && refl > 0 {
                        continue;
                    }
                    let dist = distance(&img, mic);
                    let delay = dist / c * fs;
                    if delay >= len as f64 {
                        continue;
                    }
                    let amp = beta.powi(refl as i32) / (4.0 * PI * dist);
                    add_fractional_impulse(&mut h, delay, amp);
                }
            }
        }
    }
    if beta > 0.0 {
        highpass(&mut h, HIGHPASS_HZ / fs);
    }
    Ok(h)
}

/// In-place second-order Butterworth high-pass, cutoff `fc` in cycles per
/// sample, bilinear transform with prewarping.
fn highpass(x: &mut [f64], fc: f64) {
    let k = (PI * fc).tan();
    let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k * k);
    let (b0, b1, b2) = (norm, -2.0 * norm, norm);
    let a1 = 2.0 * (k * k - 1.0) * norm;
    let a2 = (1.0 - std::f64::consts::SQRT_2 * k + k * k) * norm;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let y = b0 * *v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        (x2, x1, y2, y1) = (x1, *v, y1, y);
        *v = y;
    }
}

fn add_fractional_impulse(h: &mut [f64], delay: f64, amp: f64) {
    let centre = delay.round() as i64;
    for n in centre - SINC_HALF + 1..=centre + SINC_HALF - 1 {
        if n < 0 || n as usize >= h.len() {
            continue;
        }
        let x = n as f64 - delay;
        let win = 0.5 * (1.0 + (PI * x / SINC_HALF as f64).cos());
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        h[n as usize] += amp * sinc * win;
    }
}

/// Full linear convolution via FFT, length `x.len() + h.len() - 1`.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    inv.process(&mut a);
    a.truncate(out_len);
    a.into_iter().map(|v| v.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(t60: f64) -> RoomSpec {
        RoomSpec::new([4.0, 4.0, 2.5], t60).unwrap()
    }

    #[test]
    fn anechoic_integer_delay_is_single_impulse() {
        // 43 samples at 16 kHz
        let d = 43.0 * 343.0 / 16000.0;
        let src = [1.0, 1.0, 1.0];
        let mic = [1.0 + d, 1.0, 1.0];
        let h = image_method_rir(&room(0.0), &src, &mic, 16000.0, None).unwrap();
        let amp = 1.0 / (4.0 * PI * d);
        for (n, v) in h.iter().enumerate() {
            if n == 43 {
                assert!((v - amp).abs() < 1e-12 * amp);
            } else {
                assert!(v.abs() < 1e-12 * amp, "tap {n} = {v}");
            }
        }
    }

    #[test]
    fn one_metre_peaks_at_sample_47() {
        let h = image_method_rir(&room(0.0), &[1.0, 1.0, 1.0], &[2.0, 1.0, 1.0], 16000.0, None).unwrap();
        let peak = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        assert_eq!(peak, 47);
        let gain: f64 = h.iter().sum();
        assert!((gain - 1.0 / (4.0 * PI)).abs() < 0.02 / (4.0 * PI));
    }

    #[test]
    fn doubling_distance_costs_6db() {
        let a = image_method_rir(&room(0.0), &[0.5, 1.0, 1.0], &[1.5, 1.0, 1.0], 16000.0, None).unwrap();
        let b = image_method_rir(&room(0.0), &[0.5, 1.0, 1.0], &[2.5, 1.0, 1.0], 16000.0, None).unwrap();
        let ga: f64 = a.iter().sum();
        let gb: f64 = b.iter().sum();
        let db = 20.0 * (ga / gb).log10();
        assert!((db - 6.0206).abs() < 0.05, "{db}");
    }

    #[test]
    fn outside_positions_rejected() {
        assert!(matches!(
            image_method_rir(&room(0.1), &[5.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 16000.0, None),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(image_method_rir(&room(0.1), &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 16000.0, None).is_err());
    }

    #[test]
    fn highpass_removes_dc_and_passes_high_frequencies() {
        let mut dc = vec![1.0; 4000];
        highpass(&mut dc, 100.0 / 16000.0);
        assert!(dc[3999].abs() < 1e-6);
        let tone = |n: usize| (2.0 * PI * 2000.0 * n as f64 / 16000.0).sin();
        let mut x: Vec<f64> = (0..4000).map(tone).collect();
        highpass(&mut x, 100.0 / 16000.0);
        let e_in: f64 = (2000..4000).map(|n| tone(n).powi(2)).sum();
        let e_out: f64 = x[2000..].iter().map(|v| v * v).sum();
        assert!((e_out / e_in - 1.0).abs() < 1e-3);
    }

    #[test]
    fn length_covers_t60() {
        let h = image_method_rir(&room(0.1), &[1.0, 1.0, 1.0], &[2.0, 2.0, 1.0], 16000.0, None).unwrap();
        assert!(h.len() >= 1600);
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let h = [0.25, 1.0, -1.0];
        let y = fft_convolve(&x, &h);
        for n in 0..y.len() {
            let direct: f64 = (0..h.len())
                .filter(|&j| n >= j && n - j < x.len())
                .map(|j| h[j] * x[n - j])
                .sum();
            assert!((y[n] - direct).abs() < 1e-12);
        }
    }
}
