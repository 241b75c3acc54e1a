#![allow(dead_code)]

pub mod oracles;

use blockive::stft::{SpectralTensor, StftConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circular complex Gaussian with unit variance.
pub fn cn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cn_vec(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| cn(rng)).collect()
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Config whose bin count is `bins`.
pub fn config_for(bins: usize) -> StftConfig {
    let fft_len = (2 * bins.saturating_sub(1)).max(2);
    StftConfig {
        fft_len,
        hop: fft_len / 2,
        ..StftConfig::default()
    }
}

/// Tensor with i.i.d. circular Gaussian entries mixed by a random matrix
/// per bin, so channels are correlated.
pub fn random_tensor(rng: &mut impl Rng, bins: usize, frames: usize, d: usize) -> SpectralTensor {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); bins * frames * d];
    for k in 0..bins {
        let m = cn_vec(rng, d * d);
        for l in 0..frames {
            let s = cn_vec(rng, d);
            let base = (k * frames + l) * d;
            for i in 0..d {
                coeffs[base + i] = (0..d).map(|j| m[i * d + j] * s[j]).sum::<Complex64>() + s[i];
            }
        }
    }
    SpectralTensor::from_raw(coeffs, bins, frames, d, config_for(bins), 16000).unwrap()
}

/// Random Hermitian positive-definite `d x d` matrix, row-major.
pub fn random_hpd(rng: &mut impl Rng, d: usize) -> Vec<Complex64> {
    let m = cn_vec(rng, d * d);
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|l| m[i * d + l] * m[j * d + l].conj()).sum();
        }
        out[i * d + i] += 0.1;
    }
    out
}

pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn mat_vec(m: &[Complex64], d: usize, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.len() / d)
        .map(|i| (0..d).map(|j| m[i * d + j] * v[j]).sum())
        .collect()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &[Complex64], d: usize) -> Complex64 {
    let mut a = m.to_vec();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..d {
        let p = (col..d)
            .max_by(|&i, &j| a[i * d + col].norm().total_cmp(&a[j * d + col].norm()))
            .unwrap();
        if a[p * d + col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if p != col {
            for j in 0..d {
                a.swap(p * d + j, col * d + j);
            }
            det = -det;
        }
        let piv = a[col * d + col];
        det *= piv;
        for i in col + 1..d {
            let f = a[i * d + col] / piv;
            for j in col..d {
                let v = a[col * d + j];
                a[i * d + j] -= f * v;
            }
        }
    }
    det
}

/// Complex matrix inverse by Gauss-Jordan.
pub fn inverse(m: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut a = m.to_vec();
    let mut inv = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        inv[i * d + i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..d {
        let p = (col..d)
            .max_by(|&i, &j| a[i * d + col].norm().total_cmp(&a[j * d + col].norm()))
            .unwrap();
        for j in 0..d {
            a.swap(p * d + j, col * d + j);
            inv.swap(p * d + j, col * d + j);
        }
        let piv = a[col * d + col];
        for j in 0..d {
            a[col * d + j] /= piv;
            inv[col * d + j] /= piv;
        }
        for i in 0..d {
            if i != col {
                let f = a[i * d + col];
                for j in 0..d {
                    let (av, iv) = (a[col * d + j], inv[col * d + j]);
                    a[i * d + j] -= f * av;
                    inv[i * d + j] -= f * iv;
                }
            }
        }
    }
    inv
}

pub fn mat_mul(a: &[Complex64], b: &[Complex64], n: usize, m: usize, p: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * p];
    for i in 0..n {
        for j in 0..p {
            out[i * p + j] = (0..m).map(|l| a[i * m + l] * b[l * p + j]).sum();
        }
    }
    out
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
