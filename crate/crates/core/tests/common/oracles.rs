//! Independent reference implementations of the static single-source
//! update maps.

use blockive::{SeparatingVectors, SpectralTensor};
use num_complex::Complex64;

use super::{cn_vec, dot_h, inverse, mat_mul, mat_vec};

/// Random separating vectors with unit first entries.
pub fn random_w1(r: &mut impl rand::Rng, bins: usize, d: usize) -> SeparatingVectors {
    let mut data = cn_vec(r, bins * d);
    for k in 0..bins {
        data[k * d] = Complex64::new(1.0, 0.0);
    }
    SeparatingVectors::new(bins, d, data).unwrap()
}

pub fn sample_cov(x: &SpectralTensor, k: usize) -> Vec<Complex64> {
    let d = x.channels();
    let n = x.frames() as f64;
    let mut c = vec![Complex64::new(0.0, 0.0); d * d];
    for l in 0..x.frames() {
        let f = x.frame(k, l);
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] += f[i] * f[j].conj() / n;
            }
        }
    }
    c
}

/// Single-source over-determined AuxIVA: `w <- (W V)^-1 e_1` with
/// `W = [w^H; B]` and `B` from the orthogonal constraint, then
/// `w <- w / sqrt(w^H V w)`.
pub fn overiva_step(w: &SeparatingVectors, x: &SpectralTensor) -> SeparatingVectors {
    let (bins, n, d) = (x.bins(), x.frames(), x.channels());
    let r: Vec<f64> = (0..n)
        .map(|l| {
            (0..bins)
                .map(|k| dot_h(w.get(k), x.frame(k, l)).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    SeparatingVectors::from_fn(bins, d, |k| {
        let wk = w.get(k);
        let c = sample_cov(x, k);
        let cw = mat_vec(&c, d, wk);
        let var = dot_h(wk, &cw).re;
        let a: Vec<Complex64> = cw.iter().map(|v| v / var).collect();
        let mut wm = vec![Complex64::new(0.0, 0.0); d * d];
        for j in 0..d {
            wm[j] = wk[j].conj();
        }
        for row in 0..d - 1 {
            wm[(row + 1) * d] = a[row + 1];
            wm[(row + 1) * d + row + 1] = -a[0];
        }
        let mut v = vec![Complex64::new(0.0, 0.0); d * d];
        for l in 0..n {
            let f = x.frame(k, l);
            for i in 0..d {
                for j in 0..d {
                    v[i * d + j] += f[i] * f[j].conj() / (r[l] * n as f64);
                }
            }
        }
        let wv = mat_mul(&wm, &v, d, d, d);
        let inv = inverse(&wv, d);
        let new: Vec<Complex64> = (0..d).map(|i| inv[i * d]).collect();
        let s = dot_h(&new, &mat_vec(&v, d, &new)).re.sqrt();
        new.into_iter().map(|v| v / s).collect()
    })
}

/// Static gradient step: `w <- w + mu (a - nu^-1 E[conj(phi(u)) x] / sigma)`
/// with `u = w^H x / sigma`, `phi(u)_k = u_k / ||u||`, then unit first entry.
pub fn ogive_step(w: &SeparatingVectors, x: &SpectralTensor, mu: f64) -> SeparatingVectors {
    let (bins, n, d) = (x.bins(), x.frames(), x.channels());
    let mut sig = vec![0.0; bins];
    let mut a = vec![Vec::new(); bins];
    for k in 0..bins {
        let c = sample_cov(x, k);
        let cw = mat_vec(&c, d, w.get(k));
        let var = dot_h(w.get(k), &cw).re;
        sig[k] = var.sqrt();
        a[k] = cw.iter().map(|v| v / var).collect::<Vec<_>>();
    }
    let u = |k: usize, l: usize| dot_h(w.get(k), x.frame(k, l)) / sig[k];
    let norms: Vec<f64> = (0..n)
        .map(|l| (0..bins).map(|k| u(k, l).norm_sqr()).sum::<f64>().sqrt())
        .collect();
    SeparatingVectors::from_fn(bins, d, |k| {
        let mut nu = Complex64::new(0.0, 0.0);
        let mut g = vec![Complex64::new(0.0, 0.0); d];
        for l in 0..n {
            let phi = u(k, l) / norms[l];
            nu += phi * u(k, l).conj() / n as f64;
            for (gi, xi) in g.iter_mut().zip(x.frame(k, l)) {
                *gi += phi.conj() * xi / n as f64;
            }
        }
        let mut new: Vec<Complex64> = (0..d)
            .map(|i| w.get(k)[i] + (a[k][i] - g[i] / (nu * sig[k])) * mu)
            .collect();
        let p = new[0];
        new.iter_mut().for_each(|v| *v /= p);
        new
    })
}

pub fn max_diff(a: &SeparatingVectors, b: &SeparatingVectors) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
