use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{canonical_contrast, normalize_first, AlgoConfig, ExtractionResult};
use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::model::{self, BlockCovariances, ExtractionState};
use crate::sourcemodel::EPS_R;
use crate::stft::SpectralTensor;

/// `nu_k = E[phi_k(u) conj(u_k)]` over the frames of one block, with `u`
/// the block-normalized SOI estimate laid out `u[k * frames + j]`.
pub fn nu(u: &[Complex64], bins: usize, frames: usize) -> Vec<Complex64> {
    let norms = frame_norms(u, bins, frames);
    (0..bins)
        .map(|k| {
            let sum: Complex64 = (0..frames)
                .map(|j| {
                    let v = u[k * frames + j];
                    v * v.conj() / norms[j]
                })
                .sum();
            sum / frames as f64
        })
        .collect()
}

fn frame_norms(u: &[Complex64], bins: usize, frames: usize) -> Vec<f64> {
    let mut acc = vec![0.0; frames];
    for k in 0..bins {
        for (j, a) in acc.iter_mut().enumerate() {
            *a += u[k * frames + j].norm_sqr();
        }
    }
    acc.into_iter().map(|v| v.sqrt().max(EPS_R)).collect()
}

/// Constrained gradient of the contrast with respect to `w_k^*` under the
/// orthogonal constraint, with the score rescaled by `1/nu`:
///
/// `Delta_k = 1/T sum_t { a_{k,t} - nu_{k,t}^-1 E_t[conj(phi_k(u)) x_k] / sigma_{k,t} }`.
///
/// The state's mixing vectors and scales must be current. Returns `K * d`
/// entries.
pub fn gradient_delta(
    state: &ExtractionState,
    x: &SpectralTensor,
    blocks: &BlockCovariances,
) -> Result<Vec<Complex64>> {
    let layout = blocks.layout();
    let (bins, n, d, nt) = (x.bins(), x.frames(), x.channels(), layout.blocks());
    let s_hat = model::soi_estimates(&state.w, x);
    let norms = model::scaled_frame_norms(state, &s_hat, layout);
    let norms: Vec<f64> = norms.into_iter().map(|r| r.max(EPS_R)).collect();

    let per_bin: Vec<Result<Vec<Complex64>>> = (0..bins)
        .into_par_iter()
        .map(|k| {
            let mut delta = vec![ZERO; d];
            for t in 0..nt {
                let sig = state.sigma(k, t);
                let range = layout.range(t);
                let nb = range.len() as f64;
                let mut nu_kt = ZERO;
                let mut g = vec![ZERO; d];
                for l in range {
                    let u = s_hat[k * n + l] / sig;
                    let phi = u / norms[l];
                    nu_kt += phi * u.conj();
                    let coef = phi.conj();
                    for (gi, xi) in g.iter_mut().zip(x.frame(k, l)) {
                        *gi += coef * xi;
                    }
                }
                nu_kt /= nb;
                if nu_kt.norm() < 1e-12 {
                    return Err(Error::DegenerateNu { bin: k, block: t });
                }
                let scale = Complex64::new(1.0, 0.0) / (nu_kt * nb * sig);
                for ((dl, ai), gi) in delta.iter_mut().zip(state.a.get(k, t)).zip(&g) {
                    *dl += ai - gi * scale;
                }
            }
            Ok(delta.into_iter().map(|v| v / nt as f64).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(bins * d);
    for r in per_bin {
        out.extend(r?);
    }
    Ok(out)
}

/// Block-wise orthogonally constrained gradient ascent on the contrast.
/// With one block this is the static gradient extractor.
pub fn bogive_w(x: &SpectralTensor, cfg: &AlgoConfig) -> Result<ExtractionResult> {
    cfg.validate()?;
    let start = Instant::now();
    let blocks = model::block_covariances(x, cfg.blocks)?;
    let mut w = cfg.init.vectors(x)?;
    let mut fallbacks = normalize_first(&mut w);
    let mut state = ExtractionState::new(w, &blocks)?;
    let (bins, d) = (x.bins(), x.channels());

    let mut contrast_trace = Vec::new();
    let mut step_trace = Vec::new();
    let mut converged = false;
    for iter in 0..cfg.max_iter {
        if iter > 0 {
            state.refresh(&blocks)?;
        }
        let delta = gradient_delta(&state, x, &blocks)?;
        let mut step = 0.0_f64;
        for k in 0..bins {
            let dk = &delta[k * d..(k + 1) * d];
            step = step.max(linalg::norm(dk));
            for (wi, di) in state.w.get_mut(k).iter_mut().zip(dk) {
                *wi += di * cfg.step;
            }
        }
        fallbacks += normalize_first(&mut state.w);
        state.iteration = iter + 1;
        step_trace.push(step);
        if cfg.record_contrast {
            contrast_trace.push(canonical_contrast(&state.w, x, &blocks)?);
        }
        if step < cfg.tol {
            converged = true;
            break;
        }
    }
    state.refresh(&blocks)?;
    state.diagnostics.pivot_fallbacks = fallbacks;
    state.trace = contrast_trace.clone();
    Ok(ExtractionResult {
        state,
        contrast_trace,
        step_trace,
        converged,
        reference: cfg.reference,
        elapsed: start.elapsed(),
    })
}
