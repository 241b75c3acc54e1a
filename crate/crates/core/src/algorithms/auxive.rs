use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{canonical_contrast, normalize_first, AlgoConfig, ExtractionResult};
use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::model::{self, AuxiliaryMatrices, BlockCovariances, ExtractionState, SeparatingVectors, EPS_REG};
use crate::sourcemodel::{self, PilotSignal};
use crate::stft::SpectralTensor;

/// `V_{k,t} = E_t[phi(r_l) x_{k,l} x_{k,l}^H]` with
/// `r_l = sqrt(sum_k |w_k^H x_{k,l}|^2 + delta^2 o_l^2)`.
pub fn auxiva_weighted_covariances(
    w: &SeparatingVectors,
    x: &SpectralTensor,
    blocks: &BlockCovariances,
    pilot: Option<&PilotSignal>,
) -> Result<AuxiliaryMatrices> {
    if let Some(p) = pilot {
        if p.len() != x.frames() {
            return Err(Error::Dimension(format!(
                "pilot has {} frames, data has {}",
                p.len(),
                x.frames()
            )));
        }
    }
    let s_hat = model::soi_estimates(w, x);
    let norms = sourcemodel::frame_norms_from_estimates(&s_hat, x.bins(), x.frames(), pilot);
    Ok(AuxiliaryMatrices::from_norms(x, blocks.layout(), norms))
}

/// Linearized stationary point of the auxiliary function in `w_k`,
///
/// `w_k = (sum_t V_{k,t}/sigma^2)^-1 sum_t (w_k^H V_{k,t} w_k / sigma^2) a_{k,t}`,
///
/// with the scalar weights taken at the state's current `w`, followed by
/// `w_k <- w_k / sqrt(sum_t w_k^H V_{k,t} w_k)`. Returns the new vectors
/// and how many bins needed a ridge.
pub fn solve_w(v: &AuxiliaryMatrices, state: &ExtractionState) -> Result<(SeparatingVectors, usize)> {
    let (bins, d, nt) = (state.bins(), state.channels(), state.blocks());
    if v.bins() != bins || v.blocks() != nt {
        return Err(Error::Dimension("auxiliary matrices do not match state".into()));
    }
    let dd = d * d;
    let per_bin: Vec<Result<(Vec<Complex64>, bool)>> = (0..bins)
        .into_par_iter()
        .map(|k| {
            let w_old = state.w.get(k);
            let mut m = vec![ZERO; dd];
            let mut rhs = vec![ZERO; d];
            for t in 0..nt {
                let s2 = state.sigma(k, t).powi(2);
                let vkt = v.get(k, t);
                for (mi, vi) in m.iter_mut().zip(vkt) {
                    *mi += vi / s2;
                }
                let weight = linalg::quad(w_old, vkt, d).re / s2;
                for (ri, ai) in rhs.iter_mut().zip(state.a.get(k, t)) {
                    *ri += ai * weight;
                }
            }
            let mut ridged = false;
            let mut w_new = match linalg::solve(&m, d, &rhs) {
                Some(w) => w,
                None => {
                    ridged = true;
                    let tr = linalg::trace(&m, d).re;
                    linalg::add_ridge(&mut m, d, EPS_REG * tr.max(f64::MIN_POSITIVE));
                    linalg::solve(&m, d, &rhs).ok_or(Error::SingularAuxSystem { bin: k })?
                }
            };
            let scale: f64 = (0..nt).map(|t| linalg::quad(&w_new, v.get(k, t), d).re).sum();
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::SingularAuxSystem { bin: k });
            }
            let s = scale.sqrt();
            w_new.iter_mut().for_each(|x| *x /= s);
            Ok((w_new, ridged))
        })
        .collect();
    let mut data = Vec::with_capacity(bins * d);
    let mut ridges = 0;
    for r in per_bin {
        let (w, ridged) = r?;
        data.extend(w);
        ridges += ridged as usize;
    }
    Ok((SeparatingVectors::new(bins, d, data)?, ridges))
}

/// Block auxiliary-function extraction; piloted when `pilot` is given.
/// With one block this is the single-source over-determined AuxIVA update.
pub fn block_auxive(x: &SpectralTensor, cfg: &AlgoConfig, pilot: Option<&PilotSignal>) -> Result<ExtractionResult> {
    cfg.validate()?;
    let start = Instant::now();
    let blocks = model::block_covariances(x, cfg.blocks)?;
    let mut w = cfg.init.vectors(x)?;
    let fallbacks = normalize_first(&mut w);
    let mut state = ExtractionState::new(w, &blocks)?;

    let mut contrast_trace = Vec::new();
    let mut step_trace = Vec::new();
    let mut converged = false;
    let mut ridges = 0;
    for iter in 0..cfg.max_iter {
        let v = auxiva_weighted_covariances(&state.w, x, &blocks, pilot)?;
        if iter > 0 {
            state.refresh(&blocks)?;
        }
        let (w_new, r) = solve_w(&v, &state)?;
        ridges += r;
        let change = (0..state.bins())
            .map(|k| {
                let old = state.w.get(k);
                let diff: Vec<Complex64> = old.iter().zip(w_new.get(k)).map(|(a, b)| a - b).collect();
                linalg::norm(&diff) / linalg::norm(old).max(f64::MIN_POSITIVE)
            })
            .fold(0.0_f64, f64::max);
        state.w = w_new;
        state.iteration = iter + 1;
        step_trace.push(change);
        if cfg.record_contrast {
            contrast_trace.push(canonical_contrast(&state.w, x, &blocks)?);
        }
        if cfg.early_stop > 0.0 && change < cfg.early_stop {
            converged = true;
            break;
        }
    }
    state.refresh(&blocks)?;
    state.diagnostics.pivot_fallbacks = fallbacks;
    state.diagnostics.ridge_events = ridges;
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
