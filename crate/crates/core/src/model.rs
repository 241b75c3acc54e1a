//! Constant-separating-vector mixing model: per-bin separating vectors
//! shared by every block, block-dependent mixing vectors coupled through
//! the orthogonal constraint, block statistics and objective evaluators.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot_h, ONE, ZERO};
use crate::sourcemodel;
use crate::stft::SpectralTensor;

/// Relative threshold on `w^H C w` below which the covariance is degenerate.
pub const EPS_DEN: f64 = 1e-12;
/// Relative ridge used when a covariance must be regularized.
pub const EPS_REG: f64 = 1e-10;

/// Per-bin separating vectors `w_k = [beta_k; h_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatingVectors {
    bins: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl SeparatingVectors {
    pub fn new(bins: usize, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != bins * channels {
            return Err(Error::Dimension(format!(
                "{} entries for {bins} bins x {channels} channels",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Dimension("non-finite separating vector".into()));
        }
        Ok(Self { bins, channels, data })
    }

    /// `e_channel` in every bin.
    pub fn unit(bins: usize, channels: usize, channel: usize) -> Self {
        let mut data = vec![ZERO; bins * channels];
        for k in 0..bins {
            data[k * channels + channel] = ONE;
        }
        Self { bins, channels, data }
    }

    pub fn from_fn(bins: usize, channels: usize, f: impl Fn(usize) -> Vec<Complex64>) -> Self {
        let mut data = Vec::with_capacity(bins * channels);
        for k in 0..bins {
            let v = f(k);
            assert_eq!(v.len(), channels);
            data.extend(v);
        }
        Self { bins, channels, data }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.channels..(k + 1) * self.channels]
    }

    #[inline]
    pub fn get_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.channels..(k + 1) * self.channels]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Multiply every bin by the same complex factor.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Copy with each bin divided by its entry on `channel`, where nonzero.
    pub fn normalized_to(&self, channel: usize) -> Self {
        let mut out = self.clone();
        for k in 0..self.bins {
            let w = out.get_mut(k);
            let p = w[channel];
            if p.norm() > 0.0 {
                w.iter_mut().for_each(|v| *v /= p);
            }
        }
        out
    }
}

/// Mixing vectors `a_{k,t} = [gamma; g]`, one per bin and block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingVectors {
    bins: usize,
    blocks: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl MixingVectors {
    pub fn zeros(bins: usize, blocks: usize, channels: usize) -> Self {
        Self {
            bins,
            blocks,
            channels,
            data: vec![ZERO; bins * blocks * channels],
        }
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize) -> &[Complex64] {
        let s = (k * self.blocks + t) * self.channels;
        &self.data[s..s + self.channels]
    }

    #[inline]
    pub fn get_mut(&mut self, k: usize, t: usize) -> &mut [Complex64] {
        let s = (k * self.blocks + t) * self.channels;
        &mut self.data[s..s + self.channels]
    }

    /// All blocks of bin `k`.
    pub fn bin_mut(&mut self, k: usize) -> &mut [Complex64] {
        let n = self.blocks * self.channels;
        &mut self.data[k * n..(k + 1) * n]
    }
}

/// Partition of `frames` into `blocks` contiguous intervals of equal length;
/// remainder frames belong to the last block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    frames: usize,
    blocks: usize,
    block_len: usize,
}

impl BlockLayout {
    pub fn new(frames: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 || blocks > frames {
            return Err(Error::TooManyBlocks { blocks, frames });
        }
        Ok(Self {
            frames,
            blocks,
            block_len: frames / blocks,
        })
    }

    /// Layout whose nominal block length is as close to `block_len` as the
    /// frame count allows.
    pub fn with_block_len(frames: usize, block_len: usize) -> Result<Self> {
        let blocks = ((frames as f64 / block_len.max(1) as f64).round() as usize).clamp(1, frames);
        Self::new(frames, blocks)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn range(&self, t: usize) -> Range<usize> {
        let start = t * self.block_len;
        let end = if t + 1 == self.blocks {
            self.frames
        } else {
            start + self.block_len
        };
        start..end
    }

    #[inline]
    pub fn block_of(&self, l: usize) -> usize {
        (l / self.block_len).min(self.blocks - 1)
    }
}

/// Sample covariances `C_{k,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariances {
    layout: BlockLayout,
    bins: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl BlockCovariances {
    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn blocks(&self) -> usize {
        self.layout.blocks
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize) -> &[Complex64] {
        let dd = self.channels * self.channels;
        let s = (k * self.layout.blocks + t) * dd;
        &self.data[s..s + dd]
    }
}

/// Weighted per-block covariances `E_t[weight_l x x^H]`, the common kernel
/// behind both the sample covariances and the auxiliary matrices.
pub fn weighted_block_covariances(x: &SpectralTensor, layout: BlockLayout, weights: Option<&[f64]>) -> Vec<Complex64> {
    let d = x.channels();
    let dd = d * d;
    let blocks = layout.blocks();
    let per_bin: Vec<Vec<Complex64>> = (0..x.bins())
        .into_par_iter()
        .map(|k| {
            let mut out = vec![ZERO; blocks * dd];
            for t in 0..blocks {
                let range = layout.range(t);
                let n = range.len() as f64;
                let m = &mut out[t * dd..(t + 1) * dd];
                for l in range {
                    let wt = weights.map_or(1.0, |w| w[l]);
                    linalg::add_outer(m, x.frame(k, l), wt / n);
                }
            }
            out
        })
        .collect();
    per_bin.concat()
}

/// Sample covariance of each bin over each of `blocks` equal frame intervals.
pub fn block_covariances(x: &SpectralTensor, blocks: usize) -> Result<BlockCovariances> {
    let layout = BlockLayout::new(x.frames(), blocks)?;
    Ok(BlockCovariances {
        layout,
        bins: x.bins(),
        channels: x.channels(),
        data: weighted_block_covariances(x, layout, None),
    })
}

/// Mixing vector tied to `w` by the orthogonal constraint,
/// `a = C w / (w^H C w)`, so that `w^H a = 1`.
pub fn ogc_mixing_vector(w: &[Complex64], c: &[Complex64]) -> Result<Vec<Complex64>> {
    ogc_with_variance(w, c).map(|(a, _)| a)
}

/// OGC mixing vector together with `w^H C w`.
pub(crate) fn ogc_with_variance(w: &[Complex64], c: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let d = w.len();
    let cw = linalg::mat_vec(c, d, w);
    let den = dot_h(w, &cw).re;
    let tr = linalg::trace(c, d).re;
    if !(den > EPS_DEN * tr) || !den.is_finite() {
        return Err(Error::DegenerateCovariance { bin: 0, block: 0 });
    }
    Ok((cw.into_iter().map(|v| v / den).collect(), den))
}

/// Blocking matrix `B = [g, -gamma I]`, `(d-1) x d`, row-major. `B a = 0`.
pub fn blocking_matrix(a: &[Complex64]) -> Vec<Complex64> {
    let d = a.len();
    assert!(d >= 2, "blocking matrix needs at least two channels");
    let mut b = vec![ZERO; (d - 1) * d];
    for r in 0..d - 1 {
        b[r * d] = a[r + 1];
        b[r * d + r + 1] = -a[0];
    }
    b
}

/// `A = [gamma, h^H; g, (g h^H - I) / gamma]`.
pub fn build_mixing_matrix(a: &[Complex64], h: &[Complex64]) -> Result<Vec<Complex64>> {
    let d = a.len();
    if h.len() + 1 != d {
        return Err(Error::Dimension("h must have d-1 entries".into()));
    }
    let gamma = a[0];
    if gamma.norm() == 0.0 {
        return Err(Error::SingularParameterization);
    }
    let mut m = vec![ZERO; d * d];
    m[0] = gamma;
    for j in 1..d {
        m[j] = h[j - 1].conj();
    }
    for i in 1..d {
        m[i * d] = a[i];
        for j in 1..d {
            let eye = if i == j { ONE } else { ZERO };
            m[i * d + j] = (a[i] * h[j - 1].conj() - eye) / gamma;
        }
    }
    Ok(m)
}

/// `W = [w^H; B(a)]`.
pub fn build_demixing_matrix(w: &[Complex64], a: &[Complex64]) -> Vec<Complex64> {
    let d = w.len();
    let mut m = Vec::with_capacity(d * d);
    m.extend(w.iter().map(|v| v.conj()));
    m.extend(blocking_matrix(a));
    m
}

/// Separating vectors, OGC mixing vectors and block scales of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionState {
    pub w: SeparatingVectors,
    pub a: MixingVectors,
    /// `sigma[k * T + t]`, the sample standard deviation of `w_k^H x_{k,t}`.
    pub sigma: Vec<f64>,
    pub iteration: usize,
    pub trace: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Covariances that needed a ridge to be inverted.
    pub ridge_events: usize,
    /// Normalizations that fell back to the largest-magnitude entry.
    pub pivot_fallbacks: usize,
}

impl ExtractionState {
    /// State for `w` with mixing vectors and scales brought in line with
    /// the orthogonal constraint.
    pub fn new(w: SeparatingVectors, blocks: &BlockCovariances) -> Result<Self> {
        if w.bins() != blocks.bins() || w.channels() != blocks.channels() {
            return Err(Error::Dimension("separating vectors do not match data".into()));
        }
        let mut state = Self {
            a: MixingVectors::zeros(w.bins(), blocks.blocks(), w.channels()),
            sigma: vec![0.0; w.bins() * blocks.blocks()],
            w,
            iteration: 0,
            trace: Vec::new(),
            diagnostics: Diagnostics::default(),
        };
        state.refresh(blocks)?;
        Ok(state)
    }

    pub fn bins(&self) -> usize {
        self.w.bins()
    }

    pub fn channels(&self) -> usize {
        self.w.channels()
    }

    pub fn blocks(&self) -> usize {
        self.a.blocks()
    }

    #[inline]
    pub fn sigma(&self, k: usize, t: usize) -> f64 {
        self.sigma[k * self.blocks() + t]
    }

    /// Recompute every `a_{k,t}` by the orthogonal constraint and every
    /// `sigma_{k,t} = sqrt(w^H C w)`.
    pub fn refresh(&mut self, blocks: &BlockCovariances) -> Result<()> {
        let nt = blocks.blocks();
        let d = self.channels();
        let w = &self.w;
        let results: Vec<Result<Vec<(Vec<Complex64>, f64)>>> = (0..self.bins())
            .into_par_iter()
            .map(|k| {
                (0..nt)
                    .map(|t| {
                        ogc_with_variance(w.get(k), blocks.get(k, t))
                            .map_err(|_| Error::DegenerateCovariance { bin: k, block: t })
                    })
                    .collect()
            })
            .collect();
        for (k, r) in results.into_iter().enumerate() {
            for (t, (a, var)) in r?.into_iter().enumerate() {
                self.a.get_mut(k, t).copy_from_slice(&a);
                self.sigma[k * nt + t] = var.sqrt();
            }
        }
        debug_assert_eq!(self.a.get(0, 0).len(), d);
        Ok(())
    }
}

/// `s_hat[k * N + l] = w_k^H x_{k,l}`.
pub fn soi_estimates(w: &SeparatingVectors, x: &SpectralTensor) -> Vec<Complex64> {
    let n = x.frames();
    let per_bin: Vec<Vec<Complex64>> = (0..x.bins())
        .into_par_iter()
        .map(|k| (0..n).map(|l| dot_h(w.get(k), x.frame(k, l))).collect())
        .collect();
    per_bin.concat()
}

/// Per-frame norms over bins of the SOI estimate scaled by the block
/// standard deviations, `sqrt(sum_k |w_k^H x_{k,l} / sigma_{k,t}|^2)`.
pub fn scaled_frame_norms(state: &ExtractionState, s_hat: &[Complex64], layout: BlockLayout) -> Vec<f64> {
    let n = layout.frames();
    let mut acc = vec![0.0; n];
    for k in 0..state.bins() {
        for l in 0..n {
            let sig = state.sigma(k, layout.block_of(l));
            acc[l] += s_hat[k * n + l].norm_sqr() / (sig * sig);
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// Weighted covariances `V_{k,t}` along with the per-frame norms `r` they were
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryMatrices {
    layout: BlockLayout,
    bins: usize,
    channels: usize,
    data: Vec<Complex64>,
    norms: Vec<f64>,
}

impl AuxiliaryMatrices {
    /// `V_{k,t} = E_t[phi(r_l) x x^H]` for the given frame norms.
    pub fn from_norms(x: &SpectralTensor, layout: BlockLayout, norms: Vec<f64>) -> Self {
        let weights: Vec<f64> = norms.iter().map(|&r| sourcemodel::aux_nonlinearity(r)).collect();
        Self {
            layout,
            bins: x.bins(),
            channels: x.channels(),
            data: weighted_block_covariances(x, layout, Some(&weights)),
            norms,
        }
    }

    #[inline]
    pub fn get(&self, k: usize, t: usize) -> &[Complex64] {
        let dd = self.channels * self.channels;
        let s = (k * self.layout.blocks() + t) * dd;
        &self.data[s..s + dd]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn blocks(&self) -> usize {
        self.layout.blocks()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

/// Auxiliary matrices touching the contrast at the current state: norms of
/// the block-scaled SOI estimate.
pub fn contact_auxiliary(state: &ExtractionState, x: &SpectralTensor, blocks: &BlockCovariances) -> AuxiliaryMatrices {
    let s_hat = soi_estimates(&state.w, x);
    let norms = scaled_frame_norms(state, &s_hat, blocks.layout());
    AuxiliaryMatrices::from_norms(x, blocks.layout(), norms)
}

/// Contrast value and how many background covariances needed a ridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub ridge_blocks: usize,
}

/// Terms two to four of the contrast for one (k, t): returns
/// `-log sigma^2 - E[z^H Cz^-1 z] + (d-2) log|gamma|^2` and whether a ridge
/// was applied.
fn block_terms(w: &[Complex64], a: &[Complex64], c: &[Complex64]) -> (f64, bool) {
    let d = w.len();
    let var = linalg::quad(w, c, d).re;
    let b = blocking_matrix(a);
    // Cz = B C B^H, (d-1) x (d-1)
    let m = d - 1;
    let mut bc = vec![ZERO; m * d];
    for i in 0..m {
        for j in 0..d {
            bc[i * d + j] = (0..d).map(|l| b[i * d + l] * c[l * d + j]).sum();
        }
    }
    let mut cz = vec![ZERO; m * m];
    for i in 0..m {
        for j in 0..m {
            cz[i * m + j] = (0..d).map(|l| bc[i * d + l] * b[j * d + l].conj()).sum();
        }
    }
    let ev = linalg::hermitian_eigenvalues(&cz, m);
    let tr: f64 = ev.iter().sum();
    let thresh = EPS_REG * tr.max(f64::MIN_POSITIVE);
    let singular = ev[0] <= thresh;
    let ridge = if singular { EPS_REG * tr / m as f64 } else { 0.0 };
    // E[z^H (Cz + ridge)^-1 z] = tr((Cz + ridge)^-1 Cz)
    let quad_bg: f64 = ev
        .iter()
        .map(|&l| {
            let l = l.max(0.0);
            if l + ridge > 0.0 {
                l / (l + ridge)
            } else {
                0.0
            }
        })
        .sum();
    let gamma2 = a[0].norm_sqr();
    (-var.ln() - quad_bg + (d as f64 - 2.0) * gamma2.ln(), singular)
}

fn block_terms_sum(state: &ExtractionState, blocks: &BlockCovariances) -> (Vec<f64>, usize) {
    let nt = blocks.blocks();
    let per: Vec<(Vec<f64>, usize)> = (0..state.bins())
        .into_par_iter()
        .map(|k| {
            let mut v = vec![0.0; nt];
            let mut r = 0;
            for (t, slot) in v.iter_mut().enumerate() {
                let (val, ridge) = block_terms(state.w.get(k), state.a.get(k, t), blocks.get(k, t));
                *slot = val;
                r += ridge as usize;
            }
            (v, r)
        })
        .collect();
    let mut sums = vec![0.0; nt];
    let mut ridges = 0;
    for (v, r) in per {
        for (s, x) in sums.iter_mut().zip(v) {
            *s += x;
        }
        ridges += r;
    }
    (sums, ridges)
}

fn check_dims(state: &ExtractionState, x: &SpectralTensor, blocks: &BlockCovariances) -> Result<()> {
    if state.bins() != x.bins()
        || state.channels() != x.channels()
        || state.blocks() != blocks.blocks()
        || blocks.layout().frames() != x.frames()
    {
        return Err(Error::Dimension("state does not match data".into()));
    }
    if x.channels() < 2 {
        return Err(Error::Dimension("extraction needs at least two channels".into()));
    }
    Ok(())
}

/// Log-quasilikelihood contrast under the vector-Laplace source model with
/// block-normalized SOI and a Gaussian background,
///
/// `C = 1/T sum_t { E[-||s/sigma||] - sum_k log sigma^2
///      - sum_k E[z^H Cz^-1 z] + (d-2) sum_k log|gamma|^2 }`.
///
/// The block scales are recomputed from `w`; `a` is taken from the state.
pub fn contrast(state: &ExtractionState, x: &SpectralTensor, blocks: &BlockCovariances) -> Result<Objective> {
    check_dims(state, x, blocks)?;
    let layout = blocks.layout();
    let mut st = state.clone();
    recompute_sigma(&mut st, blocks);
    let s_hat = soi_estimates(&st.w, x);
    let norms = scaled_frame_norms(&st, &s_hat, layout);
    let (terms, ridge_blocks) = block_terms_sum(&st, blocks);
    let nt = layout.blocks();
    let mut value = 0.0;
    for (t, term) in terms.iter().enumerate() {
        let range = layout.range(t);
        let n = range.len() as f64;
        let first: f64 = -norms[range].iter().sum::<f64>() / n;
        value += first + term;
    }
    Ok(Objective {
        value: value / nt as f64,
        ridge_blocks,
    })
}

/// Auxiliary function for the contrast,
///
/// `Q = 1/T sum_t { sum_k -1/2 w^H V w / sigma^2 + (remaining contrast terms) } + R`,
///
/// with `R = -1/(2T) sum_t E_t[r]` the part depending only on the norms `V`
/// was built from. At the contact point (norms of the block-scaled SOI
/// estimate) `Q` equals the contrast; elsewhere it lies below it.
pub fn auxiliary_value(
    state: &ExtractionState,
    v: &AuxiliaryMatrices,
    x: &SpectralTensor,
    blocks: &BlockCovariances,
) -> Result<Objective> {
    check_dims(state, x, blocks)?;
    if v.blocks() != blocks.blocks() || v.bins() != x.bins() {
        return Err(Error::Dimension("auxiliary matrices do not match data".into()));
    }
    let layout = blocks.layout();
    let mut st = state.clone();
    recompute_sigma(&mut st, blocks);
    let d = st.channels();
    let nt = layout.blocks();
    let (terms, ridge_blocks) = block_terms_sum(&st, blocks);
    let mut value = 0.0;
    for (t, term) in terms.iter().enumerate() {
        let mut first = 0.0;
        for k in 0..st.bins() {
            let s = st.sigma(k, t);
            first -= 0.5 * linalg::quad(st.w.get(k), v.get(k, t), d).re / (s * s);
        }
        let range = layout.range(t);
        let n = range.len() as f64;
        let r_term = -0.5 * v.norms()[range].iter().sum::<f64>() / n;
        value += first + term + r_term;
    }
    Ok(Objective {
        value: value / nt as f64,
        ridge_blocks,
    })
}

fn recompute_sigma(state: &mut ExtractionState, blocks: &BlockCovariances) {
    let nt = blocks.blocks();
    let d = state.channels();
    for k in 0..state.bins() {
        for t in 0..nt {
            let var = linalg::quad(state.w.get(k), blocks.get(k, t), d).re;
            state.sigma[k * nt + t] = var.max(0.0).sqrt();
        }
    }
}
