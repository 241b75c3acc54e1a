//! Blind extraction estimators: block-wise orthogonally constrained
//! gradient ascent, block auxiliary-function updates (optionally piloted),
//! and the rescaling that maps the extracted component back onto a
//! reference microphone.

use std::f64::consts::PI;
use std::time::Duration;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_h, ZERO};
use crate::model::{self, BlockCovariances, ExtractionState, SeparatingVectors};
use crate::sourcemodel::EPS_R;
use crate::stft::{self, SpectralTensor, Waveform};

mod auxive;
mod gradient;

pub use crate::model::AuxiliaryMatrices;
pub use auxive::{auxiva_weighted_covariances, block_auxive, solve_w};
pub use gradient::{bogive_w, gradient_delta, nu};

/// Starting separating vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `e_channel` in every bin.
    UnitVector(usize),
    /// Far-field delay-and-sum steering towards a direction of arrival.
    Steering {
        mic_positions: Vec<[f64; 3]>,
        azimuth_deg: f64,
        #[serde(default)]
        elevation_deg: f64,
        #[serde(default = "default_speed_of_sound")]
        speed_of_sound: f64,
    },
    Explicit(SeparatingVectors),
}

fn default_speed_of_sound() -> f64 {
    343.0
}

impl Default for Init {
    fn default() -> Self {
        Init::UnitVector(0)
    }
}

impl Init {
    pub fn vectors(&self, x: &SpectralTensor) -> Result<SeparatingVectors> {
        let (bins, d) = (x.bins(), x.channels());
        match self {
            Init::UnitVector(ch) => {
                if *ch >= d {
                    return Err(Error::Config(format!("init channel {ch} out of range")));
                }
                Ok(SeparatingVectors::unit(bins, d, *ch))
            }
            Init::Steering {
                mic_positions,
                azimuth_deg,
                elevation_deg,
                speed_of_sound,
            } => {
                if mic_positions.len() != d {
                    return Err(Error::Config(format!(
                        "{} microphone positions for {d} channels",
                        mic_positions.len()
                    )));
                }
                Ok(steering_vectors(
                    x,
                    mic_positions,
                    *azimuth_deg,
                    *elevation_deg,
                    *speed_of_sound,
                ))
            }
            Init::Explicit(w) => {
                if w.bins() != bins || w.channels() != d {
                    return Err(Error::Dimension("explicit init does not match data".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

/// Delay-and-sum weights so that `w_k^H x_k` aligns a plane wave arriving
/// from (azimuth, elevation).
pub fn steering_vectors(
    x: &SpectralTensor,
    mics: &[[f64; 3]],
    azimuth_deg: f64,
    elevation_deg: f64,
    c: f64,
) -> SeparatingVectors {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
    let d = mics.len();
    let centre: Vec<f64> = (0..3)
        .map(|j| mics.iter().map(|m| m[j]).sum::<f64>() / d as f64)
        .collect();
    // a mic further along `dir` hears the wave earlier
    let delays: Vec<f64> = mics
        .iter()
        .map(|m| -(0..3).map(|j| (m[j] - centre[j]) * dir[j]).sum::<f64>() / c)
        .collect();
    SeparatingVectors::from_fn(x.bins(), d, |k| {
        let f = x.bin_frequency(k);
        delays
            .iter()
            .map(|tau| Complex64::from_polar(1.0 / d as f64, -2.0 * PI * f * tau))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    /// Number of blocks `T`.
    pub blocks: usize,
    pub max_iter: usize,
    /// Gradient step size `mu`.
    pub step: f64,
    /// Gradient stopping threshold on `max_k ||Delta_k||`.
    pub tol: f64,
    pub init: Init,
    /// Reference microphone for the output image.
    pub reference: usize,
    /// Auxiliary-function runs stop early when the largest relative change
    /// of any `w_k` falls below this; `0` runs every iteration.
    pub early_stop: f64,
    /// Evaluate the contrast after every iteration.
    pub record_contrast: bool,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            blocks: 1,
            max_iter: 100,
            step: 0.2,
            tol: 1e-6,
            init: Init::default(),
            reference: 0,
            early_stop: 0.0,
            record_contrast: true,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::Config("step must be > 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        if self.blocks == 0 {
            return Err(Error::Config("blocks must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of an extraction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub state: ExtractionState,
    /// Contrast after each iteration, evaluated with every `w_k` scaled to
    /// unit first entry so that runs with different normalizations compare.
    pub contrast_trace: Vec<f64>,
    /// `max_k ||Delta_k||` (gradient) or largest relative change of `w_k`
    /// (auxiliary function) per iteration.
    pub step_trace: Vec<f64>,
    /// Gradient runs: the tolerance test passed before `max_iter`.
    /// Auxiliary-function runs: the early-stop test passed.
    pub converged: bool,
    pub reference: usize,
    pub elapsed: Duration,
}

impl ExtractionResult {
    pub fn iterations(&self) -> usize {
        self.step_trace.len()
    }
}

/// Which estimator to run; the static variants are the single-block cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OgiveW,
    BogiveW,
    Overiva,
    BlockAuxive,
    PilotedBlockAuxive,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ogive_w" => Ok(Method::OgiveW),
            "bogive_w" => Ok(Method::BogiveW),
            "overiva" => Ok(Method::Overiva),
            "block_auxive" => Ok(Method::BlockAuxive),
            "piloted_block_auxive" => Ok(Method::PilotedBlockAuxive),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl Method {
    pub fn is_static(self) -> bool {
        matches!(self, Method::OgiveW | Method::Overiva)
    }

    pub fn needs_pilot(self) -> bool {
        self == Method::PilotedBlockAuxive
    }

    /// Run on `x`. Static methods force a single block; piloted runs require
    /// a pilot.
    pub fn run(
        self,
        x: &SpectralTensor,
        cfg: &AlgoConfig,
        pilot: Option<&crate::sourcemodel::PilotSignal>,
    ) -> Result<ExtractionResult> {
        let mut cfg = cfg.clone();
        if self.is_static() {
            cfg.blocks = 1;
        }
        match self {
            Method::OgiveW | Method::BogiveW => bogive_w(x, &cfg),
            Method::Overiva | Method::BlockAuxive => block_auxive(x, &cfg, None),
            Method::PilotedBlockAuxive => {
                let p = pilot.ok_or_else(|| Error::Config("piloted extraction needs a pilot signal".into()))?;
                block_auxive(x, &cfg, Some(p))
            }
        }
    }
}

/// Divide each `w_k` by its first entry. Bins whose first entry vanishes
/// use the largest-magnitude entry instead; returns how many did.
pub(crate) fn normalize_first(w: &mut SeparatingVectors) -> usize {
    let mut fallbacks = 0;
    for k in 0..w.bins() {
        let v = w.get_mut(k);
        let mut p = v[0];
        if p.norm() <= EPS_R * crate::linalg::norm(v) || p.norm() == 0.0 {
            fallbacks += 1;
            p = v
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(ZERO);
        }
        if p.norm() > 0.0 {
            v.iter_mut().for_each(|x| *x /= p);
        }
    }
    fallbacks
}

/// Contrast evaluated after scaling each `w_k` to unit first entry.
pub fn canonical_contrast(w: &SeparatingVectors, x: &SpectralTensor, blocks: &BlockCovariances) -> Result<f64> {
    let mut w = w.clone();
    normalize_first(&mut w);
    let st = ExtractionState::new(w, blocks)?;
    Ok(model::contrast(&st, x, blocks)?.value)
}

/// Apply the extraction of `state` to any signal sharing the STFT layout:
/// `out_{k,l} = (a_{k,t})_ref * w_k^H y_{k,l}` with `t` the block of `l`.
pub fn apply_extraction(state: &ExtractionState, reference: usize, y: &SpectralTensor) -> Result<SpectralTensor> {
    if y.bins() != state.bins() || y.channels() != state.channels() {
        return Err(Error::Dimension("signal does not match extraction state".into()));
    }
    if reference >= state.channels() {
        return Err(Error::Config(format!("reference channel {reference} out of range")));
    }
    let layout = model::BlockLayout::new(y.frames(), state.blocks())?;
    let n = y.frames();
    let per_bin: Vec<Vec<Complex64>> = (0..y.bins())
        .into_par_iter()
        .map(|k| {
            let w = state.w.get(k);
            (0..n)
                .map(|l| state.a.get(k, layout.block_of(l))[reference] * dot_h(w, y.frame(k, l)))
                .collect()
        })
        .collect();
    y.with_coeffs(per_bin.concat(), 1)
}

/// SOI estimate rescaled per block to its image on the reference channel.
/// Under the orthogonal constraint this is the least-squares projection of
/// the reference channel onto the extracted component.
pub fn rescale_output(state: &ExtractionState, reference: usize, x: &SpectralTensor) -> Result<SpectralTensor> {
    apply_extraction(state, reference, x)
}

/// Time-domain SOI image on the reference channel, trimmed or padded to
/// the analyzed signal length.
pub fn extract_signal(result: &ExtractionResult, x: &SpectralTensor) -> Result<Waveform> {
    let out = rescale_output(&result.state, result.reference, x)?;
    let y = stft::synthesize(&out)?;
    let len = x.source_len().unwrap_or(y.len());
    Ok(y.resized(len))
}
