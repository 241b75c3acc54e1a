//! Extraction quality against ground truth: SINR improvement, SDR
//! improvement with delay compensation, fail rates and attenuation maps.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot_h;
use crate::model::{BlockLayout, ExtractionState, SeparatingVectors};
use crate::simulate::{fft_convolve, image_method_rir, white_noise, Position, RoomSpec};
use crate::stft::{self, SpectralTensor, StftConfig, Waveform};

/// Reported ratios are clamped to `[-CAP_DB, CAP_DB]`.
pub const CAP_DB: f64 = 80.0;

/// iSINR below this counts as a failed extraction.
pub const FAIL_DB: f64 = -5.0;

/// A ratio in dB and whether it hit the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Db {
    pub value: f64,
    pub capped: bool,
}

impl Db {
    fn of_ratio(num: f64, den: f64) -> Self {
        if !(den > 0.0) {
            return Self {
                value: if num > 0.0 { CAP_DB } else { 0.0 },
                capped: num > 0.0,
            };
        }
        if !(num > 0.0) {
            return Self {
                value: -CAP_DB,
                capped: true,
            };
        }
        let v = 10.0 * (num / den).log10();
        Self {
            value: v.clamp(-CAP_DB, CAP_DB),
            capped: v.abs() >= CAP_DB,
        }
    }
}

/// `10 log10(ps_out / pn_out) - 10 log10(ps_in / pn_in)`, capped. A
/// perfect null at the output (or a silent input background) scores the
/// cap itself.
pub fn isinr_from_powers(ps_out: f64, pn_out: f64, ps_in: f64, pn_in: f64) -> Db {
    let ratio = |num: f64, den: f64| -> f64 {
        match (num > 0.0, den > 0.0) {
            (true, true) => 10.0 * (num / den).log10(),
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            (false, false) => 0.0,
        }
    };
    let out = ratio(ps_out, pn_out);
    let inp = ratio(ps_in, pn_in);
    let v = match (out.is_infinite(), inp.is_infinite()) {
        (true, _) => out,
        (false, true) => -inp,
        (false, false) => out - inp,
    };
    Db {
        value: v.clamp(-CAP_DB, CAP_DB),
        capped: v.abs() >= CAP_DB,
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// iSINR from filtered SOI and background images and the unprocessed
/// reference-channel images, all in the time domain.
pub fn isinr(out_soi: &[f64], out_bg: &[f64], ref_soi: &[f64], ref_bg: &[f64]) -> Db {
    isinr_from_powers(energy(out_soi), energy(out_bg), energy(ref_soi), energy(ref_bg))
}

/// SINR improvement measured in the STFT domain: per block, and over the
/// whole signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrBreakdown {
    /// Mean of the per-block values.
    pub block_mean: Db,
    pub global: Db,
    pub per_block: Vec<f64>,
}

fn spectral_energy(y: &SpectralTensor, ch: usize, frames: std::ops::Range<usize>) -> f64 {
    let mut e = 0.0;
    for k in 0..y.bins() {
        for l in frames.clone() {
            e += y.get(k, l, ch).norm_sqr();
        }
    }
    e
}

/// Apply the extraction of `state` to the SOI and background images and
/// compare with the reference channel of each.
pub fn spectral_isinr(
    state: &ExtractionState,
    reference: usize,
    soi_image: &SpectralTensor,
    background_image: &SpectralTensor,
) -> Result<SinrBreakdown> {
    let out_s = crate::algorithms::apply_extraction(state, reference, soi_image)?;
    let out_n = crate::algorithms::apply_extraction(state, reference, background_image)?;
    let layout = BlockLayout::new(soi_image.frames(), state.blocks())?;
    let mut per_block = Vec::with_capacity(layout.blocks());
    let mut capped = false;
    for t in 0..layout.blocks() {
        let r = layout.range(t);
        let db = isinr_from_powers(
            spectral_energy(&out_s, 0, r.clone()),
            spectral_energy(&out_n, 0, r.clone()),
            spectral_energy(soi_image, reference, r.clone()),
            spectral_energy(background_image, reference, r),
        );
        capped |= db.capped;
        per_block.push(db.value);
    }
    let all = 0..soi_image.frames();
    let global = isinr_from_powers(
        spectral_energy(&out_s, 0, all.clone()),
        spectral_energy(&out_n, 0, all.clone()),
        spectral_energy(soi_image, reference, all.clone()),
        spectral_energy(background_image, reference, all),
    );
    let mean = per_block.iter().sum::<f64>() / per_block.len() as f64;
    Ok(SinrBreakdown {
        block_mean: Db { value: mean, capped },
        global,
        per_block,
    })
}

/// Scale-invariant SDR of `estimate` against `reference`, maximized over
/// integer delays of the estimate within `±max_delay` samples. Inputs are
/// truncated to the shorter length.
pub fn sdr(estimate: &[f64], reference: &[f64], max_delay: usize) -> Result<Db> {
    let n = estimate.len().min(reference.len());
    let (e, s) = (&estimate[..n], &reference[..n]);
    let es = energy(s);
    if !(es > 0.0) {
        return Err(Error::Undefined("reference signal is silent".into()));
    }
    if n == 0 {
        return Err(Error::Undefined("empty signals".into()));
    }
    // xc[j] = sum_m e[m] s[m - tau] with j = tau + n - 1
    let rev: Vec<f64> = s.iter().rev().copied().collect();
    let xc = fft_convolve(e, &rev);
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in e.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let d = max_delay.min(n - 1) as i64;
    let mut best: Option<Db> = None;
    for tau in -d..=d {
        // estimate shifted back by tau overlaps reference on [lo, hi)
        let (lo, hi) = if tau >= 0 {
            (tau as usize, n)
        } else {
            (0, (n as i64 + tau) as usize)
        };
        let ee = prefix[hi] - prefix[lo];
        let c = xc[(tau + n as i64 - 1) as usize];
        let signal = c * c / es;
        let db = Db::of_ratio(signal, (ee - signal).max(0.0));
        if best.is_none_or(|b| db.value > b.value) {
            best = Some(db);
        }
    }
    Ok(best.expect("at least one delay"))
}

/// SDR of the extracted signal minus SDR of the unprocessed reference
/// channel, both against the true SOI image on that channel.
pub fn isdr(extracted: &[f64], true_image: &[f64], reference_channel: &[f64], max_delay: usize) -> Result<Db> {
    let out = sdr(extracted, true_image, max_delay)?;
    let inp = sdr(reference_channel, true_image, max_delay)?;
    Ok(Db {
        value: out.value - inp.value,
        capped: out.capped || inp.capped,
    })
}

/// Per-run scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Block-averaged SINR improvement.
    pub isinr_db: f64,
    pub isinr_global_db: f64,
    pub isdr_db: Option<f64>,
    /// `isinr_db < -5`.
    pub fail: bool,
    pub capped: bool,
    pub block_sinr_db: Vec<f64>,
    pub wall_time_s: f64,
    pub iterations: usize,
}

impl MetricReport {
    pub fn new(sinr: &SinrBreakdown, isdr: Option<Db>, wall_time_s: f64, iterations: usize) -> Self {
        Self {
            isinr_db: sinr.block_mean.value,
            isinr_global_db: sinr.global.value,
            isdr_db: isdr.map(|d| d.value),
            fail: sinr.block_mean.value < FAIL_DB,
            capped: sinr.block_mean.capped || sinr.global.capped || isdr.is_some_and(|d| d.capped),
            block_sinr_db: sinr.per_block.clone(),
            wall_time_s,
            iterations,
        }
    }

    pub const CSV_HEADER: &'static str = "label,isinr_db,isinr_global_db,isdr_db,fail,capped,iterations,wall_time_s";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{:.6},{:.6},{},{},{},{},{:.6}",
            self.isinr_db,
            self.isinr_global_db,
            self.isdr_db.map(|v| format!("{v:.6}")).unwrap_or_default(),
            self.fail as u8,
            self.capped as u8,
            self.iterations,
            self.wall_time_s
        )
    }
}

/// Percentage of reports with iSINR below [`FAIL_DB`].
pub fn fail_rate(reports: &[MetricReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Undefined("fail rate of zero reports".into()));
    }
    Ok(100.0 * reports.iter().filter(|r| r.fail).count() as f64 / reports.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Time-invariant spatial filter `y_k = f_k^H x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilter {
    pub f: SeparatingVectors,
}

impl SpatialFilter {
    /// `f_k = conj(mean_t a_{k,t}[ref]) w_k`, the extraction rescaled to the
    /// reference channel with the block-averaged gain.
    pub fn from_state(state: &ExtractionState, reference: usize) -> Result<Self> {
        if reference >= state.channels() {
            return Err(Error::Config(format!("reference channel {reference} out of range")));
        }
        let nt = state.blocks() as f64;
        let f = SeparatingVectors::from_fn(state.bins(), state.channels(), |k| {
            let g: Complex64 = (0..state.blocks())
                .map(|t| state.a.get(k, t)[reference])
                .sum::<Complex64>()
                / nt;
            state.w.get(k).iter().map(|v| v * g.conj()).collect()
        });
        Ok(Self { f })
    }

    /// `f_k = w_k / w_k[ref]`.
    pub fn from_separating(w: &SeparatingVectors, reference: usize) -> Self {
        Self {
            f: w.normalized_to(reference),
        }
    }

    pub fn apply(&self, x: &SpectralTensor) -> Result<SpectralTensor> {
        if x.bins() != self.f.bins() || x.channels() != self.f.channels() {
            return Err(Error::Dimension("filter does not match signal".into()));
        }
        let n = x.frames();
        let out: Vec<Vec<Complex64>> = (0..x.bins())
            .into_par_iter()
            .map(|k| (0..n).map(|l| dot_h(self.f.get(k), x.frame(k, l))).collect())
            .collect();
        x.with_coeffs(out.concat(), 1)
    }
}

/// Rectangular lattice of evaluation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: Position,
    pub max: Position,
    /// Lattice spacing in metres; axes with `min == max` hold one point.
    pub spacing: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<Position>> {
        if !(self.spacing > 0.0) {
            return Err(Error::Config("grid spacing must be positive".into()));
        }
        let counts: Vec<usize> = (0..3)
            .map(|j| {
                let span = self.max[j] - self.min[j];
                if span < 0.0 {
                    0
                } else {
                    (span / self.spacing + 1e-9).floor() as usize + 1
                }
            })
            .collect();
        let mut out = Vec::with_capacity(counts.iter().product());
        for iz in 0..counts[2] {
            for iy in 0..counts[1] {
                for ix in 0..counts[0] {
                    out.push([
                        self.min[0] + ix as f64 * self.spacing,
                        self.min[1] + iy as f64 * self.spacing,
                        self.min[2] + iz as f64 * self.spacing,
                    ]);
                }
            }
        }
        Ok(out)
    }
}

/// Filter attenuation at a set of positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationMap {
    pub points: Vec<Position>,
    pub attenuation_db: Vec<f64>,
}

impl AttenuationMap {
    pub const CSV_HEADER: &'static str = "x,y,z,attenuation_db";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (p, a) in self.points.iter().zip(&self.attenuation_db) {
            let _ = writeln!(s, "{:.4},{:.4},{:.4},{:.6}", p[0], p[1], p[2], a);
        }
        s
    }
}

/// Probe signal settings for [`attenuation_map`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub sample_rate: u32,
    /// Seconds of white noise emitted from each point.
    pub duration: f64,
    pub stft: StftConfig,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            duration: 0.5,
            stft: StftConfig::default(),
            seed: 0,
        }
    }
}

/// Probe points nearer than this to a microphone are skipped, metres.
pub const NEAR_FIELD_M: f64 = 0.05;

fn dist(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// For each point, emit the same white noise, simulate its microphone
/// images by the image method, apply `filter` and report
/// `10 log10(P_out / P_in)` with `P_in` the mean power over microphones.
/// Points closer than [`NEAR_FIELD_M`] to a microphone are left out of the
/// map.
pub fn attenuation_map(
    filter: &SpatialFilter,
    room: &RoomSpec,
    mics: &[Position],
    points: &[Position],
    probe: &ProbeSpec,
) -> Result<AttenuationMap> {
    if mics.len() != filter.f.channels() {
        return Err(Error::Dimension("filter channels do not match microphones".into()));
    }
    let len = (probe.duration * probe.sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let noise = white_noise(len, &mut rng);
    let fs = probe.sample_rate as f64;
    let points: Vec<Position> = points
        .iter()
        .copied()
        .filter(|p| mics.iter().all(|m| dist(p, m) >= NEAR_FIELD_M))
        .collect();
    let att: Vec<Result<f64>> = points
        .par_iter()
        .map(|p| {
            let chans: Vec<Vec<f64>> = mics
                .iter()
                .map(|m| {
                    let h = image_method_rir(room, p, m, fs, None)?;
                    let mut y = fft_convolve(&noise, &h);
                    y.truncate(len);
                    Ok(y)
                })
                .collect::<Result<_>>()?;
            let x = stft::analyze(&Waveform::new(chans, probe.sample_rate)?, &probe.stft)?;
            let y = filter.apply(&x)?;
            let all = 0..x.frames();
            let p_out = spectral_energy(&y, 0, all.clone());
            let p_in = (0..x.channels())
                .map(|i| spectral_energy(&x, i, all.clone()))
                .sum::<f64>()
                / x.channels() as f64;
            Ok(Db::of_ratio(p_out, p_in).value)
        })
        .collect();
    Ok(AttenuationMap {
        points,
        attenuation_db: att.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_filter_scores_zero() {
        let s = [1.0, -2.0, 0.5];
        let n = [0.1, 0.3, -0.2];
        assert_eq!(isinr(&s, &n, &s, &n).value, 0.0);
    }

    #[test]
    fn perfect_null_is_capped() {
        let d = isinr(&[1.0, 2.0], &[0.0, 0.0], &[1.0, 2.0], &[1.0, 1.0]);
        assert_eq!(d.value, CAP_DB);
        assert!(d.capped);
    }

    #[test]
    fn fail_rate_counts() {
        let r = |v: f64| MetricReport {
            isinr_db: v,
            isinr_global_db: v,
            isdr_db: None,
            fail: v < FAIL_DB,
            capped: false,
            block_sinr_db: vec![],
            wall_time_s: 0.0,
            iterations: 0,
        };
        assert_eq!(fail_rate(&[r(10.0), r(10.0)]).unwrap(), 0.0);
        assert_eq!(fail_rate(&[r(10.0), r(-6.0), r(3.0), r(0.0)]).unwrap(), 25.0);
        assert!(fail_rate(&[]).is_err());
    }

    #[test]
    fn sdr_of_exact_copy_is_capped() {
        let s: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = sdr(&s, &s, 10).unwrap();
        assert_eq!(d.value, CAP_DB);
    }

    #[test]
    fn sdr_silent_reference_undefined() {
        assert!(matches!(sdr(&[1.0, 2.0], &[0.0, 0.0], 1), Err(Error::Undefined(_))));
    }

    #[test]
    fn grid_counts() {
        let g = GridSpec {
            min: [0.0, 0.0, 1.0],
            max: [0.1, 0.05, 1.0],
            spacing: 0.05,
        };
        assert_eq!(g.points().unwrap().len(), 3 * 2);
    }

    #[test]
    fn mean_std_median() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
