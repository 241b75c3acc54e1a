//! Convolutive scenes with a moving source, static interferers and noise
//! sources in a shoebox room.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rir::{fft_convolve, image_method_rir, Position, RoomSpec};
use super::synthetic::{speech_surrogate, white_noise};
use crate::error::{Error, Result};
use crate::stft::Waveform;
use crate::wav;

/// Dry signal of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSpec {
    /// Speech-like surrogate drawn from the scene seed.
    Surrogate,
    WhiteNoise,
    Wav(PathBuf),
}

/// Source trajectory: an ordered list of positions, each held for its dwell
/// time. Transitions are crossfaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSpec {
    Static(Position),
    Waypoints(Vec<Waypoint>),
    /// Horizontal arc around `centre` from `start_deg` to `end_deg`
    /// (azimuth from the x-axis) through `points` equidistant positions.
    Arc {
        centre: Position,
        radius: f64,
        start_deg: f64,
        end_deg: f64,
        points: usize,
        dwell: f64,
    },
    /// Random walk on a lattice: every `dwell` seconds the position moves
    /// by up to `max_steps` lattice steps along x and y independently.
    RandomWalk {
        start: Position,
        step: f64,
        max_steps: i32,
        moves: usize,
        dwell: f64,
        /// Walk stays inside this box `[min, max]`.
        bounds: [Position; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub position: Position,
    pub dwell: f64,
}

impl PathSpec {
    /// Positions with dwell times; random walks draw from `rng`.
    pub fn waypoints(&self, rng: &mut impl Rng) -> Result<Vec<Waypoint>> {
        let pts = match self {
            PathSpec::Static(p) => vec![Waypoint {
                position: *p,
                dwell: f64::INFINITY,
            }],
            PathSpec::Waypoints(w) => w.clone(),
            PathSpec::Arc {
                centre,
                radius,
                start_deg,
                end_deg,
                points,
                dwell,
            } => {
                if *points == 0 {
                    return Err(Error::InvalidScenario("arc needs at least one point".into()));
                }
                (0..*points)
                    .map(|i| {
                        let frac = if *points == 1 {
                            0.0
                        } else {
                            i as f64 / (*points - 1) as f64
                        };
                        let az = (start_deg + frac * (end_deg - start_deg)).to_radians();
                        Waypoint {
                            position: [centre[0] + radius * az.cos(), centre[1] + radius * az.sin(), centre[2]],
                            dwell: *dwell,
                        }
                    })
                    .collect()
            }
            PathSpec::RandomWalk {
                start,
                step,
                max_steps,
                moves,
                dwell,
                bounds,
            } => {
                let mut p = *start;
                let mut out = vec![Waypoint {
                    position: p,
                    dwell: *dwell,
                }];
                for _ in 0..*moves {
                    for j in 0..2 {
                        loop {
                            let delta = rng.random_range(-*max_steps..=*max_steps) as f64 * step;
                            let q = p[j] + delta;
                            if q >= bounds[0][j] && q <= bounds[1][j] {
                                p[j] = q;
                                break;
                            }
                        }
                    }
                    out.push(Waypoint {
                        position: p,
                        dwell: *dwell,
                    });
                }
                out
            }
        };
        if pts.is_empty() {
            return Err(Error::InvalidScenario("source path has no positions".into()));
        }
        if pts.iter().any(|w| !(w.dwell > 0.0)) {
            return Err(Error::InvalidScenario("dwell times must be positive".into()));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub path: PathSpec,
    pub signal: SignalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub sample_rate: u32,
    /// Seconds.
    pub duration: f64,
    pub room: RoomSpec,
    pub mics: Vec<Position>,
    pub soi: SourceSpec,
    #[serde(default)]
    pub interferers: Vec<SourceSpec>,
    /// Static white-noise emitters.
    #[serde(default)]
    pub noise_sources: Vec<Position>,
    /// SOI power over interference plus noise power, dB.
    #[serde(default)]
    pub sinr_db: f64,
    /// Interference power over noise power, dB.
    #[serde(default)]
    pub inr_db: f64,
    /// Crossfade window length in samples; defaults to `fs / 16`.
    #[serde(default)]
    pub crossfade: Option<usize>,
    #[serde(default)]
    pub max_order: Option<usize>,
    /// Common gain applied last so the mixture peaks at this magnitude.
    #[serde(default)]
    pub peak: Option<f64>,
}

/// Spatial images of every component on every microphone.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub soi: Waveform,
    pub interference: Waveform,
    pub noise: Waveform,
    /// Dry SOI after scaling.
    pub soi_dry: Vec<f64>,
    /// Samples at which each SOI segment starts, with its position.
    pub soi_segments: Vec<(usize, Position)>,
}

impl GroundTruth {
    /// Interference plus noise.
    pub fn background(&self) -> Waveform {
        let chans = self
            .interference
            .channels()
            .iter()
            .zip(self.noise.channels())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Waveform::new(chans, self.soi.sample_rate()).expect("shapes match")
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub mixture: Waveform,
    pub truth: GroundTruth,
}

/// Linear array of `offsets` (metres) along `axis` through `centre`.
pub fn linear_array(centre: Position, axis: [f64; 3], offsets: &[f64]) -> Vec<Position> {
    let n = (axis.iter().map(|v| v * v).sum::<f64>()).sqrt();
    offsets
        .iter()
        .map(|o| {
            [
                centre[0] + o * axis[0] / n,
                centre[1] + o * axis[1] / n,
                centre[2] + o * axis[2] / n,
            ]
        })
        .collect()
}

impl Scenario {
    pub fn len(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn crossfade_len(&self) -> usize {
        self.crossfade.unwrap_or(self.sample_rate as usize / 16)
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if self.sample_rate == 0 || !(self.duration > 0.0) {
            return Err(Error::InvalidScenario(
                "sample rate and duration must be positive".into(),
            ));
        }
        if self.mics.is_empty() {
            return Err(Error::InvalidScenario("no microphones".into()));
        }
        if !self.sinr_db.is_finite() || !self.inr_db.is_finite() {
            return Err(Error::InvalidScenario("mixing ratios must be finite".into()));
        }
        for p in &self.mics {
            if !self.room.contains(p) {
                return Err(Error::InvalidGeometry(format!("microphone {p:?} outside room")));
            }
        }
        Ok(())
    }

    /// Array centre, used for steering initializations.
    pub fn array_centre(&self) -> Position {
        let n = self.mics.len() as f64;
        let mut c = [0.0; 3];
        for m in &self.mics {
            for j in 0..3 {
                c[j] += m[j] / n;
            }
        }
        c
    }
}

/// Weights of each segment; they sum to one at every sample. Transitions
/// use the halves of a periodic Hamming window of length `crossfade`
/// centred on the boundary.
fn segment_weights(starts: &[usize], len: usize, crossfade: usize) -> Vec<(usize, Vec<f64>)> {
    let half = crossfade / 2;
    let ramp: Vec<f64> = if half == 0 {
        Vec::new()
    } else {
        let h: Vec<f64> = (0..2 * half)
            .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (2 * half) as f64).cos())
            .collect();
        (0..half).map(|n| h[n] / (h[n] + h[n + half])).collect()
    };
    let lead = half / 2;
    let mut out = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(len);
        let lo = if i == 0 { 0 } else { s - lead };
        let hi = if i + 1 == starts.len() {
            len
        } else {
            (e - lead + half).min(len)
        };
        let mut w = vec![1.0; hi - lo];
        if i > 0 {
            for (n, r) in ramp.iter().enumerate() {
                w[n] = *r;
            }
        }
        if i + 1 < starts.len() {
            let off = e - lead - lo;
            for (n, r) in ramp.iter().enumerate() {
                if off + n < w.len() {
                    w[off + n] = 1.0 - r;
                }
            }
        }
        out.push((lo, w));
    }
    out
}

fn load_signal(spec: &SignalSpec, len: usize, fs: u32, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match spec {
        SignalSpec::Surrogate => Ok(speech_surrogate(len, fs, rng.random())?.into_channels().swap_remove(0)),
        SignalSpec::WhiteNoise => Ok(white_noise(len, rng)),
        SignalSpec::Wav(path) => {
            let w = wav::read_wav(path, Some(fs))?;
            if w.len() < len {
                return Err(Error::InvalidScenario(format!(
                    "{} has {} samples, scene needs {len}",
                    path.display(),
                    w.len()
                )));
            }
            Ok(w.channel(0)[..len].to_vec())
        }
    }
}

/// Image of `signal` moving along `waypoints` on every microphone.
fn moving_image(
    scn: &Scenario,
    signal: &[f64],
    waypoints: &[Waypoint],
) -> Result<(Vec<Vec<f64>>, Vec<(usize, Position)>)> {
    let len = signal.len();
    let fs = scn.sample_rate as f64;
    let mut segments = Vec::new();
    let mut t = 0usize;
    for w in waypoints {
        if t >= len {
            break;
        }
        segments.push((t, w.position));
        let dwell = if w.dwell.is_finite() {
            (w.dwell * fs).round() as usize
        } else {
            len
        };
        t = t.saturating_add(dwell.max(1));
    }
    let crossfade = scn.crossfade_len();
    let starts: Vec<usize> = segments.iter().map(|s| s.0).collect();
    for pair in starts.windows(2) {
        if pair[1] - pair[0] < crossfade {
            return Err(Error::InvalidScenario(
                "segments shorter than the crossfade window".into(),
            ));
        }
    }
    for (_, p) in &segments {
        if !scn.room.contains(p) {
            return Err(Error::InvalidGeometry(format!("source position {p:?} outside room")));
        }
    }
    let weights = segment_weights(&starts, len, crossfade);
    let pieces: Vec<(usize, Vec<f64>)> = weights
        .iter()
        .map(|(lo, w)| (*lo, w.iter().zip(&signal[*lo..]).map(|(a, b)| a * b).collect()))
        .collect();
    let images: Vec<Result<Vec<f64>>> = scn
        .mics
        .par_iter()
        .map(|mic| {
            let mut out = vec![0.0; len];
            for ((lo, piece), (_, pos)) in pieces.iter().zip(&segments) {
                let h = image_method_rir(&scn.room, pos, mic, fs, scn.max_order)?;
                let y = fft_convolve(piece, &h);
                for (o, v) in out[*lo..].iter_mut().zip(&y) {
                    *o += v;
                }
            }
            Ok(out)
        })
        .collect();
    Ok((images.into_iter().collect::<Result<_>>()?, segments))
}

fn power(chans: &[Vec<f64>]) -> f64 {
    let n: usize = chans.iter().map(Vec::len).sum();
    chans.iter().flatten().map(|v| v * v).sum::<f64>() / n.max(1) as f64
}

fn scale(chans: &mut [Vec<f64>], g: f64) {
    chans.iter_mut().flatten().for_each(|v| *v *= g);
}

/// Simulate `scn`: per-segment convolution of each source with its RIRs,
/// crossfaded between segments, then scaled so that interference over noise
/// is `inr_db` and SOI over interference plus noise is `sinr_db` (powers
/// averaged over all microphones). With `peak` set, everything is then
/// scaled by one common gain so the mixture peaks there.
pub fn moving_mixture(scn: &Scenario, seed: u64) -> Result<Scene> {
    scn.validate()?;
    let len = scn.len();
    let fs = scn.sample_rate;
    let d = scn.mics.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let soi_path = scn.soi.path.waypoints(&mut rng)?;
    let mut soi_dry = load_signal(&scn.soi.signal, len, fs, &mut rng)?;
    let (mut soi, segments) = moving_image(scn, &soi_dry, &soi_path)?;

    let mut interference = vec![vec![0.0; len]; d];
    for src in &scn.interferers {
        let path = src.path.waypoints(&mut rng)?;
        let dry = load_signal(&src.signal, len, fs, &mut rng)?;
        let (img, _) = moving_image(scn, &dry, &path)?;
        for (acc, c) in interference.iter_mut().zip(img) {
            acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
        }
    }
    let mut noise = vec![vec![0.0; len]; d];
    for pos in &scn.noise_sources {
        let dry = white_noise(len, &mut rng);
        let (img, _) = moving_image(
            scn,
            &dry,
            &[Waypoint {
                position: *pos,
                dwell: f64::INFINITY,
            }],
        )?;
        for (acc, c) in noise.iter_mut().zip(img) {
            acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
        }
    }

    let p_soi = power(&soi);
    if !(p_soi > 0.0) {
        return Err(Error::InvalidScenario("SOI image is silent".into()));
    }
    let (p_int, p_noise) = (power(&interference), power(&noise));
    match (p_int > 0.0, p_noise > 0.0) {
        (true, true) => {
            let g = (p_int / (p_noise * 10f64.powf(scn.inr_db / 10.0))).sqrt();
            scale(&mut noise, g);
        }
        (false, true) if !scn.interferers.is_empty() => {
            return Err(Error::InvalidScenario("interferer image is silent".into()));
        }
        (true, false) if !scn.noise_sources.is_empty() => {
            return Err(Error::InvalidScenario("noise image is silent".into()));
        }
        _ => {}
    }
    let p_bg = power(&interference) + power(&noise);
    if p_bg > 0.0 {
        let g = (p_bg * 10f64.powf(scn.sinr_db / 10.0) / p_soi).sqrt();
        scale(&mut soi, g);
        soi_dry.iter_mut().for_each(|v| *v *= g);
    }

    let mut mixture: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..len).map(|n| soi[i][n] + interference[i][n] + noise[i][n]).collect())
        .collect();
    let peak = mixture.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(target) = scn.peak.filter(|_| peak > 0.0) {
        let g = target / peak;
        for c in [&mut soi, &mut interference, &mut noise] {
            scale(c, g);
        }
        soi_dry.iter_mut().for_each(|v| *v *= g);
        // re-sum so that the images add up to the mixture exactly
        mixture = (0..d)
            .map(|i| (0..len).map(|n| soi[i][n] + interference[i][n] + noise[i][n]).collect())
            .collect();
    }
    Ok(Scene {
        mixture: Waveform::new(mixture, fs)?,
        truth: GroundTruth {
            soi: Waveform::new(soi, fs)?,
            interference: Waveform::new(interference, fs)?,
            noise: Waveform::new(noise, fs)?,
            soi_dry,
            soi_segments: segments,
        },
    })
}
