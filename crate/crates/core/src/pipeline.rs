//! Batch commands behind the command-line tool: simulate, extract,
//! evaluate and attmap. Every artifact is written atomically and carries
//! the resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{self, AlgoConfig, ExtractionResult, Method};
use crate::config::{read_text, PilotSource, RunConfig, SceneSource};
use crate::error::{Error, Result};
use crate::eval::{self, AttenuationMap, GridSpec, MetricReport, ProbeSpec, SpatialFilter};
use crate::model::ExtractionState;
use crate::simulate::{self, Position, RoomSpec, Scenario, SyntheticSpec};
use crate::sourcemodel::PilotSignal;
use crate::stft::{self, SpectralTensor, StftConfig, Waveform};
use crate::wav::{self, WavFormat};

/// Exit status for a failed command: `3` for numerical failures, `2` for
/// everything the user can fix in the configuration or inputs.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Delay search window for iSDR, samples.
pub const ISDR_MAX_DELAY: usize = 64;

/// Write via a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn write_wav_atomic(path: &Path, w: &Waveform) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let tmp = tmp_path(path);
    wav::write_wav(&tmp, w, WavFormat::Float32)?;
    std::fs::rename(&tmp, path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn from_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Output folder: the explicit argument, else `io.out_dir`, else `.`.
pub fn out_dir(cfg: &RunConfig, arg: Option<&Path>) -> PathBuf {
    arg.map(Path::to_path_buf)
        .or_else(|| cfg.io.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Relative paths of the files written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFiles {
    pub mixture: PathBuf,
    pub soi: PathBuf,
    pub interference: PathBuf,
    pub noise: PathBuf,
    pub soi_dry: PathBuf,
}

/// Ground-truth description written next to a simulated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: RunConfig,
    pub scenario: Scenario,
    pub files: ImageFiles,
    /// Start sample and position of each SOI segment.
    pub soi_segments: Vec<(usize, Position)>,
}

impl Manifest {
    fn resolve(&self, dir: &Path, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            dir.join(rel)
        }
    }
}

/// Ground truth of a synthetic instantaneous mixture. The data itself is
/// reproducible from `spec` and `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticDump {
    pub seed: u64,
    pub spec: SyntheticSpec,
    pub w: crate::model::SeparatingVectors,
    pub a: crate::model::MixingVectors,
    pub sigma: Vec<f64>,
}

/// Extraction output saved by `extract`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedState {
    pub method: Method,
    pub stft: StftConfig,
    pub sample_rate: u32,
    pub reference: usize,
    pub converged: bool,
    pub iterations: usize,
    pub config: RunConfig,
    pub state: ExtractionState,
}

impl SavedState {
    pub fn load(path: &Path) -> Result<Self> {
        from_json(path)
    }
}

/// `simulate`: render the configured scene. Room scenes produce
/// `mixture.wav`, component images under `images/` and `manifest.json`;
/// the synthetic preset produces `synthetic.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    match scene_source(cfg)? {
        SceneSource::Synthetic(spec) => {
            let m = simulate::synthetic_csv_mixture(&spec, cfg.seed)?;
            let dump = SyntheticDump {
                seed: cfg.seed,
                spec,
                w: m.w,
                a: m.a,
                sigma: m.sigma,
            };
            let path = out.join("synthetic.json");
            write_atomic(&path, &to_json(&dump))?;
            Ok(vec![path])
        }
        SceneSource::Room(scn) => {
            let scene = simulate::moving_mixture(&scn, cfg.seed)?;
            let files = ImageFiles {
                mixture: "mixture.wav".into(),
                soi: "images/soi.wav".into(),
                interference: "images/interference.wav".into(),
                noise: "images/noise.wav".into(),
                soi_dry: "images/soi_dry.wav".into(),
            };
            let dry = Waveform::mono(scene.truth.soi_dry.clone(), scn.sample_rate)?;
            let outputs = [
                (&files.mixture, &scene.mixture),
                (&files.soi, &scene.truth.soi),
                (&files.interference, &scene.truth.interference),
                (&files.noise, &scene.truth.noise),
                (&files.soi_dry, &dry),
            ];
            let mut written = Vec::new();
            for (rel, w) in outputs {
                let p = out.join(rel);
                write_wav_atomic(&p, w)?;
                written.push(p);
            }
            let manifest = Manifest {
                seed: cfg.seed,
                config: cfg.clone(),
                scenario: *scn,
                files,
                soi_segments: scene.truth.soi_segments.clone(),
            };
            let p = out.join("manifest.json");
            write_atomic(&p, &to_json(&manifest))?;
            written.push(p);
            Ok(written)
        }
    }
}

fn scene_source(cfg: &RunConfig) -> Result<SceneSource> {
    cfg.scenario
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs a [scenario] section".into()))?
        .resolve(cfg.seed)
}

/// Observed data with optional ground truth, ready for extraction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: SpectralTensor,
    pub soi_image: Option<SpectralTensor>,
    pub background_image: Option<SpectralTensor>,
    /// Time-domain SOI image and mixture, for iSDR.
    pub soi_wave: Option<Waveform>,
    pub mixture_wave: Option<Waveform>,
    pub mics: Option<Vec<Position>>,
    pub room: Option<RoomSpec>,
}

/// Simulate the configured scene with `seed` and transform it.
pub fn prepare_scene(cfg: &RunConfig, seed: u64) -> Result<Prepared> {
    let src = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs a [scenario] section".into()))?
        .resolve(seed)?;
    match src {
        SceneSource::Synthetic(spec) => {
            let m = simulate::synthetic_csv_mixture(&spec, seed)?;
            Ok(Prepared {
                x: m.x,
                soi_image: Some(m.soi_image),
                background_image: Some(m.background_image),
                soi_wave: None,
                mixture_wave: None,
                mics: None,
                room: None,
            })
        }
        SceneSource::Room(scn) => {
            let scene = simulate::moving_mixture(&scn, seed)?;
            let x = stft::analyze(&scene.mixture, &cfg.stft)?;
            let soi = stft::analyze(&scene.truth.soi, &cfg.stft)?;
            let bg = stft::analyze(&scene.truth.background(), &cfg.stft)?;
            Ok(Prepared {
                x,
                soi_image: Some(soi),
                background_image: Some(bg),
                soi_wave: Some(scene.truth.soi),
                mixture_wave: Some(scene.mixture),
                mics: Some(scn.mics.clone()),
                room: Some(scn.room),
            })
        }
    }
}

/// Frame norms of the true SOI image on the reference channel.
pub fn oracle_pilot(soi_image: &SpectralTensor, reference: usize, delta: f64) -> Result<PilotSignal> {
    PilotSignal::from_spectrum(&soi_image.select_channel(reference), delta)
}

fn load_pilot(cfg: &RunConfig, x: &SpectralTensor, blocks: usize) -> Result<Option<PilotSignal>> {
    let Some(path) = &cfg.io.pilot else {
        return Ok(None);
    };
    let delta = cfg.algorithm.delta_for(x.bins(), blocks);
    let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let p = if is_wav {
        PilotSignal::from_wav(path, &x.config(), x.sample_rate(), delta)?
    } else {
        PilotSignal::from_text(&read_text(path)?, delta)?
    };
    Ok(Some(p))
}

/// Run `method` on prepared data; `pilot` applies to piloted runs.
pub fn run_method(
    method: Method,
    algo: &AlgoConfig,
    data: &Prepared,
    pilot: Option<&PilotSignal>,
) -> Result<ExtractionResult> {
    method.run(&data.x, algo, pilot)
}

/// Score an extraction against the ground truth held by `data`.
pub fn score(result: &ExtractionResult, data: &Prepared) -> Result<MetricReport> {
    let (Some(soi), Some(bg)) = (&data.soi_image, &data.background_image) else {
        return Err(Error::Config("scoring needs ground-truth images".into()));
    };
    let sinr = eval::spectral_isinr(&result.state, result.reference, soi, bg)?;
    let isdr = match (&data.soi_wave, &data.mixture_wave) {
        (Some(s), Some(m)) => {
            let y = algorithms::extract_signal(result, &data.x)?;
            Some(eval::isdr(
                y.channel(0),
                s.channel(result.reference),
                m.channel(result.reference),
                ISDR_MAX_DELAY,
            )?)
        }
        _ => None,
    };
    Ok(MetricReport::new(
        &sinr,
        isdr,
        result.elapsed.as_secs_f64(),
        result.iterations(),
    ))
}

/// What `extract` produced.
#[derive(Debug, Clone)]
pub struct ExtractOutput {
    pub result: ExtractionResult,
    pub files: Vec<PathBuf>,
}

/// Contrast and step trace as CSV, preceded by a config echo line.
pub fn trace_csv(cfg: &RunConfig, result: &ExtractionResult) -> String {
    let mut s = format!("# config: {}\niteration,contrast,step\n", cfg.echo());
    for (i, step) in result.step_trace.iter().enumerate() {
        let c = result
            .contrast_trace
            .get(i)
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        let _ = writeln!(s, "{},{},{:.12e}", i + 1, c, step);
    }
    s
}

/// `extract`: run the configured algorithm on `io.input`, or on the
/// configured scene when no input is given. Writes `extracted.wav`,
/// `state.json` and `trace.csv`.
pub fn cmd_extract(cfg: &RunConfig, out: &Path) -> Result<ExtractOutput> {
    let method = cfg.algorithm.method()?;
    let (x, mics) = match &cfg.io.input {
        Some(path) => {
            let w = wav::read_wav(path, None)?;
            let mics = match &cfg.scenario {
                Some(s) => match s.resolve(cfg.seed)? {
                    SceneSource::Room(scn) => Some(scn.mics),
                    SceneSource::Synthetic(_) => None,
                },
                None => match &cfg.io.manifest {
                    Some(m) => Some(from_json::<Manifest>(m)?.scenario.mics),
                    None => None,
                },
            };
            (stft::analyze(&w, &cfg.stft)?, mics)
        }
        None => {
            let p = prepare_scene(cfg, cfg.seed)?;
            (p.x, p.mics)
        }
    };
    let algo = cfg.algorithm.algo_config(x.frames(), mics.as_deref())?;
    let pilot = load_pilot(cfg, &x, algo.blocks)?;
    let result = method.run(&x, &algo, pilot.as_ref())?;
    let y = algorithms::extract_signal(&result, &x)?;

    let saved = SavedState {
        method,
        stft: x.config(),
        sample_rate: x.sample_rate(),
        reference: result.reference,
        converged: result.converged,
        iterations: result.iterations(),
        config: cfg.clone(),
        state: result.state.clone(),
    };
    let files = vec![out.join("extracted.wav"), out.join("state.json"), out.join("trace.csv")];
    write_wav_atomic(&files[0], &y)?;
    write_atomic(&files[1], &to_json(&saved))?;
    write_atomic(&files[2], trace_csv(cfg, &result).as_bytes())?;
    Ok(ExtractOutput { result, files })
}

/// One labelled row of `metrics.csv`.
#[derive(Debug, Clone)]
pub struct LabelledReport {
    pub label: String,
    pub method: Method,
    pub report: MetricReport,
}

/// Aggregate per method: mean and standard deviation of each score and
/// the fail rate in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub runs: usize,
    pub isinr: (f64, f64),
    pub isinr_global: (f64, f64),
    pub isdr: Option<(f64, f64)>,
    pub fail_pct: f64,
    pub iterations: (f64, f64),
    pub wall_time: (f64, f64),
}

pub fn summarize(method: Method, reports: &[MetricReport]) -> Result<Summary> {
    let col = |f: &dyn Fn(&MetricReport) -> f64| eval::mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    let isdr: Vec<f64> = reports.iter().filter_map(|r| r.isdr_db).collect();
    Ok(Summary {
        method,
        runs: reports.len(),
        isinr: col(&|r| r.isinr_db),
        isinr_global: col(&|r| r.isinr_global_db),
        isdr: (isdr.len() == reports.len() && !isdr.is_empty()).then(|| eval::mean_std(&isdr)),
        fail_pct: eval::fail_rate(reports)?,
        iterations: col(&|r| r.iterations as f64),
        wall_time: col(&|r| r.wall_time_s),
    })
}

fn method_label(m: Method) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// `metrics.csv`: config echo, header, then per method its runs followed
/// by a `<method>/mean` row, a `<method>/std` row and a comment with the
/// fail rate. In the `mean` row the `fail` column holds the fail percentage
/// and `capped` the number of capped runs.
pub fn metrics_csv(cfg: &RunConfig, rows: &[LabelledReport], summaries: &[Summary]) -> String {
    let mut s = format!("# config: {}\n{}\n", cfg.echo(), MetricReport::CSV_HEADER);
    for sm in summaries {
        for r in rows.iter().filter(|r| r.method == sm.method) {
            s.push_str(&r.report.csv_row(&r.label));
            s.push('\n');
        }
        let name = method_label(sm.method);
        let capped = rows.iter().filter(|r| r.method == sm.method && r.report.capped).count();
        let isdr_m = sm.isdr.map(|v| format!("{:.6}", v.0)).unwrap_or_default();
        let isdr_s = sm.isdr.map(|v| format!("{:.6}", v.1)).unwrap_or_default();
        let _ = writeln!(
            s,
            "{name}/mean,{:.6},{:.6},{isdr_m},{:.2},{capped},{:.2},{:.6}",
            sm.isinr.0, sm.isinr_global.0, sm.fail_pct, sm.iterations.0, sm.wall_time.0
        );
        let _ = writeln!(
            s,
            "{name}/std,{:.6},{:.6},{isdr_s},,,{:.2},{:.6}",
            sm.isinr.1, sm.isinr_global.1, sm.iterations.1, sm.wall_time.1
        );
        let _ = writeln!(
            s,
            "# {name}: {} runs, iSINR {:.2} +/- {:.2} dB, fail {:.1}%",
            sm.runs, sm.isinr.0, sm.isinr.1, sm.fail_pct
        );
    }
    s
}

/// Evaluate every configured method over every configured seed.
pub fn evaluate_batch(cfg: &RunConfig) -> Result<(Vec<LabelledReport>, Vec<Summary>)> {
    let methods: Vec<Method> = if cfg.evaluate.methods.is_empty() {
        vec![cfg.algorithm.method()?]
    } else {
        cfg.evaluate.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for &seed in &cfg.evaluate.seeds {
        let data = prepare_scene(cfg, seed)?;
        let algo = cfg.algorithm.algo_config(data.x.frames(), data.mics.as_deref())?;
        for &m in &methods {
            let pilot = match (m.needs_pilot(), cfg.evaluate.pilot) {
                (true, PilotSource::Oracle) => {
                    let soi = data.soi_image.as_ref().expect("scenes carry ground truth");
                    Some(oracle_pilot(
                        soi,
                        algo.reference,
                        cfg.algorithm.delta_for(data.x.bins(), algo.blocks),
                    )?)
                }
                _ => None,
            };
            let result = run_method(m, &algo, &data, pilot.as_ref())?;
            rows.push(LabelledReport {
                label: format!("{}/seed={seed}", method_label(m)),
                method: m,
                report: score(&result, &data)?,
            });
        }
    }
    let summaries = methods
        .iter()
        .map(|&m| {
            let r: Vec<MetricReport> = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.report.clone())
                .collect();
            summarize(m, &r)
        })
        .collect::<Result<_>>()?;
    Ok((rows, summaries))
}

/// Score a saved extraction against a simulated scene's manifest.
pub fn evaluate_saved(cfg: &RunConfig) -> Result<LabelledReport> {
    let state_path = cfg
        .io
        .state
        .as_ref()
        .ok_or_else(|| Error::Config("evaluate needs `io.state` or `evaluate.seeds`".into()))?;
    let manifest_path = cfg
        .io
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("evaluate needs `io.manifest`".into()))?;
    let saved = SavedState::load(state_path)?;
    let manifest: Manifest = from_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let rate = Some(saved.sample_rate);
    let read = |rel: &Path| wav::read_wav(manifest.resolve(dir, rel), rate);
    let soi = read(&manifest.files.soi)?;
    let interference = read(&manifest.files.interference)?;
    let noise = read(&manifest.files.noise)?;
    let mixture = read(&manifest.files.mixture)?;
    let bg_chans = interference
        .channels()
        .iter()
        .zip(noise.channels())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let bg = Waveform::new(bg_chans, saved.sample_rate)?;
    let soi_x = stft::analyze(&soi, &saved.stft)?;
    let bg_x = stft::analyze(&bg, &saved.stft)?;
    let sinr = eval::spectral_isinr(&saved.state, saved.reference, &soi_x, &bg_x)?;
    let isdr = match &cfg.io.extracted {
        Some(p) => {
            let y = wav::read_wav(p, rate)?;
            Some(eval::isdr(
                y.channel(0),
                soi.channel(saved.reference),
                mixture.channel(saved.reference),
                ISDR_MAX_DELAY,
            )?)
        }
        None => None,
    };
    Ok(LabelledReport {
        label: "run".into(),
        method: saved.method,
        report: MetricReport::new(&sinr, isdr, 0.0, saved.iterations),
    })
}

/// `evaluate`: batch mode when `evaluate.seeds` is set, otherwise score
/// `io.state` against `io.manifest`. Writes `metrics.csv`.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<(Vec<LabelledReport>, Vec<Summary>)> {
    let (rows, summaries) = if cfg.evaluate.seeds.is_empty() {
        let row = evaluate_saved(cfg)?;
        let sm = summarize(row.method, std::slice::from_ref(&row.report))?;
        (vec![row], vec![sm])
    } else {
        evaluate_batch(cfg)?
    };
    write_atomic(&out.join("metrics.csv"), metrics_csv(cfg, &rows, &summaries).as_bytes())?;
    Ok((rows, summaries))
}

/// Default map lattice: the horizontal plane through the array, 10 cm
/// from the walls, at 10 cm spacing.
pub fn default_grid(room: &RoomSpec, mics: &[Position]) -> GridSpec {
    let z = mics.iter().map(|m| m[2]).sum::<f64>() / mics.len().max(1) as f64;
    let [w, l, _] = room.dimensions;
    GridSpec {
        min: [0.1, 0.1, z],
        max: [w - 0.1, l - 0.1, z],
        spacing: 0.1,
    }
}

/// `attmap`: attenuation of the time-invariant filter derived from
/// `io.state` (or from a fresh extraction on the scene) over a lattice of
/// room positions. Writes `attmap.csv`.
pub fn cmd_attmap(cfg: &RunConfig, out: &Path) -> Result<AttenuationMap> {
    let scn = match scene_source(cfg)? {
        SceneSource::Room(scn) => scn,
        SceneSource::Synthetic(_) => {
            return Err(Error::Config("attenuation maps need a room scene".into()));
        }
    };
    let (state, reference, stft_cfg) = match &cfg.io.state {
        Some(p) => {
            let s = SavedState::load(p)?;
            (s.state, s.reference, s.stft)
        }
        None => {
            let data = prepare_scene(cfg, cfg.seed)?;
            let algo = cfg.algorithm.algo_config(data.x.frames(), data.mics.as_deref())?;
            let method = cfg.algorithm.method()?;
            let pilot = match (method.needs_pilot(), &data.soi_image) {
                (true, Some(soi)) => Some(oracle_pilot(
                    soi,
                    algo.reference,
                    cfg.algorithm.delta_for(data.x.bins(), algo.blocks),
                )?),
                _ => None,
            };
            let r = method.run(&data.x, &algo, pilot.as_ref())?;
            (r.state, r.reference, cfg.stft)
        }
    };
    let filter = SpatialFilter::from_state(&state, reference)?;
    let section = cfg.attmap.clone().unwrap_or(crate::config::AttmapSection {
        grid: None,
        points: Vec::new(),
        probe_duration: 0.5,
    });
    let mut points = match section.grid {
        Some(g) => g.points()?,
        None if !section.points.is_empty() => Vec::new(),
        None => default_grid(&scn.room, &scn.mics).points()?,
    };
    points.extend(section.points.iter().copied());
    let probe = ProbeSpec {
        sample_rate: scn.sample_rate,
        duration: section.probe_duration,
        stft: stft_cfg,
        seed: cfg.seed,
    };
    let map = eval::attenuation_map(&filter, &scn.room, &scn.mics, &points, &probe)?;
    let mut csv = format!("# config: {}\n", cfg.echo());
    csv.push_str(&map.to_csv());
    write_atomic(&out.join("attmap.csv"), csv.as_bytes())?;
    Ok(map)
}
