//! Run configuration for the batch pipeline, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgoConfig, Init, Method};
use crate::error::{Error, Result};
use crate::eval::GridSpec;
use crate::simulate::{self, Position, Scenario, SyntheticSpec};
use crate::stft::StftConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub io: IoSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub attmap: Option<AttmapSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_name")]
    pub name: String,
    /// Number of blocks; when absent, `block_len` decides.
    #[serde(default)]
    pub blocks: Option<usize>,
    /// Target frames per block.
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Pilot weight; defaults to bins / blocks, the typical size of the
    /// frame norm once the separating vectors are normalized.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub early_stop: f64,
    #[serde(default)]
    pub reference: usize,
    #[serde(default)]
    pub init: InitSpec,
}

fn default_name() -> String {
    "block_auxive".into()
}
fn default_block_len() -> usize {
    250
}
fn default_max_iter() -> usize {
    100
}
fn default_step() -> f64 {
    0.2
}
fn default_tol() -> f64 {
    1e-6
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            name: "block_auxive".into(),
            blocks: None,
            block_len: default_block_len(),
            max_iter: default_max_iter(),
            step: default_step(),
            tol: default_tol(),
            delta: None,
            early_stop: 0.0,
            reference: 0,
            init: InitSpec::default(),
        }
    }
}

impl AlgorithmSection {
    pub fn method(&self) -> Result<Method> {
        self.name.parse()
    }

    /// Block count for `frames` frames.
    pub fn blocks_for(&self, frames: usize) -> usize {
        self.blocks
            .unwrap_or_else(|| ((frames as f64 / self.block_len.max(1) as f64).round() as usize).max(1))
    }

    pub fn delta_for(&self, bins: usize, blocks: usize) -> f64 {
        self.delta.unwrap_or(bins as f64 / blocks as f64)
    }

    /// Algorithm settings for data with `frames` frames; `mics` provides
    /// positions for steering initializations that do not list their own.
    pub fn algo_config(&self, frames: usize, mics: Option<&[Position]>) -> Result<AlgoConfig> {
        let cfg = AlgoConfig {
            blocks: self.blocks_for(frames),
            max_iter: self.max_iter,
            step: self.step,
            tol: self.tol,
            init: self.init.resolve(mics)?,
            reference: self.reference,
            early_stop: self.early_stop,
            record_contrast: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Initialization as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    UnitVector {
        #[serde(default)]
        channel: usize,
    },
    Steering {
        azimuth_deg: f64,
        #[serde(default)]
        elevation_deg: f64,
        #[serde(default)]
        mics: Option<Vec<Position>>,
        #[serde(default = "default_c")]
        speed_of_sound: f64,
    },
    /// Separating vectors from a saved state.
    State { path: PathBuf },
}

fn default_c() -> f64 {
    343.0
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::UnitVector { channel: 0 }
    }
}

impl InitSpec {
    pub fn resolve(&self, scene_mics: Option<&[Position]>) -> Result<Init> {
        match self {
            InitSpec::UnitVector { channel } => Ok(Init::UnitVector(*channel)),
            InitSpec::Steering {
                azimuth_deg,
                elevation_deg,
                mics,
                speed_of_sound,
            } => {
                let mic_positions = mics
                    .clone()
                    .or_else(|| scene_mics.map(<[Position]>::to_vec))
                    .ok_or_else(|| Error::Config("steering init needs microphone positions".into()))?;
                Ok(Init::Steering {
                    mic_positions,
                    azimuth_deg: *azimuth_deg,
                    elevation_deg: *elevation_deg,
                    speed_of_sound: *speed_of_sound,
                })
            }
            InitSpec::State { path } => {
                let text = read_text(path)?;
                let saved: crate::pipeline::SavedState =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                Ok(Init::Explicit(saved.state.w))
            }
        }
    }
}

/// Where the scene comes from: a bundled preset, a scenario file, or an
/// inline description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub inline: Option<Scenario>,
    /// Overrides the preset duration, seconds.
    #[serde(default)]
    pub duration: Option<f64>,
}

/// A resolved scene description.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    Room(Box<Scenario>),
    Synthetic(SyntheticSpec),
}

impl ScenarioSection {
    pub fn resolve(&self, seed: u64) -> Result<SceneSource> {
        let given = [self.preset.is_some(), self.file.is_some(), self.inline.is_some()]
            .iter()
            .filter(|v| **v)
            .count();
        if given != 1 {
            return Err(Error::Config(
                "scenario needs exactly one of `preset`, `file`, `inline`".into(),
            ));
        }
        let mut scn = if let Some(name) = &self.preset {
            if name == "oracle-csv" {
                return Ok(SceneSource::Synthetic(simulate::oracle_csv()));
            }
            simulate::preset(name, seed)?
        } else if let Some(path) = &self.file {
            parse_toml::<Scenario>(&read_text(path)?, &path.display().to_string())?
        } else {
            self.inline.clone().expect("checked above")
        };
        if let Some(d) = self.duration {
            scn.duration = d;
        }
        scn.validate()?;
        Ok(SceneSource::Room(Box::new(scn)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    /// Mixture WAV for `extract`; microphone positions for steering come
    /// from the scenario or, failing that, `manifest`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Pilot magnitudes: a mono WAV, or text with one value per frame.
    #[serde(default)]
    pub pilot: Option<PathBuf>,
    /// Saved extraction state for `evaluate` and `attmap`.
    #[serde(default)]
    pub state: Option<PathBuf>,
    /// Extracted WAV for `evaluate`.
    #[serde(default)]
    pub extracted: Option<PathBuf>,
    /// Ground-truth manifest written by `simulate`.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Pilot used by batch evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotSource {
    #[default]
    None,
    /// Frame norms of the true SOI image on the reference channel.
    Oracle,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// Batch mode: simulate and extract once per seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Algorithms compared in batch mode; defaults to `algorithm.name`.
    #[serde(default)]
    pub methods: Vec<String>,
    #[serde(default)]
    pub pilot: PilotSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttmapSection {
    /// Lattice to evaluate; without it the default room lattice is used
    /// unless `points` are given.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Evaluation points in addition to the lattice.
    #[serde(default)]
    pub points: Vec<Position>,
    /// Seconds of probe noise per point.
    #[serde(default = "default_probe")]
    pub probe_duration: f64,
}

fn default_probe() -> f64 {
    0.5
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse TOML, reporting the offending line, column and field.
pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let loc = e
            .span()
            .map(|s| {
                let line = text[..s.start].matches('\n').count() + 1;
                let col = s.start - text[..s.start].rfind('\n').map_or(0, |p| p + 1) + 1;
                format!(" at line {line}, column {col}")
            })
            .unwrap_or_default();
        Error::Config(format!("{origin}{loc}: {}", e.message()))
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = parse_toml(&read_text(path)?, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.algorithm.method()?;
        for m in &self.evaluate.methods {
            m.parse::<Method>()?;
        }
        if let Some(d) = self.algorithm.delta {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("delta {d} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Single-line JSON echo embedded in output artifacts.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_toml("[algorithm]\nname = \"overiva\"\n").unwrap();
        assert_eq!(cfg.stft, StftConfig::default());
        assert_eq!(cfg.algorithm.max_iter, 100);
        assert_eq!(cfg.algorithm.blocks_for(1247), 5);
    }

    #[test]
    fn unknown_algorithm_rejected() {
        let err = RunConfig::from_toml("[algorithm]\nname = \"fastica\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_field_reports_line() {
        let err = RunConfig::from_toml("seed = 1\n[stft]\nfft_len = \"big\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn steering_init_takes_scene_mics() {
        let spec = InitSpec::Steering {
            azimuth_deg: 90.0,
            elevation_deg: 0.0,
            mics: None,
            speed_of_sound: 343.0,
        };
        assert!(spec.resolve(None).is_err());
        let mics = [[0.0, 0.0, 0.0], [0.05, 0.0, 0.0]];
        assert!(matches!(spec.resolve(Some(&mics)).unwrap(), Init::Steering { .. }));
    }

    #[test]
    fn scenario_needs_one_source() {
        let s = ScenarioSection {
            preset: None,
            file: None,
            inline: None,
            duration: None,
        };
        assert!(s.resolve(0).is_err());
    }
}
