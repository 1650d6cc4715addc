//! Run configuration: a TOML file whose sections mirror the library types.
//! Precedence is built-in defaults, then the file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use motenc::eval::{Aggregation, DEFAULT_HORIZONS_MS, DEFAULT_STA_THRESHOLD};
use motenc::model::{ArchKind, ArchitectureSpec, Tap};
use motenc::train::TrainConfig;
use motenc::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Motion files or directories of them.
    pub paths: Vec<PathBuf>,
    /// Held-out recordings (classification).
    pub test_paths: Vec<PathBuf>,
    /// JSON skeleton schema replacing the one stored in each recording.
    pub schema: Option<PathBuf>,
    /// Resample every recording to this rate before use.
    pub fps: Option<u32>,
    /// Take every `stride`-th training pair.
    pub stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            test_paths: Vec::new(),
            schema: None,
            fps: None,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub horizons_ms: Vec<f64>,
    pub mask_limb: Option<String>,
    pub stride: usize,
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizons_ms: DEFAULT_HORIZONS_MS.to_vec(),
            mask_limb: None,
            stride: 1,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub tap: Tap,
    pub window_seconds: f64,
    pub aggregation: Aggregation,
    /// Every `feature_stride`-th window of a training recording becomes a
    /// classifier sample.
    pub feature_stride: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            tap: Tap::Middle,
            window_seconds: 8.0,
            aggregation: Aggregation::Mean,
            feature_stride: 1,
            hidden: vec![50, 20],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaConfig {
    pub layer: String,
    pub units: Vec<usize>,
    pub threshold: f64,
    pub stride: usize,
}

impl Default for StaConfig {
    fn default() -> Self {
        Self {
            layer: "lower".into(),
            units: vec![0],
            threshold: DEFAULT_STA_THRESHOLD,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `train.seed` when set.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub arch: ArchitectureSpec,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub classify: ClassifyConfig,
    pub sta: StaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("out"),
            arch: ArchitectureSpec::new(ArchKind::Hte),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            classify: ClassifyConfig::default(),
            sta: StaConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Config(format!("{}:{line}: {}", path.display(), e.message()))
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                Self::from_toml(&text, p)
            }
        }
    }

    /// Folds the top-level seed into the training sections.
    pub fn resolve_seed(&mut self) {
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.classify.train.seed = s;
        }
        self.seed = Some(self.train.seed);
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// First 16 hex digits of the SHA-256 of the effective configuration.
    /// The output directory is left out: it does not affect results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Every problem with the training setup, reported together.
    pub fn training_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Err(e) = self.arch.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.train.validate() {
            problems.push(e.to_string());
        }
        problems.extend(path_problems("data.paths", &self.data.paths));
        if let Some(s) = &self.data.schema {
            if !s.exists() {
                problems.push(format!("data.schema: {} does not exist", s.display()));
            }
        }
        if self.data.stride == 0 {
            problems.push("data.stride must be at least 1".into());
        }
        problems
    }
}

/// Missing or absent paths in a path list.
pub fn path_problems(what: &str, paths: &[PathBuf]) -> Vec<String> {
    if paths.is_empty() {
        return vec![format!("{what}: no data paths given")];
    }
    paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| format!("{what}: {} does not exist", p.display()))
        .collect()
}

pub fn fail_if(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}
