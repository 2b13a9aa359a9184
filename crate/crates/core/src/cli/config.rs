//! Experiment configuration, read from TOML and overridden by flags.
//!
//! ```toml
//! datasets = ["iris", "wdbc"]   # names: wdbc iris mushroom mnist fashion
//! data_dir = "data"
//! out = "out"
//! seed = 42                      # training seed
//! split_seed = 1                 # UCI train/test shuffle
//! formats = ["posit8es1", "fixed8q5"]
//! bits = "5:8"
//! weights_only = false
//! trace = false
//!
//! [paths]                        # optional per-dataset overrides
//! mnist = "/srv/mnist"
//!
//! [arch]                         # optional per-dataset layer sizes
//! iris = [4, 32, 3]
//!
//! [train.iris]                   # optional per-dataset trainer settings
//! epochs = 200
//!
//! [checksums]                    # file name -> sha256 hex
//! "iris.data" = "6f608b71..."
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ingest::DatasetKind;
use crate::error::{Error, Result};
use crate::formats::Format;
use crate::network::TrainConfig;
use crate::quantize::{SWEEP_MAX_BITS, SWEEP_MIN_BITS};

/// Default seed for the UCI train/test shuffle.
pub const DEFAULT_SPLIT_SEED: u64 = 1;
/// Default training seed.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub datasets: Vec<String>,
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub split_seed: u64,
    pub formats: Vec<String>,
    pub bits: String,
    pub weights_only: bool,
    pub trace: bool,
    pub paths: BTreeMap<String, PathBuf>,
    pub arch: BTreeMap<String, Vec<usize>>,
    pub train: BTreeMap<String, TrainConfig>,
    pub checksums: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            datasets: DatasetKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            data_dir: PathBuf::from("data"),
            out: PathBuf::from("out"),
            seed: DEFAULT_SEED,
            split_seed: DEFAULT_SPLIT_SEED,
            formats: vec![],
            bits: "5:8".into(),
            weights_only: false,
            trace: false,
            paths: BTreeMap::new(),
            arch: BTreeMap::new(),
            train: BTreeMap::new(),
            checksums: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.bit_range()?;
        self.parsed_formats()?;
        self.dataset_kinds()?;
        for name in self.paths.keys().chain(self.arch.keys()).chain(self.train.keys()) {
            DatasetKind::parse(name).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn bit_range(&self) -> Result<(u32, u32)> {
        parse_bits(&self.bits)
    }

    pub fn parsed_formats(&self) -> Result<Vec<Format>> {
        self.formats
            .iter()
            .map(|s| s.parse::<Format>().map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    pub fn dataset_kinds(&self) -> Result<Vec<DatasetKind>> {
        self.datasets
            .iter()
            .map(|s| DatasetKind::parse(s).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    pub fn dataset_path(&self, kind: DatasetKind) -> PathBuf {
        self.paths
            .get(kind.name())
            .cloned()
            .unwrap_or_else(|| kind.default_path(&self.data_dir))
    }

    pub fn arch_for(&self, kind: DatasetKind) -> Vec<usize> {
        self.arch
            .get(kind.name())
            .cloned()
            .unwrap_or_else(|| kind.default_arch())
    }

    pub fn train_for(&self, kind: DatasetKind) -> TrainConfig {
        self.train
            .get(kind.name())
            .cloned()
            .unwrap_or_else(|| TrainConfig::for_dataset(kind.name()))
    }
}

/// Parses `lo:hi` (or a single width) within the sweep bounds.
pub fn parse_bits(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Config(format!("bit range {s:?} must be lo:hi within [{SWEEP_MIN_BITS}, {SWEEP_MAX_BITS}]"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo > hi || lo < SWEEP_MIN_BITS || hi > SWEEP_MAX_BITS {
        return Err(bad());
    }
    Ok((lo, hi))
}
