//! Experiment pipelines and the CSV reports they emit.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::config::ExperimentConfig;
use super::ingest::{ingest, DatasetKind};
use crate::error::{Error, Result};
use crate::formats::{enumerate_values, Family, Format};
use crate::network::{evaluate_reference, train_reference, Dataset, NetworkModel, QuantizedNetwork};
use crate::quantize::{layer_mse_map, sweep_best, Goal, MseMap, SweepResult};

pub const SWEEP_SCHEMA: &str = "# schema: emac-sweep/1";
pub const TABLE1_SCHEMA: &str = "# schema: emac-table1/1";
pub const ENUMERATE_SCHEMA: &str = "# schema: emac-enumerate/1";

pub fn load_dataset(cfg: &ExperimentConfig, kind: DatasetKind) -> Result<Dataset> {
    ingest(kind, &cfg.dataset_path(kind), cfg.split_seed, &cfg.checksums)
}

/// Where `train` stores a model and where other commands look for it.
pub fn model_path(cfg: &ExperimentConfig, kind: DatasetKind) -> PathBuf {
    cfg.out.join("models").join(format!("{}-seed{}.json", kind.name(), cfg.seed))
}

pub fn train_model(cfg: &ExperimentConfig, kind: DatasetKind, data: &Dataset) -> Result<NetworkModel> {
    train_reference(data, &cfg.arch_for(kind), cfg.seed, &cfg.train_for(kind))
}

/// Loads the stored model when it matches the dataset, seed and
/// architecture; trains and stores one otherwise.
pub fn model_for(cfg: &ExperimentConfig, kind: DatasetKind, data: &Dataset) -> Result<NetworkModel> {
    let path = model_path(cfg, kind);
    if path.exists() {
        let m = NetworkModel::load(&path)?;
        if m.meta.dataset == kind.name() && m.meta.seed == cfg.seed && m.meta.arch == cfg.arch_for(kind) {
            return Ok(m);
        }
    }
    let m = train_model(cfg, kind, data)?;
    let dir = path.parent().unwrap();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    m.save(&path)?;
    Ok(m)
}

/// One (dataset, family, width) point of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset: String,
    pub family: Family,
    pub n_bits: u32,
    pub best_param: u32,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    /// `baseline_accuracy - accuracy`; negative when quantization helps.
    pub degradation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub seed: u64,
    pub split_seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{SWEEP_SCHEMA} seed={} split_seed={}\ndataset,family,n_bits,best_param,accuracy,baseline_accuracy,degradation\n",
            self.seed, self.split_seed
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                r.dataset, r.family, r.n_bits, r.best_param, r.accuracy, r.baseline_accuracy, r.degradation
            );
        }
        out
    }

    pub fn find(&self, dataset: &str, family: Family, n_bits: u32) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.family == family && r.n_bits == n_bits)
    }
}

/// Best-parameter accuracy of one family at one width.
pub fn sweep_accuracy(model: &NetworkModel, data: &Dataset, family: Family, n_bits: u32) -> Result<SweepResult> {
    sweep_best(family, n_bits, Goal::Maximize, |fmt| {
        QuantizedNetwork::new(model, fmt)?.evaluate(data)
    })
}

/// Sweeps every family over `[lo, hi]` for one trained model.
pub fn sweep_dataset(
    model: &NetworkModel,
    data: &Dataset,
    families: &[Family],
    (lo, hi): (u32, u32),
) -> Result<Vec<SweepRow>> {
    let baseline = evaluate_reference(model, data)?;
    let mut rows = Vec::new();
    for &family in families {
        for n in lo..=hi {
            let r = sweep_accuracy(model, data, family, n)?;
            rows.push(SweepRow {
                dataset: data.name.clone(),
                family,
                n_bits: n,
                best_param: r.param(),
                accuracy: r.score,
                baseline_accuracy: baseline,
                degradation: baseline - r.score,
            });
        }
    }
    Ok(rows)
}

/// One row per dataset: test size, baseline and best accuracy per family at 8 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub dataset: String,
    pub inference_size: usize,
    pub baseline: f64,
    /// Posit, float, fixed: (accuracy, best parameter).
    pub best: [(f64, u32); 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
    pub report: SweepReport,
}

impl Table1 {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "{TABLE1_SCHEMA} seed={} split_seed={} n_bits=8\ndataset,inference_size,baseline,posit_acc,posit_es,float_acc,float_we,fixed_acc,fixed_q\n",
            self.report.seed, self.report.split_seed
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{},{:.6},{},{:.6},{}",
                r.dataset,
                r.inference_size,
                r.baseline,
                r.best[0].0,
                r.best[0].1,
                r.best[1].0,
                r.best[1].1,
                r.best[2].0,
                r.best[2].1
            );
        }
        out
    }
}

pub fn table1_row(model: &NetworkModel, data: &Dataset) -> Result<(Table1Row, Vec<SweepRow>)> {
    let rows = sweep_dataset(model, data, &Family::ALL, (8, 8))?;
    let best = [0, 1, 2].map(|i| (rows[i].accuracy, rows[i].best_param));
    Ok((
        Table1Row {
            dataset: data.name.clone(),
            inference_size: data.test.len(),
            baseline: rows[0].baseline_accuracy,
            best,
        },
        rows,
    ))
}

/// Runs the 8-bit sweep on every configured dataset.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Table1> {
    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    for kind in cfg.dataset_kinds()? {
        let data = load_dataset(cfg, kind)?;
        let model = model_for(cfg, kind, &data)?;
        let (row, s) = table1_row(&model, &data)?;
        rows.push(row);
        sweep.extend(s);
    }
    Ok(Table1 {
        rows,
        report: SweepReport {
            seed: cfg.seed,
            split_seed: cfg.split_seed,
            rows: sweep,
        },
    })
}

/// For each width in `[lo, hi]`, the parameter of `family` with the lowest
/// average MSE.
pub fn best_mse_formats(model: &NetworkModel, family: Family, (lo, hi): (u32, u32), weights_only: bool) -> Result<Vec<Format>> {
    (lo..=hi)
        .map(|n| {
            sweep_best(family, n, Goal::Minimize, |fmt| {
                let m = layer_mse_map(model, &[fmt], weights_only)?;
                Ok(m.average(0))
            })
            .map(|r| r.best)
        })
        .collect()
}

/// Family pairs of the heatmaps.
pub const MSEMAP_PAIRS: [(Family, Family); 3] = [
    (Family::Posit, Family::Fixed),
    (Family::Posit, Family::Float),
    (Family::Float, Family::Fixed),
];

/// One map per family pair; rows are the best-parameter formats of both
/// families, ascending in width.
pub fn run_msemap(model: &NetworkModel, bits: (u32, u32), weights_only: bool) -> Result<Vec<((Family, Family), MseMap)>> {
    let best: Vec<Vec<Format>> = Family::ALL
        .iter()
        .map(|&f| best_mse_formats(model, f, bits, weights_only))
        .collect::<Result<_>>()?;
    let idx = |f: Family| Family::ALL.iter().position(|&g| g == f).unwrap();
    MSEMAP_PAIRS
        .iter()
        .map(|&(a, b)| {
            let fmts: Vec<Format> = best[idx(a)].iter().chain(&best[idx(b)]).copied().collect();
            Ok(((a, b), layer_mse_map(model, &fmts, weights_only)?))
        })
        .collect()
}

pub fn enumerate_csv(fmt: Format) -> Result<String> {
    let e = enumerate_values(fmt)?;
    let mut out = format!("{ENUMERATE_SCHEMA} format={fmt}\nbits_hex,value\n");
    for (b, v) in &e.values {
        let _ = writeln!(out, "{},{v:?}", b.hex());
    }
    Ok(out)
}
