//! Subcommand implementations.

pub mod analysis;
pub mod data_model;
pub mod rl_cmds;

use erasure_lab_core::data::{self, Dataset};
use erasure_lab_core::error::{Error, Result};
use erasure_lab_core::report::OutputMeta;

use crate::config::{CliResult, RunConfig};

/// Split seed shared by every command unless overridden, so `train`,
/// `eval`, and the analyses agree on which examples are held out.
pub const DEFAULT_SPLIT_SEED: u64 = 7;

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Keys shared by every command that reads a dataset.
pub const DATA_KEYS: &[&str] = &[
    "data",
    "format",
    "token-col",
    "tag-col",
    "split",
    "split-seed",
];

/// Loads the dataset named by `--data`, honoring `--format`
/// (`tsv` labeled text, `tsv-regression`, or `conll`).
pub fn load_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = cfg.path("data")?;
    let format = cfg.str_or("format", "tsv");
    let ds = match format {
        "tsv" => data::load_labeled_text(&path)?,
        "tsv-regression" => data::load_labeled_regression(&path)?,
        "conll" => {
            let token_col = cfg.usize_or("token-col", 0)?;
            let tag_col = cfg.usize_or("tag-col", 1)?;
            data::load_conll(&path, token_col, tag_col)?
        }
        other => {
            return Err(Error::Config(format!("unknown data format {other:?}")).into());
        }
    };
    if ds.is_empty() {
        eprintln!("warning: dataset {} holds no examples", path.display());
    }
    Ok(ds)
}

/// Applies `--split` (train|dev|test|all; default test) using
/// `--split-seed`.
pub fn select_split(cfg: &RunConfig, dataset: &Dataset) -> CliResult<Dataset> {
    let which = cfg.str_or("split", "test");
    if which == "all" {
        return Ok(dataset.clone());
    }
    let seed = cfg.u64_or("split-seed", DEFAULT_SPLIT_SEED)?;
    let (train, dev, test) = data::split(dataset, SPLIT_RATIOS, seed)?;
    match which {
        "train" => Ok(train),
        "dev" => Ok(dev),
        "test" => Ok(test),
        other => Err(Error::Config(format!("unknown split {other:?}")).into()),
    }
}

/// Metadata block for output files: command name, seed, and the full
/// resolved configuration.
pub fn output_meta(command: &str, cfg: &RunConfig) -> OutputMeta {
    let mut meta = OutputMeta::new(command).with_config(cfg.resolved());
    if let Some(seed) = cfg.get("seed").and_then(|s| s.parse().ok()) {
        meta = meta.with_seed(seed);
    }
    meta
}

/// Label name for a class index, tolerating regression datasets.
pub fn label_name(dataset: &Dataset, class: usize) -> String {
    dataset
        .label_names
        .get(class)
        .cloned()
        .unwrap_or_else(|| format!("class{class}"))
}

pub fn ensure_parent_dir(path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
