//! Output directories, run records and small file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::hes::{HesEvalConfig, HesOptimizeConfig, HesPdConfig, HesSynthConfig};
use crate::learn::LearnConfig;
use crate::simulate::SimulateConfig;

pub const RUN_FILE: &str = "run.json";

/// A fully resolved job. Replaying it reproduces the outputs of the run that
/// wrote it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Job {
    Simulate(SimulateConfig),
    Learn(LearnConfig),
    HesEval(HesEvalConfig),
    HesPd(HesPdConfig),
    HesPdImportance(HesPdConfig),
    HesOptimize(HesOptimizeConfig),
    HesSynth(HesSynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub version: String,
    /// Master seed of the job, repeated here for quick inspection.
    pub seed: Option<u64>,
    pub job: Job,
}

impl Job {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Simulate(c) => Some(c.seed),
            Job::Learn(c) => Some(c.seed),
            Job::HesOptimize(c) => Some(c.seed),
            Job::HesSynth(c) => Some(c.seed),
            Job::HesEval(_) | Job::HesPd(_) | Job::HesPdImportance(_) => None,
        }
    }

    pub fn run(&self, out: &Path) -> Result<()> {
        write_json(&out.join(RUN_FILE), &self.record())?;
        match self {
            Job::Simulate(c) => crate::simulate::run(c, out),
            Job::Learn(c) => crate::learn::run(c, out),
            Job::HesEval(c) => crate::hes::run_eval(c, out),
            Job::HesPd(c) => crate::hes::run_pd(c, out),
            Job::HesPdImportance(c) => crate::hes::run_pd_importance(c, out),
            Job::HesOptimize(c) => crate::hes::run_optimize(c, out),
            Job::HesSynth(c) => crate::hes::run_synth(c, out),
        }
    }

    fn record(&self) -> RunRecord {
        RunRecord {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed(),
            job: self.clone(),
        }
    }
}

/// Creates the output directory, announcing the default when none is given.
pub fn prepare_out(out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d,
        None => {
            eprintln!("no --out given; writing to ./out/");
            PathBuf::from("out")
        }
    };
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a config file when given, else the default.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}
