//! Run configuration: a JSON file, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use alspce_core::active::AlConfig;
use alspce_core::InputModel;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::testbed::Testbed;

/// Design-size checkpoints reported in the campaign summary.
pub const DEFAULT_CHECKPOINTS: [usize; 5] = [50, 100, 250, 500, 1000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// optional; must name the invoked subcommand when present
    pub command: Option<String>,
    pub testbed: Option<Testbed>,
    /// CSV with columns `x_1..x_M, y`
    pub dataset: Option<PathBuf>,
    /// input distribution; required with a dataset, else the testbed's
    pub input_model: Option<InputModel>,
    /// loop settings; per-testbed defaults when absent
    pub al: Option<AlConfig>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub replications: usize,
    pub jobs: usize,
    pub checkpoints: Vec<usize>,
    /// Monte Carlo size for `mcs`, design size for `static-fit`
    pub n_samples: Option<usize>,
    /// SIR failure threshold on the new-infection count
    pub i_lim: Option<f64>,
    /// dataset match radius; the 0.1% pairwise-distance quantile when absent
    pub radius: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            testbed: None,
            dataset: None,
            input_model: None,
            al: None,
            output_dir: PathBuf::from("out"),
            seed: None,
            replications: 1,
            jobs: 1,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            n_samples: None,
            i_lim: None,
            radius: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loop settings with the seed applied.
    pub fn al_config(&self) -> Result<AlConfig> {
        let mut al = match &self.al {
            Some(a) => a.clone(),
            None => self.testbed.map_or_else(AlConfig::default, |t| t.default_al_config()),
        };
        al.seed = self.seed()?;
        Ok(al)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("a seed is required (--seed)")
    }

    /// Checks everything a command needs before any computation starts.
    pub fn validate(&self, command: &str) -> Result<()> {
        if let Some(c) = &self.command {
            if c != command {
                bail!("config is for command `{c}`, invoked `{command}`");
            }
        }
        self.seed()?;
        match (self.testbed, &self.dataset) {
            (Some(_), Some(_)) => bail!("give either a testbed or a dataset, not both"),
            (None, None) => bail!("a testbed or a dataset is required"),
            (None, Some(_)) if self.input_model.is_none() => bail!("a dataset run needs an input_model"),
            _ => {}
        }
        if matches!(command, "mcs" | "static-fit") && self.dataset.is_some() {
            bail!("`{command}` needs a testbed");
        }
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if self.checkpoints.is_empty() || self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            bail!("checkpoints must be non-empty and strictly increasing");
        }
        if self.n_samples == Some(0) {
            bail!("n_samples must be positive");
        }
        if let Some(r) = self.radius {
            if !(r >= 0.0 && r.is_finite()) {
                bail!("radius must be finite and non-negative");
            }
        }
        if let Some(l) = self.i_lim {
            if !l.is_finite() {
                bail!("i_lim must be finite");
            }
            if self.testbed != Some(Testbed::Sir) {
                bail!("i_lim only applies to the sir testbed");
            }
        }
        if let (Some(im), Some(t)) = (&self.input_model, self.testbed) {
            if im.dim() != t.input_model().dim() {
                bail!("input_model has dimension {}, testbed `{t}` needs {}", im.dim(), t.input_model().dim());
            }
        }
        if command == "al-run" {
            self.al_config()?.validate()?;
        }
        if command == "fit" {
            self.al_config()?.train.validate()?;
        }
        Ok(())
    }

    pub fn input_model(&self) -> Result<InputModel> {
        match (&self.input_model, self.testbed) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(t)) => Ok(t.input_model()),
            (None, None) => bail!("no input model"),
        }
    }
}
