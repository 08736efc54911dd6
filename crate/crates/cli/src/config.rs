//! Pipeline configuration: defaults, then a JSON file, then flags.

use std::path::Path;

use depthforge::curate::CurateConfig;
use depthforge::fitkit::{FitConfig, Init};
use depthforge::loss::LossConfig;
use depthforge::metrics::MetricConfig;
use depthforge::refine::RefineConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Settings of the `fit` subcommand. The loss weights come from the
/// top-level `loss` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub init: Init,
    pub fd_check_every: Option<usize>,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitConfig::default();
        Self {
            steps: d.steps,
            learning_rate: d.learning_rate,
            lr_decay: d.lr_decay,
            init: d.init,
            fd_check_every: d.fd_check_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub refine: RefineConfig,
    pub curate: CurateConfig,
    pub loss: LossConfig,
    pub metrics: MetricConfig,
    pub fit: FitSection,
    /// Scheduling only; left out of the written config so outputs do not
    /// depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            refine: RefineConfig::default(),
            curate: CurateConfig::default(),
            loss: LossConfig::default(),
            metrics: MetricConfig::default(),
            fit: FitSection::default(),
            workers: 1,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    /// Seeds every random stream: curation sampling, SDR sampling and random
    /// fit initialisation.
    pub seed: Option<u64>,
}

impl PipelineConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            steps: self.fit.steps,
            learning_rate: self.fit.learning_rate,
            lr_decay: self.fit.lr_decay,
            init: self.fit.init.clone(),
            loss: self.loss.clone(),
            fd_check_every: self.fit.fd_check_every,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        let check = |section: &str, r: depthforge::Result<()>| {
            r.map_err(|e| CliError::Config(format!("{section}: {e}")))
        };
        check("refine", self.refine.validate())?;
        check("curate", self.curate.validate())?;
        check("loss", self.loss.validate())?;
        check("metrics", self.metrics.validate())?;
        check("fit", self.fit_config().validate())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(seed) = o.seed {
            self.curate.rng_seed_base = seed;
            self.metrics.rng_seed = seed;
            if let Init::Random { seed: s, .. } = &mut self.fit.init {
                *s = seed;
            }
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Resolves the configuration: defaults, then `file` if given, then
/// `overrides`. The result is validated.
pub fn load(file: Option<&Path>, overrides: &Overrides) -> CliResult<PipelineConfig> {
    let mut cfg = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            PipelineConfig::from_json(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
