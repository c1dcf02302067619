//! Run configuration: one JSON document mirroring the filter and generator
//! parameters, with command-line flags overriding individual keys.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use aflite::filter::{FilterConfig, Strategy};
use aflite::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Load an embeddings file, filter it, and report before/after accuracy.
    Filter,
    /// Generate the synthetic benchmark at every separation level and filter
    /// each one.
    SyntheticSweep,
    /// Compare the greedy filter against the exhaustive optimum on a tiny
    /// embeddings file.
    AfoptCheck,
}

impl std::str::FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "filter" => Ok(Mode::Filter),
            "synthetic-sweep" => Ok(Mode::SyntheticSweep),
            "afopt-check" => Ok(Mode::AfoptCheck),
            other => anyhow::bail!(
                "unknown mode {other:?}; expected filter, synthetic-sweep or afopt-check"
            ),
        }
    }
}

/// Sizes for afopt-check mode; both the exhaustive search and the heuristic
/// run use them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfoptCheckConfig {
    /// Minimum subset size for the exhaustive search and the filter.
    pub n: usize,
    /// Train size per enumerated split.
    pub t: usize,
}

impl Default for AfoptCheckConfig {
    fn default() -> Self {
        AfoptCheckConfig { n: 5, t: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub filter: FilterConfig,
    pub synthetic: SyntheticSpec,
    /// Input embeddings file (filter and afopt-check modes).
    pub embeddings: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Fraction of the dataset held out for evaluation, stratified by label.
    pub holdout_fraction: f64,
    /// Worker threads; falls back to AFLITE_THREADS, then to the number of
    /// available cores.
    pub threads: Option<usize>,
    /// Also write per-instance (x, y, masks, retained) tuples for plotting.
    pub emit_plot_data: bool,
    pub afopt: AfoptCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::SyntheticSweep,
            filter: FilterConfig::default(),
            synthetic: SyntheticSpec::default(),
            embeddings: None,
            out_dir: PathBuf::from("out"),
            holdout_fraction: 0.2,
            threads: None,
            emit_plot_data: false,
            afopt: AfoptCheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("config file {} does not parse", path.display()))
    }
}

/// Individual key overrides collected from the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub m: Option<usize>,
    pub t: Option<usize>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub n: Option<usize>,
    pub strategy: Option<Strategy>,
    /// Sets both the filter seed and the synthetic generator seed.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub emit_plot_data: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(path) = &self.embeddings {
            config.embeddings = Some(path.clone());
        }
        if let Some(dir) = &self.out_dir {
            config.out_dir = dir.clone();
        }
        if let Some(m) = self.m {
            config.filter.m = m;
        }
        if let Some(t) = self.t {
            config.filter.t = t;
        }
        if let Some(k) = self.k {
            config.filter.k = k;
        }
        if let Some(tau) = self.tau {
            config.filter.tau = tau;
        }
        if let Some(n) = self.n {
            config.filter.n = n;
        }
        if let Some(strategy) = self.strategy {
            config.filter.strategy = strategy;
        }
        if let Some(seed) = self.seed {
            config.filter.seed = seed;
            config.synthetic.seed = seed;
        }
        if let Some(threads) = self.threads {
            config.threads = Some(threads);
        }
        if let Some(h) = self.holdout_fraction {
            config.holdout_fraction = h;
        }
        if self.emit_plot_data {
            config.emit_plot_data = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"mode": "filter"}"#).unwrap();
        assert_eq!(cfg.mode, Mode::Filter);
        assert_eq!(cfg.filter.m, 128);
        assert_eq!(cfg.holdout_fraction, 0.2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"mod": "filter"}"#).unwrap_err();
        assert!(err.to_string().contains("mod"));
    }

    #[test]
    fn nested_filter_keys_parse() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"mode": "synthetic-sweep", "filter": {"m": 16, "tau": 0.6, "strategy": "gumbel_sampling"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.filter.m, 16);
        assert_eq!(cfg.filter.tau, 0.6);
        assert_eq!(cfg.filter.strategy, Strategy::GumbelSampling);
    }

    #[test]
    fn overrides_replace_individual_keys() {
        let mut cfg = RunConfig::default();
        let overrides = Overrides {
            m: Some(8),
            seed: Some(99),
            ..Overrides::default()
        };
        overrides.apply(&mut cfg);
        assert_eq!(cfg.filter.m, 8);
        assert_eq!(cfg.filter.seed, 99);
        assert_eq!(cfg.synthetic.seed, 99);
        assert_eq!(cfg.filter.t, 100); // untouched
    }
}
