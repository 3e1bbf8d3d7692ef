//! Layered run configuration: built-in defaults, then an optional JSON
//! config file, then command-line flags. The fully resolved configuration
//! is serialized into every output directory as `resolved_config.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::labeling::DatasetConfig;
use crate::model::HyperConfig;
use crate::synthgen::SynthParams;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            dev: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_boot: usize,
    pub bins: usize,
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_boot: 1000,
            bins: 10,
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Cases generated by `synth`.
    pub cases: usize,
    pub synth: SynthParams,
    pub label: DatasetConfig,
    pub split: SplitFractions,
    pub hyper: HyperConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Worker threads for per-case stages.
    pub jobs: usize,
    /// Training/eval precision: "f32" or "f64".
    pub precision: String,
}

impl RunConfig {
    pub fn defaults() -> Self {
        RunConfig {
            cases: 20,
            synth: SynthParams::default(),
            label: DatasetConfig::default(),
            split: SplitFractions::default(),
            hyper: HyperConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            jobs: 4,
            precision: "f32".to_string(),
        }
    }

    /// Defaults, overlaid with a JSON config file when given. Partial
    /// files are fine: missing fields keep their defaults.
    pub fn load(config_path: Option<&str>) -> Result<Self, CliError> {
        let mut cfg = RunConfig::defaults();
        if let Some(path) = config_path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("config {}: {}", path, e)))?;
            cfg = serde_json::from_str::<OverlayConfig>(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {}", path, e)))?
                .apply(cfg);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.precision != "f32" && self.precision != "f64" {
            return Err(CliError::Usage(format!(
                "precision must be f32 or f64, got {:?}",
                self.precision
            )));
        }
        let s = self.split;
        if (s.train + s.dev + s.test - 1.0).abs() > 1e-9 {
            return Err(CliError::Usage(
                "split fractions must sum to 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Write the fully resolved configuration into an output directory.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(format!("{}: {}", out_dir.display(), e)))?;
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(out_dir.join("resolved_config.json"), text)
            .map_err(|e| CliError::Data(format!("{}: {}", out_dir.display(), e)))?;
        Ok(())
    }
}

/// Mirror of RunConfig with every section optional, so config files can
/// override just the parts they care about.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlayConfig {
    cases: Option<usize>,
    synth: Option<SynthParams>,
    label: Option<DatasetConfig>,
    split: Option<SplitFractions>,
    hyper: Option<HyperConfig>,
    train: Option<TrainConfig>,
    eval: Option<EvalConfig>,
    jobs: Option<usize>,
    precision: Option<String>,
}

impl OverlayConfig {
    fn apply(self, mut cfg: RunConfig) -> RunConfig {
        if let Some(v) = self.cases {
            cfg.cases = v;
        }
        if let Some(v) = self.synth {
            cfg.synth = v;
        }
        if let Some(v) = self.label {
            cfg.label = v;
        }
        if let Some(v) = self.split {
            cfg.split = v;
        }
        if let Some(v) = self.hyper {
            cfg.hyper = v;
        }
        if let Some(v) = self.train {
            cfg.train = v;
        }
        if let Some(v) = self.eval {
            cfg.eval = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.precision {
            cfg.precision = v;
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_file_overrides_only_named_sections() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{ "cases": 3, "train": { "lr": 0.01, "batch_size": 8, "max_epochs": 2, "patience": 1, "lr_halve_patience": 3, "seed": 0, "optimizer": {"kind": "sgd", "momentum": 0.9}, "threads": 1 } }"#).unwrap();
        let cfg = RunConfig::load(Some(path.to_str().unwrap())).unwrap();
        assert_eq!(cfg.cases, 3);
        assert_eq!(cfg.train.lr, 0.01);
        // Untouched sections keep defaults.
        assert_eq!(cfg.hyper.window_len, 3000);
        assert_eq!(cfg.eval.n_boot, 1000);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{ "caes": 3 }"#).unwrap();
        assert!(matches!(
            RunConfig::load(Some(path.to_str().unwrap())),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn bad_precision_is_rejected() {
        let mut cfg = RunConfig::defaults();
        cfg.precision = "f16".to_string();
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }
}
