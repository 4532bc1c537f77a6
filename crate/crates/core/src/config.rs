//! JSON configuration files for the command-line front end.
//!
//! Every struct rejects unknown fields so that typos surface as
//! configuration errors instead of silently falling back to defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clock::SystemClock;
use crate::codegen::{CodegenTemplate, TemplateRegistry};
use crate::error::{Error, Result};
use crate::ir::CostModel;
use crate::kernels::{KernelParams, SUITE};
use crate::pipeline::{self, PipelineDef};
use crate::search::BackendRegistry;
use crate::synth::{SynthConfig, SynthContext};

pub const DEFAULT_TEMPLATE: &str = "seal-bfv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for reports and generated artifacts; nothing is written when absent.
    pub dir: Option<PathBuf>,
    /// Codegen template used for the backend source file.
    pub template: String,
    /// Include wall-clock times in JSON reports (makes them non-reproducible).
    pub with_times: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, template: DEFAULT_TEMPLATE.into(), with_times: false }
    }
}

/// One synthesis job. Ring parameters (`n`, `t`) live in `params`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: String,
    #[serde(default)]
    pub params: KernelParams,
    #[serde(default)]
    pub costs: CostModel,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(kernel: &str) -> Self {
        RunConfig {
            kernel: kernel.into(),
            params: KernelParams::default(),
            costs: CostModel::default(),
            synth: SynthConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        self.synth.validate()
    }
}

/// The benchmark suite: which kernels to run and with what settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub kernels: Vec<String>,
    /// Per-kernel size overrides; kernels not listed use their defaults.
    pub params: BTreeMap<String, KernelParams>,
    pub costs: CostModel,
    pub synth: SynthConfig,
    pub output: OutputConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            kernels: SUITE.iter().map(|s| s.to_string()).collect(),
            params: BTreeMap::new(),
            costs: CostModel::default(),
            synth: SynthConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn params_for(&self, kernel: &str) -> KernelParams {
        self.params.get(kernel).cloned().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::Config("suite lists no kernels".into()));
        }
        if let Some(k) = self.params.keys().find(|k| !self.kernels.contains(k)) {
            return Err(Error::Config(format!("size override for {k:?}, which is not in the suite")));
        }
        self.costs.validate()?;
        self.synth.validate()
    }
}

/// A multi-step job: either a built-in pipeline by name or an inline definition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: Option<String>,
    pub definition: Option<PipelineDef>,
    /// Sizes for a built-in pipeline; ignored for inline definitions.
    pub params: Option<KernelParams>,
    pub costs: CostModel,
    pub synth: SynthConfig,
    pub output: OutputConfig,
}

impl PipelineConfig {
    pub fn builtin(name: &str) -> Self {
        PipelineConfig { pipeline: Some(name.into()), ..PipelineConfig::default() }
    }

    pub fn definition(&self) -> Result<PipelineDef> {
        match (&self.pipeline, &self.definition) {
            (Some(name), None) => {
                pipeline::builtin(name, self.params.clone().unwrap_or_else(pipeline::default_pipeline_params))
            }
            (None, Some(def)) => Ok(def.clone()),
            (Some(_), Some(_)) => Err(Error::Config("give either `pipeline` or `definition`, not both".into())),
            (None, None) => Err(Error::Config("pipeline config needs `pipeline` or `definition`".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        self.synth.validate()
    }
}

/// Parses a configuration document; any syntax or schema problem is a
/// configuration error.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Builds the synthesis context for a backend name and cost model.
pub fn context(backend: &str, costs: CostModel) -> Result<SynthContext> {
    let backend = BackendRegistry::with_builtin().get(backend)?;
    Ok(SynthContext::new(backend, costs, Arc::new(SystemClock::new())))
}

pub fn template(name: &str) -> Result<Arc<dyn CodegenTemplate>> {
    TemplateRegistry::with_builtin().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_run_config() {
        let cfg: RunConfig = parse(r#"{"kernel": "box_blur"}"#).unwrap();
        assert_eq!(cfg, RunConfig::new("box_blur"));
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides() {
        let cfg: RunConfig = parse(
            r#"{"kernel": "dot_product", "params": {"length": 4, "t": 257},
                "costs": {"rotate": 20}, "synth": {"seed": 3, "optimize": false},
                "output": {"template": "listing"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.params.length, Some(4));
        assert_eq!(cfg.params.t, 257);
        assert_eq!(cfg.costs.rotate, 20.0);
        assert_eq!(cfg.costs.add_ct, 1.0);
        assert_eq!(cfg.synth.seed, 3);
        assert!(!cfg.synth.optimize);
        assert_eq!(cfg.output.template, "listing");
    }

    #[test]
    fn malformed_configs_are_config_errors() {
        for text in [
            "{",
            "{}",
            r#"{"kernel": 3}"#,
            r#"{"kernel": "gx", "colour": 1}"#,
            r#"{"kernel": "gx", "output": {"dirr": "x"}}"#,
        ] {
            assert!(matches!(parse::<RunConfig>(text), Err(Error::Config(_))), "{text}");
        }
        let bad: RunConfig = parse(r#"{"kernel": "gx", "synth": {"l_min": 0}}"#).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn suite_defaults_and_overrides() {
        let cfg = SuiteConfig::default();
        assert_eq!(cfg.kernels.len(), SUITE.len());
        cfg.validate().unwrap();
        let cfg: SuiteConfig = parse(r#"{"kernels": ["hamming"], "params": {"hamming": {"length": 8}}}"#).unwrap();
        assert_eq!(cfg.params_for("hamming").length, Some(8));
        assert_eq!(cfg.params_for("gx"), KernelParams::default());
        let cfg: SuiteConfig = parse(r#"{"kernels": ["hamming"], "params": {"gx": {}}}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: SuiteConfig = parse(r#"{"kernels": []}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pipeline_source_is_exclusive() {
        assert!(PipelineConfig::builtin("sobel").definition().is_ok());
        assert!(PipelineConfig::default().definition().is_err());
        let both = PipelineConfig {
            definition: Some(PipelineConfig::builtin("sobel").definition().unwrap()),
            ..PipelineConfig::builtin("sobel")
        };
        assert!(both.definition().is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = SuiteConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse::<SuiteConfig>(&text).unwrap(), cfg);
    }
}
