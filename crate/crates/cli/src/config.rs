//! Run configuration: one JSON document, every default materialized.

use std::path::{Path, PathBuf};

use htl_core::decomposition::DecomposeParams;
use htl_core::operators::{OperatorSpec, SpaceParams};
use htl_core::suites::BatteryConfig;
use htl_core::{ExponentField, ExponentRule, HermiteExpansion, SamplingScheme, SchemeParams, TestFunction};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Norm,
    Decompose,
    Validate,
    Operator,
    KernelCheck,
    VerifyAll,
}

/// A named test function or a serialized expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Named(TestFunction),
    File { expansion_file: PathBuf },
}

/// Exponent rules of one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub alpha: ExponentRule,
    pub p: ExponentRule,
    pub q: ExponentRule,
    pub m: u32,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        Self {
            alpha: ExponentRule::Constant { value: 0.0 },
            p: ExponentRule::Constant { value: 2.0 },
            q: ExponentRule::Constant { value: 2.0 },
            m: 6,
        }
    }
}

impl SpaceSpec {
    fn resolve(&self, prefix: &str) -> Result<SpaceParams, CliError> {
        let field = |name: &str, rule: &ExponentRule| {
            ExponentField::from_rule(rule.clone()).map_err(|e| CliError::config(format!("{prefix}.{name}"), e))
        };
        let space = SpaceParams {
            alpha: field("alpha", &self.alpha)?,
            p: field("p", &self.p)?,
            q: field("q", &self.q)?,
            m: self.m,
        };
        for (name, f) in [("p", &space.p), ("q", &space.q)] {
            f.require_lebesgue(name)
                .map_err(|e| CliError::config(format!("{prefix}.{name}"), e))?;
        }
        if space.m == 0 {
            return Err(CliError::config(format!("{prefix}.m"), "m must be positive"));
        }
        Ok(space)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("htl-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Option<Task>,
    pub function: FunctionSpec,
    pub space: SpaceSpec,
    /// Target space of the operator task; defaults to the source with
    /// `α` raised by the operator's smoothing order.
    pub target: Option<SpaceSpec>,
    pub operator: OperatorSpec,
    pub scheme: SchemeParams,
    pub decompose: DecomposeParams,
    pub seed: u64,
    pub refine: usize,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let battery = BatteryConfig::default();
        Self {
            task: None,
            function: FunctionSpec::Named(TestFunction::H0),
            space: SpaceSpec::default(),
            target: None,
            operator: OperatorSpec::Riesz { sigma: 1.0 },
            scheme: battery.scheme,
            decompose: battery.decompose,
            seed: battery.seed,
            refine: battery.refine,
            output: OutputSpec::default(),
        }
    }
}

/// A config with every input loaded and checked.
pub struct Resolved {
    pub config: RunConfig,
    pub scheme: SamplingScheme,
    pub function: HermiteExpansion,
    pub space: SpaceParams,
    pub target: SpaceParams,
}

impl RunConfig {
    /// Parses a JSON document; failures name the offending field.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            CliError::config(field, e.into_inner())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn smoothing_order(&self) -> f64 {
        match self.operator {
            OperatorSpec::Riesz { sigma } | OperatorSpec::Bessel { sigma } => 2.0 * sigma,
            _ => 0.0,
        }
    }

    pub fn battery(&self) -> BatteryConfig {
        BatteryConfig {
            seed: self.seed,
            refine: self.refine,
            scheme: self.scheme.clone(),
            decompose: self.decompose,
        }
    }

    /// Loads the function, builds the scheme and exponent fields, and fills
    /// in the target space.
    pub fn resolve(mut self, task: Task) -> Result<Resolved, CliError> {
        if let Some(t) = self.task {
            if t != task {
                return Err(CliError::config(
                    "task",
                    format!("config task {t:?} conflicts with subcommand {task:?}"),
                ));
            }
        }
        self.task = Some(task);
        if self.refine < 2 {
            return Err(CliError::config("refine", format!("factor must be at least 2, got {}", self.refine)));
        }
        let scheme = SamplingScheme::new(self.scheme.clone()).map_err(|e| CliError::config("scheme", e))?;
        let function = match &self.function {
            FunctionSpec::Named(t) => t.expansion(&scheme).map_err(|e| CliError::config("function", e))?,
            FunctionSpec::File { expansion_file } => {
                let field = "function.expansion_file";
                let text = std::fs::read_to_string(expansion_file)
                    .map_err(|e| CliError::config(field, format!("{}: {e}", expansion_file.display())))?;
                let e = HermiteExpansion::from_json(&text).map_err(|e| CliError::config(field, e))?;
                if e.dimension() != scheme.dimension() {
                    return Err(CliError::config(
                        field,
                        format!(
                            "expansion dimension {} differs from scheme dimension {}",
                            e.dimension(),
                            scheme.dimension()
                        ),
                    ));
                }
                e.with_degree_cap(scheme.degree_cap())
                    .map_err(|e| CliError::config(field, e))?
            }
        };
        let space = self.space.resolve("space")?;
        let target_spec = match &self.target {
            Some(t) => t.clone(),
            None => {
                let shift = self.smoothing_order();
                let alpha = ExponentField::from_rule(self.space.alpha.clone())
                    .and_then(|a| a.shifted(shift))
                    .map_err(|e| CliError::config("space.alpha", e))?;
                SpaceSpec {
                    alpha: alpha.rule,
                    ..self.space.clone()
                }
            }
        };
        let target = target_spec.resolve("target")?;
        self.target = Some(target_spec);
        Ok(Resolved {
            config: self,
            scheme,
            function,
            space,
            target,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_json(r#"{"space": {"alpha": {"kind": "wavy"}, "p": {"kind": "constant", "value": 2}, "q": {"kind": "constant", "value": 2}, "m": 6}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("space.alpha"), "{err}");
        let err = RunConfig::from_json(r#"{"sead": 3}"#).unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
    }

    #[test]
    fn named_and_file_functions_parse() {
        let c = RunConfig::from_json(r#"{"function": "gaussian(2)"}"#).unwrap();
        assert_eq!(c.function, FunctionSpec::Named(TestFunction::Gaussian(2.0)));
        let c = RunConfig::from_json(r#"{"function": {"expansion_file": "f.json"}}"#).unwrap();
        assert!(matches!(c.function, FunctionSpec::File { .. }));
    }

    #[test]
    fn riesz_target_is_shifted() {
        let cfg = RunConfig {
            scheme: SchemeParams {
                degree_cap: 16,
                points_per_axis: 64,
                ..SchemeParams::default_for(1)
            },
            ..RunConfig::default()
        };
        let r = cfg.resolve(Task::Operator).unwrap();
        assert_eq!(r.target.alpha.p_plus, 2.0);
        assert_eq!(r.config.task, Some(Task::Operator));
    }

    #[test]
    fn nonpositive_p_is_a_config_error() {
        let cfg = RunConfig {
            space: SpaceSpec {
                p: ExponentRule::Constant { value: 0.0 },
                ..SpaceSpec::default()
            },
            ..RunConfig::default()
        };
        let err = cfg.resolve(Task::Norm).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("space.p"));
    }
}
