//! Run configuration: JSON file plus dotted-path overrides.

use std::path::Path;

use optdes::design::ContinuousDesign;
use optdes::glmm::{BlockDesign, Method};
use optdes::grid::GridSpec;
use optdes::optimize::{ContinuousOptOptions, ExactMethod};
use optdes::priors::{Prior, SampleMethod};
use optdes::ModelSpec;
use serde::Deserialize;
use serde_json::Value;

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub prior: Prior,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub seed: u64,
    pub task: Task,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Prior sample used by Bayesian criteria; the seed comes from the top level.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n_draws: usize,
    pub method: SampleMethod,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_draws: 1,
            method: SampleMethod::Lhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Also write `sensitivity.csv` with `psi` over the scanned grid.
    #[serde(default)]
    pub sensitivity: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "optdes-out".into(),
            sensitivity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub sigma2: f64,
    pub m: usize,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceConfig {
    Oracle,
    Fixed { design: ContinuousDesign },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Optimize {
        #[serde(default)]
        options: ContinuousOptOptions,
    },
    OptimizeExact {
        n: usize,
        method: ExactMethod,
        #[serde(default = "default_starts")]
        starts: usize,
    },
    Check {
        design: ContinuousDesign,
        #[serde(default)]
        grid: GridSpec,
    },
    ClosedForm {
        construction: Construction,
        #[serde(default)]
        grid: GridSpec,
    },
    Efficiency {
        design: ContinuousDesign,
        reference: ContinuousDesign,
    },
    Effdist {
        design: ContinuousDesign,
        reference: ReferenceConfig,
        n_draws: usize,
    },
    BlockOptimize {
        block: BlockConfig,
        #[serde(default = "block_options")]
        options: ContinuousOptOptions,
    },
    BlockCheck {
        block: BlockConfig,
        design: BlockDesign,
        #[serde(default = "optdes::glmm::block_grid")]
        grid: GridSpec,
    },
}

fn default_starts() -> usize {
    8
}

fn block_options() -> ContinuousOptOptions {
    ContinuousOptOptions {
        grid: optdes::glmm::block_grid(),
        ..ContinuousOptOptions::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Logistic1d,
    UnboundedLogistic,
    GammaOfaat,
    PoissonMinimal,
    PoissonBayesMinimal,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Optimize { .. } => "optimize",
            Task::OptimizeExact { .. } => "optimize-exact",
            Task::Check { .. } => "check",
            Task::ClosedForm { .. } => "closed-form",
            Task::Efficiency { .. } => "efficiency",
            Task::Effdist { .. } => "effdist",
            Task::BlockOptimize { .. } => "block-optimize",
            Task::BlockCheck { .. } => "block-check",
        }
    }
}

/// Sets `path` (dot separated) to `value`, creating objects on the way.
/// The value is read as JSON, or as a plain string when it is not JSON.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override {assignment:?} must look like path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::validation(format!("override path {path:?} has an empty segment")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        node = match node {
            Value::Object(map) => map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => {
                let i: usize = key
                    .parse()
                    .map_err(|_| CliError::validation(format!("override path {path:?}: {key:?} is not an index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| CliError::validation(format!("override path {path:?}: index {i} >= {len}")))?
            }
            _ => return Err(CliError::validation(format!("override path {path:?} descends into a scalar"))),
        };
    }
    let last = keys[keys.len() - 1];
    match node {
        Value::Object(map) => {
            map.insert(last.to_string(), value);
        }
        Value::Array(items) => {
            let i: usize = last
                .parse()
                .map_err(|_| CliError::validation(format!("override path {path:?}: {last:?} is not an index")))?;
            let len = items.len();
            *items
                .get_mut(i)
                .ok_or_else(|| CliError::validation(format!("override path {path:?}: index {i} >= {len}")))? = value;
        }
        _ => return Err(CliError::validation(format!("override path {path:?} descends into a scalar"))),
    }
    Ok(())
}

/// All randomness derives from the top-level seed.
fn reject_nested_seeds(v: &Value, path: &str) -> Result<(), CliError> {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if k == "seed" && !path.is_empty() {
                    return Err(CliError::validation(format!("{here}: seeds may only be set at the top level")));
                }
                reject_nested_seeds(child, &here)?;
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                reject_nested_seeds(child, &format!("{path}.{i}"))?;
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("config is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    reject_nested_seeds(&value, "")?;
    serde_json::from_value(value).map_err(|e| CliError::validation(format!("invalid config: {e}")))
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const BASE: &str = r#"{
        "model": {"family": {"kind": "binomial"}, "link": {"kind": "logistic"},
                  "basis": {"kind": "first_order", "k": 1}, "region": {"bounds": [[-6, 6]]}},
        "prior": {"kind": "point", "theta": [0, 1]},
        "task": {"kind": "optimize"}
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config(BASE, &[]).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.sample, SampleConfig::default());
        assert_eq!(c.output.dir, "optdes-out");
        assert_eq!(c.task.name(), "optimize");
    }

    #[test]
    fn overrides_reach_nested_leaves() {
        let c = parse_config(
            BASE,
            &["seed=7".into(), "prior.theta.1=2.5".into(), "task.options.multistarts=4".into(), "output.dir=x".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.prior, Prior::point(vec![0.0, 2.5]));
        let Task::Optimize { options } = c.task else { panic!() };
        assert_eq!(options.multistarts, 4);
        assert_eq!(c.output.dir, "x");
    }

    #[test]
    fn override_errors() {
        let mut v = json!({"a": 1});
        assert!(apply_override(&mut v, "a").is_err());
        assert!(apply_override(&mut v, "a.b=1").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
        let mut v = json!({"a": [1, 2]});
        assert!(apply_override(&mut v, "a.5=1").is_err());
        apply_override(&mut v, "a.1=\"s\"").unwrap();
        assert_eq!(v, json!({"a": [1, "s"]}));
    }

    #[test]
    fn unknown_keys_and_nested_seeds_are_rejected() {
        assert!(parse_config(BASE, &["extra=1".into()]).is_err());
        assert!(parse_config(BASE, &["task.options.bogus=1".into()]).is_err());
        let e = parse_config(BASE, &["task.options.seed=3".into()]).unwrap_err();
        assert!(e.message.contains("top level"), "{}", e.message);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let e = parse_config(
            BASE,
            &[r#"task={"kind":"check","design":{"points":[[-1],[1]],"weights":[0.5,0.4]}}"#.into()],
        )
        .unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("sum to 1"), "{}", e.message);
    }
}
