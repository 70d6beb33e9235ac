//! TOML experiment configuration.
//!
//! ```toml
//! [experiment]
//! horizon = 2000
//! replicates = 50
//! delta = 0.05
//! lambda_reg = 1.0
//! seed = 7
//!
//! [environment]
//! kind = "finite_random"
//! dim = 20
//! actions = 100
//! theta_norm = 10.0
//!
//! [[policy]]
//! kind = "LinTS"
//!
//! [[policy]]
//! kind = "Greedy_MR"
//! mu = 8.0
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::confidence::InflationRule;
use crate::dataset::load_dataset;
use crate::environments::{EnvironmentSpec, DEFAULT_NOISE_SIGMA};
use crate::error::{Error, Result};
use crate::policies::{PivotDistribution, PolicyKind, PolicyTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub horizon: usize,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_reg")]
    pub lambda_reg: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sub-Gaussian scale `R`; defaults to the environment's noise sigma.
    #[serde(default)]
    pub noise_r: Option<f64>,
    /// `S`; defaults to the environment's declared bound.
    #[serde(default)]
    pub param_bound: Option<f64>,
    #[serde(default)]
    pub pivot: PivotDistribution,
    #[serde(default = "one")]
    pub geometry_every: usize,
    #[serde(default = "yes")]
    pub record_alpha: bool,
    #[serde(default = "yes")]
    pub record_zeta: bool,
    #[serde(default = "yes")]
    pub record_bound: bool,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_delta() -> f64 {
    0.05
}
fn default_reg() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Sphere {
        dim: usize,
        theta_norm: f64,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
    FiniteRandom {
        dim: usize,
        actions: usize,
        theta_norm: f64,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
    ContextualBlock {
        blocks: usize,
        width: usize,
        theta_norm: f64,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
    PriorMismatch {
        d_block: usize,
        mean: f64,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
    Dataset {
        csv: PathBuf,
        #[serde(default)]
        noise_sigma: Option<f64>,
    },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflationRuleName {
    Constant,
    SqrtDim,
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub inflation: Option<f64>,
    #[serde(default)]
    pub inflation_rule: Option<InflationRuleName>,
    #[serde(default)]
    pub optimism: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub environment: EnvironmentConfig,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicyConfig>,
    /// Directory that relative dataset paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A validated policy entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub label: String,
    pub kind: PolicyKind,
}

impl PolicyConfig {
    pub fn resolve(&self, index: usize) -> std::result::Result<PolicySpec, Vec<String>> {
        let at = format!("policy[{index}]");
        let Some(tag) = PolicyTag::parse(&self.kind) else {
            return Err(vec![format!(
                "{at}.kind: unknown policy {:?} (expected OFUL, LinTS, TSFreq, Greedy, TS_MR or Greedy_MR)",
                self.kind
            )]);
        };
        let default_rule = match tag {
            PolicyTag::LinTs | PolicyTag::TsMr => InflationRuleName::Posterior,
            PolicyTag::TsFreq => InflationRuleName::SqrtDim,
            _ => InflationRuleName::Constant,
        };
        let default_scale = match tag {
            PolicyTag::Oful | PolicyTag::Greedy | PolicyTag::GreedyMr => 0.0,
            _ => 1.0,
        };
        let scale = self.inflation.unwrap_or(default_scale);
        let inflation = match self.inflation_rule.clone().unwrap_or(default_rule) {
            InflationRuleName::Constant => InflationRule::Constant(scale),
            InflationRuleName::SqrtDim => InflationRule::SqrtDim(scale),
            InflationRuleName::Posterior => InflationRule::Posterior(scale),
        };
        let kind = PolicyKind {
            tag,
            inflation,
            optimism: self.optimism.unwrap_or(if tag == PolicyTag::Oful { 1.0 } else { 0.0 }),
            mr_threshold: self.mu,
        };
        kind.validate().map_err(|errs| errs.into_iter().map(|e| format!("{at}: {e}")).collect::<Vec<_>>())?;
        let label = self.label.clone().unwrap_or_else(|| tag.name().to_string());
        if label.is_empty() || label.contains([',', '"', '\n', '\r']) {
            return Err(vec![format!("{at}.label: {label:?} must be non-empty without commas, quotes or newlines")]);
        }
        Ok(PolicySpec { label, kind })
    }
}

impl EnvironmentConfig {
    pub fn noise_sigma(&self) -> f64 {
        let sigma = match self {
            EnvironmentConfig::Dataset { noise_sigma, .. }
            | EnvironmentConfig::Sphere { noise_sigma, .. }
            | EnvironmentConfig::FiniteRandom { noise_sigma, .. }
            | EnvironmentConfig::ContextualBlock { noise_sigma, .. }
            | EnvironmentConfig::PriorMismatch { noise_sigma, .. } => noise_sigma,
        };
        sigma.unwrap_or(DEFAULT_NOISE_SIGMA)
    }

    fn shape_errors(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let sigma = self.noise_sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            bad.push(format!("environment.noise_sigma: must be finite and non-negative, got {sigma}"));
        }
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("environment.{name}: must be positive, got {v}"));
            }
        };
        match self {
            EnvironmentConfig::Sphere { dim, theta_norm, .. } => {
                positive("dim", *dim as f64);
                positive("theta_norm", *theta_norm);
            }
            EnvironmentConfig::FiniteRandom { dim, actions, theta_norm, .. } => {
                positive("dim", *dim as f64);
                positive("actions", *actions as f64);
                positive("theta_norm", *theta_norm);
            }
            EnvironmentConfig::ContextualBlock { blocks, width, theta_norm, .. } => {
                positive("blocks", *blocks as f64);
                positive("width", *width as f64);
                positive("theta_norm", *theta_norm);
            }
            EnvironmentConfig::PriorMismatch { d_block, mean, .. } => {
                positive("d_block", *d_block as f64);
                if !mean.is_finite() {
                    bad.push(format!("environment.mean: must be finite, got {mean}"));
                }
            }
            EnvironmentConfig::Dataset { csv, .. } => {
                if csv.as_os_str().is_empty() {
                    bad.push("environment.csv: path is empty".into());
                }
            }
        }
        bad
    }

    /// Builds the environment recipe, loading the dataset if needed.
    pub fn build(&self, base_dir: &Path, seed: u64, horizon: usize) -> Result<EnvironmentSpec> {
        let bad = self.shape_errors();
        if !bad.is_empty() {
            return Err(Error::Config(bad));
        }
        let sigma = self.noise_sigma();
        let spec = match self {
            EnvironmentConfig::Sphere { dim, theta_norm, .. } => EnvironmentSpec::sphere(*dim, *theta_norm, sigma, seed)?,
            EnvironmentConfig::FiniteRandom { dim, actions, theta_norm, .. } => {
                EnvironmentSpec::finite_random(*dim, *actions, *theta_norm, sigma, seed)?
            }
            EnvironmentConfig::ContextualBlock { blocks, width, theta_norm, .. } => {
                EnvironmentSpec::contextual_block(*blocks, *width, *theta_norm, sigma, seed)?
            }
            EnvironmentConfig::PriorMismatch { d_block, mean, .. } => {
                EnvironmentSpec::prior_mismatch(*d_block, *mean, sigma, seed)?
            }
            EnvironmentConfig::Dataset { csv, .. } => {
                let path = if csv.is_absolute() { csv.clone() } else { base_dir.join(csv) };
                EnvironmentSpec::from_dataset(Arc::new(load_dataset(&path)?), sigma, seed)?
            }
        };
        Ok(spec.with_horizon(horizon))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    /// Every validation problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let e = &self.experiment;
        if e.horizon == 0 {
            bad.push("experiment.horizon: must be at least 1".into());
        }
        if e.replicates == 0 {
            bad.push("experiment.replicates: must be at least 1".into());
        }
        if !(e.delta > 0.0 && e.delta < 1.0) {
            bad.push(format!("experiment.delta: must lie in (0, 1), got {}", e.delta));
        }
        if !(e.lambda_reg > 0.0 && e.lambda_reg.is_finite()) {
            bad.push(format!("experiment.lambda_reg: must be positive, got {}", e.lambda_reg));
        }
        if let Some(r) = e.noise_r {
            if !(r >= 0.0 && r.is_finite()) {
                bad.push(format!("experiment.noise_r: must be finite and non-negative, got {r}"));
            }
        }
        if let Some(s) = e.param_bound {
            if !(s >= 0.0 && s.is_finite()) {
                bad.push(format!("experiment.param_bound: must be finite and non-negative, got {s}"));
            }
        }
        if e.geometry_every == 0 {
            bad.push("experiment.geometry_every: must be at least 1".into());
        }
        bad.extend(self.environment.shape_errors());
        if self.policies.is_empty() {
            bad.push("policy: at least one [[policy]] table is required".into());
        }
        let mut labels = std::collections::HashSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            match p.resolve(i) {
                Ok(spec) => {
                    if !labels.insert(spec.label.clone()) {
                        bad.push(format!("policy[{i}].label: duplicate label {:?}; set a distinct `label`", spec.label));
                    }
                }
                Err(errs) => bad.extend(errs),
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn policy_specs(&self) -> Result<Vec<PolicySpec>> {
        self.policies
            .iter()
            .enumerate()
            .map(|(i, p)| p.resolve(i).map_err(Error::Config))
            .collect()
    }

    pub fn build_environment(&self) -> Result<EnvironmentSpec> {
        self.environment.build(&self.base_dir, self.experiment.seed, self.experiment.horizon)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[experiment]
horizon = 10
replicates = 2
seed = 3

[environment]
kind = "finite_random"
dim = 4
actions = 5
theta_norm = 2.0

[[policy]]
kind = "LinTS"

[[policy]]
kind = "Greedy_MR"
mu = 8.0
"#;

    #[test]
    fn parses_basic() {
        let cfg = ExperimentConfig::from_toml_str(BASIC, Path::new(".")).unwrap();
        assert_eq!(cfg.experiment.horizon, 10);
        assert_eq!(cfg.experiment.delta, 0.05);
        let specs = cfg.policy_specs().unwrap();
        assert_eq!(specs[0].label, "LinTS");
        assert_eq!(specs[0].kind.inflation, InflationRule::Posterior(1.0));
        assert_eq!(specs[1].kind.mr_threshold, Some(8.0));
        let env = cfg.build_environment().unwrap();
        assert_eq!(env.dim, 4);
        assert_eq!(env.horizon, 10);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), Path::new(".")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn collects_every_error() {
        let text = r#"
[experiment]
horizon = 0
replicates = 0
delta = 2.0

[environment]
kind = "sphere"
dim = 0
theta_norm = -1.0

[[policy]]
kind = "TS_MR"

[[policy]]
kind = "bogus"
"#;
        match ExperimentConfig::from_toml_str(text, Path::new(".")) {
            Err(Error::Config(errs)) => {
                let all = errs.join("\n");
                for key in ["horizon", "replicates", "delta", "dim", "theta_norm", "policy[0]", "policy[1].kind"] {
                    assert!(all.contains(key), "missing {key} in {all}");
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_duplicates() {
        let typo = BASIC.replace("seed = 3", "sede = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&typo, Path::new(".")), Err(Error::Config(_))));
        let dup = format!("{BASIC}\n[[policy]]\nkind = \"LinTS\"\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&dup, Path::new(".")), Err(Error::Config(_))));
        let env_typo = BASIC.replace("actions = 5", "actoins = 5");
        assert!(ExperimentConfig::from_toml_str(&env_typo, Path::new(".")).is_err());
    }

    #[test]
    fn policy_defaults() {
        let p = |kind: &str| PolicyConfig {
            kind: kind.into(),
            label: None,
            inflation: None,
            inflation_rule: None,
            optimism: None,
            mu: None,
        };
        assert_eq!(p("OFUL").resolve(0).unwrap().kind, PolicyKind::oful());
        assert_eq!(p("Greedy").resolve(0).unwrap().kind, PolicyKind::greedy());
        assert_eq!(p("TSFreq").resolve(0).unwrap().kind, PolicyKind::ts_freq(1.0));
        assert!(p("Greedy_MR").resolve(0).is_err());
        let mut bad = p("OFUL");
        bad.optimism = Some(0.0);
        assert!(bad.resolve(0).is_err());
        let mut comma = p("OFUL");
        comma.label = Some("a,b".into());
        assert!(comma.resolve(0).is_err());
    }

    #[test]
    fn dataset_path_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "a,y\n0,0\n1,1\n2,0\n").unwrap();
        let text = r#"
[experiment]
horizon = 5

[environment]
kind = "dataset"
csv = "d.csv"

[[policy]]
kind = "Greedy"
"#;
        let path = dir.path().join("x.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let env = cfg.build_environment().unwrap();
        assert_eq!(env.dim, 2);
        assert_eq!(env.noise_sigma, 0.5);
    }
}
