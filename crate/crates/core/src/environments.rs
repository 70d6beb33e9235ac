//! Problem instances: unit-sphere bandits, the three synthetic examples and
//! dataset-driven contextual bandits.
//!
//! An [`EnvironmentSpec`] is a recipe; [`EnvironmentSpec::instantiate`] turns it
//! into a per-replicate [`Environment`] holding `θ*` and its own action and
//! noise streams.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, StandardNormal};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::policies::{random_unit, ActionSet};
use crate::rng::{stream, Rng, STREAM_ACTIONS, STREAM_NOISE, STREAM_THETA};

/// Distance within which a played vector counts as a member of the action set.
pub const ACTION_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    Sphere,
    FiniteRandom,
    ContextualBlock,
    PriorMismatch,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThetaRule {
    /// Uniform on the sphere of the given radius.
    UniformSphere { norm: f64 },
    /// `N(mean·1, I)`, redrawn until `‖θ*‖ ≤ S`.
    ShiftedGaussian { mean: f64 },
    /// Ridge fit of one-hot rewards on block-embedded dataset features.
    DatasetRidge { reg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ActionsRule {
    UnitSphere,
    /// `count` fresh uniform unit vectors per step.
    RandomUnit { count: usize },
    /// One `N(0, I_width)` draw per step copied into each of `blocks` blocks.
    GaussianBlocks { blocks: usize, width: usize },
    /// `{0, x_a, x_b}` of the prior-mismatch instance.
    PriorMismatch { d_block: usize },
    /// A uniformly drawn row, block-embedded once per class.
    DatasetRows,
}

#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub dim: usize,
    pub horizon: usize,
    pub noise_sigma: f64,
    /// Declared `S` with `‖θ*‖ ≤ S`.
    pub param_bound: f64,
    /// Declared bound on every action's norm; infinite for unbounded Gaussian blocks.
    pub action_bound: f64,
    pub theta_rule: ThetaRule,
    pub actions_rule: ActionsRule,
    pub seed: u64,
    pub dataset: Option<Arc<Dataset>>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise sigma must be finite and non-negative, got {sigma}")))
    }
}

impl EnvironmentSpec {
    pub fn sphere(dim: usize, theta_norm: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        if dim == 0 || !(theta_norm > 0.0) {
            return Err(Error::invalid("sphere environment needs dim ≥ 1 and ‖θ*‖ > 0"));
        }
        Ok(EnvironmentSpec {
            kind: EnvKind::Sphere,
            dim,
            horizon: 2000,
            noise_sigma,
            param_bound: theta_norm,
            action_bound: 1.0,
            theta_rule: ThetaRule::UniformSphere { norm: theta_norm },
            actions_rule: ActionsRule::UnitSphere,
            seed,
            dataset: None,
        })
    }

    pub fn finite_random(dim: usize, count: usize, theta_norm: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        if dim == 0 || count == 0 || !(theta_norm > 0.0) {
            return Err(Error::invalid("finite environment needs dim ≥ 1, at least one action and ‖θ*‖ > 0"));
        }
        Ok(EnvironmentSpec {
            kind: EnvKind::FiniteRandom,
            dim,
            horizon: 2000,
            noise_sigma,
            param_bound: theta_norm,
            action_bound: 1.0,
            theta_rule: ThetaRule::UniformSphere { norm: theta_norm },
            actions_rule: ActionsRule::RandomUnit { count },
            seed,
            dataset: None,
        })
    }

    pub fn contextual_block(blocks: usize, width: usize, theta_norm: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        if blocks == 0 || width == 0 || !(theta_norm > 0.0) {
            return Err(Error::invalid("block environment needs blocks ≥ 1, width ≥ 1 and ‖θ*‖ > 0"));
        }
        Ok(EnvironmentSpec {
            kind: EnvKind::ContextualBlock,
            dim: blocks * width,
            horizon: 2000,
            noise_sigma,
            param_bound: theta_norm,
            action_bound: f64::INFINITY,
            theta_rule: ThetaRule::UniformSphere { norm: theta_norm },
            actions_rule: ActionsRule::GaussianBlocks { blocks, width },
            seed,
            dataset: None,
        })
    }

    pub fn prior_mismatch(d_block: usize, mean: f64, noise_sigma: f64, seed: u64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        if d_block == 0 || !mean.is_finite() {
            return Err(Error::invalid("prior-mismatch environment needs d_block ≥ 1 and a finite mean"));
        }
        let dim = 3 * d_block;
        Ok(EnvironmentSpec {
            kind: EnvKind::PriorMismatch,
            dim,
            horizon: 2000,
            noise_sigma,
            param_bound: (mean.abs() + 1.0) * (dim as f64).sqrt(),
            action_bound: 1.0,
            theta_rule: ThetaRule::ShiftedGaussian { mean },
            actions_rule: ActionsRule::PriorMismatch { d_block },
            seed,
            dataset: None,
        })
    }

    pub fn from_dataset(dataset: Arc<Dataset>, noise_sigma: f64, seed: u64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        let k = dataset.classes;
        let p = dataset.num_features();
        let theta = embedded_ridge_theta(&dataset, 1.0)?;
        let max_row = (0..dataset.rows()).map(|i| dataset.row(i).norm()).fold(0.0, f64::max);
        Ok(EnvironmentSpec {
            kind: EnvKind::Dataset,
            dim: k * p,
            horizon: 5000,
            noise_sigma,
            param_bound: theta.norm(),
            action_bound: max_row,
            theta_rule: ThetaRule::DatasetRidge { reg: 1.0 },
            actions_rule: ActionsRule::DatasetRows,
            seed,
            dataset: Some(dataset),
        })
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `|X_t|`, `None` for the sphere.
    pub fn num_actions(&self) -> Option<usize> {
        match &self.actions_rule {
            ActionsRule::UnitSphere => None,
            ActionsRule::RandomUnit { count } => Some(*count),
            ActionsRule::GaussianBlocks { blocks, .. } => Some(*blocks),
            ActionsRule::PriorMismatch { .. } => Some(3),
            ActionsRule::DatasetRows => self.dataset.as_ref().map(|d| d.classes),
        }
    }

    /// Per-replicate environment; streams derive from `(seed, replicate)`.
    pub fn instantiate(&self, replicate: u64) -> Result<Environment> {
        let mut theta_rng = stream(self.seed, replicate, STREAM_THETA);
        let theta_star = match &self.theta_rule {
            ThetaRule::UniformSphere { norm } => random_unit(self.dim, &mut theta_rng) * *norm,
            ThetaRule::ShiftedGaussian { mean } => loop {
                let th = DVector::from_fn(self.dim, |_, _| mean + Distribution::<f64>::sample(&StandardNormal, &mut theta_rng));
                if th.norm() <= self.param_bound {
                    break th;
                }
            },
            ThetaRule::DatasetRidge { reg } => {
                let ds = self.dataset.as_ref().ok_or_else(|| Error::invalid("dataset environment without data"))?;
                embedded_ridge_theta(ds, *reg)?
            }
        };
        let fixed = match &self.actions_rule {
            ActionsRule::PriorMismatch { d_block } => prior_mismatch_actions(*d_block),
            _ => Vec::new(),
        };
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Environment {
            spec: self.clone(),
            theta_star,
            actions: fixed,
            current_label: None,
            action_rng: stream(self.seed, replicate, STREAM_ACTIONS),
            noise_rng: stream(self.seed, replicate, STREAM_NOISE),
            noise,
        })
    }
}

/// Gaussian reward noise scale when none is configured.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;

/// Paper-scale Example 1: `d = 50`, `‖θ*‖ = 10`, 100 fresh unit actions per step.
pub fn make_example1(seed: u64) -> EnvironmentSpec {
    EnvironmentSpec::finite_random(50, 100, 10.0, DEFAULT_NOISE_SIGMA, seed).expect("constants are valid")
}

/// Paper-scale Example 2: 10 blocks of width 5, `‖θ*‖ = 70`.
pub fn make_example2(seed: u64) -> EnvironmentSpec {
    EnvironmentSpec::contextual_block(10, 5, 70.0, DEFAULT_NOISE_SIGMA, seed).expect("constants are valid")
}

/// Paper-scale Example 3: `d_block = 10` (ambient 30), prior mean `m = 10`.
pub fn make_example3(seed: u64) -> EnvironmentSpec {
    EnvironmentSpec::prior_mismatch(10, 10.0, DEFAULT_NOISE_SIGMA, seed).expect("constants are valid")
}

pub fn load_dataset_env(path: &std::path::Path, noise_sigma: f64, seed: u64) -> Result<EnvironmentSpec> {
    let ds = crate::dataset::load_dataset(path)?;
    EnvironmentSpec::from_dataset(Arc::new(ds), noise_sigma, seed)
}

/// `{0, x_a, x_b}` with `x_a = −Σ_{i≤d} e_i/√(3d)` and
/// `x_b = Σ_{d<i≤3d} e_i/√(3d) − Σ_{i≤d} e_i/√(3d)`.
pub fn prior_mismatch_actions(d_block: usize) -> Vec<DVector<f64>> {
    let dim = 3 * d_block;
    let s = 1.0 / (dim as f64).sqrt();
    let x_a = DVector::from_fn(dim, |i, _| if i < d_block { -s } else { 0.0 });
    let x_b = DVector::from_fn(dim, |i, _| if i < d_block { -s } else { s });
    vec![DVector::zeros(dim), x_a, x_b]
}

/// Block-embeds `x` into slot `k` of `blocks` slots.
pub fn embed_block(x: &DVector<f64>, k: usize, blocks: usize) -> DVector<f64> {
    let w = x.len();
    let mut out = DVector::zeros(w * blocks);
    out.rows_mut(k * w, w).copy_from(x);
    out
}

/// Ridge solution over the whole file with one sample per (row, class):
/// feature `embed(x_row, k)`, target `1{label = k}`.
pub fn embedded_ridge_theta(ds: &Dataset, reg: f64) -> Result<DVector<f64>> {
    if !(reg > 0.0) {
        return Err(Error::invalid(format!("ridge penalty must be positive, got {reg}")));
    }
    let k = ds.classes;
    let p = ds.num_features();
    let dim = k * p;
    let mut gram = DMatrix::identity(dim, dim) * reg;
    let mut rhs = DVector::zeros(dim);
    for i in 0..ds.rows() {
        let x = ds.row(i);
        for c in 0..k {
            let e = embed_block(&x, c, k);
            gram.ger(1.0, &e, &e, 1.0);
            if ds.labels[i] == c {
                rhs += &e;
            }
        }
    }
    let chol = gram.cholesky().ok_or_else(|| Error::Numeric("embedded ridge system is singular".into()))?;
    Ok(chol.solve(&rhs))
}

/// Agreement of `argmax_k ⟨embed(x,k), θ*⟩` with the label, next to the
/// one-vs-rest ridge classifier's training accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConsistency {
    pub bandit_agreement: f64,
    pub classifier_accuracy: f64,
}

impl SelfConsistency {
    pub fn passes(&self) -> bool {
        self.bandit_agreement + 1e-12 >= self.classifier_accuracy
    }
}

pub fn dataset_self_consistency(ds: &Dataset) -> Result<SelfConsistency> {
    let theta = embedded_ridge_theta(ds, 1.0)?;
    let k = ds.classes;
    let hits = (0..ds.rows())
        .filter(|&i| {
            let x = ds.row(i);
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..k {
                let v = embed_block(&x, c, k).dot(&theta);
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            best == ds.labels[i]
        })
        .count();
    let w = ds.class_ridge(1.0)?;
    Ok(SelfConsistency {
        bandit_agreement: hits as f64 / ds.rows() as f64,
        classifier_accuracy: ds.accuracy(&w),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub optimal_value: f64,
    pub chosen_value: f64,
    pub instant_regret: f64,
    pub action_index: Option<usize>,
}

/// Per-run environment state.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvironmentSpec,
    theta_star: DVector<f64>,
    actions: Vec<DVector<f64>>,
    current_label: Option<usize>,
    action_rng: Rng,
    noise_rng: Rng,
    noise: Normal<f64>,
}

impl Environment {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    /// Draws `X_t` (a no-op for fixed sets and the sphere).
    pub fn advance(&mut self) {
        match self.spec.actions_rule.clone() {
            ActionsRule::UnitSphere | ActionsRule::PriorMismatch { .. } => {}
            ActionsRule::RandomUnit { count } => {
                let dim = self.spec.dim;
                self.actions.clear();
                for _ in 0..count {
                    let x = random_unit(dim, &mut self.action_rng);
                    self.actions.push(x);
                }
            }
            ActionsRule::GaussianBlocks { blocks, width } => {
                let u = DVector::from_fn(width, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut self.action_rng));
                self.actions = (0..blocks).map(|k| embed_block(&u, k, blocks)).collect();
            }
            ActionsRule::DatasetRows => {
                let ds = self.spec.dataset.as_ref().expect("dataset rule carries data");
                let i = self.action_rng.random_range(0..ds.rows());
                let x = ds.row(i);
                self.current_label = Some(ds.labels[i]);
                self.actions = (0..ds.classes).map(|k| embed_block(&x, k, ds.classes)).collect();
            }
        }
    }

    pub fn action_set(&self) -> ActionSet<'_> {
        match self.spec.actions_rule {
            ActionsRule::UnitSphere => ActionSet::Sphere,
            _ => ActionSet::Finite(&self.actions),
        }
    }

    pub fn optimal_value(&self) -> f64 {
        match self.spec.actions_rule {
            ActionsRule::UnitSphere => self.theta_star.norm(),
            _ => self.actions.iter().map(|x| x.dot(&self.theta_star)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn locate(&self, chosen: &DVector<f64>) -> Result<Option<usize>> {
        if chosen.len() != self.spec.dim {
            return Err(Error::InvalidAction(format!(
                "expected dimension {}, got {}",
                self.spec.dim,
                chosen.len()
            )));
        }
        match self.spec.actions_rule {
            ActionsRule::UnitSphere => {
                if (chosen.norm() - 1.0).abs() > ACTION_MATCH_TOL {
                    return Err(Error::InvalidAction(format!("sphere action has norm {}", chosen.norm())));
                }
                Ok(None)
            }
            _ => self
                .actions
                .iter()
                .position(|x| (x - chosen).amax() <= ACTION_MATCH_TOL)
                .map(Some)
                .ok_or_else(|| Error::InvalidAction("vector is not in the current action set".into())),
        }
    }

    /// Plays `chosen` against the current action set.
    pub fn step(&mut self, chosen: &DVector<f64>) -> Result<StepOutcome> {
        let index = self.locate(chosen)?;
        let chosen_value = chosen.dot(&self.theta_star);
        let optimal_value = self.optimal_value();
        let eps = self.noise.sample(&mut self.noise_rng);
        let reward = match (&self.spec.actions_rule, index, self.current_label) {
            (ActionsRule::DatasetRows, Some(k), Some(label)) => (k == label) as u8 as f64 + eps,
            _ => chosen_value + eps,
        };
        Ok(StepOutcome {
            reward,
            optimal_value,
            chosen_value,
            instant_regret: optimal_value - chosen_value,
            action_index: index,
        })
    }
}
