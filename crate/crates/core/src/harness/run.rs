//! Single runs and the replicated experiment driver.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{beta_rls, ConfidenceContext};
use crate::environments::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::geometry::{alignment_zeta, regret_bound, GeometryReport};
use crate::harness::aggregate::{aggregate, AggregateRow};
use crate::harness::config::{ExperimentConfig, PolicySpec};
use crate::linalg::{rank_one_update, CovarianceState, RlsEstimate};
use crate::policies::{step_geometry, PivotDistribution, PivotSampler, Policy};
use crate::rng::policy_stream;

/// Per-run knobs shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub horizon: usize,
    pub delta: f64,
    pub lambda_reg: f64,
    pub noise_r: f64,
    pub param_bound: f64,
    pub master_seed: u64,
    pub pivot: PivotDistribution,
    pub geometry_every: usize,
    pub record_alpha: bool,
    pub record_zeta: bool,
    pub record_bound: bool,
}

impl RunSettings {
    /// Defaults for an environment: `R = σ`, `S` as declared.
    pub fn for_env(env: &EnvironmentSpec, horizon: usize) -> Self {
        RunSettings {
            horizon,
            delta: 0.05,
            lambda_reg: 1.0,
            noise_r: env.noise_sigma,
            param_bound: env.param_bound,
            master_seed: env.seed,
            pivot: PivotDistribution::ScaledGaussian,
            geometry_every: 1,
            record_alpha: true,
            record_zeta: true,
            record_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based round.
    pub t: usize,
    pub reward: f64,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub beta_rls: f64,
    pub alpha_hat: Option<f64>,
    pub mu_hat: Option<f64>,
    pub used_oful: bool,
    pub zeta: Option<f64>,
    pub action_index: Option<usize>,
    pub degenerate: bool,
}

impl StepRecord {
    /// `μ̂_t` for the bound: 2 on OFUL steps, the recorded proxy otherwise.
    pub fn effective_proxy(&self) -> Option<f64> {
        if self.used_oful {
            Some(2.0)
        } else {
            self.mu_hat
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub run_id: usize,
    pub policy: String,
    pub policy_index: usize,
    pub replicate: usize,
    pub failed: Option<String>,
    pub steps_completed: usize,
    pub realized_regret: f64,
    pub mu_sq_sum: Option<f64>,
    pub bound: Option<f64>,
    pub beta_final: f64,
    pub potential_sum: f64,
    pub potential_cap: f64,
    pub potential_violations: usize,
    pub theta_in_ellipsoid_all: bool,
    pub concentration_violations: usize,
    pub pivot_outside: usize,
    pub mr_threshold: Option<f64>,
    pub mr_cap_violations: usize,
    pub oful_steps: usize,
    pub degenerate_steps: usize,
    pub dim: usize,
    pub horizon: usize,
    pub lambda_reg: f64,
    pub delta: f64,
    pub noise_r: f64,
    pub param_bound: f64,
    pub inflation_first: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub summary: RunSummary,
    pub steps: Vec<StepRecord>,
}

/// `2d·log(1 + t/λ)`.
pub fn potential_cap(dim: usize, t: usize, reg: f64) -> f64 {
    2.0 * dim as f64 * (1.0 + t as f64 / reg).ln()
}

/// Runs one policy on one replicate. Numeric failures end the run early and
/// are reported in `summary.failed`.
pub fn run_single(
    env_spec: &EnvironmentSpec,
    policy: &PolicySpec,
    policy_index: usize,
    replicate: usize,
    run_id: usize,
    settings: &RunSettings,
) -> RunTrace {
    let dim = env_spec.dim;
    let mut summary = RunSummary {
        run_id,
        policy: policy.label.clone(),
        policy_index,
        replicate,
        failed: None,
        steps_completed: 0,
        realized_regret: 0.0,
        mu_sq_sum: None,
        bound: None,
        beta_final: 0.0,
        potential_sum: 0.0,
        potential_cap: 0.0,
        potential_violations: 0,
        theta_in_ellipsoid_all: true,
        concentration_violations: 0,
        pivot_outside: 0,
        mr_threshold: policy.kind.mr_threshold,
        mr_cap_violations: 0,
        oful_steps: 0,
        degenerate_steps: 0,
        dim,
        horizon: settings.horizon,
        lambda_reg: settings.lambda_reg,
        delta: settings.delta,
        noise_r: settings.noise_r,
        param_bound: settings.param_bound,
        inflation_first: 0.0,
    };
    let mut steps = Vec::with_capacity(settings.horizon);
    if let Err(e) = drive(env_spec, policy, policy_index, replicate, settings, &mut summary, &mut steps) {
        summary.failed = Some(e.to_string());
    }
    RunTrace { summary, steps }
}

fn drive(
    env_spec: &EnvironmentSpec,
    policy: &PolicySpec,
    policy_index: usize,
    replicate: usize,
    settings: &RunSettings,
    summary: &mut RunSummary,
    steps: &mut Vec<StepRecord>,
) -> Result<()> {
    let dim = env_spec.dim;
    let ctx = ConfidenceContext::new(
        settings.delta,
        settings.horizon,
        settings.noise_r,
        settings.param_bound,
        settings.lambda_reg,
    )?
    .with_schedules(policy.kind.inflation, policy.kind.optimism, dim)?;
    summary.inflation_first = ctx.inflation(0);
    let sampler = PivotSampler::new(settings.pivot, dim, ctx.delta_prime())?;
    let mut agent = Policy::new(
        policy.kind.clone(),
        sampler,
        policy_stream(settings.master_seed, replicate as u64, policy_index),
    )?;
    let mut env = env_spec.instantiate(replicate as u64)?;
    let mut state = CovarianceState::new(dim, settings.lambda_reg)?;
    let mut est = RlsEstimate::new(dim);
    let is_mr = policy.kind.mr_threshold.is_some();
    let need_geometry = is_mr || settings.record_alpha;
    let mr_cap = policy.kind.mr_threshold.map(|mu| mu.max(2.0));

    let mut last_report: Option<GeometryReport> = None;
    let mut cum = 0.0;
    let mut mu_sq = 0.0;
    let mut mu_complete = true;

    for t in 0..settings.horizon {
        env.advance();
        let beta = beta_rls(&ctx, state.steps(), &state)?;
        let dist = state.v_norm(&(est.theta_hat() - env.theta_star()))?;
        if dist > beta + 1e-9 * beta.max(1.0) {
            summary.concentration_violations += 1;
            summary.theta_in_ellipsoid_all = false;
        }

        let report = if need_geometry {
            let fresh = last_report.is_none() || t % settings.geometry_every == 0;
            if fresh {
                let optimism = if is_mr { 0.0 } else { ctx.optimism(t) };
                last_report = Some(step_geometry(&state, &est, &ctx, t, optimism, env.action_set())?);
            }
            last_report.clone()
        } else {
            None
        };

        let decision = agent.decide(&state, &est, &ctx, t, env.action_set(), report)?;
        let x: DVector<f64> = decision.action;
        let w = state.v_inv_norm(&x)?;
        summary.potential_sum += w * w;
        if summary.potential_sum > potential_cap(dim, t + 1, settings.lambda_reg) * (1.0 + 1e-12) {
            summary.potential_violations += 1;
        }
        if !decision.pivot_in_ellipsoid {
            summary.pivot_outside += 1;
        }
        if decision.used_oful {
            summary.oful_steps += 1;
        }
        if decision.degenerate {
            summary.degenerate_steps += 1;
        }

        let out = env.step(&x)?;
        cum += out.instant_regret;

        let (alpha, mu) = match &decision.report {
            Some(r) => (Some(r.alpha_hat), r.mu_hat),
            None => (None, None),
        };
        let zeta = if settings.record_zeta {
            match &decision.report {
                Some(r) if r.zeta.is_some() => r.zeta,
                _ => alignment_zeta(&state, est.theta_hat())?,
            }
        } else {
            None
        };
        let record = StepRecord {
            t: t + 1,
            reward: out.reward,
            instant_regret: out.instant_regret,
            cum_regret: cum,
            beta_rls: beta,
            alpha_hat: alpha,
            mu_hat: mu,
            used_oful: decision.used_oful,
            zeta,
            action_index: out.action_index,
            degenerate: decision.degenerate,
        };
        match record.effective_proxy() {
            Some(p) => {
                mu_sq += p * p;
                if let Some(cap) = mr_cap {
                    if p > cap {
                        summary.mr_cap_violations += 1;
                    }
                }
            }
            None => mu_complete = false,
        }
        steps.push(record);
        summary.steps_completed = t + 1;

        rank_one_update(&mut state, &mut est, &x, out.reward)?;
        if !est.theta_hat().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite estimate at round {}", t + 1)));
        }
    }

    let beta_t = beta_rls(&ctx, state.steps(), &state)?;
    let final_dist = state.v_norm(&(est.theta_hat() - env.theta_star()))?;
    if final_dist > beta_t + 1e-9 * beta_t.max(1.0) {
        summary.concentration_violations += 1;
        summary.theta_in_ellipsoid_all = false;
    }
    summary.realized_regret = cum;
    summary.beta_final = beta_t;
    summary.potential_cap = potential_cap(dim, settings.horizon, settings.lambda_reg);
    if mu_complete {
        summary.mu_sq_sum = Some(mu_sq);
        if settings.record_bound {
            summary.bound = Some(regret_bound(mu_sq, dim, settings.horizon as u64, settings.lambda_reg, beta_t));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub traces: Vec<RunTrace>,
    pub aggregate: Vec<AggregateRow>,
    pub labels: Vec<String>,
    pub replicates: usize,
}

impl ExperimentResult {
    pub fn failed_runs(&self) -> usize {
        self.traces.iter().filter(|t| t.summary.failed.is_some()).count()
    }
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub geometry_every: Option<usize>,
}

pub fn settings_from_config(cfg: &ExperimentConfig, env: &EnvironmentSpec) -> RunSettings {
    let e = &cfg.experiment;
    RunSettings {
        horizon: e.horizon,
        delta: e.delta,
        lambda_reg: e.lambda_reg,
        noise_r: e.noise_r.unwrap_or(env.noise_sigma),
        param_bound: e.param_bound.unwrap_or(env.param_bound),
        master_seed: e.seed,
        pivot: e.pivot,
        geometry_every: e.geometry_every,
        record_alpha: e.record_alpha,
        record_zeta: e.record_zeta,
        record_bound: e.record_bound,
    }
}

/// Applies overrides in place and validates the result.
pub fn apply_overrides(cfg: &mut ExperimentConfig, ov: &RunOverrides) -> Result<()> {
    if let Some(n) = ov.replicates {
        cfg.experiment.replicates = n;
    }
    if let Some(s) = ov.seed {
        cfg.experiment.seed = s;
    }
    if let Some(k) = ov.geometry_every {
        cfg.experiment.geometry_every = k;
    }
    if ov.threads == Some(0) {
        return Err(Error::Config(vec!["--threads: must be at least 1".into()]));
    }
    cfg.validate()
}

/// Runs every `(policy, replicate)` pair on a pool of `threads` workers.
/// Results come back in `run_id` order regardless of scheduling.
pub fn run_matrix(
    env: &EnvironmentSpec,
    policies: &[PolicySpec],
    replicates: usize,
    settings: &RunSettings,
    threads: Option<usize>,
) -> Result<ExperimentResult> {
    let jobs: Vec<(usize, usize)> =
        (0..policies.len()).flat_map(|p| (0..replicates).map(move |r| (p, r))).collect();
    let work = || -> Vec<RunTrace> {
        jobs.par_iter()
            .map(|&(p, r)| run_single(env, &policies[p], p, r, p * replicates + r, settings))
            .collect()
    };
    let traces = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let labels: Vec<String> = policies.iter().map(|p| p.label.clone()).collect();
    let aggregate = aggregate(&traces, &labels, settings.horizon);
    Ok(ExperimentResult { traces, aggregate, labels, replicates })
}

pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let env = cfg.build_environment()?;
    let settings = settings_from_config(cfg, &env);
    let policies = cfg.policy_specs()?;
    run_matrix(&env, &policies, cfg.experiment.replicates, &settings, threads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::PolicyKind;

    fn spec(label: &str, kind: PolicyKind) -> PolicySpec {
        PolicySpec { label: label.into(), kind }
    }

    #[test]
    fn forced_single_action_has_zero_regret() {
        let env = EnvironmentSpec::finite_random(3, 1, 1.0, 0.0, 1).unwrap();
        let s = RunSettings::for_env(&env, 1);
        let tr = run_single(&env, &spec("Greedy", PolicyKind::greedy()), 0, 0, 0, &s);
        assert!(tr.summary.failed.is_none());
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].cum_regret, 0.0);
    }

    #[test]
    fn cum_regret_is_prefix_sum() {
        let env = EnvironmentSpec::finite_random(4, 6, 2.0, 0.5, 8).unwrap();
        let s = RunSettings::for_env(&env, 200);
        let tr = run_single(&env, &spec("LinTS", PolicyKind::lin_ts(crate::confidence::InflationRule::Constant(1.0))), 0, 0, 0, &s);
        let mut acc = 0.0;
        for r in &tr.steps {
            acc += r.instant_regret;
            assert!((acc - r.cum_regret).abs() <= 1e-9);
            assert!(r.instant_regret >= -1e-9);
        }
        assert_eq!(tr.summary.potential_violations, 0);
        assert!(tr.summary.bound.is_some());
    }

    #[test]
    fn oful_bound_uses_proxy_two() {
        let env = EnvironmentSpec::finite_random(3, 4, 1.0, 0.2, 2).unwrap();
        let s = RunSettings::for_env(&env, 50);
        let tr = run_single(&env, &spec("OFUL", PolicyKind::oful()), 0, 0, 0, &s);
        assert!(tr.steps.iter().all(|r| r.mu_hat == Some(2.0)));
        assert_close!(tr.summary.mu_sq_sum.unwrap(), 4.0 * 50.0, 1e-9);
        let expect = regret_bound(200.0, 3, 50, 1.0, tr.summary.beta_final);
        assert_close!(tr.summary.bound.unwrap(), expect, 1e-9);
    }

    #[test]
    fn mr_effective_proxy_capped() {
        let env = EnvironmentSpec::prior_mismatch(2, 3.0, 1.0, 4).unwrap();
        let s = RunSettings::for_env(&env, 100);
        for kind in [PolicyKind::greedy_mr(4.0), PolicyKind::ts_mr(crate::confidence::InflationRule::Posterior(1.0), 4.0)] {
            let tr = run_single(&env, &spec("mr", kind), 0, 0, 0, &s);
            assert!(tr.summary.failed.is_none(), "{:?}", tr.summary.failed);
            assert_eq!(tr.summary.mr_cap_violations, 0);
            assert!(tr.summary.oful_steps > 0);
        }
    }

    #[test]
    fn parallel_equals_serial() {
        let env = EnvironmentSpec::finite_random(3, 5, 1.5, 0.3, 6).unwrap();
        let s = RunSettings::for_env(&env, 30);
        let pols = vec![spec("Greedy", PolicyKind::greedy()), spec("OFUL", PolicyKind::oful())];
        let a = run_matrix(&env, &pols, 3, &s, Some(1)).unwrap();
        let b = run_matrix(&env, &pols, 3, &s, Some(3)).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        for (x, y) in a.traces.iter().zip(&b.traces) {
            assert_eq!(x.steps, y.steps);
        }
    }

    #[test]
    fn geometry_stride_reuses_reports() {
        let env = EnvironmentSpec::sphere(3, 2.0, 0.5, 3).unwrap();
        let mut s = RunSettings::for_env(&env, 20);
        s.geometry_every = 5;
        let tr = run_single(&env, &spec("Greedy", PolicyKind::greedy()), 0, 0, 0, &s);
        for chunk in tr.steps.chunks(5) {
            assert!(chunk.iter().all(|r| r.alpha_hat == chunk[0].alpha_hat));
        }
    }
}
