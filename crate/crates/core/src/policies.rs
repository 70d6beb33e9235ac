//! Pivot sampling, POFUL action selection and the concrete policies.
//!
//! Every policy follows the same step: sample a pivot `θ̃` inside the inflated
//! ellipsoid around `θ̂`, then play `argmax_x ⟨x, θ̃⟩ + τ_t β ‖x‖_{V⁻¹}`. The MR
//! variants first evaluate `μ̂_t` and switch to the OFUL action when it exceeds
//! their threshold.

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::confidence::{beta_rls, gaussian_pivot_scale, pivot_radius, ConfidenceContext, InflationRule};
use crate::error::{Error, Result};
use crate::geometry::{alpha_hat_discrete, alpha_hat_sphere, mu_hat, GeometryReport};
use crate::linalg::{CovarianceState, RlsEstimate, CLUSTER_TOL};
use crate::rng::Rng;

const SECULAR_TOL: f64 = 1e-10;
const SECULAR_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyTag {
    #[serde(rename = "OFUL")]
    Oful,
    #[serde(rename = "LinTS")]
    LinTs,
    #[serde(rename = "TSFreq")]
    TsFreq,
    #[serde(rename = "Greedy")]
    Greedy,
    #[serde(rename = "TS_MR")]
    TsMr,
    #[serde(rename = "Greedy_MR")]
    GreedyMr,
}

impl PolicyTag {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyTag::Oful => "OFUL",
            PolicyTag::LinTs => "LinTS",
            PolicyTag::TsFreq => "TSFreq",
            PolicyTag::Greedy => "Greedy",
            PolicyTag::TsMr => "TS_MR",
            PolicyTag::GreedyMr => "Greedy_MR",
        }
    }

    pub fn is_mr(&self) -> bool {
        matches!(self, PolicyTag::TsMr | PolicyTag::GreedyMr)
    }

    pub fn parse(s: &str) -> Option<PolicyTag> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Some(match norm.as_str() {
            "oful" => PolicyTag::Oful,
            "lints" | "ts" => PolicyTag::LinTs,
            "tsfreq" => PolicyTag::TsFreq,
            "greedy" => PolicyTag::Greedy,
            "tsmr" => PolicyTag::TsMr,
            "greedymr" => PolicyTag::GreedyMr,
            _ => return None,
        })
    }
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Policy family member with its inflation / optimism schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyKind {
    pub tag: PolicyTag,
    pub inflation: InflationRule,
    pub optimism: f64,
    pub mr_threshold: Option<f64>,
}

impl PolicyKind {
    pub fn oful() -> Self {
        PolicyKind { tag: PolicyTag::Oful, inflation: InflationRule::Constant(0.0), optimism: 1.0, mr_threshold: None }
    }

    pub fn lin_ts(inflation: InflationRule) -> Self {
        PolicyKind { tag: PolicyTag::LinTs, inflation, optimism: 0.0, mr_threshold: None }
    }

    pub fn ts_freq(scale: f64) -> Self {
        PolicyKind { tag: PolicyTag::TsFreq, inflation: InflationRule::SqrtDim(scale), optimism: 0.0, mr_threshold: None }
    }

    pub fn greedy() -> Self {
        PolicyKind { tag: PolicyTag::Greedy, inflation: InflationRule::Constant(0.0), optimism: 0.0, mr_threshold: None }
    }

    pub fn ts_mr(inflation: InflationRule, mu: f64) -> Self {
        PolicyKind { tag: PolicyTag::TsMr, inflation, optimism: 0.0, mr_threshold: Some(mu) }
    }

    pub fn greedy_mr(mu: f64) -> Self {
        PolicyKind {
            tag: PolicyTag::GreedyMr,
            inflation: InflationRule::Constant(0.0),
            optimism: 0.0,
            mr_threshold: Some(mu),
        }
    }

    /// Checks the family invariants; returns every violation.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut bad = Vec::new();
        let name = self.tag.name();
        let zero_iota = matches!(self.inflation, InflationRule::Constant(c) if c == 0.0);
        let scale = self.inflation.scale();
        if !(scale >= 0.0 && scale.is_finite()) {
            bad.push(format!("{name}: inflation must be finite and non-negative, got {scale}"));
        }
        if !(self.optimism >= 0.0 && self.optimism.is_finite()) {
            bad.push(format!("{name}: optimism must be finite and non-negative, got {}", self.optimism));
        }
        match self.tag {
            PolicyTag::Oful => {
                if !zero_iota || self.optimism != 1.0 {
                    bad.push("OFUL requires inflation 0 and optimism 1".into());
                }
            }
            PolicyTag::Greedy | PolicyTag::GreedyMr => {
                if !zero_iota || self.optimism != 0.0 {
                    bad.push(format!("{name} requires inflation 0 and optimism 0"));
                }
            }
            PolicyTag::LinTs | PolicyTag::TsFreq | PolicyTag::TsMr => {
                if self.optimism != 0.0 {
                    bad.push(format!("{name} requires optimism 0"));
                }
            }
        }
        match (self.tag.is_mr(), self.mr_threshold) {
            (true, None) => bad.push(format!("{name} requires a threshold mu")),
            (true, Some(mu)) if !(mu > 0.0 && mu.is_finite()) => {
                bad.push(format!("{name}: threshold mu must be positive, got {mu}"))
            }
            (false, Some(_)) => bad.push(format!("{name} does not take a threshold mu")),
            _ => {}
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

/// Distribution `D^SA(δ')` of the raw pivot perturbation `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotDistribution {
    /// `ξ / q` with `ξ ~ N(0, I)` and `q² = χ²_d` quantile at `1 − δ'`.
    #[default]
    ScaledGaussian,
    UniformBall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotSample {
    pub theta_tilde: DVector<f64>,
    pub eta: DVector<f64>,
    pub in_pivot_ellipsoid: bool,
}

/// Draws `η` and forms `θ̃ = θ̂ + ι_t β V^{-1/2} η`.
#[derive(Debug, Clone)]
pub struct PivotSampler {
    dist: PivotDistribution,
    dim: usize,
    q: f64,
}

impl PivotSampler {
    pub fn new(dist: PivotDistribution, dim: usize, delta_prime: f64) -> Result<Self> {
        let q = match dist {
            PivotDistribution::ScaledGaussian => gaussian_pivot_scale(dim, delta_prime)?,
            PivotDistribution::UniformBall => 1.0,
        };
        Ok(PivotSampler { dist, dim, q })
    }

    pub fn scale(&self) -> f64 {
        self.q
    }

    pub fn draw_eta(&self, rng: &mut Rng) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        match self.dist {
            PivotDistribution::ScaledGaussian => xi / self.q,
            PivotDistribution::UniformBall => {
                let n = xi.norm();
                if n == 0.0 {
                    return xi;
                }
                let u: f64 = rng.random();
                xi * (u.powf(1.0 / self.dim as f64) / n)
            }
        }
    }

    pub fn sample(
        &self,
        state: &CovarianceState,
        est: &RlsEstimate,
        ctx: &ConfidenceContext,
        t: usize,
        rng: &mut Rng,
    ) -> Result<PivotSample> {
        if ctx.inflation(t) == 0.0 {
            return pivot_from_eta(state, est, ctx, t, DVector::zeros(state.dim()));
        }
        let eta = self.draw_eta(rng);
        pivot_from_eta(state, est, ctx, t, eta)
    }
}

/// Deterministic half of pivot sampling for a given `η`.
pub fn pivot_from_eta(
    state: &CovarianceState,
    est: &RlsEstimate,
    ctx: &ConfidenceContext,
    t: usize,
    eta: DVector<f64>,
) -> Result<PivotSample> {
    if eta.len() != state.dim() {
        return Err(Error::invalid("eta dimension mismatch"));
    }
    let beta = beta_rls(ctx, state.steps(), state)?;
    let iota = ctx.inflation_for(t, beta);
    if iota == 0.0 {
        return Ok(PivotSample {
            theta_tilde: est.theta_hat().clone(),
            eta: DVector::zeros(state.dim()),
            in_pivot_ellipsoid: true,
        });
    }
    let offset = state.inv_sqrt_apply(&eta)? * (iota * beta);
    // ‖V^{-1/2} η‖_V = ‖η‖
    let inside = eta.norm() <= 1.0 + 1e-12;
    Ok(PivotSample { theta_tilde: est.theta_hat() + offset, eta, in_pivot_ellipsoid: inside })
}

/// `argmax_i ⟨x_i, θ̃⟩ + τ β ‖x_i‖_{V⁻¹}`, lowest index on ties.
pub fn select_action_finite(
    theta_tilde: &DVector<f64>,
    tau: f64,
    beta: f64,
    state: &CovarianceState,
    actions: &[DVector<f64>],
) -> Result<usize> {
    if actions.is_empty() {
        return Err(Error::invalid("action set is empty"));
    }
    let bonus = tau * beta;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, x) in actions.iter().enumerate() {
        if x.len() != theta_tilde.len() {
            return Err(Error::InvalidAction(format!("action {i} has dimension {}", x.len())));
        }
        let mut score = x.dot(theta_tilde);
        if bonus != 0.0 {
            score += bonus * state.v_inv_norm(x)?;
        }
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereChoice {
    pub action: DVector<f64>,
    /// True when `θ̃ = 0` and `τ = 0`, so the action was drawn uniformly.
    pub degenerate: bool,
}

pub fn random_unit(dim: usize, rng: &mut Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// Maximizer of `⟨x, θ̃⟩ + τ β ‖x‖_{V⁻¹}` over the unit sphere.
pub fn select_action_sphere(
    theta_tilde: &DVector<f64>,
    tau: f64,
    beta: f64,
    state: &CovarianceState,
    rng: &mut Rng,
) -> Result<SphereChoice> {
    if theta_tilde.len() != state.dim() {
        return Err(Error::invalid("pivot dimension mismatch"));
    }
    let c = tau * beta;
    let target = if c > 0.0 { farthest_point(theta_tilde, c, state)? } else { theta_tilde.clone() };
    let n = target.norm();
    if n == 0.0 || !n.is_finite() {
        return Ok(SphereChoice { action: random_unit(state.dim(), rng), degenerate: true });
    }
    Ok(SphereChoice { action: target / n, degenerate: false })
}

/// `argmax ‖θ‖` over `‖θ − center‖_V ≤ radius`.
///
/// Writing `θ = center + w`, stationarity gives `w = (νV − I)⁻¹ center` with
/// `ν > 1/λ_d`; `ν` is the root of `Σ λ_i b_i² / (νλ_i − 1)² = radius²` where
/// `b = Uᵀ center`. When `b` vanishes on the bottom eigenspace and the
/// constraint is still slack at `ν = 1/λ_d`, the remainder goes along the
/// bottom eigenvector.
pub fn farthest_point(center: &DVector<f64>, radius: f64, state: &CovarianceState) -> Result<DVector<f64>> {
    if center.len() != state.dim() {
        return Err(Error::invalid("center dimension mismatch"));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be finite and non-negative, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(center.clone());
    }
    let lam = state.eigenvalues();
    let u = state.eigenvectors();
    let d = lam.len();
    let b = u.transpose() * center;
    let l1 = lam[0];
    let ld = lam[d - 1];
    let c2 = radius * radius;

    let tol = CLUSTER_TOL * l1.abs().max(1.0);
    let bottom: Vec<usize> = (0..d).filter(|&i| lam[i] - ld <= tol).collect();
    let b_norm = b.norm();
    let bottom_mass: f64 = bottom.iter().map(|&i| b[i] * b[i]).sum::<f64>().sqrt();

    let secular = |nu: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for i in 0..d {
            let den = nu * lam[i] - 1.0;
            let t = lam[i] * b[i] * b[i] / (den * den);
            f += t;
            df -= 2.0 * t * lam[i] / den;
        }
        (f, df)
    };

    if bottom_mass <= 1e-12 * b_norm.max(1e-300) || b_norm == 0.0 {
        let mut w = DVector::zeros(d);
        let mut used = 0.0;
        for i in 0..d {
            if bottom.contains(&i) {
                continue;
            }
            let wi = b[i] / (lam[i] / ld - 1.0);
            w[i] = wi;
            used += lam[i] * wi * wi;
        }
        if used <= c2 {
            let rest = ((c2 - used) / ld).sqrt();
            w[bottom[0]] += rest;
            return Ok(center + u * w);
        }
    }

    let mut lo = 1.0 / ld;
    let mut hi = (1.0 + l1.sqrt() * b_norm / radius) / ld;
    let g = |nu: f64| -> (f64, f64) {
        let (f, df) = secular(nu);
        if f <= 0.0 {
            return (1.0 / radius, 0.0);
        }
        let s = f.sqrt();
        (1.0 / radius - 1.0 / s, 0.5 * df / (f * s))
    };
    let mut nu = hi;
    for _ in 0..SECULAR_MAX_ITER {
        let (gv, dg) = g(nu);
        if gv.abs() * radius <= SECULAR_TOL {
            break;
        }
        // g decreases in ν
        if gv > 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        let newton = if dg != 0.0 { nu - gv / dg } else { f64::NAN };
        nu = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let w = DVector::from_fn(d, |i, _| b[i] / (nu * lam[i] - 1.0));
    Ok(center + u * w)
}

/// Action-set view handed to a policy for one step.
#[derive(Debug, Clone, Copy)]
pub enum ActionSet<'a> {
    Sphere,
    Finite(&'a [DVector<f64>]),
}

/// Outcome of one policy decision.
#[derive(Debug, Clone)]
pub struct Decision {
    pub action: DVector<f64>,
    pub index: Option<usize>,
    pub used_oful: bool,
    pub degenerate: bool,
    pub pivot_in_ellipsoid: bool,
    pub report: Option<GeometryReport>,
}

/// Geometry of the current step for `(ι, τ)`, dispatched on the action set.
pub fn step_geometry(
    state: &CovarianceState,
    est: &RlsEstimate,
    ctx: &ConfidenceContext,
    t: usize,
    optimism: f64,
    actions: ActionSet<'_>,
) -> Result<GeometryReport> {
    let beta = beta_rls(ctx, state.steps(), state)?;
    let beta_pvt = pivot_radius(ctx, t, beta);
    let report = match actions {
        ActionSet::Sphere => alpha_hat_sphere(state, est.theta_hat(), beta, beta_pvt)?,
        ActionSet::Finite(xs) => alpha_hat_discrete(state, est.theta_hat(), xs, beta, beta_pvt)?,
    };
    Ok(report.with_proxy(ctx.inflation_for(t, beta), optimism))
}

/// OFUL action with the RLS radius: UCB argmax on finite sets, the normalized
/// farthest point of the RLS ellipsoid on the sphere.
pub fn oful_action(
    state: &CovarianceState,
    est: &RlsEstimate,
    ctx: &ConfidenceContext,
    actions: ActionSet<'_>,
    rng: &mut Rng,
) -> Result<(DVector<f64>, Option<usize>, bool)> {
    let beta = beta_rls(ctx, state.steps(), state)?;
    match actions {
        ActionSet::Sphere => {
            let c = select_action_sphere(est.theta_hat(), 1.0, beta, state, rng)?;
            Ok((c.action, None, c.degenerate))
        }
        ActionSet::Finite(xs) => {
            let i = select_action_finite(est.theta_hat(), 1.0, beta, state, xs)?;
            Ok((xs[i].clone(), Some(i), false))
        }
    }
}

fn pivot_action(
    theta_tilde: &DVector<f64>,
    tau: f64,
    state: &CovarianceState,
    ctx: &ConfidenceContext,
    actions: ActionSet<'_>,
    rng: &mut Rng,
) -> Result<(DVector<f64>, Option<usize>, bool)> {
    let beta = beta_rls(ctx, state.steps(), state)?;
    match actions {
        ActionSet::Sphere => {
            let c = select_action_sphere(theta_tilde, tau, beta, state, rng)?;
            Ok((c.action, None, c.degenerate))
        }
        ActionSet::Finite(xs) => {
            let i = select_action_finite(theta_tilde, tau, beta, state, xs)?;
            Ok((xs[i].clone(), Some(i), false))
        }
    }
}

/// MR switching rule: base action when `μ̂_t ≤ μ`, OFUL action otherwise.
/// `report` is the step geometry (possibly reused from an earlier step).
#[allow(clippy::too_many_arguments)]
pub fn mr_step(
    state: &CovarianceState,
    est: &RlsEstimate,
    ctx: &ConfidenceContext,
    t: usize,
    mu: f64,
    sampler: &PivotSampler,
    actions: ActionSet<'_>,
    report: GeometryReport,
    rng: &mut Rng,
) -> Result<Decision> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("threshold mu must be positive, got {mu}")));
    }
    let proxy = match report.mu_hat {
        Some(v) => v,
        None => mu_hat(report.alpha_hat, ctx.inflation_for(t, beta_rls(ctx, state.steps(), state)?), 0.0),
    };
    if proxy <= mu {
        let pivot = sampler.sample(state, est, ctx, t, rng)?;
        let (action, index, degenerate) = pivot_action(&pivot.theta_tilde, 0.0, state, ctx, actions, rng)?;
        Ok(Decision {
            action,
            index,
            used_oful: false,
            degenerate,
            pivot_in_ellipsoid: pivot.in_pivot_ellipsoid,
            report: Some(report),
        })
    } else {
        let (action, index, degenerate) = oful_action(state, est, ctx, actions, rng)?;
        Ok(Decision { action, index, used_oful: true, degenerate, pivot_in_ellipsoid: true, report: Some(report) })
    }
}

/// Per-run policy instance owning its RNG stream.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    sampler: PivotSampler,
    rng: Rng,
}

impl Policy {
    pub fn new(kind: PolicyKind, sampler: PivotSampler, rng: Rng) -> Result<Self> {
        kind.validate().map_err(Error::Config)?;
        Ok(Policy { kind, sampler, rng })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    /// One decision. `report` is the geometry to use (fresh or reused); MR
    /// policies require it, others just pass it through to the trace.
    pub fn decide(
        &mut self,
        state: &CovarianceState,
        est: &RlsEstimate,
        ctx: &ConfidenceContext,
        t: usize,
        actions: ActionSet<'_>,
        report: Option<GeometryReport>,
    ) -> Result<Decision> {
        if let Some(mu) = self.kind.mr_threshold {
            let report = match report {
                Some(r) => r,
                None => step_geometry(state, est, ctx, t, 0.0, actions)?,
            };
            return mr_step(state, est, ctx, t, mu, &self.sampler, actions, report, &mut self.rng);
        }
        let pivot = self.sampler.sample(state, est, ctx, t, &mut self.rng)?;
        let (action, index, degenerate) =
            pivot_action(&pivot.theta_tilde, ctx.optimism(t), state, ctx, actions, &mut self.rng)?;
        Ok(Decision {
            action,
            index,
            used_oful: false,
            degenerate,
            pivot_in_ellipsoid: pivot.in_pivot_ellipsoid,
            report,
        })
    }
}
