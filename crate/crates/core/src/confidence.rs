//! Confidence radii for the RLS and pivot ellipsoids, and membership tests.

use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::CovarianceState;

/// Absolute slack for ellipsoid membership so boundary points test inside.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Rule producing the per-step inflation `ι_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InflationRule {
    Constant(f64),
    /// `scale · √d`.
    SqrtDim(f64),
    /// `scale · R · q / β_t` with `q` from [`gaussian_pivot_scale`]: the pivot
    /// becomes the usual Gaussian posterior draw `θ̂ + scale·R·V^{-1/2} ξ`.
    Posterior(f64),
}

impl InflationRule {
    pub fn scale(&self) -> f64 {
        match *self {
            InflationRule::Constant(c) | InflationRule::SqrtDim(c) | InflationRule::Posterior(c) => c,
        }
    }
}

/// `q = √(χ²_d quantile at 1 − δ')`, so that `‖ξ/q‖ ≤ 1` with probability `1 − δ'`.
pub fn gaussian_pivot_scale(dim: usize, delta_prime: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::invalid(format!("delta' must lie in (0, 1), got {delta_prime}")));
    }
    let chi = ChiSquared::new(dim as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let q2 = chi.inverse_cdf(1.0 - delta_prime);
    if !(q2 > 0.0 && q2.is_finite()) {
        return Err(Error::Numeric(format!("chi-square quantile failed for d={dim}, delta'={delta_prime}")));
    }
    Ok(q2.sqrt())
}

/// Problem constants shared by every step of one run, plus the materialised
/// inflation and optimism schedules.
#[derive(Debug, Clone)]
pub struct ConfidenceContext {
    delta: f64,
    horizon: usize,
    noise_r: f64,
    param_bound_s: f64,
    reg: f64,
    inflation: Vec<f64>,
    posterior_scale: Option<f64>,
    optimism: Vec<f64>,
}

impl ConfidenceContext {
    pub fn new(
        delta: f64,
        horizon: usize,
        noise_r: f64,
        param_bound_s: f64,
        reg: f64,
    ) -> Result<Self> {
        let mut bad = Vec::new();
        if !(delta > 0.0 && delta < 1.0) {
            bad.push(format!("delta must lie in (0, 1), got {delta}"));
        }
        if horizon == 0 {
            bad.push("horizon must be at least 1".to_string());
        }
        if !(noise_r >= 0.0 && noise_r.is_finite()) {
            bad.push(format!("noise scale R must be non-negative, got {noise_r}"));
        }
        if !(param_bound_s >= 0.0 && param_bound_s.is_finite()) {
            bad.push(format!("parameter bound S must be non-negative, got {param_bound_s}"));
        }
        if !(reg > 0.0 && reg.is_finite()) {
            bad.push(format!("lambda_reg must be positive, got {reg}"));
        }
        if !bad.is_empty() {
            return Err(Error::invalid(bad.join("; ")));
        }
        Ok(ConfidenceContext {
            delta,
            horizon,
            noise_r,
            param_bound_s,
            reg,
            inflation: vec![0.0; horizon],
            posterior_scale: None,
            optimism: vec![0.0; horizon],
        })
    }

    /// Fills `ι_t` and `τ_t` for every step of the horizon.
    pub fn with_schedules(mut self, inflation: InflationRule, optimism: f64, dim: usize) -> Result<Self> {
        let c = inflation.scale();
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("inflation must be non-negative, got {c}")));
        }
        if !(optimism >= 0.0 && optimism.is_finite()) {
            return Err(Error::invalid(format!("optimism must be non-negative, got {optimism}")));
        }
        self.posterior_scale = None;
        self.inflation = match inflation {
            InflationRule::Constant(c) => vec![c; self.horizon],
            InflationRule::SqrtDim(c) => vec![c * (dim as f64).sqrt(); self.horizon],
            InflationRule::Posterior(c) => {
                let scale = c * self.noise_r * gaussian_pivot_scale(dim, self.delta_prime())?;
                self.posterior_scale = Some(scale);
                (0..self.horizon)
                    .map(|t| posterior_inflation(scale, self.beta_rls_at(t as u64, dim)))
                    .collect()
            }
        };
        self.optimism = vec![optimism; self.horizon];
        Ok(self)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `δ' = δ / (2T)`.
    pub fn delta_prime(&self) -> f64 {
        self.delta / (2.0 * self.horizon as f64)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noise_r(&self) -> f64 {
        self.noise_r
    }

    pub fn param_bound_s(&self) -> f64 {
        self.param_bound_s
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// `ι_t` from the schedule; steps past the horizon reuse the last entry.
    /// Posterior rules assume unit-norm actions here; see [`ConfidenceContext::inflation_for`].
    pub fn inflation(&self, t: usize) -> f64 {
        self.inflation[t.min(self.horizon - 1)]
    }

    /// `ι_t` paired with the radius actually in use at step `t`.
    pub fn inflation_for(&self, t: usize, beta: f64) -> f64 {
        match self.posterior_scale {
            Some(scale) => posterior_inflation(scale, beta),
            None => self.inflation(t),
        }
    }

    pub fn optimism(&self, t: usize) -> f64 {
        self.optimism[t.min(self.horizon - 1)]
    }

    /// `β^RLS` after `t` observations in dimension `dim`.
    pub fn beta_rls_at(&self, t: u64, dim: usize) -> f64 {
        rls_radius(self.noise_r, self.param_bound_s, self.reg, dim, t, self.delta_prime())
            .expect("context invariants guarantee a valid radius")
    }
}

/// `β^RLS = R √(2 log((λ+t)^{d/2} λ^{-d/2} / δ')) + √λ S`, with the log term
/// evaluated as `(d/2) log(λ+t) − (d/2) log λ − log δ'`.
pub fn rls_radius(
    noise_r: f64,
    param_bound_s: f64,
    reg: f64,
    dim: usize,
    t: u64,
    delta_prime: f64,
) -> Result<f64> {
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::invalid(format!("delta' must lie in (0, 1), got {delta_prime}")));
    }
    if !(reg > 0.0) {
        return Err(Error::invalid(format!("lambda_reg must be positive, got {reg}")));
    }
    let half_d = dim as f64 / 2.0;
    let log_term = half_d * (reg + t as f64).ln() - half_d * reg.ln() - delta_prime.ln();
    Ok(noise_r * (2.0 * log_term.max(0.0)).sqrt() + reg.sqrt() * param_bound_s)
}

fn posterior_inflation(scale: f64, beta: f64) -> f64 {
    if beta > 0.0 {
        scale / beta
    } else {
        0.0
    }
}

/// Same radius with `(λ+t)^{d/2}` replaced by `det(V)^{1/2}`.
pub fn rls_radius_det(
    noise_r: f64,
    param_bound_s: f64,
    reg: f64,
    dim: usize,
    log_det: f64,
    delta_prime: f64,
) -> Result<f64> {
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::invalid(format!("delta' must lie in (0, 1), got {delta_prime}")));
    }
    if !(reg > 0.0) {
        return Err(Error::invalid(format!("lambda_reg must be positive, got {reg}")));
    }
    if log_det.is_nan() {
        return Err(Error::Numeric("log det V is NaN".into()));
    }
    let log_term = 0.5 * log_det - dim as f64 / 2.0 * reg.ln() - delta_prime.ln();
    Ok(noise_r * (2.0 * log_term.max(0.0)).sqrt() + reg.sqrt() * param_bound_s)
}

/// `β^RLS_{t,δ',λ}` for the current state. Equal to the closed form when
/// every action so far had norm at most one; larger actions switch to the
/// determinant form.
pub fn beta_rls(ctx: &ConfidenceContext, t: u64, state: &CovarianceState) -> Result<f64> {
    let closed = rls_radius(ctx.noise_r, ctx.param_bound_s, ctx.reg, state.dim(), t, ctx.delta_prime())?;
    let det = rls_radius_det(ctx.noise_r, ctx.param_bound_s, ctx.reg, state.dim(), state.log_det(), ctx.delta_prime())?;
    Ok(closed.max(det))
}

/// `β^PVT = ι_t β`.
pub fn pivot_radius(ctx: &ConfidenceContext, t: usize, beta: f64) -> f64 {
    ctx.inflation_for(t, beta) * beta
}

/// `{θ : ‖θ − center‖_V ≤ radius}` with `V` borrowed from a covariance state.
#[derive(Debug, Clone)]
pub struct EllipsoidSpec<'a> {
    pub center: DVector<f64>,
    pub shape: &'a CovarianceState,
    pub radius: f64,
}

impl<'a> EllipsoidSpec<'a> {
    pub fn new(center: DVector<f64>, shape: &'a CovarianceState, radius: f64) -> Result<Self> {
        if center.len() != shape.dim() {
            return Err(Error::invalid("ellipsoid center dimension mismatch"));
        }
        if !(radius >= 0.0) {
            return Err(Error::invalid(format!("radius must be non-negative, got {radius}")));
        }
        Ok(EllipsoidSpec {
            center,
            shape,
            radius,
        })
    }

    pub fn contains(&self, theta: &DVector<f64>) -> Result<bool> {
        if theta.len() != self.center.len() {
            return Err(Error::invalid(format!(
                "dimension mismatch: expected {}, got {}",
                self.center.len(),
                theta.len()
            )));
        }
        let dist = self.shape.v_norm(&(theta - &self.center))?;
        Ok(dist <= self.radius + MEMBERSHIP_SLACK)
    }
}
