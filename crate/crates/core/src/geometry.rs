//! Computable upper bounds on the uncertainty ratio
//! `α_t = ‖x*_t‖_{V⁻¹} / ‖x̃_t‖_{V⁻¹}` and the quantities derived from it.
//!
//! For the unit-sphere action set the bound is assembled in three steps:
//!
//! 1. every direction `θ/‖θ‖` with `θ` in an ellipsoid `‖θ − θ̂‖_V ≤ β` has a
//!    `V`-norm inside `[lower, upper]` ([`vnorm_lower_sphere`], [`vnorm_upper_sphere`]);
//! 2. a `V`-norm window maps to a `V⁻¹`-norm window through a two-point linear
//!    program over the eigenvalue weights ([`vinv_range`]);
//! 3. the largest `V⁻¹`-norm over the RLS ellipsoid divided by the smallest over
//!    the pivot ellipsoid gives `α̂_t = Φ_t / Ψ_t` ([`alpha_hat_sphere`]).
//!
//! For finite action sets the same ratio is taken over the sets of actions that
//! cannot be ruled out by the confidence intervals ([`alpha_hat_discrete`]).
//!
//! The lower `V`-norm bound uses `‖θ − θ̂‖ ≤ β / √λ_d`, the Euclidean radius of
//! the ellipsoid. A `β / λ_d` radius is only valid when `λ_d ≤ 1` and breaks
//! soundness once the smallest eigenvalue grows past one.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cluster_eigenvalues, CovarianceState};

/// Geometry of one step. Sphere reports fill every field; discrete reports
/// leave the sphere-only intermediates (`phi`, `m_lower`, `m_upper`, `k_index`)
/// and `zeta` empty, since they need no spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    /// `φ_t = √(‖θ̂‖²_V − β²_RLS)`, absent when `‖θ̂‖_V < β_RLS`.
    pub phi: Option<f64>,
    /// `m_t`, lower bound on `‖x‖²_V` over the RLS ellipsoid (after clamping).
    pub m_lower: Option<f64>,
    /// `M_t`, upper bound on `‖x‖²_V` over the pivot ellipsoid (after clamping).
    pub m_upper: Option<f64>,
    /// `Φ_t`, upper bound on `‖x*‖_{V⁻¹}` over the RLS ellipsoid.
    pub phi_cap: f64,
    /// `Ψ_t`, lower bound on `‖x̃‖_{V⁻¹}` over the pivot ellipsoid.
    pub psi_cap: f64,
    pub alpha_hat: f64,
    /// `μ̂_t`, set by [`GeometryReport::with_proxy`].
    pub mu_hat: Option<f64>,
    /// `ζ_t`, absent for `θ̂ = 0`.
    pub zeta: Option<f64>,
    /// 0-based index (into the distinct eigenvalue clusters) of the upper
    /// bracketing eigenvalue used for `Ψ_t`.
    pub k_index: Option<usize>,
}

impl GeometryReport {
    pub fn with_proxy(mut self, iota: f64, tau: f64) -> Self {
        self.mu_hat = Some(mu_hat(self.alpha_hat, iota, tau));
        self
    }
}

fn phi_of(state: &CovarianceState, theta_hat: &DVector<f64>, beta: f64) -> Result<f64> {
    let vn = state.v_norm(theta_hat)?;
    let gap = vn * vn - beta * beta;
    if vn < beta || gap <= 0.0 {
        return Err(Error::DegenerateEllipsoid { norm: vn, radius: beta });
    }
    Ok(gap.sqrt())
}

/// Upper bound on `‖x*(θ)‖_V` over `‖θ − θ̂‖_V ≤ β`: `‖θ̂‖_{V²} / φ`.
pub fn vnorm_upper_sphere(state: &CovarianceState, theta_hat: &DVector<f64>, beta: f64) -> Result<f64> {
    let phi = phi_of(state, theta_hat, beta)?;
    Ok(state.v_sq_norm(theta_hat)? / phi)
}

/// Lower bound on `‖x*(θ)‖_V` over `‖θ − θ̂‖_V ≤ β`: `φ / (‖θ̂‖ + β/√λ_d)`.
pub fn vnorm_lower_sphere(state: &CovarianceState, theta_hat: &DVector<f64>, beta: f64) -> Result<f64> {
    let phi = phi_of(state, theta_hat, beta)?;
    Ok(phi / (theta_hat.norm() + beta / state.lambda_min().sqrt()))
}

/// `1/λ_1 + 1/λ_d − m/(λ_1 λ_d)` with `m` clamped into `[λ_d, λ_1]`.
fn vinv_sq_upper(l1: f64, ld: f64, m: f64) -> f64 {
    let m = m.clamp(ld, l1);
    1.0 / l1 + 1.0 / ld - m / (l1 * ld)
}

/// Two-point minimum bracketing `M` between consecutive distinct eigenvalues.
/// Returns the squared bound and the index of the upper bracket.
fn vinv_sq_lower(clusters: &[f64], big_m: f64) -> (f64, usize) {
    let l1 = clusters[0];
    let ld = clusters[clusters.len() - 1];
    let big_m = big_m.clamp(ld, l1);
    // k: last cluster with λ_k ≥ M.
    let k = clusters.iter().rposition(|&l| l >= big_m).unwrap_or(0);
    if k + 1 >= clusters.len() {
        return (1.0 / clusters[k], k);
    }
    let (hi, lo) = (clusters[k], clusters[k + 1]);
    (1.0 / hi + 1.0 / lo - big_m / (hi * lo), k)
}

/// Range of `‖x‖²_{V⁻¹}` over unit `x` with `m ≤ ‖x‖²_V ≤ M`, given the
/// distinct eigenvalues of `V` in descending order. Returns `(lower, upper)`.
pub fn vinv_range(eigs: &[f64], m: f64, big_m: f64) -> Result<(f64, f64)> {
    if eigs.is_empty() {
        return Err(Error::invalid("empty eigenvalue set"));
    }
    if eigs.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::invalid("eigenvalues must be positive and finite"));
    }
    if eigs.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("eigenvalues must be sorted descending"));
    }
    if !(m <= big_m) {
        return Err(Error::invalid(format!("lower V-norm bound {m} exceeds upper {big_m}")));
    }
    let l1 = eigs[0];
    let ld = eigs[eigs.len() - 1];
    let upper = vinv_sq_upper(l1, ld, m);
    let (lower, _) = vinv_sq_lower(eigs, big_m);
    Ok((lower, upper))
}

/// `α̂_t = Φ_t / Ψ_t` for the unit-sphere action set.
///
/// `Φ_t` falls back to `λ_d^{-1/2}` when `‖θ̂‖_V < β_RLS` and `Ψ_t` to
/// `λ_1^{-1/2}` when `‖θ̂‖_V < β_PVT`. The result is clamped into
/// `[1, √(λ_1/λ_d)]`; both ends are valid upper bounds on `α_t` in their own right.
pub fn alpha_hat_sphere(
    state: &CovarianceState,
    theta_hat: &DVector<f64>,
    beta_rls: f64,
    beta_pvt: f64,
) -> Result<GeometryReport> {
    let clusters = state.eigen_clusters();
    let l1 = clusters[0];
    let ld = clusters[clusters.len() - 1];
    let vn = state.v_norm(theta_hat)?;
    let vn2 = vn * vn;
    let theta_norm = theta_hat.norm();

    let (phi, m_lower, phi_cap) = if theta_norm > 0.0 && vn >= beta_rls && vn2 - beta_rls * beta_rls > 0.0 {
        let phi = (vn2 - beta_rls * beta_rls).sqrt();
        let denom = theta_norm + beta_rls / ld.sqrt();
        let m = (phi * phi / (denom * denom)).clamp(ld, l1);
        (Some(phi), Some(m), vinv_sq_upper(l1, ld, m).sqrt())
    } else {
        (None, None, 1.0 / ld.sqrt())
    };

    let (m_upper, k_index, psi_cap) = if theta_norm > 0.0 && vn >= beta_pvt && vn2 - beta_pvt * beta_pvt > 0.0 {
        let big_m = (state.v_sq_norm(theta_hat)?.powi(2) / (vn2 - beta_pvt * beta_pvt)).clamp(ld, l1);
        let (sq, k) = vinv_sq_lower(&clusters, big_m);
        (Some(big_m), Some(k), sq.sqrt())
    } else {
        (None, None, 1.0 / l1.sqrt())
    };

    let trivial = (l1 / ld).sqrt();
    let alpha_hat = (phi_cap / psi_cap).max(1.0).min(trivial.max(1.0));

    Ok(GeometryReport {
        phi,
        m_lower,
        m_upper,
        phi_cap,
        psi_cap,
        alpha_hat,
        mu_hat: None,
        zeta: alignment_zeta(state, theta_hat)?,
        k_index,
    })
}

/// Indices of `C_t(β) = {x : ⟨x,θ̂⟩ + β‖x‖_{V⁻¹} ≥ max_y ⟨y,θ̂⟩ − β‖y‖_{V⁻¹}}`,
/// from precomputed means and widths.
fn candidate_set(means: &[f64], widths: &[f64], beta: f64) -> Vec<usize> {
    let best_lower = means
        .iter()
        .zip(widths)
        .map(|(m, w)| m - beta * w)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * (1.0 + best_lower.abs());
    (0..means.len())
        .filter(|&i| means[i] + beta * widths[i] >= best_lower - slack)
        .collect()
}

/// Candidate (potentially optimal) action indices for radius `beta`.
pub fn potentially_optimal(
    state: &CovarianceState,
    theta_hat: &DVector<f64>,
    actions: &[DVector<f64>],
    beta: f64,
) -> Result<Vec<usize>> {
    let (means, widths) = means_and_widths(state, theta_hat, actions)?;
    Ok(candidate_set(&means, &widths, beta))
}

fn means_and_widths(
    state: &CovarianceState,
    theta_hat: &DVector<f64>,
    actions: &[DVector<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut means = Vec::with_capacity(actions.len());
    let mut widths = Vec::with_capacity(actions.len());
    for x in actions {
        if x.len() != theta_hat.len() {
            return Err(Error::invalid("action dimension mismatch"));
        }
        means.push(x.dot(theta_hat));
        widths.push(state.v_inv_norm(x)?);
    }
    Ok((means, widths))
}

/// `α̂_t` for a finite action set: the largest width over `C_t(β_RLS)` divided
/// by the smallest width over `C_t(β_PVT)`.
///
/// A zero-width action (the zero vector) in `C_t(β_PVT)` makes the ratio
/// unbounded and `α̂_t = +∞`; the ratio is clamped below at 1. Unlike the
/// sphere bound there is no `√(λ_1/λ_d)` ceiling because action norms differ.
pub fn alpha_hat_discrete(
    state: &CovarianceState,
    theta_hat: &DVector<f64>,
    actions: &[DVector<f64>],
    beta_rls: f64,
    beta_pvt: f64,
) -> Result<GeometryReport> {
    if actions.is_empty() {
        return Err(Error::invalid("action set is empty"));
    }
    let (means, widths) = means_and_widths(state, theta_hat, actions)?;
    let rls_set = candidate_set(&means, &widths, beta_rls);
    let pvt_set = candidate_set(&means, &widths, beta_pvt);
    assert!(
        !rls_set.is_empty() && !pvt_set.is_empty(),
        "candidate sets always contain the lower-confidence argmax"
    );
    let sup = rls_set.iter().map(|&i| widths[i]).fold(0.0, f64::max);
    let inf = pvt_set.iter().map(|&i| widths[i]).fold(f64::INFINITY, f64::min);
    let ratio = if inf > 0.0 {
        sup / inf
    } else if sup > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(GeometryReport {
        phi: None,
        m_lower: None,
        m_upper: None,
        phi_cap: sup,
        psi_cap: inf,
        alpha_hat: ratio.max(1.0),
        mu_hat: None,
        zeta: None,
        k_index: None,
    })
}

/// Regret proxy `μ̂ = α̂(1+ι−τ) + 1+ι+τ` when `1+ι−τ ≥ 0`, otherwise the
/// relaxation `√(2α̂²(1+ι−τ)² + 2(1+ι+τ)²)`.
pub fn mu_hat(alpha_hat: f64, iota: f64, tau: f64) -> f64 {
    let lead = 1.0 + iota - tau;
    let tail = 1.0 + iota + tau;
    if lead >= 0.0 {
        if lead == 0.0 {
            // avoids ∞·0 for an unbounded α̂
            return tail;
        }
        alpha_hat * lead + tail
    } else {
        (2.0 * alpha_hat * alpha_hat * lead * lead + 2.0 * tail * tail).sqrt()
    }
}

/// Data-driven regret bound `√(2d Σμ² log(1+T/λ)) · β_T`.
pub fn regret_bound(mu_sq_sum: f64, dim: usize, horizon: u64, reg: f64, beta_t: f64) -> f64 {
    (2.0 * dim as f64 * mu_sq_sum * (1.0 + horizon as f64 / reg).ln()).sqrt() * beta_t
}

/// `ζ_t = (‖θ̂‖²_V / ‖θ̂‖²) / λ_1`; `None` for `θ̂ = 0`.
pub fn alignment_zeta(state: &CovarianceState, theta_hat: &DVector<f64>) -> Result<Option<f64>> {
    let n2 = theta_hat.norm_squared();
    if n2 == 0.0 {
        return Ok(None);
    }
    let vn = state.v_norm(theta_hat)?;
    let z = (vn * vn / n2) / state.lambda_max();
    Ok(Some(z.clamp(f64::MIN_POSITIVE, 1.0)))
}

/// Distinct eigenvalues of a covariance state; re-exported for callers that
/// assemble [`vinv_range`] inputs themselves.
pub fn distinct_eigenvalues(state: &CovarianceState) -> Vec<f64> {
    cluster_eigenvalues(state.eigenvalues().as_slice())
}
