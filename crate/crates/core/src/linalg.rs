//! Sample covariance `V_t = λ I + Σ x_s x_sᵀ`, its inverse and spectrum, and the
//! regularized least-squares estimate maintained under rank-one updates.

use std::cell::OnceCell;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Full re-inversion cadence for the Sherman–Morrison inverse.
pub const REINVERT_EVERY: u64 = 500;

/// Relative gap under which two eigenvalues are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-9;

/// When the eigendecomposition is refreshed after updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefreshPolicy {
    #[default]
    EveryStep,
    /// Recompute only once `k` updates have accumulated; in between the
    /// spectrum is stale and [`CovarianceState::spectrum_is_stale`] reports it.
    EveryK(u64),
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Descending.
    pub values: DVector<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
    /// Step counter at which the decomposition was taken.
    pub at_step: u64,
}

impl Spectrum {
    fn of(matrix: &DMatrix<f64>, at_step: u64) -> Self {
        let eig = SymmetricEigen::new(matrix.clone());
        let d = matrix.nrows();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Spectrum {
            values,
            vectors,
            at_step,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceState {
    dim: usize,
    reg: f64,
    t: u64,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log_det: f64,
    refresh: RefreshPolicy,
    spectrum: OnceCell<Spectrum>,
}

impl CovarianceState {
    pub fn new(dim: usize, reg: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(reg > 0.0 && reg.is_finite()) {
            return Err(Error::invalid(format!("regularization must be positive, got {reg}")));
        }
        let spectrum = OnceCell::new();
        let _ = spectrum.set(Spectrum {
            values: DVector::from_element(dim, reg),
            vectors: DMatrix::identity(dim, dim),
            at_step: 0,
        });
        Ok(CovarianceState {
            dim,
            reg,
            t: 0,
            matrix: DMatrix::identity(dim, dim) * reg,
            inverse: DMatrix::identity(dim, dim) / reg,
            log_det: dim as f64 * reg.ln(),
            refresh: RefreshPolicy::EveryStep,
            spectrum,
        })
    }

    pub fn with_refresh(mut self, refresh: RefreshPolicy) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// Number of rank-one updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `log det V`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `V ← V + x xᵀ`, with the inverse tracked by Sherman–Morrison.
    pub fn update(&mut self, x: &DVector<f64>) -> Result<()> {
        self.check_dim(x)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("action has non-finite entries"));
        }
        let vx = &self.inverse * x;
        let denom = 1.0 + x.dot(&vx);
        self.matrix.ger(1.0, x, x, 1.0);
        self.t += 1;

        if self.t.is_multiple_of(REINVERT_EVERY) {
            self.reinvert()?;
        } else {
            self.log_det += denom.max(1.0).ln();
            self.inverse.ger(-1.0 / denom, &vx, &vx, 1.0);
            symmetrize(&mut self.inverse);
        }

        let refresh = match self.refresh {
            RefreshPolicy::EveryStep => true,
            RefreshPolicy::EveryK(k) => match self.spectrum.get() {
                Some(s) => self.t - s.at_step >= k.max(1),
                None => true,
            },
        };
        if refresh {
            self.spectrum = OnceCell::new();
        }
        Ok(())
    }

    fn reinvert(&mut self) -> Result<()> {
        let chol = self
            .matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("covariance lost positive definiteness".into()))?;
        self.log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        self.inverse = chol.inverse();
        symmetrize(&mut self.inverse);
        Ok(())
    }

    /// Eigendecomposition, computed on first access after a refresh.
    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| Spectrum::of(&self.matrix, self.t))
    }

    pub fn spectrum_is_stale(&self) -> bool {
        match self.spectrum.get() {
            Some(s) => s.at_step != self.t,
            None => false,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.spectrum().values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.spectrum().vectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues()[self.dim - 1]
    }

    /// Distinct eigenvalues (descending), merging values closer than
    /// `CLUSTER_TOL · max(1, λ_1)`. Each cluster is represented by its mean.
    pub fn eigen_clusters(&self) -> Vec<f64> {
        cluster_eigenvalues(self.eigenvalues().as_slice())
    }

    pub fn v_norm(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(quad_form(&self.matrix, x).max(0.0).sqrt())
    }

    pub fn v_inv_norm(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(quad_form(&self.inverse, x).max(0.0).sqrt())
    }

    /// `√(xᵀ V² x) = ‖V x‖`.
    pub fn v_sq_norm(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok((&self.matrix * x).norm())
    }

    /// `V^{-1/2} η` through the eigenbasis.
    pub fn inv_sqrt_apply(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(eta)?;
        let s = self.spectrum();
        let mut coords = s.vectors.tr_mul(eta);
        for (c, l) in coords.iter_mut().zip(s.values.iter()) {
            *c /= l.sqrt();
        }
        Ok(&s.vectors * coords)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "dimension mismatch: expected {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Groups a descending eigenvalue list into distinct clusters.
pub fn cluster_eigenvalues(desc: &[f64]) -> Vec<f64> {
    let Some(&top) = desc.first() else {
        return Vec::new();
    };
    let tol = CLUSTER_TOL * top.abs().max(1.0);
    let mut out: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut anchor = top;
    for &v in desc {
        if count > 0 && (anchor - v).abs() > tol {
            out.push(sum / count as f64);
            sum = 0.0;
            count = 0;
        }
        if count == 0 {
            anchor = v;
        }
        sum += v;
        count += 1;
    }
    out.push(sum / count as f64);
    out
}

/// Response accumulator `Σ x_s r_s` and `θ̂_t = V_t⁻¹ Σ x_s r_s`.
#[derive(Debug, Clone)]
pub struct RlsEstimate {
    accumulator: DVector<f64>,
    theta_hat: DVector<f64>,
}

impl RlsEstimate {
    pub fn new(dim: usize) -> Self {
        RlsEstimate {
            accumulator: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
        }
    }

    pub fn accumulator(&self) -> &DVector<f64> {
        &self.accumulator
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    fn refresh(&mut self, state: &CovarianceState) {
        self.theta_hat = state.inverse() * &self.accumulator;
    }
}

/// Applies one observation `(x, r)` to both the covariance and the estimate.
pub fn rank_one_update(
    state: &mut CovarianceState,
    est: &mut RlsEstimate,
    x: &DVector<f64>,
    r: f64,
) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::invalid(format!("non-finite reward {r}")));
    }
    if est.accumulator.len() != state.dim() {
        return Err(Error::invalid("estimate and covariance dimensions differ"));
    }
    state.update(x)?;
    est.accumulator.axpy(r, x, 1.0);
    est.refresh(state);
    Ok(())
}
