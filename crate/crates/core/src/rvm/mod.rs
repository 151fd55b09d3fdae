//! Sparse Bayesian linear regression (relevance vector machine) over
//! explicit feature columns.
//!
//! The model is `t = Φw + ε` with `ε ~ N(0, β⁻¹I)` and an individual prior
//! precision `α_i` per weight. Posterior and evidence are computed in the
//! M-dimensional form: with `H = A + βΦᵀΦ`,
//!
//! ```text
//! Σ = H⁻¹,  m = βΣΦᵀt
//! ln p(t) = −½[N ln 2π − N ln β − Σ ln α_i + ln|H| + β‖t − Φm‖² + mᵀAm]
//! ```
//!
//! Precisions at or above [`ALPHA_INF`] mark a basis function as inactive.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod sequential;

pub use sequential::{
    sequential_fit, ActionKind, ActionRecord, BetaRecord, FitResult, FitTrace, RvmConfig,
    SequentialFitter, SweepOutcome,
};

/// Precisions at or above this value are treated as infinite.
pub const ALPHA_INF: f64 = 1e12;
/// Upper clamp for the noise precision.
pub const BETA_MAX: f64 = 1e12;
/// Columns with a smaller Euclidean norm are rejected.
pub const MIN_COLUMN_NORM: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub u64);

impl std::fmt::Display for FeatureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RvmError {
    #[error("target must have at least 2 finite values, got {0}")]
    TooFewRows(usize),
    #[error("target contains a non-finite value")]
    NonFiniteTarget,
    #[error("column {id} has {got} rows, expected {expected}")]
    LengthMismatch {
        id: FeatureId,
        expected: usize,
        got: usize,
    },
    #[error("column {id} contains a non-finite value")]
    NonFiniteColumn { id: FeatureId },
    #[error("column {id} has zero norm")]
    ZeroNorm { id: FeatureId },
    #[error("duplicate feature id {id}")]
    DuplicateId { id: FeatureId },
    #[error("no candidate columns")]
    NoCandidates,
    #[error("hyper-parameter out of range: {0}")]
    InvalidHyperparameter(String),
    #[error("no admissible basis: every candidate has q² ≤ s")]
    NoAdmissibleBasis,
    #[error("singular posterior over features {ids:?}")]
    SingularPosterior { ids: Vec<FeatureId> },
}

#[derive(Clone, Debug)]
pub struct Column {
    pub id: FeatureId,
    pub values: Arc<[f64]>,
}

/// Candidate feature columns over a fixed set of `n_rows` samples.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    n_rows: usize,
    columns: Vec<Column>,
}

impl DesignMatrix {
    pub fn new(n_rows: usize) -> DesignMatrix {
        DesignMatrix {
            n_rows,
            columns: Vec::new(),
        }
    }

    pub fn from_columns<I, V>(n_rows: usize, columns: I) -> Result<DesignMatrix, RvmError>
    where
        I: IntoIterator<Item = (FeatureId, V)>,
        V: Into<Arc<[f64]>>,
    {
        let mut dm = DesignMatrix::new(n_rows);
        for (id, values) in columns {
            dm.push(id, values)?;
        }
        Ok(dm)
    }

    /// Appends a column, enforcing finiteness, length, id uniqueness and a
    /// non-zero norm.
    pub fn push(&mut self, id: FeatureId, values: impl Into<Arc<[f64]>>) -> Result<(), RvmError> {
        let values = values.into();
        if values.len() != self.n_rows {
            return Err(RvmError::LengthMismatch {
                id,
                expected: self.n_rows,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RvmError::NonFiniteColumn { id });
        }
        if dot(&values, &values).sqrt() < MIN_COLUMN_NORM {
            return Err(RvmError::ZeroNorm { id });
        }
        if self.columns.iter().any(|c| c.id == id) {
            return Err(RvmError::DuplicateId { id });
        }
        self.columns.push(Column { id, values });
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn ids(&self) -> Vec<FeatureId> {
        self.columns.iter().map(|c| c.id).collect()
    }

    pub fn position(&self, id: FeatureId) -> Option<usize> {
        self.columns.iter().position(|c| c.id == id)
    }

    fn dense(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows, indices.len(), |r, c| {
            self.columns[indices[c]].values[r]
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A fitted sparse linear model over its active columns.
#[derive(Clone, Debug)]
pub struct SparseLinearModel {
    pub active: Vec<FeatureId>,
    columns: Vec<Arc<[f64]>>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    /// Posterior mean over `active`.
    pub mean: Vec<f64>,
    /// Posterior covariance over `active`.
    pub sigma: DMatrix<f64>,
    pub log_ml: f64,
}

impl SparseLinearModel {
    pub(crate) fn new(
        active: Vec<FeatureId>,
        columns: Vec<Arc<[f64]>>,
        alpha: Vec<f64>,
        beta: f64,
        mean: Vec<f64>,
        sigma: DMatrix<f64>,
        log_ml: f64,
    ) -> SparseLinearModel {
        SparseLinearModel {
            active,
            columns,
            alpha,
            beta,
            mean,
            sigma,
            log_ml,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn weight(&self, id: FeatureId) -> Option<f64> {
        self.active
            .iter()
            .position(|&a| a == id)
            .map(|j| self.mean[j])
    }

    /// `γ_i = 1 − α_i Σ_ii` per active basis.
    pub fn gamma(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .enumerate()
            .map(|(j, a)| 1.0 - a * self.sigma[(j, j)])
            .collect()
    }

    /// Training-set predictions `Φm`.
    pub fn fitted(&self) -> Vec<f64> {
        let n = self.columns.first().map_or(0, |c| c.len());
        let mut out = vec![0.0; n];
        for (col, w) in self.columns.iter().zip(&self.mean) {
            for (o, v) in out.iter_mut().zip(col.iter()) {
                *o += w * v;
            }
        }
        out
    }

    pub fn active_columns(&self) -> &[Arc<[f64]>] {
        &self.columns
    }

    /// The active columns as a design matrix.
    pub fn design(&self, n_rows: usize) -> DesignMatrix {
        DesignMatrix {
            n_rows,
            columns: self
                .active
                .iter()
                .zip(&self.columns)
                .map(|(id, v)| Column {
                    id: *id,
                    values: v.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// `ln|A + βΦᵀΦ|` of the factorized matrix.
    pub log_det_h: f64,
}

/// Cholesky of a symmetric positive-definite matrix, adding a diagonal
/// jitter of `1e-10 · trace / M` (growing tenfold) for up to `retries`
/// attempts after the first failure.
pub(crate) fn factor_spd(h: &DMatrix<f64>, retries: usize) -> Option<Cholesky<f64, Dyn>> {
    let ok = |c: &Cholesky<f64, Dyn>| {
        c.l_dirty()
            .diagonal()
            .iter()
            .all(|d| d.is_finite() && *d > 0.0)
    };
    if let Some(c) = h.clone().cholesky() {
        if ok(&c) {
            return Some(c);
        }
    }
    let m = h.nrows().max(1) as f64;
    let base = 1e-10 * h.trace().abs() / m;
    let mut jitter = if base > 0.0 { base } else { 1e-10 };
    for _ in 0..retries {
        let mut hj = h.clone();
        for i in 0..hj.nrows() {
            hj[(i, i)] += jitter;
        }
        if let Some(c) = hj.cholesky() {
            if ok(&c) {
                return Some(c);
            }
        }
        jitter *= 10.0;
    }
    None
}

pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

fn check_hyper(alpha: &[f64], beta: f64, m: usize) -> Result<(), RvmError> {
    if alpha.len() != m {
        return Err(RvmError::InvalidHyperparameter(format!(
            "{} precisions for {} columns",
            alpha.len(),
            m
        )));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(RvmError::InvalidHyperparameter(format!("beta = {}", beta)));
    }
    if let Some(a) = alpha.iter().find(|a| a.is_nan() || **a <= 0.0) {
        return Err(RvmError::InvalidHyperparameter(format!("alpha = {}", a)));
    }
    Ok(())
}

fn check_target(t: &[f64], n_rows: usize) -> Result<(), RvmError> {
    if t.len() != n_rows {
        return Err(RvmError::LengthMismatch {
            id: FeatureId(u64::MAX),
            expected: n_rows,
            got: t.len(),
        });
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(RvmError::NonFiniteTarget);
    }
    Ok(())
}

fn posterior_dense(
    phi: &DesignMatrix,
    idx: &[usize],
    t: &[f64],
    alpha: &[f64],
    beta: f64,
) -> Result<Posterior, RvmError> {
    let p = phi.dense(idx);
    let mut h = p.transpose() * &p * beta;
    for (j, a) in alpha.iter().enumerate() {
        h[(j, j)] += a;
    }
    let chol = factor_spd(&h, 3).ok_or_else(|| RvmError::SingularPosterior {
        ids: idx.iter().map(|&i| phi.columns[i].id).collect(),
    })?;
    let tv = DVector::from_column_slice(t);
    let mean = chol.solve(&(p.transpose() * tv)) * beta;
    let sigma = chol.inverse();
    Ok(Posterior {
        mean,
        sigma,
        log_det_h: log_det(&chol),
    })
}

/// Posterior over every column of `phi`: `Σ = (A + βΦᵀΦ)⁻¹`, `m = βΣΦᵀt`.
pub fn compute_posterior(
    phi: &DesignMatrix,
    t: &[f64],
    alpha: &[f64],
    beta: f64,
) -> Result<Posterior, RvmError> {
    check_target(t, phi.n_rows)?;
    check_hyper(alpha, beta, phi.len())?;
    let idx: Vec<usize> = (0..phi.len()).collect();
    posterior_dense(phi, &idx, t, alpha, beta)
}

/// Log marginal likelihood. Columns with `α ≥ ALPHA_INF` are excluded.
pub fn log_marginal(
    phi: &DesignMatrix,
    t: &[f64],
    alpha: &[f64],
    beta: f64,
) -> Result<f64, RvmError> {
    check_target(t, phi.n_rows)?;
    check_hyper(alpha, beta, phi.len())?;
    let n = t.len() as f64;
    let idx: Vec<usize> = (0..phi.len()).filter(|&i| alpha[i] < ALPHA_INF).collect();
    let tt = dot(t, t);
    if idx.is_empty() {
        return Ok(-0.5 * (n * LN_2PI - n * beta.ln() + beta * tt));
    }
    let a: Vec<f64> = idx.iter().map(|&i| alpha[i]).collect();
    let post = posterior_dense(phi, &idx, t, &a, beta)?;
    let mut resid = t.to_vec();
    for (k, &i) in idx.iter().enumerate() {
        let w = post.mean[k];
        for (r, v) in resid.iter_mut().zip(phi.columns[i].values.iter()) {
            *r -= w * v;
        }
    }
    let rss = dot(&resid, &resid);
    let prior: f64 = a.iter().zip(post.mean.iter()).map(|(a, m)| a * m * m).sum();
    let ln_alpha: f64 = a.iter().map(|a| a.ln()).sum();
    Ok(-0.5 * (n * LN_2PI - n * beta.ln() - ln_alpha + post.log_det_h + beta * rss + prior))
}

/// Sparsity and quality factors per candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisStats {
    /// `S_i`
    pub sparsity: Vec<f64>,
    /// `Q_i`
    pub quality: Vec<f64>,
    pub s: Vec<f64>,
    pub q: Vec<f64>,
}

impl BasisStats {
    /// `q_i² − s_i`; positive exactly when including basis `i` at its
    /// optimal precision raises the evidence.
    pub fn theta(&self, i: usize) -> f64 {
        self.q[i] * self.q[i] - self.s[i]
    }
}

/// `S_i = βφᵀφ − β²φᵀΦΣΦᵀφ` and `Q_i = βφᵀt − β²φᵀΦΣΦᵀt` against the
/// model's active set. Candidates whose id is active get
/// `s_i = α_i S_i / (α_i − S_i)`, `q_i = α_i Q_i / (α_i − S_i)`; all others
/// have `s_i = S_i`, `q_i = Q_i`.
pub fn basis_stats(model: &SparseLinearModel, candidates: &DesignMatrix, t: &[f64]) -> BasisStats {
    let beta = model.beta;
    let m = model.len();
    let k = candidates.len();
    let mut out = BasisStats {
        sparsity: Vec::with_capacity(k),
        quality: Vec::with_capacity(k),
        s: Vec::with_capacity(k),
        q: Vec::with_capacity(k),
    };
    let phi_t: Vec<f64> = model.columns.iter().map(|c| dot(c, t)).collect();
    let sigma_b = &model.sigma * DVector::from_vec(phi_t);
    for col in &candidates.columns {
        let v = DVector::from_iterator(m, model.columns.iter().map(|c| dot(c, &col.values)));
        let sv = &model.sigma * &v;
        let big_s = beta * dot(&col.values, &col.values) - beta * beta * v.dot(&sv);
        let big_q = beta * dot(&col.values, t) - beta * beta * v.dot(&sigma_b);
        let (s, q) = match model.active.iter().position(|&a| a == col.id) {
            Some(j) => {
                let a = model.alpha[j];
                (a * big_s / (a - big_s), a * big_q / (a - big_s))
            }
            None => (big_s, big_q),
        };
        out.sparsity.push(big_s);
        out.quality.push(big_q);
        out.s.push(s);
        out.q.push(q);
    }
    out
}

/// `β = (N − Σγ) / ‖t − Φm‖²`, clamped to `beta_max` for a zero residual or
/// a denominator below `1e-9`.
pub fn beta_from_residual(rss: f64, n: usize, gamma_sum: f64, beta_max: f64) -> f64 {
    let dof = n as f64 - gamma_sum;
    if dof < 1e-9 || rss <= 0.0 {
        return beta_max;
    }
    (dof / rss).min(beta_max)
}

/// Noise precision re-estimate for `model` against target `t`.
pub fn reestimate_beta(model: &SparseLinearModel, t: &[f64], beta_max: f64) -> f64 {
    let fitted = model.fitted();
    let rss: f64 = if fitted.is_empty() {
        dot(t, t)
    } else {
        t.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let gamma_sum: f64 = model.gamma().iter().sum();
    beta_from_residual(rss, t.len(), gamma_sum, beta_max)
}
