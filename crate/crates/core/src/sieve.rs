//! Truncated polynomial and spline sieve estimators for the RU risk.
//!
//! The sieve spaces are spans of tensor-product feature maps on the unit
//! cube: per-coordinate monomials up to degree `J`, or truncated-power spline
//! bases of order `r` with fixed interior knots. Estimates are truncated to
//! `[-2B, 2B]` for the decision rule and `[0, M_u]` for the auxiliary
//! function; the truncation is a technical device and the default bounds are
//! generous enough that they rarely bind.

use crate::data::{RegressionDataset, Split};
use crate::loss::{ru_loss_from_base, ru_loss_grad, BaseLoss, GammaBand};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SieveError {
    #[error("tensor-product bases are limited to dimension <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("input dimension {got}, basis expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("input outside the rescaled unit cube: coordinate {index} maps to {value}")]
    OutsideDomain { index: usize, value: f64 },
    #[error("coefficient length {got}, basis dimension {expected}")]
    CoefficientMismatch { got: usize, expected: usize },
    #[error("train split is empty")]
    EmptyTrain,
    #[error("fit did not converge: final gradient norm {grad_norm}")]
    NoConvergence { grad_norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Monomials `1, u, ..., u^J` per coordinate.
    Polynomial { degree: usize },
    /// Truncated-power basis `1, u, ..., u^{r-1}, (u - t_j)_+^{r-1}`.
    Spline { order: usize, knots: Vec<f64> },
}

/// Feature map plus the affine rescaling to the unit cube and the truncation
/// bounds of the two estimated functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveBasis {
    kind: BasisKind,
    dim: usize,
    /// Per-coordinate `(lo, hi)` input ranges mapped onto `[0, 1]`.
    ranges: Vec<(f64, f64)>,
    /// Outcome bound `B`; the decision rule is clamped to `[-2B, 2B]`.
    outcome_bound: f64,
    /// Upper truncation `M_u` of the auxiliary function.
    alpha_bound: f64,
}

impl SieveBasis {
    pub fn polynomial(
        degree: usize,
        ranges: Vec<(f64, f64)>,
        outcome_bound: f64,
        alpha_bound: f64,
    ) -> Result<Self, SieveError> {
        Self::validate_common(&ranges, outcome_bound, alpha_bound)?;
        Ok(Self {
            kind: BasisKind::Polynomial { degree },
            dim: ranges.len(),
            ranges,
            outcome_bound,
            alpha_bound,
        })
    }

    pub fn spline(
        order: usize,
        knots: Vec<f64>,
        ranges: Vec<(f64, f64)>,
        outcome_bound: f64,
        alpha_bound: f64,
    ) -> Result<Self, SieveError> {
        Self::validate_common(&ranges, outcome_bound, alpha_bound)?;
        if order < 1 {
            return Err(SieveError::InvalidBasis("spline order must be >= 1".into()));
        }
        let mut prev = 0.0;
        for &t in &knots {
            if !(t > prev && t < 1.0) {
                return Err(SieveError::InvalidBasis(format!(
                    "knots must be strictly increasing inside (0, 1), got {knots:?}"
                )));
            }
            prev = t;
        }
        Ok(Self {
            kind: BasisKind::Spline { order, knots },
            dim: ranges.len(),
            ranges,
            outcome_bound,
            alpha_bound,
        })
    }

    fn validate_common(
        ranges: &[(f64, f64)],
        outcome_bound: f64,
        alpha_bound: f64,
    ) -> Result<(), SieveError> {
        if ranges.is_empty() {
            return Err(SieveError::InvalidBasis("need at least one input range".into()));
        }
        if ranges.len() > 3 {
            return Err(SieveError::DimensionTooLarge(ranges.len()));
        }
        for &(lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SieveError::InvalidBasis(format!("bad input range ({lo}, {hi})")));
            }
        }
        if !(outcome_bound.is_finite() && outcome_bound > 0.0) {
            return Err(SieveError::InvalidBasis("outcome bound must be positive".into()));
        }
        if !(alpha_bound.is_finite() && alpha_bound > 0.0) {
            return Err(SieveError::InvalidBasis("alpha bound must be positive".into()));
        }
        Ok(())
    }

    /// `count` uniformly spaced interior knots on (0, 1); mesh ratio 1.
    pub fn uniform_knots(count: usize) -> Vec<f64> {
        (1..=count).map(|j| j as f64 / (count + 1) as f64).collect()
    }

    /// Ratio of the largest to the smallest knot gap, boundaries included.
    pub fn mesh_ratio(&self) -> f64 {
        match &self.kind {
            BasisKind::Polynomial { .. } => 1.0,
            BasisKind::Spline { knots, .. } => {
                let mut gaps = Vec::with_capacity(knots.len() + 1);
                let mut prev = 0.0;
                for &t in knots {
                    gaps.push(t - prev);
                    prev = t;
                }
                gaps.push(1.0 - prev);
                let max = gaps.iter().cloned().fold(f64::MIN, f64::max);
                let min = gaps.iter().cloned().fold(f64::MAX, f64::min);
                max / min
            }
        }
    }

    /// Truncation bounds `(B, M_u)` calibrated from a train split:
    /// `B = max |y|` and `M_u` the squared loss at a `4B` residual.
    pub fn calibrate_bounds(dataset: &RegressionDataset, loss: &BaseLoss) -> (f64, f64) {
        let (_, y) = dataset.split_rows(Split::Train);
        let b = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-6);
        (b, loss.value(0.0, 4.0 * b))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h_bounds(&self) -> (f64, f64) {
        (-2.0 * self.outcome_bound, 2.0 * self.outcome_bound)
    }

    pub fn alpha_bounds(&self) -> (f64, f64) {
        (0.0, self.alpha_bound)
    }

    fn features_1d(&self, u: f64, out: &mut Vec<f64>) {
        match &self.kind {
            BasisKind::Polynomial { degree } => {
                let mut p = 1.0;
                for _ in 0..=*degree {
                    out.push(p);
                    p *= u;
                }
            }
            BasisKind::Spline { order, knots } => {
                let mut p = 1.0;
                for _ in 0..*order {
                    out.push(p);
                    p *= u;
                }
                for &t in knots {
                    out.push((u - t).max(0.0).powi(*order as i32 - 1));
                }
            }
        }
    }

    /// Number of features of the tensor-product map.
    pub fn len(&self) -> usize {
        let per_dim = match &self.kind {
            BasisKind::Polynomial { degree } => degree + 1,
            BasisKind::Spline { order, knots } => order + knots.len(),
        };
        per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluate the feature map. Inputs are affinely rescaled to the unit
    /// cube first; values outside it (beyond a small tolerance) are a domain
    /// error.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>, SieveError> {
        if x.len() != self.dim {
            return Err(SieveError::DimensionMismatch { got: x.len(), expected: self.dim });
        }
        let mut acc = vec![1.0];
        let mut per_dim = Vec::new();
        for (i, (&v, &(lo, hi))) in x.iter().zip(&self.ranges).enumerate() {
            let u = (v - lo) / (hi - lo);
            if !(-1e-9..=1.0 + 1e-9).contains(&u) {
                return Err(SieveError::OutsideDomain { index: i, value: u });
            }
            let u = u.clamp(0.0, 1.0);
            per_dim.clear();
            self.features_1d(u, &mut per_dim);
            let mut next = Vec::with_capacity(acc.len() * per_dim.len());
            for g in &per_dim {
                for f in &acc {
                    next.push(f * g);
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    fn feature_matrix(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>, SieveError> {
        let n = x.nrows();
        let m = self.len();
        let mut phi = Array2::zeros((n, m));
        for i in 0..n {
            let row = x.row(i);
            let feats = self.features(row.as_slice().expect("contiguous row"))?;
            for (j, f) in feats.iter().enumerate() {
                phi[[i, j]] = *f;
            }
        }
        Ok(phi)
    }
}

/// Fitted sieve pair: coefficients for `h` and for `α` over a shared basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveModel {
    pub basis: SieveBasis,
    pub h_coeffs: Array1<f64>,
    pub alpha_coeffs: Array1<f64>,
}

impl SieveModel {
    pub fn new(
        basis: SieveBasis,
        h_coeffs: Array1<f64>,
        alpha_coeffs: Array1<f64>,
    ) -> Result<Self, SieveError> {
        if h_coeffs.len() != basis.len() {
            return Err(SieveError::CoefficientMismatch {
                got: h_coeffs.len(),
                expected: basis.len(),
            });
        }
        if alpha_coeffs.len() != basis.len() {
            return Err(SieveError::CoefficientMismatch {
                got: alpha_coeffs.len(),
                expected: basis.len(),
            });
        }
        Ok(Self { basis, h_coeffs, alpha_coeffs })
    }

    /// Clamped predictions `(h(x), α(x))`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), SieveError> {
        let feats = self.basis.features(x)?;
        let raw_h: f64 = feats.iter().zip(&self.h_coeffs).map(|(f, c)| f * c).sum();
        let raw_a: f64 = feats.iter().zip(&self.alpha_coeffs).map(|(f, c)| f * c).sum();
        let (h_lo, h_hi) = self.basis.h_bounds();
        let (a_lo, a_hi) = self.basis.alpha_bounds();
        Ok((raw_h.clamp(h_lo, h_hi), raw_a.clamp(a_lo, a_hi)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sieve model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SieveError> {
        serde_json::from_str(text).map_err(|e| SieveError::InvalidBasis(e.to_string()))
    }
}

/// `J_n` schedule of the sieve dimension: `round((n / ln n)^{1/(2p + d)})`,
/// at least 1.
pub fn jn_schedule(n: usize, p_smooth: f64, d: usize) -> usize {
    let n = n.max(3) as f64;
    let exponent = 1.0 / (2.0 * p_smooth + d as f64);
    ((n / n.ln()).powf(exponent).round() as usize).max(1)
}

/// Empirical RU risk of a coefficient pair over explicit rows. With
/// `clamped = false` the raw linear predictions enter the loss, which is the
/// convex objective the optimizer sees away from the truncation boundary.
pub fn empirical_ru_objective(
    basis: &SieveBasis,
    h_coeffs: &ArrayView1<f64>,
    alpha_coeffs: &ArrayView1<f64>,
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    band: &GammaBand,
    loss: &BaseLoss,
    clamped: bool,
) -> Result<f64, SieveError> {
    let phi = basis.feature_matrix(x)?;
    let mut h = phi.dot(h_coeffs);
    let mut a = phi.dot(alpha_coeffs);
    if clamped {
        let (h_lo, h_hi) = basis.h_bounds();
        let (a_lo, a_hi) = basis.alpha_bounds();
        h.mapv_inplace(|v| v.clamp(h_lo, h_hi));
        a.mapv_inplace(|v| v.clamp(a_lo, a_hi));
    }
    let n = y.len() as f64;
    let total: f64 = h
        .iter()
        .zip(a.iter())
        .zip(y.iter())
        .map(|((&z, &av), &yv)| ru_loss_from_base(loss.value(z, yv), av, band))
        .sum();
    Ok(total / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { learning_rate: 0.02, max_iters: 20_000, grad_tol: 1e-7 }
    }
}

/// Minimize the empirical RU risk over the sieve coefficients by full-batch
/// subgradient descent with Adam, zero-initialized. Truncation enters through
/// the clamped prediction with subgradient 0 across active clamps. Returns the
/// best iterate by training objective.
pub fn fit(
    dataset: &RegressionDataset,
    basis: &SieveBasis,
    band: &GammaBand,
    loss: &BaseLoss,
    opts: &FitOptions,
) -> Result<SieveModel, SieveError> {
    let (x, y) = dataset.split_rows(Split::Train);
    if x.nrows() == 0 {
        return Err(SieveError::EmptyTrain);
    }
    let phi = basis.feature_matrix(&x.view())?;
    let n = x.nrows() as f64;
    let m = basis.len();
    let (h_lo, h_hi) = basis.h_bounds();
    let (a_lo, a_hi) = basis.alpha_bounds();

    let mut coeffs = Array1::<f64>::zeros(2 * m);
    let mut adam_m = Array1::<f64>::zeros(2 * m);
    let mut adam_v = Array1::<f64>::zeros(2 * m);
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);

    let mut best_obj = f64::INFINITY;
    let mut best = coeffs.clone();
    let mut grad_norm = f64::INFINITY;
    for t in 1..=opts.max_iters {
        let ch = coeffs.slice(ndarray::s![..m]);
        let ca = coeffs.slice(ndarray::s![m..]);
        let raw_h = phi.dot(&ch);
        let raw_a = phi.dot(&ca);

        let mut obj = 0.0;
        let mut dh = Array1::<f64>::zeros(x.nrows());
        let mut da = Array1::<f64>::zeros(x.nrows());
        for i in 0..x.nrows() {
            let h = raw_h[i].clamp(h_lo, h_hi);
            let a = raw_a[i].clamp(a_lo, a_hi);
            obj += ru_loss_from_base(loss.value(h, y[i]), a, band);
            let (dz, dav) = ru_loss_grad(h, a, y[i], band, loss)
                .map_err(|_| SieveError::NoConvergence { grad_norm })?;
            // Subgradient 0 through active clamps.
            dh[i] = if raw_h[i] > h_lo && raw_h[i] < h_hi { dz / n } else { 0.0 };
            da[i] = if raw_a[i] > a_lo && raw_a[i] < a_hi { dav / n } else { 0.0 };
        }
        obj /= n;
        if obj < best_obj {
            best_obj = obj;
            best.assign(&coeffs);
        }

        let gh = phi.t().dot(&dh);
        let ga = phi.t().dot(&da);
        grad_norm = gh.iter().chain(ga.iter()).map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() || !obj.is_finite() {
            return Err(SieveError::NoConvergence { grad_norm });
        }
        if grad_norm <= opts.grad_tol {
            break;
        }

        let bc1 = 1.0 - beta1_pow(beta1, t);
        let bc2 = 1.0 - beta1_pow(beta2, t);
        for (j, g) in gh.iter().chain(ga.iter()).enumerate() {
            adam_m[j] = beta1 * adam_m[j] + (1.0 - beta1) * g;
            adam_v[j] = beta2 * adam_v[j] + (1.0 - beta2) * g * g;
            let m_hat = adam_m[j] / bc1;
            let v_hat = adam_v[j] / bc2;
            coeffs[j] -= opts.learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }

    if !best_obj.is_finite() {
        return Err(SieveError::NoConvergence { grad_norm });
    }
    let h_coeffs = best.slice(ndarray::s![..m]).to_owned();
    let alpha_coeffs = best.slice(ndarray::s![m..]).to_owned();
    SieveModel::new(basis.clone(), h_coeffs, alpha_coeffs)
}

fn beta1_pow(beta: f64, t: usize) -> f64 {
    beta.powi(t as i32)
}
