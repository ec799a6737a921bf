//! Ground-truth robustness computations used to validate the estimators.
//!
//! Two independent routes to the worst-case risk over the `Γ`-band are
//! provided for discrete loss distributions: a greedy mass-pouring solution of
//! the underlying linear program, and the quantile-threshold weight function
//! with the boundary atom split fractionally. They share no code and must
//! agree to 1e-10, which is the backbone property test of this module.
//!
//! For Gaussian-mixture conditional laws (the synthetic data models), the
//! module computes conditional loss quantiles by bisection on the mixture CDF
//! and per-covariate RU minimizers by quadrature plus coordinate descent.

use crate::loss::{BaseLoss, GammaBand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid discrete distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("eta must lie in (0, 1), got {0}")]
    InvalidEta(f64),
    #[error("bisection bracket failure: F({t_max}) = {f_at_max} < eta = {eta}")]
    BracketFailure { t_max: f64, f_at_max: f64, eta: f64 },
    #[error("minimizer did not converge after {rounds} rounds (last objective {objective})")]
    NoConvergence { rounds: usize, objective: f64 },
}

/// A finitely supported loss distribution: atoms with strictly positive
/// probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLossDistribution {
    losses: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteLossDistribution {
    pub fn new(losses: Vec<f64>, probs: Vec<f64>) -> Result<Self, OracleError> {
        if losses.len() != probs.len() {
            return Err(OracleError::InvalidDistribution(format!(
                "{} losses vs {} probabilities",
                losses.len(),
                probs.len()
            )));
        }
        if losses.is_empty() {
            return Err(OracleError::InvalidDistribution("empty support".into()));
        }
        for &l in &losses {
            if !l.is_finite() || l < 0.0 {
                return Err(OracleError::InvalidDistribution(format!(
                    "loss {l} is not a nonnegative finite real"
                )));
            }
        }
        for &p in &probs {
            if !p.is_finite() || p <= 0.0 {
                return Err(OracleError::InvalidDistribution(format!(
                    "probability {p} is not strictly positive"
                )));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { losses, probs })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.losses.iter().zip(&self.probs).map(|(l, p)| l * p).sum()
    }
}

/// Worst-case expected loss over likelihood ratios in `[Γ⁻¹, Γ]`, solved by
/// the greedy fractional-knapsack rule: start every atom at its floor
/// `Γ⁻¹·pᵢ` and pour the remaining mass into atoms in decreasing loss order,
/// capping each at `Γ·pᵢ`.
pub fn worstcase_risk_discrete(dist: &DiscreteLossDistribution, band: &GammaBand) -> f64 {
    let mut order: Vec<usize> = (0..dist.losses.len()).collect();
    order.sort_by(|&i, &j| dist.losses[j].partial_cmp(&dist.losses[i]).unwrap());

    let mut q: Vec<f64> = dist.probs.iter().map(|p| band.inv_gamma() * p).collect();
    let mut remaining = 1.0 - band.inv_gamma();
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let cap = band.c_relu() * dist.probs[i];
        let add = cap.min(remaining);
        q[i] += add;
        remaining -= add;
    }
    q.iter().zip(&dist.losses).map(|(qi, li)| qi * li).sum()
}

/// Worst-case expected loss via the quantile-threshold weight function
/// `Γ⁻¹ + (Γ − Γ⁻¹)·𝟙{L ≥ q_η(Γ)}`, made exact for atoms: mass strictly above
/// the `η(Γ)`-quantile gets weight `Γ`, mass strictly below gets `Γ⁻¹`, and
/// the atom at the quantile receives the residual weight.
pub fn worstcase_risk_np(dist: &DiscreteLossDistribution, band: &GammaBand) -> f64 {
    let mut pairs: Vec<(f64, f64)> = dist
        .losses
        .iter()
        .copied()
        .zip(dist.probs.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Right-continuous inverse CDF: first atom with cumulative mass >= eta.
    let eta = band.eta();
    let mut cum = 0.0;
    let mut quantile = pairs[pairs.len() - 1].0;
    for &(l, p) in &pairs {
        cum += p;
        if cum >= eta {
            quantile = l;
            break;
        }
    }

    let mut mass_above = 0.0;
    let mut mass_below = 0.0;
    let mut mass_at = 0.0;
    let mut risk_above = 0.0;
    let mut risk_below = 0.0;
    for &(l, p) in &pairs {
        if l > quantile {
            mass_above += p;
            risk_above += p * l;
        } else if l < quantile {
            mass_below += p;
            risk_below += p * l;
        } else {
            mass_at += p;
        }
    }
    let residual_weight =
        (1.0 - band.gamma() * mass_above - band.inv_gamma() * mass_below) / mass_at;
    band.gamma() * risk_above
        + band.inv_gamma() * risk_below
        + residual_weight * mass_at * quantile
}

/// Conditional value-at-risk at level `eta`: the expectation of the loss over
/// its upper `(1 − eta)` tail, with the boundary atom taken fractionally.
pub fn cvar_discrete(dist: &DiscreteLossDistribution, eta: f64) -> Result<f64, OracleError> {
    if !(0.0..1.0).contains(&eta) || eta <= 0.0 || !eta.is_finite() {
        return Err(OracleError::InvalidEta(eta));
    }
    let mut pairs: Vec<(f64, f64)> = dist
        .losses
        .iter()
        .copied()
        .zip(dist.probs.iter().copied())
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let tail = 1.0 - eta;
    let mut left = tail;
    let mut acc = 0.0;
    for &(l, p) in &pairs {
        if left <= 0.0 {
            break;
        }
        let take = p.min(left);
        acc += take * l;
        left -= take;
    }
    Ok(acc / tail)
}

/// A one-dimensional Gaussian mixture, the conditional outcome law of the
/// synthetic data models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture1D {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl GaussianMixture1D {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self, OracleError> {
        if weights.len() != means.len() || weights.len() != sds.len() {
            return Err(OracleError::InvalidMixture("component length mismatch".into()));
        }
        if weights.is_empty() {
            return Err(OracleError::InvalidMixture("empty mixture".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(OracleError::InvalidMixture("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidMixture(format!(
                "weights sum to {total}, not 1"
            )));
        }
        if sds.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(OracleError::InvalidMixture("standard deviations must be positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(OracleError::InvalidMixture("non-finite mean".into()));
        }
        Ok(Self { weights, means, sds })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// Mixture CDF.
    pub fn cdf(&self, y: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * normal_cdf((y - m) / s))
            .sum()
    }

    /// CDF of the squared-loss variable `(Y − h)²` at level `t`.
    pub fn loss_cdf(&self, h: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let r = t.sqrt();
        self.cdf(h + r) - self.cdf(h - r)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// The `eta`-quantile of the squared loss `(Y − h)²` when `Y` follows `mix`,
/// found by bisection on `t ↦ Φ_mix(h + √t) − Φ_mix(h − √t)`.
pub fn mixture_loss_quantile(
    h: f64,
    eta: f64,
    mix: &GaussianMixture1D,
) -> Result<f64, OracleError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(OracleError::InvalidEta(eta));
    }
    // Initial bracket from the mixture support; expand geometrically if the
    // target mass is not yet covered.
    let mut t_hi = mix
        .means
        .iter()
        .zip(&mix.sds)
        .map(|(m, s)| ((m - h).abs() + 8.0 * s).powi(2))
        .fold(1.0f64, f64::max);
    let mut expansions = 0;
    while mix.loss_cdf(h, t_hi) < eta {
        t_hi *= 4.0;
        expansions += 1;
        if expansions > 60 {
            return Err(OracleError::BracketFailure {
                t_max: t_hi,
                f_at_max: mix.loss_cdf(h, t_hi),
                eta,
            });
        }
    }
    let mut lo = 0.0;
    let mut hi = t_hi;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let f = mix.loss_cdf(h, mid);
        if (f - eta).abs() <= 1e-10 {
            return Ok(mid);
        }
        if f < eta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let f = mix.loss_cdf(h, t);
    if (f - eta).abs() <= 1e-10 {
        Ok(t)
    } else {
        Err(OracleError::BracketFailure { t_max: t, f_at_max: f, eta })
    }
}

/// Result of the per-covariate RU minimization.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalMinimizer {
    pub h_star: f64,
    pub alpha_star: f64,
    pub objective: f64,
}

/// Number of trapezoid quadrature nodes per mixture component.
const QUAD_NODES: usize = 64001;
/// Quadrature support half-width in standard deviations per component.
const QUAD_SPAN: f64 = 8.0;

struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// Trapezoid discretization of the mixture density, one panel of
    /// `QUAD_NODES` nodes per component, merged and sorted by node location.
    /// Weights are normalized to sum exactly to one so that the discretized
    /// law is a probability distribution.
    fn for_mixture(mix: &GaussianMixture1D) -> Self {
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(QUAD_NODES * mix.weights.len());
        for ((w, m), s) in mix.weights.iter().zip(&mix.means).zip(&mix.sds) {
            if *w == 0.0 {
                continue;
            }
            let step = 2.0 * QUAD_SPAN / (QUAD_NODES - 1) as f64;
            for j in 0..QUAD_NODES {
                let z = -QUAD_SPAN + j as f64 * step;
                let y = m + s * z;
                let endpoint = j == 0 || j == QUAD_NODES - 1;
                let trap = if endpoint { 0.5 } else { 1.0 };
                atoms.push((y, w * trap * normal_pdf(z) * step));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        Self {
            nodes: atoms.iter().map(|a| a.0).collect(),
            weights: atoms.iter().map(|a| a.1 / total).collect(),
        }
    }

    /// Minimize the RU objective over `a` for a fixed prediction `h`.
    ///
    /// The discretized objective is piecewise linear and convex in `a`, so the
    /// minimizer is the `η(Γ)`-quantile of the discretized loss law. The loss
    /// is V-shaped in the node location, giving two atom streams with
    /// ascending losses (nodes below `h` walked downward, nodes above walked
    /// upward). Each stream's CDF is reconstructed piecewise linearly through
    /// its panel midpoints — interpolating the merged stream directly would
    /// leave a first-order error of half an atom weight — and the quantile is
    /// the crossing of their sum. Returns `(a*, objective at (h, a*))`.
    fn min_over_a(&self, h: f64, band: &GammaBand, loss: &BaseLoss) -> (f64, f64) {
        let n = self.nodes.len();
        // First node >= h; stream A is below the split, stream B above.
        let split = self.nodes.partition_point(|&y| y < h);
        let eta = band.eta();

        let a_loss = |i: usize| loss.value(h, self.nodes[split - 1 - i]);
        let a_weight = |i: usize| self.weights[split - 1 - i];
        let b_loss = |i: usize| loss.value(h, self.nodes[split + i]);
        let b_weight = |i: usize| self.weights[split + i];
        let (a_len, b_len) = (split, n - split);

        // Per-stream state: atoms consumed, consumed mass, last midpoint
        // point (loss, cdf).
        let (mut ai, mut bi) = (0usize, 0usize);
        let (mut a_cum, mut b_cum) = (0.0f64, 0.0f64);
        let mut a_prev: Option<(f64, f64)> = None;
        let mut b_prev: Option<(f64, f64)> = None;

        // Piecewise-linear CDF of one stream evaluated at `l`.
        let interp = |l: f64,
                      prev: Option<(f64, f64)>,
                      next: Option<(f64, f64)>,
                      total: f64|
         -> f64 {
            match (prev, next) {
                (Some((lp, fp)), Some((ln, fn_))) => {
                    if ln > lp {
                        fp + (l - lp) / (ln - lp) * (fn_ - fp)
                    } else {
                        fp
                    }
                }
                (Some((_, fp)), None) => fp.max(total),
                (None, Some((ln, fn_))) => {
                    if l >= ln {
                        fn_
                    } else {
                        0.0
                    }
                }
                (None, None) => total,
            }
        };

        let mut alpha = f64::NAN;
        let mut prev_point: Option<(f64, f64)> = None;
        while ai < a_len || bi < b_len {
            let la = if ai < a_len { a_loss(ai) } else { f64::INFINITY };
            let lb = if bi < b_len { b_loss(bi) } else { f64::INFINITY };
            let from_a = la <= lb;
            let (l, f_here) = if from_a {
                let w = a_weight(ai);
                let own = a_cum + 0.5 * w;
                let other = interp(
                    la,
                    b_prev,
                    (bi < b_len).then(|| (lb, b_cum + 0.5 * b_weight(bi))),
                    b_cum,
                );
                a_prev = Some((la, own));
                a_cum += w;
                ai += 1;
                (la, own + other)
            } else {
                let w = b_weight(bi);
                let own = b_cum + 0.5 * w;
                let other = interp(
                    lb,
                    a_prev,
                    (ai < a_len).then(|| (la, a_cum + 0.5 * a_weight(ai))),
                    a_cum,
                );
                b_prev = Some((lb, own));
                b_cum += w;
                bi += 1;
                (lb, own + other)
            };
            if f_here >= eta {
                alpha = match prev_point {
                    Some((lp, fp)) if f_here > fp && l > lp => {
                        lp + (eta - fp) / (f_here - fp) * (l - lp)
                    }
                    _ => l,
                };
                break;
            }
            prev_point = Some((l, f_here));
        }
        if alpha.is_nan() {
            alpha = prev_point.map_or(0.0, |(l, _)| l);
        }

        let mut mean_loss = 0.0;
        let mut hinge = 0.0;
        for (y, w) in self.nodes.iter().zip(&self.weights) {
            let l = loss.value(h, *y);
            mean_loss += w * l;
            hinge += w * (l - alpha).max(0.0);
        }
        let objective = band.inv_gamma() * mean_loss + band.c_lin() * alpha + band.c_relu() * hinge;
        (alpha, objective)
    }
}

/// Per-covariate RU minimizer: the pair `(h*, α*)` minimizing the expected RU
/// loss under the given conditional mixture.
///
/// A coarse grid over the mixture support (means ± 6 sd) locates the basin;
/// coordinate descent then refines: the `a`-coordinate is minimized exactly on
/// the quadrature atoms and the `h`-coordinate by golden-section search. The
/// joint objective is convex, so this is robust if unhurried.
pub fn conditional_ru_minimizer(
    mix: &GaussianMixture1D,
    band: &GammaBand,
    loss: &BaseLoss,
) -> Result<ConditionalMinimizer, OracleError> {
    let quad = Quadrature::for_mixture(mix);
    let lo = mix
        .means
        .iter()
        .zip(&mix.sds)
        .map(|(m, s)| m - 6.0 * s)
        .fold(f64::INFINITY, f64::min);
    let hi = mix
        .means
        .iter()
        .zip(&mix.sds)
        .map(|(m, s)| m + 6.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);

    let g = |h: f64| quad.min_over_a(h, band, loss).1;

    const GRID: usize = 81;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..GRID {
        let v = g(lo + i as f64 * step);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    if !best_v.is_finite() {
        return Err(OracleError::NoConvergence { rounds: 0, objective: best_v });
    }

    // Golden-section refinement on the bracketing cells.
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    let mut rounds = 0;
    while b - a > 1e-10 * (1.0 + b.abs()) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = g(x2);
        }
        rounds += 1;
        if rounds > 200 {
            return Err(OracleError::NoConvergence { rounds, objective: f1.min(f2) });
        }
    }
    let h_star = 0.5 * (a + b);
    let (alpha_star, objective) = quad.min_over_a(h_star, band, loss);
    if !objective.is_finite() || !alpha_star.is_finite() {
        return Err(OracleError::NoConvergence { rounds, objective });
    }
    Ok(ConditionalMinimizer { h_star, alpha_star, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{ru_loss_from_base, GammaBand};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band(g: f64) -> GammaBand {
        GammaBand::new(g).unwrap()
    }

    fn uniform4() -> DiscreteLossDistribution {
        DiscreteLossDistribution::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.25; 4]).unwrap()
    }

    fn random_dist(rng: &mut ChaCha8Rng) -> DiscreteLossDistribution {
        let n = rng.gen_range(2..=50);
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        // Force an exact unit sum so the invariant check passes.
        let correction: f64 = 1.0 - probs.iter().sum::<f64>();
        probs[0] += correction;
        DiscreteLossDistribution::new(losses, probs).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteLossDistribution::new(vec![1.0], vec![1.0]).is_ok());
        assert!(DiscreteLossDistribution::new(vec![1.0, 2.0], vec![0.5]).is_err());
        assert!(DiscreteLossDistribution::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteLossDistribution::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(DiscreteLossDistribution::new(vec![-1.0, 2.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn greedy_hand_example() {
        // q = (1/12, 1/12, 1/12, 3/4), risk = 3/12 + 9/4 = 2.5
        let risk = worstcase_risk_discrete(&uniform4(), &band(3.0));
        assert!((risk - 2.5).abs() < 1e-12, "risk = {risk}");
    }

    #[test]
    fn greedy_gamma_to_one_gives_mean() {
        let risk = worstcase_risk_discrete(&uniform4(), &band(1.0 + 1e-9));
        assert!((risk - 1.5).abs() < 1e-6);
    }

    #[test]
    fn greedy_constant_losses() {
        let dist =
            DiscreteLossDistribution::new(vec![4.2; 3], vec![0.2, 0.3, 0.5]).unwrap();
        for g in [1.5, 3.0, 17.0] {
            assert!((worstcase_risk_discrete(&dist, &band(g)) - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn np_hand_example_and_single_atom() {
        let risk = worstcase_risk_np(&uniform4(), &band(3.0));
        assert!((risk - 2.5).abs() < 1e-12, "risk = {risk}");
        let single = DiscreteLossDistribution::new(vec![7.0], vec![1.0]).unwrap();
        for g in [1.2, 5.0] {
            assert!((worstcase_risk_np(&single, &band(g)) - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn np_agrees_with_greedy_on_random_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let dist = random_dist(&mut rng);
            let gamma = rng.gen_range(1.0f64..20.0).max(1.0 + 1e-9);
            let b = band(gamma);
            let lp = worstcase_risk_discrete(&dist, &b);
            let np = worstcase_risk_np(&dist, &b);
            assert!(
                (lp - np).abs() <= 1e-10 * lp.abs().max(1.0),
                "gamma={gamma}: greedy {lp} vs np {np}"
            );
        }
    }

    #[test]
    fn worstcase_dominates_mean_and_is_monotone_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let dist = random_dist(&mut rng);
            let mean = dist.mean();
            let mut prev = mean;
            for g in [1.5, 2.0, 4.0, 8.0, 16.0] {
                let risk = worstcase_risk_discrete(&dist, &band(g));
                assert!(risk >= mean - 1e-12);
                assert!(risk >= prev - 1e-10, "not monotone at gamma={g}");
                prev = risk;
            }
            // Strict dominance for non-constant losses.
            let spread = dist
                .losses()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
                    (lo.min(l), hi.max(l))
                });
            if spread.1 - spread.0 > 1e-6 {
                assert!(worstcase_risk_discrete(&dist, &band(2.0)) > mean + 1e-12);
            }
        }
    }

    #[test]
    fn cvar_hand_example() {
        let dist = DiscreteLossDistribution::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.25; 4]).unwrap();
        let cvar = cvar_discrete(&dist, 0.75).unwrap();
        assert!((cvar - 4.0).abs() < 1e-12);
        // Independent route: grid-minimize a + (1-eta)^{-1} E[(L-a)+].
        let mut best = f64::INFINITY;
        let mut a = 0.0;
        while a <= 5.0 {
            let hinge: f64 = dist
                .losses()
                .iter()
                .zip(dist.probs())
                .map(|(l, p)| p * (l - a).max(0.0))
                .sum();
            best = best.min(a + hinge / 0.25);
            a += 1e-4;
        }
        assert!((best - cvar).abs() <= 1e-3, "grid {best} vs cvar {cvar}");
    }

    #[test]
    fn cvar_edge_cases() {
        let dist = DiscreteLossDistribution::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.25; 4]).unwrap();
        let near_mean = cvar_discrete(&dist, 1e-12).unwrap();
        assert!((near_mean - 2.5).abs() < 1e-9);
        let single = DiscreteLossDistribution::new(vec![3.3], vec![1.0]).unwrap();
        for eta in [0.1, 0.5, 0.99] {
            assert!((cvar_discrete(&single, eta).unwrap() - 3.3).abs() < 1e-12);
        }
        assert!(cvar_discrete(&dist, 0.0).is_err());
        assert!(cvar_discrete(&dist, 1.0).is_err());
        assert!(cvar_discrete(&dist, -0.5).is_err());
    }

    #[test]
    fn ru_scalar_identity() {
        // min over a of E[ru(L, a)] = Γ⁻¹·mean + (1 − Γ⁻¹)·CVaR_{η(Γ)},
        // and both equal the worst-case risk. The a-minimum of the piecewise
        // linear objective is attained at a loss atom, so an atom sweep is
        // exact.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let dist = random_dist(&mut rng);
            let g = rng.gen_range(1.01f64..16.0);
            let b = band(g);
            let min_over_a = dist
                .losses()
                .iter()
                .map(|&a| {
                    dist.losses()
                        .iter()
                        .zip(dist.probs())
                        .map(|(&l, &p)| p * ru_loss_from_base(l, a, &b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let identity = b.inv_gamma() * dist.mean()
                + b.c_lin() * cvar_discrete(&dist, b.eta()).unwrap();
            let wc = worstcase_risk_discrete(&dist, &b);
            assert!(
                (min_over_a - identity).abs() <= 1e-10 * identity.abs().max(1.0),
                "min {min_over_a} vs identity {identity}"
            );
            assert!((wc - identity).abs() <= 1e-10 * identity.abs().max(1.0));
        }
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-12);
        assert!((normal_cdf(-2.0) - 0.022750131948179195).abs() < 1e-12);
    }

    #[test]
    fn quantile_one_sigma_interval() {
        let mix = GaussianMixture1D::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        let t = mixture_loss_quantile(0.0, 0.6826894921370859, &mix).unwrap();
        assert!((t - 1.0).abs() <= 1e-3, "t = {t}");
    }

    #[test]
    fn quantile_small_eta_at_component_mean() {
        let mix = GaussianMixture1D::new(vec![1.0], vec![2.0], vec![1.0]).unwrap();
        let t = mixture_loss_quantile(2.0, 1e-6, &mix).unwrap();
        assert!(t < 1e-9, "t = {t}");
    }

    #[test]
    fn quantile_self_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let k = rng.gen_range(1..=3);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let corr: f64 = 1.0 - weights.iter().sum::<f64>();
            weights[0] += corr;
            let means: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let sds: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..3.0)).collect();
            let mix = GaussianMixture1D::new(weights, means, sds).unwrap();
            let h = rng.gen_range(-6.0..6.0);
            let eta = rng.gen_range(0.01..0.99);
            let t = mixture_loss_quantile(h, eta, &mix).unwrap();
            assert!(
                (mix.loss_cdf(h, t) - eta).abs() <= 1e-10,
                "F(t) = {} vs eta = {eta}",
                mix.loss_cdf(h, t)
            );
        }
    }

    #[test]
    fn minimizer_erm_limit() {
        // Γ → 1⁺ reduces to plain least squares: h* is the mixture mean and
        // α* the median of the squared residual at h*.
        let mix =
            GaussianMixture1D::new(vec![0.8, 0.2], vec![2.0, 9.0], vec![1.0, 1.0]).unwrap();
        let b = band(1.0 + 1e-9);
        let m = conditional_ru_minimizer(&mix, &b, &BaseLoss::Squared).unwrap();
        assert!((m.h_star - mix.mean()).abs() < 1e-3, "h* = {}", m.h_star);
        let median = mixture_loss_quantile(m.h_star, 0.5, &mix).unwrap();
        assert!(
            (m.alpha_star - median).abs() <= 1e-3 * median.max(1.0),
            "alpha* = {} vs median {median}",
            m.alpha_star
        );
    }

    #[test]
    fn minimizer_alpha_matches_quantile_oracle() {
        let mix =
            GaussianMixture1D::new(vec![0.8, 0.2], vec![2.0, 9.0], vec![1.0, 1.0]).unwrap();
        for g in [2.0, 4.0, 8.0] {
            let b = band(g);
            let m = conditional_ru_minimizer(&mix, &b, &BaseLoss::Squared).unwrap();
            let q = mixture_loss_quantile(m.h_star, b.eta(), &mix).unwrap();
            assert!(
                (m.alpha_star - q).abs() <= 1e-4 * q.max(1.0),
                "gamma={g}: alpha*={} quantile={q}",
                m.alpha_star
            );
        }
    }

    #[test]
    fn minimizer_symmetric_mixture_centers() {
        let mix =
            GaussianMixture1D::new(vec![0.5, 0.5], vec![-3.0, 3.0], vec![1.0, 1.0]).unwrap();
        for g in [2.0, 8.0] {
            let m = conditional_ru_minimizer(&mix, &band(g), &BaseLoss::Squared).unwrap();
            assert!(m.h_star.abs() < 1e-6, "gamma={g}: h* = {}", m.h_star);
        }
    }

    #[test]
    fn quantile_positive_on_synthetic_band() {
        // Loss quantiles stay bounded away from zero for the two-band laws.
        for g in [2.0, 4.0, 8.0] {
            let b = band(g);
            for x in [0.5, 2.0, 5.0, 9.5] {
                let sx = f64::sqrt(x);
                let mix = GaussianMixture1D::new(
                    vec![0.8, 0.2],
                    vec![sx, 4.0 * sx + 1.0],
                    vec![1.0, 1.0],
                )
                .unwrap();
                for h in [sx, 0.5 * (5.0 * sx + 1.0), 4.0 * sx + 1.0] {
                    let q = mixture_loss_quantile(h, b.eta(), &mix).unwrap();
                    assert!(q > 0.0);
                }
            }
        }
    }
}
