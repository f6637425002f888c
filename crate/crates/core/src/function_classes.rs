//! Function classes: normalized k-means losses and norm-bounded regression
//! losses, plus the modulus of continuity of a loss.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::tail_models::{self, DistributionSpec};

/// Relative shrink applied to the target in grid modulus searches.
pub const MODULUS_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    centers: Vec<Vec<f64>>,
}

impl CenterSet {
    pub fn new(centers: Vec<Vec<f64>>) -> Result<Self> {
        let d = match centers.first() {
            Some(c) if !c.is_empty() => c.len(),
            _ => return Err(Error::InvalidParameter("need at least one nonempty center".into())),
        };
        for c in &centers {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("center coordinates must be finite".into()));
            }
        }
        Ok(Self { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `d(x, Q)^2`: squared Euclidean distance to the nearest center.
pub fn kmeans_loss(x: &[f64], q: &CenterSet) -> Result<f64> {
    if x.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            got: x.len(),
        });
    }
    Ok(q.centers
        .iter()
        .map(|c| squared_distance(x, c))
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    Analytic,
    Quadrature,
    MonteCarlo,
}

/// `Q -> E[d(X, Q)^2]`. Implementations must be safe to call from many
/// threads at once.
pub type RiskFn = Arc<dyn Fn(&CenterSet) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct KMeansClassSpec {
    pub k: usize,
    pub d: usize,
    pub mu: Vec<f64>,
    /// `E[d(X, mu)^2]`.
    pub sigma2: f64,
    pub risk_oracle: RiskFn,
    pub risk_method: RiskMethod,
}

impl fmt::Debug for KMeansClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KMeansClassSpec")
            .field("k", &self.k)
            .field("d", &self.d)
            .field("mu", &self.mu)
            .field("sigma2", &self.sigma2)
            .field("risk_method", &self.risk_method)
            .finish()
    }
}

impl KMeansClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("k and d must be positive".into()));
        }
        if self.mu.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: self.mu.len(),
            });
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be finite and > 0 (got {})",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Class over a Gaussian or isotropic Gaussian-mixture law. Risks are exact
    /// for center sets with at most two distinct centers and estimated by a
    /// fixed-seed Monte Carlo of 10^6 draws otherwise.
    pub fn for_gaussian_mixture(law: &DistributionSpec, k: usize) -> Result<Self> {
        let risk = MixtureRisk::new(law)?;
        let mu = law.mean();
        let sigma2 = law.total_variance();
        let risk_method = if k <= 2 {
            RiskMethod::Analytic
        } else {
            RiskMethod::MonteCarlo
        };
        let spec = Self {
            k,
            d: mu.len(),
            mu,
            sigma2,
            risk_oracle: Arc::new(move |q| risk.risk(q)),
            risk_method,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `sigma^2 + E[d(X, Q)^2]`.
    pub fn normalizer(&self, q: &CenterSet) -> Result<f64> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter("sigma2 must be > 0".into()));
        }
        if q.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: q.dim(),
            });
        }
        Ok(self.sigma2 + (self.risk_oracle)(q))
    }
}

/// `f_Q(x) = 2 d(x,Q)^2 / (sigma^2 + E[d(X,Q)^2])`.
pub fn normalized_loss(x: &[f64], q: &CenterSet, spec: &KMeansClassSpec) -> Result<f64> {
    let denom = spec.normalizer(q)?;
    Ok(2.0 * kmeans_loss(x, q)? / denom)
}

/// Envelope `s(x) = 4 d(x,mu)^2 / sigma^2 + 8`, dominating every `f_Q`.
pub fn s_envelope(x: &[f64], spec: &KMeansClassSpec) -> f64 {
    4.0 * squared_distance(x, &spec.mu) / spec.sigma2 + 8.0
}

/// Interval for the true k-means risk from a MoM estimate of `d(., Q)^2`:
/// `[(1-eps)(est - eps*sigma2/2), (1+eps)(est + eps*sigma2/2)]`, with the lower
/// end clamped at zero.
pub fn risk_interval(estimate: f64, epsilon: f64, sigma2: f64) -> (f64, f64) {
    let slack = 0.5 * epsilon * sigma2;
    let lo = ((1.0 - epsilon) * (estimate - slack)).max(0.0);
    let hi = (1.0 + epsilon) * (estimate + slack);
    (lo, hi.max(lo))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact `E[d(X,Q)^2]` for isotropic Gaussian mixtures when `Q` has at most two
/// distinct centers.
#[derive(Debug, Clone)]
pub struct MixtureRisk {
    components: Vec<(f64, Vec<f64>, f64)>,
    law: DistributionSpec,
}

impl MixtureRisk {
    pub fn new(law: &DistributionSpec) -> Result<Self> {
        law.validate()?;
        let components = match law {
            DistributionSpec::Gaussian { mean, sd, dim } => vec![(1.0, vec![*mean; *dim], *sd)],
            DistributionSpec::MixtureOfGaussians {
                weights,
                means,
                sds,
            } => weights
                .iter()
                .zip(means)
                .zip(sds)
                .map(|((w, m), s)| (*w, m.clone(), *s))
                .collect(),
            _ => {
                return Err(Error::InvalidParameter(
                    "analytic k-means risk needs a Gaussian or Gaussian mixture".into(),
                ))
            }
        };
        Ok(Self {
            components,
            law: law.clone(),
        })
    }

    pub fn risk(&self, q: &CenterSet) -> f64 {
        let mut distinct: Vec<&Vec<f64>> = Vec::new();
        for c in q.centers() {
            if !distinct.contains(&c) {
                distinct.push(c);
            }
        }
        match distinct.len() {
            1 => self
                .components
                .iter()
                .map(|(w, m, s)| w * (m.len() as f64 * s * s + squared_distance(m, distinct[0])))
                .sum(),
            2 => self
                .components
                .iter()
                .map(|(w, m, s)| w * two_center_risk(m, *s, distinct[0], distinct[1]))
                .sum(),
            _ => self.monte_carlo(q, 1_000_000, 0x6b6d_6561_6e73),
        }
    }

    pub fn monte_carlo(&self, q: &CenterSet, draws: usize, seed: u64) -> f64 {
        let mut sampler = self.law.sampler(seed).expect("validated law");
        let mut x = vec![0.0; sampler.dimension()];
        let mut total = 0.0;
        for _ in 0..draws {
            sampler.next_into(&mut x);
            total += kmeans_loss(&x, q).expect("dimensions agree");
        }
        total / draws as f64
    }
}

fn two_center_risk(c: &[f64], s: f64, q1: &[f64], q2: &[f64]) -> f64 {
    let diff: Vec<f64> = q2.iter().zip(q1).map(|(a, b)| a - b).collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e: Vec<f64> = diff.iter().map(|v| v / norm).collect();
    let dot = |a: &[f64]| a.iter().zip(&e).map(|(x, y)| x * y).sum::<f64>();
    let rel: Vec<f64> = c.iter().zip(q1).map(|(a, b)| a - b).collect();
    let along = dot(&rel);
    let orth2 = rel.iter().map(|v| v * v).sum::<f64>() - along * along;
    let d = c.len() as f64;
    let orthogonal = (d - 1.0) * s * s + orth2.max(0.0);

    // 1-D: t ~ N(mt, s^2), nearer of a1 < a2 split at the midpoint
    let (a1, a2) = (dot(q1), dot(q2));
    let mt = dot(c);
    let zc = (0.5 * (a1 + a2) - mt) / s;
    let (cdf, pdf) = (std_normal_cdf(zc), std_normal_pdf(zc));
    let b1 = mt - a1;
    let b2 = mt - a2;
    let lower = b1 * b1 * cdf - 2.0 * b1 * s * pdf + s * s * (cdf - zc * pdf);
    let upper = b2 * b2 * (1.0 - cdf) + 2.0 * b2 * s * pdf + s * s * (1.0 - cdf + zc * pdf);
    orthogonal + lower + upper
}

/// A continuous nonnegative loss applied to the residual `<w,x> - y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossFunction {
    Squared,
    Absolute,
    /// `t^2/2` for `|t| <= delta`, `delta (|t| - delta/2)` beyond.
    Huber { delta: f64 },
    /// `delta^2 (sqrt(1 + (t/delta)^2) - 1)`.
    PseudoHuber { delta: f64 },
    /// Piecewise-linear through `(t, loss)` knots sorted by `t`, constant
    /// beyond the end knots.
    CustomTable { knots: Vec<(f64, f64)> },
}

impl LossFunction {
    pub fn custom_table(knots: Vec<(f64, f64)>) -> Result<Self> {
        let loss = Self::CustomTable { knots };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Huber { delta } | Self::PseudoHuber { delta } => {
                if !(*delta > 0.0 && delta.is_finite()) {
                    return Err(Error::InvalidParameter(format!("delta must be > 0 (got {delta})")));
                }
            }
            Self::CustomTable { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidParameter("custom table needs at least one knot".into()));
                }
                if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidParameter(
                        "custom table knots must be finite with nonnegative loss".into(),
                    ));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidParameter(
                        "custom table knots must be strictly increasing in t".into(),
                    ));
                }
            }
            Self::Squared | Self::Absolute => {}
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Squared => t * t,
            Self::Absolute => t.abs(),
            Self::Huber { delta } => {
                if t.abs() <= *delta {
                    0.5 * t * t
                } else {
                    delta * (t.abs() - 0.5 * delta)
                }
            }
            Self::PseudoHuber { delta } => delta * delta * ((1.0 + (t / delta).powi(2)).sqrt() - 1.0),
            Self::CustomTable { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|(x, _)| *x <= t);
                let (x0, y0) = knots[i - 1];
                let (x1, y1) = knots[i];
                y0 + (y1 - y0) * (t - x0) / (x1 - x0)
            }
        }
    }

    /// Global Lipschitz constant, when the loss has one.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Self::Squared => None,
            Self::Absolute => Some(1.0),
            Self::Huber { delta } | Self::PseudoHuber { delta } => Some(*delta),
            Self::CustomTable { knots } => {
                let slope = knots
                    .windows(2)
                    .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                    .fold(0.0, f64::max);
                (slope > 0.0).then_some(slope)
            }
        }
    }

    pub fn zero_at_zero(&self) -> bool {
        self.eval(0.0) == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusMethod {
    ClosedFormLipschitz,
    /// `a - sqrt(a^2 - b)` for the squared loss.
    ClosedFormSquared,
    GridBisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusResult {
    pub alpha: f64,
    pub method: ModulusMethod,
    pub margin: f64,
    pub flag: Option<String>,
}

/// Source of the modulus `alpha(a, b)`: the largest `alpha` such that
/// `|x - y| <= alpha` on `[-a, a]` forces `|l(x) - l(y)| <= b`.
pub trait ModulusOracle {
    fn alpha(&self, a: f64, b: f64) -> f64;
    fn method(&self) -> ModulusMethod;
}

#[derive(Debug, Clone, Copy)]
pub struct LipschitzModulus {
    pub lipschitz: f64,
}

impl ModulusOracle for LipschitzModulus {
    fn alpha(&self, _a: f64, b: f64) -> f64 {
        b / self.lipschitz
    }

    fn method(&self) -> ModulusMethod {
        ModulusMethod::ClosedFormLipschitz
    }
}

/// Modulus of a [`LossFunction`]: exact for Lipschitz losses and the squared
/// loss, otherwise a grid bisection with `intervals` cells on `[-a, a]`.
#[derive(Debug, Clone)]
pub struct LossModulus {
    pub loss: LossFunction,
    pub intervals: usize,
}

impl LossModulus {
    pub fn new(loss: LossFunction) -> Self {
        Self {
            loss,
            intervals: 200_000,
        }
    }
}

impl ModulusOracle for LossModulus {
    fn alpha(&self, a: f64, b: f64) -> f64 {
        if self.loss == LossFunction::Squared && self.loss.lipschitz().is_none() {
            return squared_modulus(a, b);
        }
        modulus(&self.loss, a, b, 2.0 * a / self.intervals as f64)
            .map(|r| r.alpha)
            .unwrap_or(0.0)
    }

    fn method(&self) -> ModulusMethod {
        if self.loss.lipschitz().is_some() {
            ModulusMethod::ClosedFormLipschitz
        } else if self.loss == LossFunction::Squared {
            ModulusMethod::ClosedFormSquared
        } else {
            ModulusMethod::GridBisection
        }
    }
}

/// Exact modulus of `t^2` on `[-a, a]`. The widest pair sits at the edge:
/// `a^2 - (a - alpha)^2 = b`. Written without cancellation for `b << a^2`.
pub fn squared_modulus(a: f64, b: f64) -> f64 {
    if b >= a * a {
        2.0 * a
    } else {
        b / (a + (a * a - b).sqrt())
    }
}

/// `alpha_l(a, b)`.
///
/// Lipschitz losses return `b / L` exactly. Otherwise the result is a lower
/// bound: the loss is tabulated on a grid of step at most `grid_step` over
/// `[-a, a]`, the grid modulus `omega(alpha)` is the largest loss range over a
/// window of width `alpha`, and bisection finds the widest grid-resolved window
/// with `omega <= b (1 - MODULUS_MARGIN)`. A loss that is flat over the whole
/// interval is capped at the diameter `2a`.
pub fn modulus(loss: &LossFunction, a: f64, b: f64, grid_step: f64) -> Result<ModulusResult> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("modulus needs a, b > 0 (got {a}, {b})")));
    }
    loss.validate()?;
    if let Some(l) = loss.lipschitz() {
        return Ok(ModulusResult {
            alpha: b / l,
            method: ModulusMethod::ClosedFormLipschitz,
            margin: 0.0,
            flag: None,
        });
    }
    if !(grid_step > 0.0 && grid_step <= a / 100.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "grid_step must lie in (0, a/100] (got {grid_step} for a={a})"
        )));
    }
    let cells = (2.0 * a / grid_step).ceil() as usize;
    let h = 2.0 * a / cells as f64;
    let values: Vec<f64> = (0..=cells).map(|i| loss.eval(-a + i as f64 * h)).collect();
    let target = b * (1.0 - MODULUS_MARGIN);

    if window_range(&values, 1) > target {
        return Ok(ModulusResult {
            alpha: 0.0,
            method: ModulusMethod::GridBisection,
            margin: MODULUS_MARGIN,
            flag: Some("loss too rough at this grid".into()),
        });
    }
    // largest window (in cells) whose loss range stays within target
    let (mut ok, mut bad) = (1usize, cells + 1);
    if window_range(&values, cells) <= target {
        ok = cells;
    } else {
        while bad - ok > 1 {
            let mid = ok + (bad - ok) / 2;
            if window_range(&values, mid) <= target {
                ok = mid;
            } else {
                bad = mid;
            }
        }
    }
    Ok(ModulusResult {
        alpha: ok as f64 * h,
        method: ModulusMethod::GridBisection,
        margin: MODULUS_MARGIN,
        flag: None,
    })
}

/// Largest `max - min` over windows spanning `width` cells.
fn window_range(values: &[f64], width: usize) -> f64 {
    let len = width + 1;
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    for (i, v) in values.iter().enumerate() {
        while maxq.back().is_some_and(|&j| values[j] <= *v) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| values[j] >= *v) {
            minq.pop_back();
        }
        minq.push_back(i);
        if maxq[0] + len <= i {
            maxq.pop_front();
        }
        if minq[0] + len <= i {
            minq.pop_front();
        }
        if i + 1 >= len.min(values.len()) {
            best = best.max(values[maxq[0]] - values[minq[0]]);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionClassSpec {
    /// Bound on `||w||`.
    pub w_bound: f64,
    pub d: usize,
    pub loss: LossFunction,
}

impl RegressionClassSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_bound > 0.0 && self.w_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("W must be > 0 (got {})", self.w_bound)));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be positive".into()));
        }
        self.loss.validate()
    }
}

/// `l(<w, x> - y)`.
pub fn regression_loss(x: &[f64], y: f64, w: &[f64], loss: &LossFunction) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: x.len(),
        });
    }
    let pred: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    Ok(loss.eval(pred - y))
}

/// [`regression_loss`] on a row laid out as `x` followed by `y`.
pub fn regression_loss_row(row: &[f64], w: &[f64], loss: &LossFunction) -> Result<f64> {
    let (y, x) = row
        .split_last()
        .ok_or_else(|| Error::InvalidParameter("empty regression row".into()))?;
    regression_loss(x, *y, w, loss)
}

/// `E ||X||_1 + E|Y|` under a product law, by per-coordinate quadrature on
/// the analytic first absolute moments where available.
pub fn regression_moment_sum(law: &DistributionSpec) -> Result<f64> {
    let DistributionSpec::ProductXY { x, y } = law else {
        return Err(Error::InvalidParameter("regression needs a ProductXY law".into()));
    };
    Ok(first_abs_moment_sum(x)? + first_abs_moment_sum(y)?)
}

fn first_abs_moment_sum(spec: &DistributionSpec) -> Result<f64> {
    use DistributionSpec::*;
    let d = spec.dimension() as f64;
    Ok(match spec {
        Gaussian { mean, sd, .. } => {
            // E|N(m, s^2)| = s sqrt(2/pi) exp(-m^2/2s^2) + m (1 - 2 Phi(-m/s))
            let r = mean / sd;
            d * (sd * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * r * r).exp()
                + mean * (1.0 - 2.0 * std_normal_cdf(-r)))
        }
        SymmetricPareto { center, .. } | StudentT { center, .. } if *center == 0.0 => {
            // E|X| = first absolute moment about the symmetry center
            let single = match spec {
                SymmetricPareto { alpha, scale, .. } => alpha / (alpha - 1.0) * scale,
                StudentT { nu, scale, .. } => tail_models::student_t_abs_moment(*nu, *scale, 1.0),
                _ => unreachable!(),
            };
            d * single
        }
        _ => {
            return Err(Error::InvalidParameter(
                "E|.| only available for Gaussian or centered Pareto/Student-t laws".into(),
            ))
        }
    })
}
