//! Sample-size schedules for uniform MoM estimation.
//!
//! Block length and block count:
//!
//! ```text
//! m     >= (400 * 16^p * v_p / eps^p)^(1/(p-1))
//! kappa >= max( kappa0(delta/8), 10^6 ln2 / 99, 50 ln(8 N(eps/16, m) / delta) )
//! ```
//!
//! `N` (the discretization size) and `kappa0` depend on the function class.
//! For k-means, `ln N` runs into the thousands for small `k, d`, so every
//! size is carried as a natural log and ceilings are taken once, at the end.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{LossFunction, LossModulus, ModulusOracle};

type Q = Ratio<i64>;

/// Exact constants threaded through the symmetrization, discretization and
/// permutation steps of the uniform MoM bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LemmaConstants {
    pub a: Q,
    pub b: Q,
    pub c: Q,
    pub d: Q,
    /// Fraction of blocks a discretization may get wrong.
    pub discretization_budget: Q,
    /// Empirical-L1 net radius as a fraction of epsilon.
    pub net_radius_factor: Q,
    /// Exponent rate of the permutation tail bound `exp(-kappa * rate)`.
    pub permutation_rate: Q,
}

pub const LEMMA: LemmaConstants = LemmaConstants {
    a: Ratio::new_raw(4801, 10000),
    b: Ratio::new_raw(9701, 10000),
    c: Ratio::new_raw(4769, 10000),
    d: Ratio::new_raw(331, 10000),
    discretization_budget: Ratio::new_raw(2, 625),
    net_radius_factor: Ratio::new_raw(2, 1875),
    permutation_rate: Ratio::new_raw(1, 50),
};

/// One checked relation between the constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantCheck {
    pub relation: String,
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
}

impl LemmaConstants {
    /// Evaluates every arithmetic relation the constants must satisfy, in exact
    /// rational arithmetic.
    pub fn checks(&self) -> Vec<ConstantCheck> {
        let one = Q::from_integer(1);
        let half = Q::new(1, 2);
        let good = Q::new(99, 100) * Q::new(199, 200);
        let bad = one - good;
        let mut out = Vec::new();
        let mut push = |relation: &str, lhs: Q, rhs: Q, holds: bool| {
            out.push(ConstantCheck {
                relation: relation.to_string(),
                lhs: lhs.to_string(),
                rhs: rhs.to_string(),
                holds,
            });
        };

        let a_src = half - bad;
        push("a <= 1/2 - (1 - (99/100)(199/200))", self.a, a_src, self.a <= a_src);
        let b_src = good - bad;
        push("b = (99/100)(199/200) - (1 - (99/100)(199/200))", self.b, b_src, self.b == b_src);
        push("c = a - 2/625", self.c, self.a - self.discretization_budget, self.c == self.a - self.discretization_budget);
        let b_shift = self.b - self.discretization_budget;
        push("b - 2/625 = 9669/10000", b_shift, Q::new(9669, 10000), b_shift == Q::new(9669, 10000));
        push("d = 1 - (b - 2/625)", self.d, one - b_shift, self.d == one - b_shift);
        push(
            "3 * 2/1875 = 2/625",
            Q::from_integer(3) * self.net_radius_factor,
            self.discretization_budget,
            Q::from_integer(3) * self.net_radius_factor == self.discretization_budget,
        );
        let chain = (self.c / 4 - self.d) / (self.c / 4);
        push("(c/4 - d)/(c/4) = 3445/4769", chain, Q::new(3445, 4769), chain == Q::new(3445, 4769));
        let rate = chain * chain * (self.c / 4) / 2;
        push("(3445/4769)^2 (c/4) / 2 >= 1/50", rate, self.permutation_rate, rate >= self.permutation_rate);
        let kmeans_slack = Q::new(1, 10_000) + one - Q::new(7999, 8000) * Q::new(7999, 8000);
        push("1/10^4 + 1 - (1 - 1/8000)^2 <= 2/625", kmeans_slack, self.discretization_budget, kmeans_slack <= self.discretization_budget);
        let reg_slack = one - Q::new(1249, 1250) * Q::new(1249, 1250);
        push("1 - (1 - 1/1250)^2 <= 2/625", reg_slack, self.discretization_budget, reg_slack <= self.discretization_budget);
        push("a < 1/2 + 1/100", self.a, half + Q::new(1, 100), self.a < half + Q::new(1, 100));
        let ordered = self.b > self.c && self.c > self.d;
        push("b > c > d", self.b, self.d, ordered);
        let unit = [self.a, self.b, self.c, self.d].iter().all(|v| *v > Q::from_integer(0) && *v < one);
        push("a, b, c, d in (0, 1)", self.a, one, unit);
        out
    }

    pub fn verify(&self) -> Result<()> {
        match self.checks().into_iter().find(|c| !c.holds) {
            None => Ok(()),
            Some(c) => Err(Error::InvalidParameter(format!(
                "constant relation failed: {} ({} vs {})",
                c.relation, c.lhs, c.rhs
            ))),
        }
    }

    pub fn as_f64(q: Q) -> f64 {
        *q.numer() as f64 / *q.denom() as f64
    }
}

/// `ceil(x)` that does not bump values sitting on an integer by round-off.
fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Ceiling of `exp(log)` as an integer, or `Overflow`.
fn exp_ceil(log: f64) -> Result<u64> {
    // below ln(2^53) the float ceiling is exact
    if log > 36.7 {
        return Err(Error::Overflow(log));
    }
    Ok(ceil_guarded(log.exp()) as u64)
}

fn check_p(p: f64) -> Result<()> {
    if p == 1.0 {
        return Err(Error::PNotAboveOne(p));
    }
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, 2] (got {p})")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and > 0 (got {v})")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0, 1) (got {delta})")))
    }
}

/// `ln` of the real-valued block length `(400 * 16^p * v_p / eps^p)^(1/(p-1))`.
pub fn log_plan_m(epsilon: f64, p: f64, v_p: f64) -> Result<f64> {
    check_p(p)?;
    check_positive("epsilon", epsilon)?;
    check_positive("v_p", v_p)?;
    Ok((400f64.ln() + p * 16f64.ln() + v_p.ln() - p * epsilon.ln()) / (p - 1.0))
}

pub fn plan_m(epsilon: f64, p: f64, v_p: f64) -> Result<u64> {
    exp_ceil(log_plan_m(epsilon, p, v_p)?)
}

/// Which lower bound on `kappa` was largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    #[serde(rename = "kappa0")]
    Kappa0,
    #[serde(rename = "absolute floor")]
    AbsoluteFloor,
    #[serde(rename = "discretization term")]
    DiscretizationTerm,
}

/// `10^6 ln 2 / 99`, the class-independent floor on `kappa`.
pub fn kappa_floor() -> f64 {
    1e6 * std::f64::consts::LN_2 / 99.0
}

/// `50 ln(8 N / delta)` with `ln N = log_n`.
pub fn kappa_discretization_term(delta: f64, log_n: f64) -> f64 {
    50.0 * (8f64.ln() + log_n - delta.ln())
}

/// Block count and the bound that set it. `kappa0` is called with `delta/8`.
/// Ties go to the earlier of kappa0, absolute floor, discretization term.
pub fn plan_kappa<F>(delta: f64, log_n: f64, kappa0: F) -> Result<(u64, Binding)>
where
    F: Fn(f64) -> Result<u64>,
{
    check_delta(delta)?;
    if !(log_n >= 0.0 && log_n.is_finite()) {
        return Err(Error::InvalidParameter(format!("log_N must be finite and >= 0 (got {log_n})")));
    }
    let terms = [
        (kappa0(delta / 8.0)? as f64, Binding::Kappa0),
        (kappa_floor(), Binding::AbsoluteFloor),
        (kappa_discretization_term(delta, log_n), Binding::DiscretizationTerm),
    ];
    let (value, binding) = terms
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, Binding::Kappa0), |best, t| if t.0 > best.0 { t } else { best });
    let kappa = ceil_guarded(value);
    if kappa >= 2f64.powi(53) {
        return Err(Error::Overflow(value.ln()));
    }
    Ok((kappa as u64, binding))
}

/// `ln(72 * 10^4 * 8000 * e)`.
fn kmeans_log_base() -> f64 {
    (72e4f64 * 8000.0).ln() + 1.0
}

/// `ln N` for normalized k-means: `ln 8 + 140 k d ln(6k) (ln(72e4 * 8000 e) - ln eps)`.
pub fn kmeans_log_n(epsilon: f64, k: u32, d: u32) -> Result<f64> {
    if epsilon >= 1.0 {
        return Err(Error::ExceedsEpsilon0 {
            epsilon,
            epsilon0: 1.0,
        });
    }
    check_positive("epsilon", epsilon)?;
    if k == 0 || d == 0 {
        return Err(Error::InvalidParameter("k and d must be >= 1".into()));
    }
    let (k, d) = (k as f64, d as f64);
    Ok(8f64.ln() + 140.0 * k * d * (6.0 * k).ln() * (kmeans_log_base() - epsilon.ln()))
}

fn log_e_over(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1] (got {delta})")));
    }
    Ok(1.0 - delta.ln())
}

/// `ceil(2 * 8000^2 ln(e / delta))`.
pub fn kmeans_kappa0(delta: f64) -> Result<u64> {
    Ok(ceil_guarded(2.0 * 8000f64.powi(2) * log_e_over(delta)?) as u64)
}

/// `ceil(4 * 1250^2 ln(e / delta))`.
pub fn regression_kappa0(delta: f64) -> Result<u64> {
    Ok(ceil_guarded(4.0 * 1250f64.powi(2) * log_e_over(delta)?) as u64)
}

/// `(beta, J)` for the norm-bounded regression class, where
/// `J = (3W/2 + 1) * 3750 * S * m` and
/// `beta = min(W/2, alpha(J, eps) / (3750 * S * m))`, `S = E||X||_1 + E|Y|`.
pub fn regression_beta_j(
    epsilon: f64,
    m: f64,
    w_bound: f64,
    moment_sum: f64,
    modulus: &dyn ModulusOracle,
) -> Result<(f64, f64)> {
    check_positive("epsilon", epsilon)?;
    check_positive("W", w_bound)?;
    check_positive("E||X||_1 + E|Y|", moment_sum)?;
    if !(m >= 1.0) {
        return Err(Error::InvalidParameter(format!("m must be >= 1 (got {m})")));
    }
    let scale = 3750.0 * moment_sum * m;
    let j = (1.5 * w_bound + 1.0) * scale;
    let alpha = modulus.alpha(j, epsilon);
    if !(alpha > 0.0) {
        return Err(Error::EmptyModulus { a: j, b: epsilon });
    }
    let beta = (0.5 * w_bound).min(alpha / scale);
    Ok((beta, j))
}

/// `ln N = d (ln 6 + ln W - ln beta)`.
pub fn regression_log_n(
    epsilon: f64,
    m: f64,
    w_bound: f64,
    d: u32,
    moment_sum: f64,
    modulus: &dyn ModulusOracle,
) -> Result<f64> {
    let (beta, _) = regression_beta_j(epsilon, m, w_bound, moment_sum, modulus)?;
    Ok(d as f64 * (6f64.ln() + w_bound.ln() - beta.ln()))
}

/// Block length for one mean: `(2 v_p / (delta eps^p))^(1/(p-1))`.
pub fn single_mean_m(epsilon: f64, delta: f64, p: f64, v_p: f64) -> Result<u64> {
    check_p(p)?;
    check_positive("epsilon", epsilon)?;
    check_positive("v_p", v_p)?;
    check_delta(delta)?;
    exp_ceil((2f64.ln() + v_p.ln() - delta.ln() - p * epsilon.ln()) / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdimBound {
    /// `6k(d+4) ln(6k) / ln 2`.
    pub bound: f64,
    /// `70 k d ln(6k)`.
    pub relaxation: f64,
}

pub fn pdim_bound(k: u32, d: u32) -> Result<PdimBound> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidParameter("k and d must be >= 1".into()));
    }
    let (k, d) = (k as f64, d as f64);
    let l = (6.0 * k).ln();
    Ok(PdimBound {
        bound: 6.0 * k * (d + 4.0) * l / std::f64::consts::LN_2,
        relaxation: 70.0 * k * d * l,
    })
}

/// `ln` of the packing bound `8 (2e E[s] / eps)^(2 pdim)`.
pub fn packing_size_bound(expected_s: f64, epsilon: f64, pdim: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    if epsilon > expected_s {
        return Err(Error::EpsilonExceedsEnvelope {
            epsilon,
            expected_s,
        });
    }
    if !(pdim >= 0.0) {
        return Err(Error::InvalidParameter("pdim must be >= 0".into()));
    }
    Ok(8f64.ln() + 2.0 * pdim * (2f64.ln() + 1.0 + expected_s.ln() - epsilon.ln()))
}

/// Function class being planned for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanClass {
    /// One fixed function: `N = 1`, `kappa0 = 1`.
    Singleton,
    #[serde(rename = "kmeans")]
    KMeans { k: u32, d: u32 },
    Regression {
        w_bound: f64,
        d: u32,
        /// `E||X||_1 + E|Y|`.
        moment_sum: f64,
        loss: LossFunction,
    },
}

impl PlanClass {
    pub fn epsilon0(&self) -> f64 {
        match self {
            Self::KMeans { .. } => 1.0,
            Self::Singleton | Self::Regression { .. } => f64::INFINITY,
        }
    }

    /// `ln N(eps, m)`. The k-means size does not depend on `m`.
    pub fn log_size(&self, epsilon: f64, m: f64) -> Result<f64> {
        match self {
            Self::Singleton => Ok(0.0),
            Self::KMeans { k, d } => kmeans_log_n(epsilon, *k, *d),
            Self::Regression {
                w_bound,
                d,
                moment_sum,
                loss,
            } => {
                let oracle = LossModulus::new(loss.clone());
                regression_log_n(epsilon, m, *w_bound, *d, *moment_sum, &oracle)
            }
        }
    }

    pub fn kappa0(&self, delta: f64) -> Result<u64> {
        match self {
            Self::Singleton => Ok(1),
            Self::KMeans { .. } => kmeans_kappa0(delta),
            Self::Regression { .. } => regression_kappa0(delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub epsilon: f64,
    pub delta: f64,
    pub p: f64,
    pub v_p: f64,
    pub class: PlanClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// `None` when the block length exceeds 2^53.
    pub m: Option<u64>,
    pub log_m: f64,
    pub kappa: u64,
    #[serde(rename = "log_N")]
    pub log_n: f64,
    pub kappa0: u64,
    pub binding: Binding,
    pub log_total_samples: f64,
}

pub fn plan(request: &PlanRequest) -> Result<Plan> {
    let PlanRequest {
        epsilon,
        delta,
        p,
        v_p,
        ref class,
    } = *request;
    check_delta(delta)?;
    check_positive("epsilon", epsilon)?;
    let eps0 = class.epsilon0();
    if epsilon >= eps0 {
        return Err(Error::ExceedsEpsilon0 {
            epsilon,
            epsilon0: eps0,
        });
    }
    let log_m_real = log_plan_m(epsilon, p, v_p)?;
    let m = exp_ceil(log_m_real).ok();
    let log_m = m.map_or(log_m_real, |m| (m as f64).ln());
    let m_real = m.map_or_else(|| log_m_real.exp(), |m| m as f64);
    let log_n = class.log_size(epsilon / 16.0, m_real)?;
    let kappa0 = class.kappa0(delta / 8.0)?;
    let (kappa, binding) = plan_kappa(delta, log_n, |d| class.kappa0(d))?;
    Ok(Plan {
        m,
        log_m,
        kappa,
        log_n,
        kappa0,
        binding,
        log_total_samples: log_m + (kappa as f64).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_classes::LipschitzModulus;
    use proptest::prelude::*;

    #[test]
    fn plan_m_examples() {
        assert_eq!(plan_m(1.0, 2.0, 1.0).unwrap(), 102_400);
        assert_eq!(plan_m(1.0, 1.5, 1.0).unwrap(), 655_360_000);
        assert_eq!(plan_m(2.0, 2.0, 4.0).unwrap(), 102_400);
        assert_eq!(plan_m(1.0, 1.0, 1.0), Err(Error::PNotAboveOne(1.0)));
        assert!(plan_m(1.0, 2.5, 1.0).is_err());
        assert!(plan_m(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn plan_m_scale_invariance_at_p2() {
        for c in [2.0, 10.0] {
            for (eps, v) in [(1.0, 1.0), (0.3, 2.5), (5.0, 0.7)] {
                assert_eq!(plan_m(c * eps, 2.0, c * c * v).unwrap(), plan_m(eps, 2.0, v).unwrap());
            }
        }
    }

    #[test]
    fn plan_kappa_examples() {
        let one = |_: f64| Ok(1u64);
        assert_eq!(plan_kappa(0.05, 0.0, one).unwrap(), (7002, Binding::AbsoluteFloor));
        assert_eq!(plan_kappa(0.05, 1e6, one).unwrap().1, Binding::DiscretizationTerm);
        assert_eq!(
            plan_kappa(0.05, 0.0, |_| Ok(1_000_000_000)).unwrap(),
            (1_000_000_000, Binding::Kappa0)
        );
        assert!(plan_kappa(1.0, 0.0, one).is_err());
        assert!(plan_kappa(0.5, -1.0, one).is_err());
    }

    #[test]
    fn kappa_floor_value() {
        assert!((kappa_floor() - 7001.48).abs() < 0.01);
        assert!(kappa_discretization_term(0.05, 0.0) < 254.0);
    }

    #[test]
    fn kmeans_log_n_examples() {
        let v = kmeans_log_n(1.0 / 16.0, 2, 2).unwrap();
        let expect = 8f64.ln() + 560.0 * 12f64.ln() * ((576e7f64).ln() + 1.0 + 16f64.ln());
        assert!((v - expect).abs() / expect < 1e-12);
        assert!(kmeans_log_n(0.1, 4, 2).unwrap() > kmeans_log_n(0.1, 2, 2).unwrap());
        let near = kmeans_log_n(1.0 - 1e-12, 1, 1).unwrap();
        let limit = 8f64.ln() + 140.0 * 6f64.ln() * kmeans_log_base();
        assert!((near - limit).abs() < 1e-6);
        assert!(matches!(kmeans_log_n(1.0, 1, 1), Err(Error::ExceedsEpsilon0 { .. })));
    }

    #[test]
    fn kappa0_examples() {
        assert_eq!(kmeans_kappa0(1.0).unwrap(), 128_000_000);
        assert_eq!(kmeans_kappa0((-1f64).exp()).unwrap(), 256_000_000);
        assert_eq!(regression_kappa0(1.0).unwrap(), 6_250_000);
        assert_eq!(regression_kappa0((-1f64).exp()).unwrap(), 12_500_000);
        let mut prev = u64::MAX;
        for i in 1..=100 {
            let k = kmeans_kappa0(i as f64 / 100.0).unwrap();
            assert!(k <= prev);
            prev = k;
        }
        assert!(kmeans_kappa0(0.0).is_err());
    }

    #[test]
    fn regression_examples() {
        let lip = LipschitzModulus { lipschitz: 1.0 };
        let (beta, j) = regression_beta_j(1.0, 1.0, 1.0, 1.0, &lip).unwrap();
        assert_eq!(j, 9375.0);
        assert!((beta - 1.0 / 3750.0).abs() < 1e-18);

        let (beta, _) = regression_beta_j(1e9, 1.0, 2.0, 1.0, &lip).unwrap();
        assert_eq!(beta, 1.0);

        let l = regression_log_n(1e9, 1.0, 2.0, 3, 1.0, &lip).unwrap();
        assert!((l - 3.0 * 12f64.ln()).abs() < 1e-12);
        let l6 = regression_log_n(1e9, 1.0, 2.0, 6, 1.0, &lip).unwrap();
        assert!((l6 - 2.0 * l).abs() < 1e-12);

        struct Zero;
        impl ModulusOracle for Zero {
            fn alpha(&self, _: f64, _: f64) -> f64 {
                0.0
            }
            fn method(&self) -> crate::function_classes::ModulusMethod {
                crate::function_classes::ModulusMethod::GridBisection
            }
        }
        assert!(matches!(regression_beta_j(1.0, 1.0, 1.0, 1.0, &Zero), Err(Error::EmptyModulus { .. })));
    }

    #[test]
    fn single_mean_m_examples() {
        assert_eq!(single_mean_m(1.0, 0.5, 2.0, 1.0).unwrap(), 4);
        assert_eq!(single_mean_m(1.0, 0.02, 2.0, 1.0).unwrap(), 100);
        assert_eq!(single_mean_m(0.5, 0.1, 2.0, 1.0).unwrap(), 80);
        assert_eq!(single_mean_m(1.0, 0.01, 2.0, 1.0).unwrap(), 200);
        assert!(single_mean_m(1.0, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn pdim_examples() {
        let b = pdim_bound(1, 1).unwrap();
        assert!((b.bound - 30.0 * 6f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((b.bound - 77.55).abs() < 0.01);
        for k in 1..=50 {
            for d in 1..=50 {
                let b = pdim_bound(k, d).unwrap();
                assert!(b.relaxation >= b.bound, "k={k} d={d}");
                assert!(pdim_bound(k + 1, d).unwrap().bound > b.bound);
                assert!(pdim_bound(k, d + 1).unwrap().bound > b.bound);
            }
        }
    }

    #[test]
    fn packing_bound_reproduces_kmeans_base() {
        // E[s] <= 12 * 8000 and net radius eps / (3 * 10^4)
        let eps: f64 = 0.25;
        let pdim = 70.0 * 2.0 * 2.0 * 12f64.ln();
        let v = packing_size_bound(12.0 * 8000.0, eps / 3e4, pdim).unwrap();
        let expect = 8f64.ln() + 2.0 * pdim * (kmeans_log_base() - eps.ln());
        assert!((v - expect).abs() / expect < 1e-12);
        assert_eq!(packing_size_bound(12.0, 1.0, 0.0).unwrap(), 8f64.ln());
        assert!(packing_size_bound(12.0, 2.0, 3.0).unwrap() < packing_size_bound(12.0, 1.0, 3.0).unwrap());
        assert!(matches!(packing_size_bound(1.0, 2.0, 1.0), Err(Error::EpsilonExceedsEnvelope { .. })));
        // the k-means N with its exponent equals the packing bound at pdim = 70 k d ln 6k
        let n = kmeans_log_n(eps, 2, 2).unwrap();
        assert!((n - expect).abs() / n < 1e-12);
    }

    #[test]
    fn constants_hold() {
        LEMMA.verify().unwrap();
        let checks = LEMMA.checks();
        let a = checks.iter().find(|c| c.relation.starts_with("a <=")).unwrap();
        assert_eq!(a.rhs, "9701/20000");
    }

    #[test]
    fn plan_singleton_and_kmeans() {
        let req = PlanRequest {
            epsilon: 1.0,
            delta: 0.05,
            p: 2.0,
            v_p: 1.0,
            class: PlanClass::Singleton,
        };
        let p = plan(&req).unwrap();
        assert_eq!((p.m, p.kappa, p.kappa0, p.binding), (Some(102_400), 7002, 1, Binding::AbsoluteFloor));
        assert_eq!(p.log_n, 0.0);

        let req = PlanRequest {
            epsilon: 0.5,
            delta: 0.05,
            p: 1.5,
            v_p: 2.0,
            class: PlanClass::KMeans { k: 2, d: 2 },
        };
        let p = plan(&req).unwrap();
        assert_eq!(p.log_n, kmeans_log_n(0.5 / 16.0, 2, 2).unwrap());
        assert_eq!(p.kappa0, kmeans_kappa0(0.05 / 8.0).unwrap());
        assert_eq!(p.binding, Binding::Kappa0);

        let bad = PlanRequest { epsilon: 1.0, ..req };
        assert!(matches!(plan(&bad), Err(Error::ExceedsEpsilon0 { .. })));
    }

    #[test]
    fn plan_survives_astronomical_sizes() {
        let req = PlanRequest {
            epsilon: 1e-3,
            delta: 1e-6,
            p: 1.05,
            v_p: 10.0,
            class: PlanClass::KMeans { k: 50, d: 100 },
        };
        let p = plan(&req).unwrap();
        assert!(p.m.is_none());
        assert!(p.log_m.is_finite() && p.log_n.is_finite() && p.log_total_samples.is_finite());
        assert!(p.log_m > 150.0 * 10f64.ln());
    }

    #[test]
    fn plan_regression_with_grid_modulus() {
        let req = PlanRequest {
            epsilon: 1.0,
            delta: 0.1,
            p: 2.0,
            v_p: 1.0,
            class: PlanClass::Regression {
                w_bound: 1.0,
                d: 3,
                moment_sum: 2.0,
                loss: LossFunction::Squared,
            },
        };
        let p = plan(&req).unwrap();
        assert!(p.log_n > 0.0 && p.log_n.is_finite());
        assert_eq!(p.kappa0, regression_kappa0(0.1 / 8.0).unwrap());
    }

    proptest! {
        #[test]
        fn plan_satisfies_each_kappa_bound(
            eps in 0.01f64..0.99, delta in 1e-6f64..0.99, p in 1.05f64..2.0, v in 0.1f64..100.0,
            k in 1u32..20, d in 1u32..20, which in 0u8..2,
        ) {
            let class = if which == 0 { PlanClass::Singleton } else { PlanClass::KMeans { k, d } };
            let plan = plan(&PlanRequest { epsilon: eps, delta, p, v_p: v, class: class.clone() }).unwrap();
            let kappa = plan.kappa as f64;
            prop_assert!(kappa >= class.kappa0(delta / 8.0).unwrap() as f64);
            prop_assert!(kappa >= kappa_floor());
            prop_assert!(kappa >= kappa_discretization_term(delta, plan.log_n) * (1.0 - 1e-12));
            if let Some(m) = plan.m {
                prop_assert!(m as f64 >= log_plan_m(eps, p, v).unwrap().exp() * (1.0 - 1e-12));
            }
        }
    }
}
