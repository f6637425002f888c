//! Seeded heavy-tailed samplers with closed-form moments.
//!
//! Every sampler is driven by ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded
//! through `SeedableRng::seed_from_u64`, so a `(spec, count, seed)` triple
//! reproduces the same stream on a given platform. Draw algorithms:
//!
//! - Gaussian: `rand_distr::StandardNormal` (ziggurat), scaled and shifted.
//! - SymmetricPareto: `U = 1 - uniform[0,1)`, magnitude `scale * U^(-1/alpha)`,
//!   then an independent fair sign bit; `center` is added last.
//! - StudentT: `Z / sqrt(V / nu)` with `Z` standard normal and `V` chi-squared
//!   with `nu` degrees of freedom.
//! - MixtureOfGaussians: component by inverse CDF on the weights, then an
//!   isotropic normal around the component mean.
//! - ProductXY: the `x` point followed by the scalar `y`, drawn from the same
//!   stream in that order.
//!
//! Vector variants draw their coordinates independently. For vectors,
//! [`MomentInfo::central_moment_p`] is the largest per-coordinate
//! `E|X_j - mu_j|^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Gaussian {
        mean: f64,
        sd: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    SymmetricPareto {
        alpha: f64,
        scale: f64,
        center: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    StudentT {
        nu: f64,
        center: f64,
        scale: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    MixtureOfGaussians {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        sds: Vec<f64>,
    },
    /// Regression pairs: a point is the `x` coordinates followed by `y`.
    ProductXY {
        x: Box<DistributionSpec>,
        y: Box<DistributionSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentInfo {
    pub mean: Vec<f64>,
    pub p: f64,
    /// `E|X - mu|^p`, or `+inf` when it does not exist.
    pub central_moment_p: f64,
    pub exists: bool,
    pub method: MomentMethod,
}

impl DistributionSpec {
    pub fn gaussian(mean: f64, sd: f64) -> Self {
        Self::Gaussian { mean, sd, dim: 1 }
    }

    pub fn symmetric_pareto(alpha: f64, scale: f64, center: f64) -> Self {
        Self::SymmetricPareto {
            alpha,
            scale,
            center,
            dim: 1,
        }
    }

    pub fn student_t(nu: f64, center: f64, scale: f64) -> Self {
        Self::StudentT {
            nu,
            center,
            scale,
            dim: 1,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Gaussian { dim, .. }
            | Self::SymmetricPareto { dim, .. }
            | Self::StudentT { dim, .. } => *dim,
            Self::MixtureOfGaussians { means, .. } => means.first().map_or(0, Vec::len),
            Self::ProductXY { x, .. } => x.dimension() + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite")))
            }
        };
        if self.dimension() == 0 {
            return bad("dimension must be at least 1".into());
        }
        match self {
            Self::Gaussian { mean, sd, .. } => {
                finite("mean", *mean)?;
                if !(*sd > 0.0 && sd.is_finite()) {
                    return bad(format!("sd must be > 0 (got {sd})"));
                }
            }
            Self::SymmetricPareto {
                alpha,
                scale,
                center,
                ..
            } => {
                finite("center", *center)?;
                if !(*alpha > 1.0 && alpha.is_finite()) {
                    return bad(format!("tail index alpha must be > 1 (got {alpha})"));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad(format!("scale must be > 0 (got {scale})"));
                }
            }
            Self::StudentT {
                nu, center, scale, ..
            } => {
                finite("center", *center)?;
                if !(*nu > 1.0 && nu.is_finite()) {
                    return bad(format!("degrees of freedom nu must be > 1 (got {nu})"));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad(format!("scale must be > 0 (got {scale})"));
                }
            }
            Self::MixtureOfGaussians {
                weights,
                means,
                sds,
            } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
                    return bad("mixture weights, means and sds must be nonempty and equally long".into());
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return bad("mixture weights must be nonnegative".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("mixture weights must sum to 1 (got {total})"));
                }
                let d = means[0].len();
                if means.iter().any(|m| m.len() != d) {
                    return bad("mixture means must share one dimension".into());
                }
                if means.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("mixture means must be finite".into());
                }
                if sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("mixture sds must be > 0".into());
                }
            }
            Self::ProductXY { x, y } => {
                x.validate()?;
                y.validate()?;
                if y.dimension() != 1 {
                    return bad("ProductXY y must be scalar".into());
                }
                if matches!(**y, Self::ProductXY { .. }) || matches!(**x, Self::ProductXY { .. }) {
                    return bad("ProductXY cannot nest".into());
                }
            }
        }
        Ok(())
    }

    /// Analytic mean vector.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Gaussian { mean, dim, .. } => vec![*mean; *dim],
            Self::SymmetricPareto { center, dim, .. } | Self::StudentT { center, dim, .. } => {
                vec![*center; *dim]
            }
            Self::MixtureOfGaussians { weights, means, .. } => {
                let d = means[0].len();
                (0..d)
                    .map(|j| weights.iter().zip(means).map(|(w, m)| w * m[j]).sum())
                    .collect()
            }
            Self::ProductXY { x, y } => {
                let mut mu = x.mean();
                mu.extend(y.mean());
                mu
            }
        }
    }

    /// `E ||X - mu||^2` summed over coordinates, when finite.
    pub fn total_variance(&self) -> f64 {
        match self {
            Self::Gaussian { sd, dim, .. } => *dim as f64 * sd * sd,
            Self::SymmetricPareto {
                alpha, scale, dim, ..
            } => {
                if *alpha > 2.0 {
                    *dim as f64 * alpha / (alpha - 2.0) * scale * scale
                } else {
                    f64::INFINITY
                }
            }
            Self::StudentT { nu, scale, dim, .. } => {
                if *nu > 2.0 {
                    *dim as f64 * scale * scale * nu / (nu - 2.0)
                } else {
                    f64::INFINITY
                }
            }
            Self::MixtureOfGaussians {
                weights,
                means,
                sds,
            } => {
                let mu = self.mean();
                let d = mu.len() as f64;
                weights
                    .iter()
                    .zip(means)
                    .zip(sds)
                    .map(|((w, m), s)| {
                        let shift: f64 = m.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum();
                        w * (d * s * s + shift)
                    })
                    .sum()
            }
            Self::ProductXY { x, y } => x.total_variance() + y.total_variance(),
        }
    }

    pub fn sampler(&self, seed: u64) -> Result<Sampler> {
        self.validate()?;
        Ok(Sampler {
            draw: Prepared::new(self),
            dim: self.dimension(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Gaussian {
        mean: f64,
        sd: f64,
        dim: usize,
    },
    Pareto {
        inv_alpha: f64,
        scale: f64,
        center: f64,
        dim: usize,
    },
    StudentT {
        chi: ChiSquared<f64>,
        nu: f64,
        center: f64,
        scale: f64,
        dim: usize,
    },
    Mixture {
        cumulative: Vec<f64>,
        means: Vec<Vec<f64>>,
        sds: Vec<f64>,
    },
    Product(Box<Prepared>, Box<Prepared>),
}

impl Prepared {
    fn new(spec: &DistributionSpec) -> Self {
        match spec {
            DistributionSpec::Gaussian { mean, sd, dim } => Self::Gaussian {
                mean: *mean,
                sd: *sd,
                dim: *dim,
            },
            DistributionSpec::SymmetricPareto {
                alpha,
                scale,
                center,
                dim,
            } => Self::Pareto {
                inv_alpha: 1.0 / alpha,
                scale: *scale,
                center: *center,
                dim: *dim,
            },
            DistributionSpec::StudentT {
                nu,
                center,
                scale,
                dim,
            } => Self::StudentT {
                chi: ChiSquared::new(*nu).expect("validated nu > 1"),
                nu: *nu,
                center: *center,
                scale: *scale,
                dim: *dim,
            },
            DistributionSpec::MixtureOfGaussians {
                weights,
                means,
                sds,
            } => {
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                Self::Mixture {
                    cumulative,
                    means: means.clone(),
                    sds: sds.clone(),
                }
            }
            DistributionSpec::ProductXY { x, y } => {
                Self::Product(Box::new(Self::new(x)), Box::new(Self::new(y)))
            }
        }
    }

    fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Self::Gaussian { mean, sd, dim } => {
                for v in &mut out[..*dim] {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = mean + sd * z;
                }
            }
            Self::Pareto {
                inv_alpha,
                scale,
                center,
                dim,
            } => {
                for v in &mut out[..*dim] {
                    let u = 1.0 - rng.random::<f64>();
                    let magnitude = scale * u.powf(-inv_alpha);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *v = center + sign * magnitude;
                }
            }
            Self::StudentT {
                chi,
                nu,
                center,
                scale,
                dim,
            } => {
                for v in &mut out[..*dim] {
                    let z: f64 = rng.sample(StandardNormal);
                    let chi2 = chi.sample(rng);
                    *v = center + scale * z / (chi2 / nu).sqrt();
                }
            }
            Self::Mixture {
                cumulative,
                means,
                sds,
            } => {
                let u: f64 = rng.random();
                let k = cumulative
                    .iter()
                    .position(|c| u < *c)
                    .unwrap_or(cumulative.len() - 1);
                for (v, m) in out.iter_mut().zip(&means[k]) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = m + sds[k] * z;
                }
            }
            Self::Product(x, y) => {
                let n = out.len();
                x.draw_into(rng, &mut out[..n - 1]);
                y.draw_into(rng, &mut out[n - 1..]);
            }
        }
    }
}

/// A seeded draw stream for one [`DistributionSpec`].
#[derive(Debug, Clone)]
pub struct Sampler {
    draw: Prepared,
    dim: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Writes one point into `out`, which must have length `dimension()`.
    pub fn next_into(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim, "output buffer has wrong dimension");
        self.draw.draw_into(&mut self.rng, out);
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.next_into(&mut v);
        v
    }

    /// One draw from a scalar distribution.
    pub fn next_scalar(&mut self) -> f64 {
        debug_assert_eq!(self.dim, 1);
        let mut v = [0.0];
        self.draw.draw_into(&mut self.rng, &mut v);
        v[0]
    }

    pub fn fill_scalars(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_scalar();
        }
    }
}

/// `count` points drawn with `seed`.
pub fn sample(spec: &DistributionSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut sampler = spec.sampler(seed)?;
    Ok((0..count).map(|_| sampler.next_point()).collect())
}

/// Same stream as [`sample`] for a scalar distribution, without the row vectors.
pub fn sample_scalar(spec: &DistributionSpec, count: usize, seed: u64) -> Result<Vec<f64>> {
    if spec.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: spec.dimension(),
        });
    }
    let mut sampler = spec.sampler(seed)?;
    let mut out = vec![0.0; count];
    sampler.fill_scalars(&mut out);
    Ok(out)
}

/// `E|N(0, sd^2)|^p`.
pub fn gaussian_abs_moment(sd: f64, p: f64) -> f64 {
    let log = p * sd.ln() + 0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
        - 0.5 * std::f64::consts::PI.ln();
    log.exp()
}

/// `E|scale * T_nu|^p` for `p < nu`.
pub fn student_t_abs_moment(nu: f64, scale: f64, p: f64) -> f64 {
    let log = p * scale.ln() + 0.5 * p * nu.ln() + ln_gamma(0.5 * (p + 1.0)) + ln_gamma(0.5 * (nu - p))
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(0.5 * nu);
    log.exp()
}

/// `E|X - center|^p` for a symmetric Pareto, `p < alpha`.
pub fn symmetric_pareto_abs_moment(alpha: f64, scale: f64, p: f64) -> f64 {
    alpha / (alpha - p) * scale.powf(p)
}

const QUAD_TOL: f64 = 1e-11;

/// Mean and `p`-th absolute central moment, `p ∈ (1, 2]`.
pub fn moments(spec: &DistributionSpec, p: f64) -> Result<MomentInfo> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, 2] (got {p})")));
    }
    spec.validate()?;
    let mean = spec.mean();
    let (value, method) = central_moment(spec, p)?;
    Ok(MomentInfo {
        mean,
        p,
        central_moment_p: value,
        exists: value.is_finite(),
        method,
    })
}

fn central_moment(spec: &DistributionSpec, p: f64) -> Result<(f64, MomentMethod)> {
    use DistributionSpec::*;
    Ok(match spec {
        Gaussian { sd, .. } => (gaussian_abs_moment(*sd, p), MomentMethod::ClosedForm),
        SymmetricPareto { alpha, scale, .. } => {
            let v = if p < *alpha {
                symmetric_pareto_abs_moment(*alpha, *scale, p)
            } else {
                f64::INFINITY
            };
            (v, MomentMethod::ClosedForm)
        }
        StudentT { nu, scale, .. } => {
            let v = if p < *nu {
                student_t_abs_moment(*nu, *scale, p)
            } else {
                f64::INFINITY
            };
            (v, MomentMethod::ClosedForm)
        }
        MixtureOfGaussians {
            weights,
            means,
            sds,
        } => {
            let mu = spec.mean();
            let mut worst = 0.0f64;
            for (j, mu_j) in mu.iter().enumerate() {
                let mut total = 0.0;
                for ((w, m), s) in weights.iter().zip(means).zip(sds) {
                    if *w == 0.0 {
                        continue;
                    }
                    let (c, s) = (m[j], *s);
                    let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
                    let integrand =
                        |x: f64| (x - mu_j).abs().powf(p) * norm * (-0.5 * ((x - c) / s).powi(2)).exp();
                    let lo = (c - 40.0 * s).min(*mu_j - 1.0);
                    let hi = (c + 40.0 * s).max(*mu_j + 1.0);
                    let mut breaks = vec![lo, c, *mu_j, hi];
                    breaks.sort_by(f64::total_cmp);
                    breaks.dedup();
                    total += w * quadrature::integrate_pieces(integrand, &breaks, QUAD_TOL)?;
                }
                worst = worst.max(total);
            }
            (worst, MomentMethod::Numeric)
        }
        ProductXY { x, y } => {
            let (vx, mx) = central_moment(x, p)?;
            let (vy, my) = central_moment(y, p)?;
            let method = if mx == MomentMethod::Numeric || my == MomentMethod::Numeric {
                MomentMethod::Numeric
            } else {
                MomentMethod::ClosedForm
            };
            (vx.max(vy), method)
        }
    })
}
