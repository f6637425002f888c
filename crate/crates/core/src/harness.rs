//! Monte Carlo campaigns checking the probabilistic bounds at desk scale.
//!
//! Trial `t` of a campaign draws from its own generator seeded with
//! `base_seed + t`, so trials run in parallel and reruns reproduce identical
//! counts. Every report carries the seed, the trial count and a SHA-256 hash
//! of its resolved configuration.
//!
//! Empirical probabilities are judged against a bound `q` with the tolerance
//! `q + 3 sqrt(q (1 - q) / trials)`.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::estimator::{mom, partition};
use crate::function_classes::{kmeans_loss, risk_interval, CenterSet, MixtureRisk};
use crate::planner::{single_mean_m, LemmaConstants, LEMMA};
use crate::tail_models::{moments, DistributionSpec};

pub const SCHEMA_VERSION: u32 = 1;
/// Smallest trial count for a report that quotes an empirical probability.
pub const MIN_TRIALS: u64 = 100;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Smallest draw count accepted by [`permutation_simulation`].
pub const MIN_PERMUTATION_DRAWS: u64 = 100_000;

const PERMUTATION_CHUNK: u64 = 1 << 16;

/// Lowercase hex SHA-256 of the JSON encoding of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = Z95 * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // clamp so the interval always holds phat despite rounding
    ((center - half).clamp(0.0, phat), (center + half).clamp(phat, 1.0))
}

/// `bound + 3 sqrt(bound (1 - bound) / trials)`.
pub fn probability_tolerance(bound: f64, trials: u64) -> f64 {
    bound + 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt()
}

/// Nearest-rank quantile of sorted data: the `ceil(q n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            p50: nearest_rank(&sorted, 0.50),
            p90: nearest_rank(&sorted, 0.90),
            p99: nearest_rank(&sorted, 0.99),
        }
    }
}

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A real function on points with a known mean.
#[derive(Clone)]
pub struct TargetFunction {
    pub name: String,
    pub true_mean: Option<f64>,
    pub eval: PointFn,
}

impl std::fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetFunction")
            .field("name", &self.name)
            .field("true_mean", &self.true_mean)
            .finish_non_exhaustive()
    }
}

impl TargetFunction {
    pub fn new<F>(name: impl Into<String>, true_mean: Option<f64>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            true_mean,
            eval: Arc::new(eval),
        }
    }

    /// `x -> x[coord]` with mean taken from `law`.
    pub fn coordinate(law: &DistributionSpec, coord: usize) -> Self {
        let mean = law.mean().get(coord).copied();
        Self::new(format!("x[{coord}]"), mean, move |x| x[coord])
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), Some(c), move |_| c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub trials: u64,
    pub base_seed: u64,
    pub m: usize,
    pub kappa: usize,
    pub epsilon: f64,
    pub distribution: DistributionSpec,
    /// Human-readable description of the function family.
    pub family: String,
    /// Also track the plain sample mean on the same points.
    #[serde(default)]
    pub comparator: bool,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < MIN_TRIALS {
            return Err(Error::InvalidParameter(format!(
                "trials must be >= {MIN_TRIALS} (got {})",
                self.trials
            )));
        }
        if self.m == 0 || self.kappa == 0 {
            return Err(Error::InvalidParameter("m and kappa must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0 (got {})", self.epsilon)));
        }
        self.distribution.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorColumn {
    pub failures: u64,
    pub empirical_delta: f64,
    pub sup_error_quantiles: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub schema_version: u32,
    pub config: TrialConfig,
    pub config_hash: String,
    pub trials: u64,
    /// Trials whose sup error exceeded `epsilon`.
    pub failures: u64,
    pub empirical_delta: f64,
    pub wilson_interval: (f64, f64),
    pub sup_error_quantiles: Quantiles,
    pub comparator: Option<ComparatorColumn>,
}

impl CoverageReport {
    /// `empirical_delta <= delta + 3 sqrt(delta (1 - delta) / trials)`.
    pub fn within(&self, delta: f64) -> bool {
        self.empirical_delta <= probability_tolerance(delta, self.trials)
    }
}

/// Runs `cfg.trials` independent MoM estimates of every function in
/// `functions` and records the sup error per trial.
pub fn coverage_experiment(cfg: &TrialConfig, functions: &[TargetFunction]) -> Result<CoverageReport> {
    cfg.validate()?;
    if functions.is_empty() {
        return Err(Error::InvalidParameter("function family is empty".into()));
    }
    let means: Vec<f64> = functions
        .iter()
        .map(|f| f.true_mean.ok_or_else(|| Error::MissingTrueMean(f.name.clone())))
        .collect::<Result<_>>()?;
    let n = cfg.kappa * cfg.m;

    let per_trial: Vec<(f64, f64)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut sampler = cfg.distribution.sampler(cfg.base_seed.wrapping_add(t))?;
            let d = sampler.dimension();
            let mut flat = vec![0.0; n * d];
            for point in flat.chunks_mut(d) {
                sampler.next_into(point);
            }
            let (mut sup_mom, mut sup_mean) = (0.0f64, 0.0f64);
            for (f, mu) in functions.iter().zip(&means) {
                let values: Vec<f64> = flat.chunks(d).map(|x| (f.eval)(x)).collect();
                let mean = values.iter().sum::<f64>() / n as f64;
                let est = mom(&partition(values, cfg.kappa)?, |v| *v)?.estimate;
                sup_mom = sup_mom.max((est - mu).abs());
                sup_mean = sup_mean.max((mean - mu).abs());
            }
            Ok((sup_mom, sup_mean))
        })
        .collect::<Result<_>>()?;

    let mom_errors: Vec<f64> = per_trial.iter().map(|r| r.0).collect();
    let failures = mom_errors.iter().filter(|&&e| e > cfg.epsilon).count() as u64;
    let comparator = cfg.comparator.then(|| {
        let errors: Vec<f64> = per_trial.iter().map(|r| r.1).collect();
        let failures = errors.iter().filter(|&&e| e > cfg.epsilon).count() as u64;
        ComparatorColumn {
            failures,
            empirical_delta: failures as f64 / cfg.trials as f64,
            sup_error_quantiles: Quantiles::of(&errors),
        }
    });
    Ok(CoverageReport {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        trials: cfg.trials,
        failures,
        empirical_delta: failures as f64 / cfg.trials as f64,
        wilson_interval: wilson_interval(failures, cfg.trials),
        sup_error_quantiles: Quantiles::of(&mom_errors),
        comparator,
    })
}

/// MoM with `kappa` blocks against the sample mean of all `n` points, on
/// identical `SymmetricPareto(alpha)` streams.
pub fn mom_vs_mean(alpha: f64, n: usize, kappa: usize, trials: u64, seed: u64) -> Result<CoverageReport> {
    if kappa == 0 || !n.is_multiple_of(kappa) {
        return Err(Error::InvalidParameter(format!("kappa must divide n (n={n}, kappa={kappa})")));
    }
    let law = DistributionSpec::symmetric_pareto(alpha, 1.0, 0.0);
    let cfg = TrialConfig {
        trials,
        base_seed: seed,
        m: n / kappa,
        kappa,
        epsilon: 1.0,
        family: "identity".into(),
        comparator: true,
        distribution: law.clone(),
    };
    coverage_experiment(&cfg, &[TargetFunction::coordinate(&law, 0)])
}

/// Exceedance of a single sample mean with `m = single_mean_m(eps, delta, p, v_p)`.
pub fn single_mean_concentration_check(
    spec: &DistributionSpec,
    p: f64,
    epsilon: f64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<CoverageReport> {
    if spec.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: spec.dimension(),
        });
    }
    let info = moments(spec, p)?;
    if !info.exists {
        return Err(Error::InfiniteMoment { p });
    }
    let m = single_mean_m(epsilon, delta, p, info.central_moment_p)?;
    let cfg = TrialConfig {
        trials,
        base_seed: seed,
        m: m as usize,
        kappa: 1,
        epsilon,
        distribution: spec.clone(),
        family: "identity".into(),
        comparator: false,
    };
    coverage_experiment(&cfg, &[TargetFunction::coordinate(spec, 0)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub m: usize,
    /// Monte Carlo mean of `|mean_m - mu|^p`.
    pub empirical: f64,
    pub stderr: f64,
    /// `2 v_p / m^{p-1}`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheckReport {
    pub schema_version: u32,
    pub distribution: DistributionSpec,
    pub p: f64,
    pub v_p: f64,
    pub trials: u64,
    pub base_seed: u64,
    pub config_hash: String,
    pub rows: Vec<MomentRow>,
}

impl MomentCheckReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Checks `E|mean_m - mu|^p <= 2 v_p / m^{p-1}` for each `m`, passing at
/// `bound * (1 + 3 * stderr / empirical)`.
pub fn moment_bound_check(
    spec: &DistributionSpec,
    p: f64,
    m_list: &[usize],
    trials: u64,
    seed: u64,
) -> Result<MomentCheckReport> {
    if spec.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: spec.dimension(),
        });
    }
    if trials < 2 || m_list.contains(&0) {
        return Err(Error::InvalidParameter("need trials >= 2 and every m >= 1".into()));
    }
    let info = moments(spec, p)?;
    if !info.exists {
        return Err(Error::InfiniteMoment { p });
    }
    let mu = spec.mean()[0];
    let v_p = info.central_moment_p;
    let rows = m_list
        .iter()
        .map(|&m| {
            let dev: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut sampler = spec.sampler(seed.wrapping_add(t))?;
                    let mut sum = 0.0;
                    for _ in 0..m {
                        sum += sampler.next_scalar();
                    }
                    Ok((sum / m as f64 - mu).abs().powf(p))
                })
                .collect::<Result<_>>()?;
            let n = trials as f64;
            let empirical = dev.iter().sum::<f64>() / n;
            let var = dev.iter().map(|v| (v - empirical).powi(2)).sum::<f64>() / (n - 1.0);
            let stderr = (var / n).sqrt();
            let bound = 2.0 * v_p / (m as f64).powf(p - 1.0);
            let rel = if empirical > 0.0 { stderr / empirical } else { 0.0 };
            Ok(MomentRow {
                m,
                empirical,
                stderr,
                bound,
                pass: empirical <= bound * (1.0 + 3.0 * rel),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hashed = (spec, p, m_list, trials, seed);
    Ok(MomentCheckReport {
        schema_version: SCHEMA_VERSION,
        distribution: spec.clone(),
        p,
        v_p,
        trials,
        base_seed: seed,
        config_hash: config_hash(&hashed),
        rows,
    })
}

/// `exp(-gamma^2 kappa q)`.
pub fn chernoff_bound(kappa: u64, q: f64, gamma: f64) -> Result<f64> {
    if kappa == 0 || !(q > 0.0 && q < 1.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need kappa >= 1 and q, gamma in (0, 1) (got {kappa}, {q}, {gamma})"
        )));
    }
    Ok((-gamma * gamma * kappa as f64 * q).exp())
}

/// `kappa` rows of two booleans; row `i`, column `j` flags block `i` of
/// sample `j` as far from block `i` of the reference sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    pub rows: Vec<[bool; 2]>,
}

/// Row counts by pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub ones_zero: usize,
    pub zero_ones: usize,
    pub both: usize,
}

impl IndicatorMatrix {
    pub fn new(rows: Vec<[bool; 2]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("kappa must be >= 1".into()));
        }
        Ok(Self { rows })
    }

    /// `ones_zero` rows `(1,0)`, then `zero_ones` rows `(0,1)`, then `both`
    /// rows `(1,1)`, padded with `(0,0)` to `kappa` rows.
    pub fn structured(kappa: usize, counts: RowCounts) -> Result<Self> {
        let used = counts.ones_zero + counts.zero_ones + counts.both;
        if used > kappa {
            return Err(Error::InvalidParameter(format!("{used} patterned rows exceed kappa={kappa}")));
        }
        let mut rows = Vec::with_capacity(kappa);
        rows.extend(std::iter::repeat_n([true, false], counts.ones_zero));
        rows.extend(std::iter::repeat_n([false, true], counts.zero_ones));
        rows.extend(std::iter::repeat_n([true, true], counts.both));
        rows.resize(kappa, [false, false]);
        Self::new(rows)
    }

    /// Entries independent with probability `density` of being set.
    pub fn random(kappa: usize, density: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..kappa)
            .map(|_| [rng.random_bool(density), rng.random_bool(density)])
            .collect();
        Self::new(rows)
    }

    /// Flags `|a_j - a_ref| > threshold` for per-block means of two samples
    /// against a reference sample.
    pub fn from_block_means(first: &[f64], second: &[f64], reference: &[f64], threshold: f64) -> Result<Self> {
        if first.len() != reference.len() || second.len() != reference.len() {
            return Err(Error::InvalidParameter("block mean vectors must share kappa".into()));
        }
        let rows = reference
            .iter()
            .zip(first.iter().zip(second))
            .map(|(r, (a, b))| [(a - r).abs() > threshold, (b - r).abs() > threshold])
            .collect();
        Self::new(rows)
    }

    pub fn kappa(&self) -> usize {
        self.rows.len()
    }

    /// Total number of set entries.
    pub fn zeta(&self) -> usize {
        self.rows.iter().map(|r| r[0] as usize + r[1] as usize).sum()
    }

    pub fn counts(&self) -> RowCounts {
        let count = |pat: [bool; 2]| self.rows.iter().filter(|r| **r == pat).count();
        RowCounts {
            ones_zero: count([true, false]),
            zero_ones: count([false, true]),
            both: count([true, true]),
        }
    }

    fn column_masks(&self) -> (Vec<u64>, Vec<u64>) {
        let words = self.kappa().div_ceil(64);
        let (mut c0, mut c1) = (vec![0u64; words], vec![0u64; words]);
        for (i, r) in self.rows.iter().enumerate() {
            c0[i / 64] |= (r[0] as u64) << (i % 64);
            c1[i / 64] |= (r[1] as u64) << (i % 64);
        }
        (c0, c1)
    }
}

/// Exact integer form of the joint event for `kappa` rows:
/// `S_b >= 4769/10000` and `S_{1-b} < 331/10000`.
fn joint_event(kappa: usize, count_b: u64, count_flip: u64) -> bool {
    let c = LEMMA.c;
    let d = LEMMA.d;
    let k = kappa as i64;
    // count/kappa >= c.numer/c.denom  <=>  count * c.denom >= c.numer * kappa
    (count_b as i64) * c.denom() >= c.numer() * k && (count_flip as i64) * d.denom() < d.numer() * k
}

/// Exact probability of the joint event over uniform `b`.
///
/// Only the `(1,0)` and `(0,1)` rows are random: with `n` such rows and `e`
/// rows `(1,1)`, `S_b = e + Z` and `S_{1-b} = e + n - Z` for `Z ~ Bin(n, 1/2)`.
pub fn exact_event_probability(matrix: &IndicatorMatrix) -> f64 {
    let c = matrix.counts();
    let n = (c.ones_zero + c.zero_ones) as u64;
    let e = c.both as u64;
    (0..=n)
        .filter(|&z| joint_event(matrix.kappa(), e + z, e + n - z))
        .map(|z| (ln_binomial(n, z) - n as f64 * std::f64::consts::LN_2).exp())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSimReport {
    pub schema_version: u32,
    pub kappa: usize,
    pub c: f64,
    pub d: f64,
    pub draws: u64,
    pub base_seed: u64,
    pub config_hash: String,
    pub event_count: u64,
    pub empirical_prob: f64,
    pub wilson_interval: (f64, f64),
    /// `exp(-kappa / 50)`.
    pub bound: f64,
    /// `sqrt(bound (1 - bound) / draws)`.
    pub stderr: f64,
    pub exact_prob: f64,
    pub zeta: usize,
}

impl PermutationSimReport {
    /// `empirical_prob <= bound + 3 stderr`.
    pub fn pass(&self) -> bool {
        self.empirical_prob <= self.bound + 3.0 * self.stderr
    }
}

fn count_events(matrix: &IndicatorMatrix, draws: u64, seed: u64) -> u64 {
    let (c0, c1) = matrix.column_masks();
    let kappa = matrix.kappa();
    let tail = kappa % 64;
    let last_mask = if tail == 0 { u64::MAX } else { (1u64 << tail) - 1 };
    let chunks = draws.div_ceil(PERMUTATION_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(chunk));
            let todo = PERMUTATION_CHUNK.min(draws - chunk * PERMUTATION_CHUNK);
            let mut events = 0u64;
            for _ in 0..todo {
                let (mut sb, mut sflip) = (0u64, 0u64);
                for w in 0..c0.len() {
                    let mut b = rng.next_u64();
                    if w + 1 == c0.len() {
                        b &= last_mask;
                    }
                    // b_i = 0 reads column 0, b_i = 1 reads column 1
                    sb += ((c0[w] & !b) | (c1[w] & b)).count_ones() as u64;
                    sflip += ((c0[w] & b) | (c1[w] & !b)).count_ones() as u64;
                }
                events += joint_event(kappa, sb, sflip) as u64;
            }
            events
        })
        .sum()
}

/// Draws `b` uniform on `{0,1}^kappa` and counts the joint event.
pub fn permutation_simulation(matrix: &IndicatorMatrix, draws: u64, seed: u64) -> Result<PermutationSimReport> {
    if draws < MIN_PERMUTATION_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "draws must be >= {MIN_PERMUTATION_DRAWS} (got {draws})"
        )));
    }
    let kappa = matrix.kappa();
    let event_count = count_events(matrix, draws, seed);
    let bound = (-(kappa as f64) * LemmaConstants::as_f64(LEMMA.permutation_rate)).exp();
    Ok(PermutationSimReport {
        schema_version: SCHEMA_VERSION,
        kappa,
        c: LemmaConstants::as_f64(LEMMA.c),
        d: LemmaConstants::as_f64(LEMMA.d),
        draws,
        base_seed: seed,
        config_hash: config_hash(&(matrix, draws, seed)),
        event_count,
        empirical_prob: event_count as f64 / draws as f64,
        wilson_interval: wilson_interval(event_count, draws),
        bound,
        stderr: (bound * (1.0 - bound) / draws as f64).sqrt(),
        exact_prob: exact_event_probability(matrix),
        zeta: matrix.zeta(),
    })
}

/// Pilot draws per candidate in [`adversarial_matrix_search`].
pub const PILOT_DRAWS: u64 = 20_000;

/// Structured and seeded-random candidate matrices for `kappa` rows.
///
/// Structured candidates put `n` rows in `(1,0)`/`(0,1)` patterns around the
/// `ceil(0.4769 kappa)` threshold, with a few `(1,1)` rows; the rest are
/// random with varying density.
pub fn candidate_matrices(kappa: usize, candidates: usize, seed: u64) -> Result<Vec<IndicatorMatrix>> {
    if kappa == 0 || candidates == 0 {
        return Err(Error::InvalidParameter("kappa and candidates must be >= 1".into()));
    }
    let c = LEMMA.c;
    let threshold = ((c.numer() * kappa as i64 + c.denom() - 1) / c.denom()) as usize;
    let mut out = Vec::with_capacity(candidates);
    'grid: for both in 0..4usize {
        for extra in 0..(kappa / 10).max(1) {
            let n = threshold.saturating_sub(both) + extra;
            for split in [0, n / 2, n] {
                if out.len() * 2 >= candidates {
                    break 'grid;
                }
                let counts = RowCounts {
                    ones_zero: n - split,
                    zero_ones: split,
                    both,
                };
                if n + both <= kappa {
                    out.push(IndicatorMatrix::structured(kappa, counts)?);
                }
            }
        }
    }
    let mut i = 0u64;
    while out.len() < candidates {
        let density = 0.05 + 0.9 * ((i % 19) as f64 / 18.0);
        out.push(IndicatorMatrix::random(kappa, density, seed.wrapping_add(i))?);
        i += 1;
    }
    Ok(out)
}

/// Candidate maximizing the pilot-budget event frequency; ties broken by the
/// exact event probability, then by candidate order.
pub fn adversarial_matrix_search(kappa: usize, candidates: usize, seed: u64) -> Result<IndicatorMatrix> {
    let pool = candidate_matrices(kappa, candidates, seed)?;
    let scored: Vec<(u64, f64)> = pool
        .iter()
        .enumerate()
        .map(|(i, m)| (count_events(m, PILOT_DRAWS, seed ^ (i as u64).rotate_left(32)), exact_event_probability(m)))
        .collect();
    let best = (0..pool.len())
        .max_by(|&a, &b| {
            scored[a]
                .0
                .cmp(&scored[b].0)
                .then(scored[a].1.total_cmp(&scored[b].1))
                .then(b.cmp(&a))
        })
        .expect("non-empty pool");
    Ok(pool.into_iter().nth(best).expect("index in range"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub centers: Vec<Vec<f64>>,
    pub risk: f64,
    pub estimate: f64,
    pub interval: (f64, f64),
    pub contained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansIntervalReport {
    pub schema_version: u32,
    pub distribution: DistributionSpec,
    pub epsilon: f64,
    pub sigma2: f64,
    pub m: usize,
    pub kappa: usize,
    pub base_seed: u64,
    pub config_hash: String,
    pub rows: Vec<IntervalRow>,
    pub containment_frequency: f64,
}

/// For `sets` random 2-center sets, estimates `E d(X,Q)^2` by MoM on a fresh
/// sample and checks the exact risk against [`risk_interval`].
pub fn kmeans_interval_demo(
    law: &DistributionSpec,
    epsilon: f64,
    sets: usize,
    m: usize,
    kappa: usize,
    seed: u64,
) -> Result<KMeansIntervalReport> {
    if sets == 0 || m == 0 || kappa == 0 {
        return Err(Error::InvalidParameter("sets, m and kappa must be >= 1".into()));
    }
    let oracle = MixtureRisk::new(law)?;
    let sigma2 = law.total_variance();
    let d = law.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center_sets: Vec<CenterSet> = (0..sets)
        .map(|_| CenterSet::new((0..2).map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect()).collect()))
        .collect::<Result<_>>()?;
    let rows = center_sets
        .into_par_iter()
        .enumerate()
        .map(|(i, q)| {
            let mut sampler = law.sampler(seed.wrapping_add(1 + i as u64))?;
            let points: Vec<Vec<f64>> = (0..m * kappa).map(|_| sampler.next_point()).collect();
            let estimate = mom(&partition(points, kappa)?, |x| kmeans_loss(x, &q).expect("dimensions agree"))?.estimate;
            let risk = oracle.risk(&q);
            let interval = risk_interval(estimate, epsilon, sigma2);
            Ok(IntervalRow {
                centers: q.centers().to_vec(),
                risk,
                estimate,
                contained: interval.0 <= risk && risk <= interval.1,
                interval,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let contained = rows.iter().filter(|r| r.contained).count();
    Ok(KMeansIntervalReport {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash(&(law, epsilon, sets, m, kappa, seed)),
        distribution: law.clone(),
        epsilon,
        sigma2,
        m,
        kappa,
        base_seed: seed,
        containment_frequency: contained as f64 / sets as f64,
        rows,
    })
}

/// Flattens a JSON value into `key,value` CSV rows with dotted keys.
pub fn flatten_csv(value: &serde_json::Value) -> String {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut String) {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            serde_json::Value::Object(map) => {
                for (k, v) in map {
                    walk(&key(k), v, out);
                }
            }
            serde_json::Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&key(&i.to_string()), v, out);
                }
            }
            serde_json::Value::String(s) => out.push_str(&format!("{prefix},{}\n", csv_escape(s))),
            other => out.push_str(&format!("{prefix},{other}\n")),
        }
    }
    let mut out = String::from("key,value\n");
    walk("", value, &mut out);
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_cfg(trials: u64, m: usize, kappa: usize, epsilon: f64) -> TrialConfig {
        TrialConfig {
            trials,
            base_seed: 11,
            m,
            kappa,
            epsilon,
            distribution: DistributionSpec::gaussian(0.0, 1.0),
            family: "test".into(),
            comparator: false,
        }
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.036_994).abs() < 1e-5);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.403_832).abs() < 1e-5 && (hi - 0.596_168).abs() < 1e-5);
        for (s, n) in [(0, 1), (1, 1), (3, 7), (999, 1000), (1, 1_000_000)] {
            let (lo, hi) = wilson_interval(s, n);
            let p = s as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
        // width shrinks like 1/sqrt(n)
        let w = |n: u64| {
            let (lo, hi) = wilson_interval(n / 4, n);
            hi - lo
        };
        assert!((w(400) / w(40_000) - 10.0).abs() < 0.2);
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = Quantiles::of(&v);
        assert_eq!((q.p50, q.p90, q.p99), (50.0, 90.0, 99.0));
        assert_eq!(Quantiles::of(&[3.0]).p99, 3.0);
    }

    #[test]
    fn constant_family_never_fails() {
        let r = coverage_experiment(&gauss_cfg(100, 5, 3, 1e-9), &[TargetFunction::constant(2.5)]).unwrap();
        assert_eq!(r.failures, 0);
        assert_eq!(r.sup_error_quantiles.p99, 0.0);
    }

    #[test]
    fn missing_mean_names_the_function() {
        let f = TargetFunction::new("mystery", None, |x| x[0]);
        let err = coverage_experiment(&gauss_cfg(100, 5, 3, 0.1), &[f]).unwrap_err();
        assert!(err.to_string().contains("mystery"));
        assert!(coverage_experiment(&gauss_cfg(99, 5, 3, 0.1), &[TargetFunction::constant(0.0)]).is_err());
    }

    #[test]
    fn coverage_is_reproducible_and_round_trips() {
        let mut cfg = gauss_cfg(200, 10, 5, 0.3);
        cfg.comparator = true;
        let fam = [TargetFunction::coordinate(&cfg.distribution, 0)];
        let a = coverage_experiment(&cfg, &fam).unwrap();
        let b = coverage_experiment(&cfg, &fam).unwrap();
        assert_eq!(a, b);
        assert!(a.wilson_interval.0 <= a.empirical_delta && a.empirical_delta <= a.wilson_interval.1);
        let back: CoverageReport = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(a.config_hash.len(), 64);
    }

    #[test]
    fn kappa_one_mom_equals_mean_column() {
        let mut cfg = gauss_cfg(100, 7, 1, 0.5);
        cfg.comparator = true;
        let r = coverage_experiment(&cfg, &[TargetFunction::coordinate(&cfg.distribution, 0)]).unwrap();
        let c = r.comparator.unwrap();
        assert_eq!(c.failures, r.failures);
        assert_eq!(c.sup_error_quantiles, r.sup_error_quantiles);
    }

    #[test]
    fn chernoff_examples() {
        let kappa = (1e6 * std::f64::consts::LN_2 / 99.0).ceil() as u64;
        assert!(chernoff_bound(kappa, 199.0 / 200.0, 0.01).unwrap() <= 0.5);
        assert!(chernoff_bound(10, 0.5, 1e-9).unwrap() > 1.0 - 1e-12);
        let one = chernoff_bound(100, 0.3, 0.2).unwrap();
        let two = chernoff_bound(200, 0.3, 0.2).unwrap();
        assert!((two - one * one).abs() < 1e-15);
        assert!(chernoff_bound(10, 1.0, 0.5).is_err());
    }

    #[test]
    fn trivial_matrices_never_trigger() {
        for rows in [[false, false], [true, true]] {
            let m = IndicatorMatrix::new(vec![rows; 200]).unwrap();
            let r = permutation_simulation(&m, 100_000, 1).unwrap();
            assert_eq!(r.event_count, 0);
            assert_eq!(r.exact_prob, 0.0);
        }
    }

    #[test]
    fn joint_event_thresholds_are_exact() {
        // kappa = 10000: S_b >= 4769 and S_flip < 331
        assert!(joint_event(10_000, 4769, 330));
        assert!(!joint_event(10_000, 4768, 330));
        assert!(!joint_event(10_000, 4769, 331));
    }

    #[test]
    fn exact_probability_matches_brute_force() {
        // small kappa so the event is common: enumerate all 2^kappa b vectors
        let m = IndicatorMatrix::structured(12, RowCounts { ones_zero: 4, zero_ones: 3, both: 0 }).unwrap();
        let kappa = m.kappa();
        let mut hits = 0u64;
        for b in 0u32..(1 << kappa) {
            let bit = |i: usize| (b >> i) & 1 == 1;
            let sb = (0..kappa).filter(|&i| m.rows[i][bit(i) as usize]).count() as u64;
            let sf = (0..kappa).filter(|&i| m.rows[i][!bit(i) as usize]).count() as u64;
            hits += joint_event(kappa, sb, sf) as u64;
        }
        let brute = hits as f64 / (1u64 << kappa) as f64;
        assert!((exact_event_probability(&m) - brute).abs() < 1e-12);
        assert!(brute > 0.0);
        let r = permutation_simulation(&m, 400_000, 5).unwrap();
        let se = (brute * (1.0 - brute) / 400_000.0).sqrt();
        assert!((r.empirical_prob - brute).abs() < 4.0 * se, "{} vs {brute}", r.empirical_prob);
    }

    #[test]
    fn masks_handle_partial_words() {
        // kappa = 70 spans two words; all rows (1,0): S_b = #zeros of b, S_flip = #ones
        let m = IndicatorMatrix::new(vec![[true, false]; 70]).unwrap();
        let (c0, c1) = m.column_masks();
        assert_eq!(c0[0].count_ones() + c0[1].count_ones(), 70);
        assert_eq!(c1.iter().map(|w| w.count_ones()).sum::<u32>(), 0);
        let r = permutation_simulation(&m, 100_000, 3).unwrap();
        assert!((r.empirical_prob - r.exact_prob).abs() < 1e-4);
    }

    #[test]
    fn adversarial_search_smoke() {
        let m = adversarial_matrix_search(50, 30, 7).unwrap();
        assert_eq!(m.kappa(), 50);
        if exact_event_probability(&m) > 0.0 {
            assert!(m.zeta() >= 24);
        }
        let again = adversarial_matrix_search(50, 30, 7).unwrap();
        assert_eq!(m, again);
        assert_eq!(candidate_matrices(50, 30, 7).unwrap().len(), 30);
    }

    #[test]
    fn from_block_means_flags() {
        let m = IndicatorMatrix::from_block_means(&[0.0, 2.0], &[1.5, 0.1], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(m.rows, vec![[false, true], [true, false]]);
    }

    #[test]
    fn moment_check_gaussian() {
        let r = moment_bound_check(&DistributionSpec::gaussian(0.0, 1.0), 2.0, &[100], 20_000, 3).unwrap();
        let row = &r.rows[0];
        assert!((row.empirical - 0.01).abs() < 0.001, "{}", row.empirical);
        assert!((row.bound - 0.02).abs() < 1e-12);
        assert!(r.pass());
        let heavy = DistributionSpec::symmetric_pareto(1.8, 1.0, 0.0);
        assert!(matches!(moment_bound_check(&heavy, 2.0, &[10], 100, 0), Err(Error::InfiniteMoment { .. })));
    }

    #[test]
    fn single_mean_uses_planned_m() {
        let r = single_mean_concentration_check(&DistributionSpec::gaussian(0.0, 1.0), 2.0, 1.0, 0.5, 1000, 1).unwrap();
        assert_eq!(r.config.m, 4);
        assert!(r.within(0.5));
    }

    #[test]
    fn flatten_csv_keys() {
        let v = serde_json::json!({"a": {"b": 1, "c": [2, "x,y"]}});
        assert_eq!(flatten_csv(&v), "key,value\na.b,1\na.c.0,2\na.c.1,\"x,y\"\n");
    }

    #[test]
    fn permutation_rejects_small_budgets() {
        let m = IndicatorMatrix::new(vec![[false, false]; 10]).unwrap();
        assert!(permutation_simulation(&m, 10, 0).is_err());
    }
}
