//! Finite discretizations.
//!
//! Two constructions live here:
//!
//! - [`ball_net`]: a `beta`-net of the Euclidean ball of radius `W` in `R^d`,
//!   built as a greedy packing (pairwise distances `> beta`). A maximal packing
//!   is a net, and its size is at most `(6W/beta)^d` by a volume argument.
//!   Maximality cannot be certified, so every net carries a Monte Carlo
//!   coverage audit. For `d <= 4` a scaled cubic lattice gives a second,
//!   provably covering construction.
//! - [`empirical_l1_net`]: a greedy net, in `L1` of the empirical measure over
//!   three pooled blocked samples, over a finite explicit family of candidate
//!   functions. Each candidate is checked against its representative block by
//!   block, and the set of blocks where the per-block `L1` gap exceeds `eps`
//!   must stay within `2 kappa / 625` blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::BlockedSample;
use crate::planner::{LemmaConstants, LEMMA};

/// Consecutive rejections, per accepted point, before the greedy packing stops.
pub const PATIENCE_PER_POINT: usize = 50;
/// Hard cap on candidates drawn by [`ball_net`].
pub const CANDIDATE_BUDGET: usize = 20_000_000;

const AUDIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetConstruction {
    GreedyPacking,
    ScaledLattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditMiss {
    pub point: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageAudit {
    pub audited: usize,
    pub misses: Vec<AuditMiss>,
    pub coverage_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallNet {
    pub points: Vec<Vec<f64>>,
    pub radius_beta: f64,
    pub w_bound: f64,
    pub dim: usize,
    pub construction: NetConstruction,
    pub candidates_drawn: usize,
    pub audit: CoverageAudit,
    /// Set when the audit found uncovered points.
    pub incomplete: bool,
}

impl BallNet {
    /// `(6W/beta)^d`, the size bound for a packing.
    pub fn size_bound(&self) -> f64 {
        (6.0 * self.w_bound / self.radius_beta).powi(self.dim as i32)
    }

    /// Smallest pairwise distance; `+inf` for fewer than two points.
    pub fn min_separation(&self) -> f64 {
        min_pairwise_distance(&self.points)
    }

    /// One point per row, comma-separated, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.min(distance(p, q));
        }
    }
    best
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, w: f64, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z;
            norm2 += z * z;
        }
        if norm2 > 0.0 {
            let u: f64 = rng.random();
            let r = w * u.powf(1.0 / out.len() as f64) / norm2.sqrt();
            for v in out.iter_mut() {
                *v *= r;
            }
            return;
        }
    }
}

fn check_ball_args(w: f64, beta: f64, d: usize) -> Result<()> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("W must be > 0 (got {w})")));
    }
    if !(beta > 0.0 && beta <= w) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, W] (got {beta} for W={w})")));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be >= 1".into()));
    }
    Ok(())
}

/// Greedy maximal `beta`-packing of the radius-`W` ball in `R^d`.
///
/// Candidates are seeded-uniform in the ball; one is accepted iff it is more
/// than `beta` from every accepted point. Construction stops after
/// `PATIENCE_PER_POINT * size` consecutive rejections (or the candidate
/// budget), then `audit_count` fresh uniform points are checked for coverage.
pub fn ball_net(w: f64, beta: f64, d: usize, seed: u64, audit_count: usize) -> Result<BallNet> {
    check_ball_args(w, beta, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut candidate = vec![0.0; d];
    let mut rejections = 0usize;
    let mut drawn = 0usize;
    while drawn < CANDIDATE_BUDGET {
        uniform_in_ball(&mut rng, w, &mut candidate);
        drawn += 1;
        if points.iter().all(|p| distance(p, &candidate) > beta) {
            points.push(candidate.clone());
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= PATIENCE_PER_POINT * points.len() {
                break;
            }
        }
    }
    let audit = audit_coverage(&points, w, beta, audit_count, seed ^ AUDIT_STREAM);
    Ok(BallNet {
        incomplete: !audit.misses.is_empty(),
        points,
        radius_beta: beta,
        w_bound: w,
        dim: d,
        construction: NetConstruction::GreedyPacking,
        candidates_drawn: drawn,
        audit,
    })
}

/// Cubic lattice of spacing `beta / sqrt(d)` restricted to norm
/// `<= W + beta/2`. Its covering radius is `beta/2`, so it covers the ball.
pub fn lattice_net(w: f64, beta: f64, d: usize, seed: u64, audit_count: usize) -> Result<BallNet> {
    check_ball_args(w, beta, d)?;
    if d > 4 {
        return Err(Error::InvalidParameter("lattice nets are limited to d <= 4".into()));
    }
    let spacing = beta / (d as f64).sqrt();
    let reach = w + 0.5 * beta;
    let r = (reach / spacing).ceil() as i64;
    let mut points = Vec::new();
    let mut idx = vec![-r; d];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
        if p.iter().map(|v| v * v).sum::<f64>().sqrt() <= reach {
            points.push(p);
        }
        // odometer increment
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] <= r {
                break;
            }
            idx[j] = -r;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    let audit = audit_coverage(&points, w, beta, audit_count, seed ^ AUDIT_STREAM);
    Ok(BallNet {
        incomplete: !audit.misses.is_empty(),
        candidates_drawn: points.len(),
        points,
        radius_beta: beta,
        w_bound: w,
        dim: d,
        construction: NetConstruction::ScaledLattice,
        audit,
    })
}

/// Draws `count` uniform points of the radius-`w` ball and reports those
/// farther than `beta` from every net point.
pub fn audit_coverage(points: &[Vec<f64>], w: f64, beta: f64, count: usize, seed: u64) -> CoverageAudit {
    let d = points.first().map_or(1, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let mut x = vec![0.0; d];
            uniform_in_ball(&mut rng, w, &mut x);
            x
        })
        .collect();
    let misses: Vec<AuditMiss> = probes
        .into_par_iter()
        .filter_map(|x| {
            let nearest = points.iter().map(|p| distance(p, &x)).fold(f64::INFINITY, f64::min);
            (nearest > beta).then_some(AuditMiss {
                point: x,
                distance: nearest,
            })
        })
        .collect();
    let coverage_rate = if count == 0 {
        1.0
    } else {
        1.0 - misses.len() as f64 / count as f64
    };
    CoverageAudit {
        audited: count,
        misses,
        coverage_rate,
    }
}

/// Three blocked samples `X0, X1, X2` with a shared `(kappa, m)`.
#[derive(Debug, Clone)]
pub struct PooledSample<T> {
    samples: [BlockedSample<T>; 3],
}

impl<T> PooledSample<T> {
    pub fn new(samples: [BlockedSample<T>; 3]) -> Result<Self> {
        let (k, m) = (samples[0].kappa(), samples[0].m());
        if samples.iter().any(|s| s.kappa() != k || s.m() != m) {
            return Err(Error::InvalidSample("pooled samples must share kappa and m".into()));
        }
        Ok(Self { samples })
    }

    pub fn kappa(&self) -> usize {
        self.samples[0].kappa()
    }

    pub fn m(&self) -> usize {
        self.samples[0].m()
    }

    pub fn samples(&self) -> &[BlockedSample<T>; 3] {
        &self.samples
    }

    /// Values of `f` at every pooled point, ordered by (sample, block, point).
    pub fn table<F: Fn(&T) -> f64>(&self, f: F) -> Vec<f64> {
        self.samples
            .iter()
            .flat_map(|s| s.blocks().iter().flatten())
            .map(f)
            .collect()
    }
}

/// `(1 / 3 kappa m) * sum over pooled points of |f - g|`.
pub fn l1_distance_empirical<T, F, G>(f: F, g: G, pooled: &PooledSample<T>) -> f64
where
    F: Fn(&T) -> f64,
    G: Fn(&T) -> f64,
{
    l1_tables(&pooled.table(f), &pooled.table(g))
}

fn l1_tables(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalL1Net {
    /// Candidate indices promoted to representatives, in promotion order.
    pub representatives: Vec<usize>,
    /// Candidate index -> candidate index of its representative.
    pub assignment: Vec<usize>,
    /// Candidate index -> blocks where some sample's per-block L1 gap to the
    /// representative exceeds `epsilon`.
    pub bad_blocks: Vec<Vec<usize>>,
    /// Candidate index -> pooled L1 distance to its representative.
    pub l1_to_representative: Vec<f64>,
    /// `2 eps / 1875`.
    pub radius: f64,
    pub epsilon: f64,
    pub kappa: usize,
    pub m: usize,
}

/// JSON export shape of an [`EmpiricalL1Net`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNetSummary {
    pub representatives: Vec<usize>,
    pub assignment: Vec<usize>,
    pub bad_block_counts: Vec<usize>,
    pub radius: f64,
    pub epsilon: f64,
    pub kappa: usize,
    pub m: usize,
}

impl EmpiricalL1Net {
    /// `2 kappa / 625`.
    pub fn block_budget(&self) -> f64 {
        LemmaConstants::as_f64(LEMMA.discretization_budget) * self.kappa as f64
    }

    /// `|I_f| <= 3 kappa * L1(f, pi(f)) / eps` for candidate `i`.
    pub fn markov_holds(&self, i: usize) -> bool {
        self.bad_blocks[i].len() as f64 <= 3.0 * self.kappa as f64 * self.l1_to_representative[i] / self.epsilon
    }

    pub fn summary(&self) -> EmpiricalNetSummary {
        EmpiricalNetSummary {
            representatives: self.representatives.clone(),
            assignment: self.assignment.clone(),
            bad_block_counts: self.bad_blocks.iter().map(Vec::len).collect(),
            radius: self.radius,
            epsilon: self.epsilon,
            kappa: self.kappa,
            m: self.m,
        }
    }
}

/// Greedy empirical-L1 net of radius `2 eps / 1875` over `candidates`.
///
/// Candidates are scanned in order; each joins the first representative within
/// the radius, or becomes a representative. Fails with
/// [`Error::NetRadiusInsufficient`] if any candidate misses more than
/// `2 kappa / 625` blocks, which the radius is chosen to rule out.
pub fn empirical_l1_net<T, F>(candidates: &[F], pooled: &PooledSample<T>, epsilon: f64) -> Result<EmpiricalL1Net>
where
    F: Fn(&T) -> f64,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0 (got {epsilon})")));
    }
    let radius = LemmaConstants::as_f64(LEMMA.net_radius_factor) * epsilon;
    let tables: Vec<Vec<f64>> = candidates.iter().map(|f| pooled.table(f)).collect();
    for (c, t) in tables.iter().enumerate() {
        if let Some(index) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "candidate {c} is not finite at pooled point {index}"
            )));
        }
    }

    let mut representatives: Vec<usize> = Vec::new();
    let mut assignment = Vec::with_capacity(tables.len());
    let mut l1_to_representative = Vec::with_capacity(tables.len());
    for (c, table) in tables.iter().enumerate() {
        let hit = representatives
            .iter()
            .map(|&r| (r, l1_tables(table, &tables[r])))
            .find(|(_, dist)| *dist <= radius);
        match hit {
            Some((r, dist)) => {
                assignment.push(r);
                l1_to_representative.push(dist);
            }
            None => {
                representatives.push(c);
                assignment.push(c);
                l1_to_representative.push(0.0);
            }
        }
    }

    let (kappa, m) = (pooled.kappa(), pooled.m());
    let bad_blocks: Vec<Vec<usize>> = tables
        .iter()
        .zip(&assignment)
        .map(|(table, &r)| {
            let rep = &tables[r];
            (0..kappa)
                .filter(|&i| {
                    (0..3).any(|l| {
                        let start = (l * kappa + i) * m;
                        l1_tables(&table[start..start + m], &rep[start..start + m]) > epsilon
                    })
                })
                .collect()
        })
        .collect();

    let net = EmpiricalL1Net {
        representatives,
        assignment,
        bad_blocks,
        l1_to_representative,
        radius,
        epsilon,
        kappa,
        m,
    };
    let budget = net.block_budget();
    for (candidate, bad) in net.bad_blocks.iter().enumerate() {
        if bad.len() as f64 > budget {
            return Err(Error::NetRadiusInsufficient {
                candidate,
                bad_blocks: bad.len(),
                budget,
            });
        }
    }
    Ok(net)
}
