//! The median-of-means estimator.
//!
//! A sample of `kappa * m` points is laid out as `kappa` blocks of `m` points.
//! For a real-valued `f`, each block contributes its sample mean and the
//! estimate is the median of those `kappa` block means.
//!
//! The median here is the *lower-middle* order statistic: for sorted values
//! `a_(1) <= ... <= a_(kappa)` it is `a_((kappa+1)/2)` for odd `kappa` and
//! `a_(kappa/2)` for even `kappa`. It is never the average of the two middle
//! values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block length above which block means switch to compensated (Neumaier)
/// summation. Shorter blocks are summed left to right.
pub const COMPENSATED_SUM_THRESHOLD: usize = 10_000;

/// A domain point with a fixed dimensionality.
pub trait Point {
    fn dim(&self) -> usize;
}

impl Point for f64 {
    fn dim(&self) -> usize {
        1
    }
}

impl Point for Vec<f64> {
    fn dim(&self) -> usize {
        self.len()
    }
}

impl<const N: usize> Point for [f64; N] {
    fn dim(&self) -> usize {
        N
    }
}

/// `kappa` blocks of exactly `m` points each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedSample<T> {
    blocks: Vec<Vec<T>>,
    kappa: usize,
    m: usize,
    /// Points dropped by [`partition`] because `n` was not a multiple of `kappa`.
    discarded: usize,
}

impl<T: Point> BlockedSample<T> {
    pub fn new(blocks: Vec<Vec<T>>) -> Result<Self> {
        let kappa = blocks.len();
        if kappa == 0 {
            return Err(Error::InvalidSample("kappa must be at least 1".into()));
        }
        let m = blocks[0].len();
        if m == 0 {
            return Err(Error::InvalidSample("m must be at least 1".into()));
        }
        let dim = blocks[0][0].dim();
        for (i, block) in blocks.iter().enumerate() {
            if block.len() != m {
                return Err(Error::InvalidSample(format!(
                    "block {i} has {} points, expected {m}",
                    block.len()
                )));
            }
            if let Some(p) = block.iter().find(|p| p.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        Ok(Self {
            blocks,
            kappa,
            m,
            discarded: 0,
        })
    }
}

impl<T> BlockedSample<T> {
    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn discarded(&self) -> usize {
        self.discarded
    }

    pub fn total_points(&self) -> usize {
        self.kappa * self.m
    }

    pub fn into_blocks(self) -> Vec<Vec<T>> {
        self.blocks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub block_means: Vec<f64>,
    pub kappa: usize,
    pub m: usize,
}

/// How [`median_with`] locates the order statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianStrategy {
    /// Expected linear-time selection on a scratch copy.
    #[default]
    Select,
    /// Full sort of a scratch copy. Kept as a cross-check.
    Sort,
}

/// Zero-based index of the lower-middle order statistic for `len` values.
pub fn median_index(len: usize) -> usize {
    // odd: (len+1)/2 - 1, even: len/2 - 1; both equal (len-1)/2 in integer arithmetic
    (len - 1) / 2
}

/// Lower-middle median. The input is left untouched.
pub fn median(values: &[f64]) -> Result<f64> {
    median_with(values, MedianStrategy::default())
}

pub fn median_with(values: &[f64], strategy: MedianStrategy) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut scratch = values.to_vec();
    let k = median_index(scratch.len());
    match strategy {
        MedianStrategy::Select => {
            let (_, mid, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
            Ok(*mid)
        }
        MedianStrategy::Sort => {
            scratch.sort_by(f64::total_cmp);
            Ok(scratch[k])
        }
    }
}

/// Arithmetic mean of `f` over `block`.
///
/// Blocks up to [`COMPENSATED_SUM_THRESHOLD`] points are summed left to
/// right; longer blocks use Neumaier compensated summation, still in input
/// order, so the result is deterministic either way.
pub fn block_mean<T, F>(block: &[T], f: F) -> Result<f64>
where
    F: Fn(&T) -> f64,
{
    if block.is_empty() {
        return Err(Error::EmptySequence);
    }
    let values = block.iter().map(&f);
    let sum = if block.len() > COMPENSATED_SUM_THRESHOLD {
        neumaier_sum(values)?
    } else {
        let mut sum = 0.0;
        for (index, v) in values.enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            sum += v;
        }
        sum
    };
    Ok(sum / block.len() as f64)
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> Result<f64> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    Ok(sum + comp)
}

/// Median of the per-block means of `f`.
pub fn mom<T, F>(sample: &BlockedSample<T>, f: F) -> Result<EstimateResult>
where
    F: Fn(&T) -> f64,
{
    let block_means = sample
        .blocks
        .iter()
        .enumerate()
        .map(|(block, points)| {
            block_mean(points, &f).map_err(|e| match e {
                Error::NonFinite { index } => Error::NonFiniteInBlock { block, index },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let estimate = median(&block_means)?;
    Ok(EstimateResult {
        estimate,
        block_means,
        kappa: sample.kappa,
        m: sample.m,
    })
}

/// Splits `points` into `kappa` contiguous blocks of `m = n / kappa` points,
/// in input order. The trailing `n mod kappa` points are dropped and counted
/// in [`BlockedSample::discarded`]; no shuffling happens here.
pub fn partition<T: Point>(mut points: Vec<T>, kappa: usize) -> Result<BlockedSample<T>> {
    if kappa == 0 {
        return Err(Error::InvalidParameter("kappa must be at least 1".into()));
    }
    let n = points.len();
    if n < kappa {
        return Err(Error::InsufficientPoints { points: n, kappa });
    }
    let m = n / kappa;
    let discarded = n - m * kappa;
    points.truncate(m * kappa);
    let mut blocks = Vec::with_capacity(kappa);
    let mut rest = points;
    for _ in 0..kappa {
        let tail = rest.split_off(m);
        blocks.push(rest);
        rest = tail;
    }
    let mut sample = BlockedSample::new(blocks)?;
    sample.discarded = discarded;
    Ok(sample)
}
