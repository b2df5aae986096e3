//! Preprocessing shared by every diagnostic: chain splitting, pooled ranks,
//! normal scores, folding, and indicator sequences.
//!
//! All functions take one parameter's chains as `&[C]` with `C: AsRef<[T]>`,
//! so `Vec<Vec<T>>`, `Vec<&[T]>` and arrays of slices all work.

use crate::error::{DiagError, Result};
use crate::scalar::{cmp_scalar, Scalar};
use crate::special::normal_quantile;

/// Chains split into first and last halves, `2 * M` chains of `floor(N / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDraws<T> {
    chains: Vec<Vec<T>>,
}

impl<T: Scalar> SplitDraws<T> {
    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn iterations(&self) -> usize {
        self.chains.first().map_or(0, Vec::len)
    }

    /// Total retained draws, `num_chains * iterations`.
    pub fn draws(&self) -> usize {
        self.num_chains() * self.iterations()
    }

    pub fn chains(&self) -> &[Vec<T>] {
        &self.chains
    }

    pub fn into_chains(self) -> Vec<Vec<T>> {
        self.chains
    }
}

/// Same layout as the input, values replaced by normal scores of pooled ranks.
pub type RankNormalizedDraws<T> = Vec<Vec<T>>;

/// Splits each chain into halves. For odd `N` the middle draw (0-based
/// index `N / 2`) is dropped.
pub fn split_chains<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<SplitDraws<T>> {
    let n = common_length(chains)?;
    if n < 4 {
        return Err(DiagError::TooFewDraws(n));
    }
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * chains.len());
    for chain in chains {
        let chain = chain.as_ref();
        out.push(chain[..half].to_vec());
        out.push(chain[n - half..].to_vec());
    }
    Ok(SplitDraws { chains: out })
}

/// Length shared by all chains; errors on empty or ragged input.
pub(crate) fn common_length<T, C: AsRef<[T]>>(chains: &[C]) -> Result<usize> {
    let first = chains.first().ok_or(DiagError::Empty("no chains"))?;
    let n = first.as_ref().len();
    for (m, c) in chains.iter().enumerate() {
        if c.as_ref().len() != n {
            return Err(DiagError::RaggedChain {
                chain: m.to_string(),
                expected: n,
                found: c.as_ref().len(),
            });
        }
    }
    if n == 0 {
        return Err(DiagError::Empty("no iterations"));
    }
    Ok(n)
}

/// Ranks `1..=S` of the values within the pooled sequence; ties share the
/// mean of the rank positions they span.
pub fn pooled_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let s = values.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| cmp_scalar(&values[a], &values[b]));
    let mut ranks = vec![T::zero(); s];
    let mut start = 0;
    while start < s {
        let mut end = start + 1;
        while end < s && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end (1-based) share their average
        let avg = T::of((start + 1 + end) as f64 / 2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Blom normal scores: Φ⁻¹((r − 3/8) / (S − 1/4)).
pub fn normal_scores<T: Scalar>(ranks: &[T], s: usize) -> Vec<T> {
    let denom = s as f64 - 0.25;
    ranks
        .iter()
        .map(|r| T::of(normal_quantile((r.as_f64() - 0.375) / denom)))
        .collect()
}

/// Replaces each draw by the normal score of its rank in the pooled draws.
pub fn rank_normalize<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> RankNormalizedDraws<T> {
    let pooled = pool(chains);
    let ranks = pooled_ranks(&pooled);
    let z = normal_scores(&ranks, pooled.len());
    unpool(chains, z)
}

/// Absolute deviations from the pooled median.
pub fn fold<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Vec<Vec<T>> {
    let med = pooled_quantile(chains, 0.5);
    chains
        .iter()
        .map(|c| c.as_ref().iter().map(|&x| (x - med).abs()).collect())
        .collect()
}

/// 1 where the draw is `<= threshold`, else 0.
pub fn indicator_leq<T: Scalar, C: AsRef<[T]>>(chains: &[C], threshold: T) -> Vec<Vec<T>> {
    chains
        .iter()
        .map(|c| {
            c.as_ref()
                .iter()
                .map(|&x| if x <= threshold { T::one() } else { T::zero() })
                .collect()
        })
        .collect()
}

/// 1 where `Q(lo_q) < draw <= Q(hi_q)` for pooled empirical quantiles `Q`.
pub fn indicator_interval<T: Scalar, C: AsRef<[T]>>(
    chains: &[C],
    lo_q: f64,
    hi_q: f64,
) -> Result<Vec<Vec<T>>> {
    if !(0.0 <= lo_q && lo_q < hi_q && hi_q <= 1.0) {
        return Err(DiagError::InvalidArgument(format!(
            "interval needs 0 <= lo < hi <= 1, got ({lo_q}, {hi_q})"
        )));
    }
    let sorted = pooled_sorted(chains);
    let lo = quantile_sorted(&sorted, lo_q);
    let hi = quantile_sorted(&sorted, hi_q);
    Ok(chains
        .iter()
        .map(|c| {
            c.as_ref()
                .iter()
                .map(|&x| {
                    if lo < x && x <= hi {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect())
}

/// All draws concatenated in chain order.
pub fn pool<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Vec<T> {
    chains
        .iter()
        .flat_map(|c| c.as_ref().iter().copied())
        .collect()
}

fn unpool<T: Scalar, C: AsRef<[T]>>(chains: &[C], flat: Vec<T>) -> Vec<Vec<T>> {
    let mut it = flat.into_iter();
    chains
        .iter()
        .map(|c| it.by_ref().take(c.as_ref().len()).collect())
        .collect()
}

pub fn pooled_sorted<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Vec<T> {
    let mut v = pool(chains);
    v.sort_by(cmp_scalar);
    v
}

/// Empirical quantile of ascending `sorted`, interpolating linearly between
/// order statistics at 0-based position `(S − 1)·q`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    let s = sorted.len();
    if s == 0 || q.is_nan() {
        return T::nan();
    }
    let h = (s - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= s || frac == 0.0 {
        return sorted[lo.min(s - 1)];
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    a + T::of(frac) * (b - a)
}

pub fn pooled_quantile<T: Scalar, C: AsRef<[T]>>(chains: &[C], q: f64) -> T {
    quantile_sorted(&pooled_sorted(chains), q)
}
