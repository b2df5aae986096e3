//! Potential scale reduction: classic split-R̂, rank-normalized split-R̂,
//! folded-split-R̂ and their maximum.

use crate::error::{DiagError, Result};
use crate::scalar::Scalar;
use crate::transforms::{common_length, fold, rank_normalize, split_chains};

/// Between/within-chain variance decomposition of a set of chains.
///
/// `between` includes the factor `iterations`; `within` is the mean of the
/// per-chain unbiased variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDecomposition<T> {
    pub between: T,
    pub within: T,
    pub var_plus: T,
    pub chains: usize,
    pub iterations: usize,
}

impl<T: Scalar> VarianceDecomposition<T> {
    /// `sqrt(var_plus / within)`, or NaN when `within` is zero.
    pub fn rhat(&self) -> T {
        if !(self.within > T::zero()) {
            return T::nan();
        }
        (self.var_plus / self.within).sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.within > T::zero())
    }
}

/// Mean and unbiased variance; exactly `(x, 0)` for a constant chain.
pub(crate) fn mean_var<T: Scalar>(chain: &[T]) -> (T, T) {
    let first = chain[0];
    if chain.iter().all(|&x| x == first) {
        return (first, T::zero());
    }
    let n = T::of_usize(chain.len());
    let mean = chain.iter().copied().sum::<T>() / n;
    let ss = chain.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    (mean, ss / (n - T::one()))
}

/// Between-chain variance `B` from chain means, with the `N / (M − 1)` factor.
pub(crate) fn between_from_means<T: Scalar>(means: &[T], iterations: usize) -> T {
    let m = means.len();
    let first = means[0];
    if means.iter().all(|&x| x == first) {
        return T::zero();
    }
    let grand = means.iter().copied().sum::<T>() / T::of_usize(m);
    let ss = means.iter().map(|&x| (x - grand) * (x - grand)).sum::<T>();
    T::of_usize(iterations) / T::of_usize(m - 1) * ss
}

/// Computes `B`, `W` and `var⁺` for the chains exactly as given (no splitting).
pub fn variance_decomposition<T: Scalar, C: AsRef<[T]>>(
    chains: &[C],
) -> Result<VarianceDecomposition<T>> {
    let n = common_length(chains)?;
    let m = chains.len();
    if m < 2 {
        return Err(DiagError::TooFewChains {
            required: 2,
            found: m,
        });
    }
    if n < 2 {
        return Err(DiagError::TooFewDraws(n));
    }
    let (means, vars): (Vec<T>, Vec<T>) = chains.iter().map(|c| mean_var(c.as_ref())).unzip();
    let between = between_from_means(&means, n);
    let within = vars.iter().copied().sum::<T>() / T::of_usize(m);
    let nf = T::of_usize(n);
    let var_plus = (nf - T::one()) / nf * within + between / nf;
    Ok(VarianceDecomposition {
        between,
        within,
        var_plus,
        chains: m,
        iterations: n,
    })
}

/// Split-R̂ on the raw values.
pub fn split_rhat<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<T> {
    let split = split_chains(chains)?;
    Ok(variance_decomposition(split.chains())?.rhat())
}

/// R̂ on whole chains; a baseline that cannot see within-chain trends.
pub fn unsplit_rhat<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<T> {
    Ok(variance_decomposition(chains)?.rhat())
}

/// Split-R̂ of the rank-normalized draws. Ranks are taken over the pooled,
/// unsplit draws; splitting happens afterwards.
pub fn rank_normalized_split_rhat<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<T> {
    split_rhat(&rank_normalize(chains))
}

/// Rank-normalized split-R̂ of the draws folded about the pooled median.
pub fn folded_split_rhat<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<T> {
    rank_normalized_split_rhat(&fold(chains))
}

/// The larger of the two; NaN if either is NaN.
pub fn rhat_max<T: Scalar>(rank: T, folded: T) -> T {
    if rank.is_nan() || folded.is_nan() {
        T::nan()
    } else {
        rank.max(folded)
    }
}

/// Every R̂ variant for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhatSummary<T> {
    pub classic: T,
    pub rank: T,
    pub folded: T,
    pub max: T,
}

pub fn rhat_summary<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<RhatSummary<T>> {
    let classic = split_rhat(chains)?;
    let rank = rank_normalized_split_rhat(chains)?;
    let folded = folded_split_rhat(chains)?;
    Ok(RhatSummary {
        classic,
        rank,
        folded,
        max: rhat_max(rank, folded),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_hand_example() {
        let d = variance_decomposition(&[vec![0.0f64, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(d.within, 0.0);
        assert_eq!(d.between, 4.0);
        assert!(d.rhat().is_nan());
        assert!(d.is_degenerate());
    }

    #[test]
    fn identical_chains_give_floor_value() {
        let c = vec![0.3f64, -1.2, 0.8, 2.0, -0.1, 0.7];
        let d = variance_decomposition(&[c.clone(), c.clone(), c]).unwrap();
        assert_eq!(d.between, 0.0);
        let n = 6.0f64;
        assert!((d.rhat() - ((n - 1.0) / n).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn var_plus_identity() {
        let chains = [
            vec![1.0f64, 2.0, 4.0],
            vec![0.5, 3.0, 3.5],
            vec![2.0, 2.5, 1.0],
        ];
        let d = variance_decomposition(&chains).unwrap();
        let n = 3.0;
        assert!((d.var_plus - ((n - 1.0) / n * d.within + d.between / n)).abs() < 1e-14);
    }

    #[test]
    fn rhat_max_examples() {
        assert_eq!(rhat_max(1.003f64, 1.021), 1.021);
        assert!(rhat_max(1.002f64, 1.004) < 1.01);
        assert!(rhat_max(f64::NAN, 1.0).is_nan());
    }

    #[test]
    fn errors_on_short_or_single() {
        assert!(split_rhat(&[vec![1.0f64, 2.0, 3.0]]).is_err());
        assert!(unsplit_rhat(&[vec![1.0f64, 2.0, 3.0, 4.0]]).is_err());
        // One chain is fine for split-R̂: it becomes two.
        assert!(split_rhat(&[vec![1.0f64, 2.0, 3.0, 5.0]]).is_ok());
    }

    #[test]
    fn constant_parameter_gives_nan() {
        let r = rhat_summary(&[vec![2.5f64; 10], vec![2.5; 10]]).unwrap();
        assert!(r.classic.is_nan() && r.rank.is_nan() && r.folded.is_nan() && r.max.is_nan());
    }
}
