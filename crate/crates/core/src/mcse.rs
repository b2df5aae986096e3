//! Monte Carlo standard errors for the mean and for quantiles.
//!
//! Quantile MCSE avoids density estimation: the indicator ESS at the
//! quantile sets the shapes of a beta distribution for the cumulative
//! probability, and beta quantiles are mapped back to the draw scale through
//! the sorted pooled draws.

use crate::error::Result;
use crate::ess::EssEstimator;
use crate::rhat::variance_decomposition;
use crate::scalar::Scalar;
use crate::special::beta_quantile;
use crate::transforms::{pooled_sorted, quantile_sorted, split_chains};

/// Error interval and standard error for the empirical `alpha`-quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileMcse<T> {
    pub alpha: f64,
    /// Empirical quantile of the pooled draws.
    pub point: T,
    pub interval_lo: T,
    pub interval_hi: T,
    pub interval_coverage: f64,
    /// Half the width of the interval built from the SD quantile pair.
    pub mcse: T,
    /// Indicator ESS at `alpha`; NaN if the indicator is constant.
    pub ess_used: T,
    /// Some interval position fell outside `1..=S` and was clamped.
    pub tail_unstable: bool,
}

/// `sqrt(var⁺ / ESS)` on the raw draws.
pub fn mcse_mean<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<T> {
    mcse_mean_with(chains, EssEstimator::default())
}

pub fn mcse_mean_with<T: Scalar, C: AsRef<[T]>>(chains: &[C], est: EssEstimator) -> Result<T> {
    let split = split_chains(chains)?;
    let d = variance_decomposition(split.chains())?;
    if d.is_degenerate() {
        return Ok(T::nan());
    }
    let ess = est.from_split(split.chains())?.ess;
    Ok((d.var_plus / ess).sqrt())
}

/// Quantile MCSE with the SD taken from the 16% / 84% beta quantiles.
pub fn mcse_quantile<T: Scalar, C: AsRef<[T]>>(
    chains: &[C],
    alpha: f64,
    coverage: f64,
) -> Result<QuantileMcse<T>> {
    mcse_quantile_with(
        chains,
        alpha,
        coverage,
        (0.16, 0.84),
        EssEstimator::default(),
    )
}

pub fn mcse_quantile_with<T: Scalar, C: AsRef<[T]>>(
    chains: &[C],
    alpha: f64,
    coverage: f64,
    sd_quantiles: (f64, f64),
    est: EssEstimator,
) -> Result<QuantileMcse<T>> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(crate::error::DiagError::InvalidArgument(format!(
            "coverage {coverage} outside (0, 1)"
        )));
    }
    let ess = est.quantile(chains, alpha)?.ess;
    let sorted = pooled_sorted(chains);
    let point = quantile_sorted(&sorted, alpha);
    let mut out = QuantileMcse {
        alpha,
        point,
        interval_lo: T::nan(),
        interval_hi: T::nan(),
        interval_coverage: coverage,
        mcse: T::nan(),
        ess_used: ess,
        tail_unstable: false,
    };
    if ess.is_nan() {
        return Ok(out);
    }
    let tail = (1.0 - coverage) / 2.0;
    let (lo, hi, clamp_a) = error_interval(&sorted, ess.as_f64(), alpha, tail, 1.0 - tail)?;
    let (sd_lo, sd_hi, clamp_b) =
        error_interval(&sorted, ess.as_f64(), alpha, sd_quantiles.0, sd_quantiles.1)?;
    out.interval_lo = lo;
    out.interval_hi = hi;
    out.mcse = (sd_hi - sd_lo) / T::of(2.0);
    out.tail_unstable = clamp_a || clamp_b;
    Ok(out)
}

/// Maps the `p_lo`/`p_hi` quantiles of Beta(ESS·α + 1, ESS·(1 − α) + 1) to
/// order statistics: lower at `s' <= S·a < s' + 1`, upper at
/// `s'' − 1 < S·b <= s''` (1-based). Positions outside `1..=S` are clamped.
fn error_interval<T: Scalar>(
    sorted: &[T],
    ess: f64,
    alpha: f64,
    p_lo: f64,
    p_hi: f64,
) -> Result<(T, T, bool)> {
    let s = sorted.len();
    let shape_a = ess * alpha + 1.0;
    let shape_b = ess * (1.0 - alpha) + 1.0;
    let a = beta_quantile(p_lo, shape_a, shape_b)?;
    let b = beta_quantile(p_hi, shape_a, shape_b)?;
    let sf = s as f64;
    let mut clamped = false;
    let mut lower = (sf * a).floor();
    if lower < 1.0 {
        lower = 1.0;
        clamped = true;
    }
    let mut upper = (sf * b).ceil();
    if upper > sf {
        upper = sf;
        clamped = true;
    }
    let upper = upper.max(1.0);
    let lower = lower.min(sf);
    Ok((
        sorted[lower as usize - 1],
        sorted[upper as usize - 1],
        clamped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_draws_give_nan() {
        let chains = vec![vec![2.0f64; 20]; 4];
        assert!(mcse_mean(&chains).unwrap().is_nan());
        let q = mcse_quantile(&chains, 0.5, 0.9).unwrap();
        assert!(q.mcse.is_nan() && q.ess_used.is_nan());
    }

    #[test]
    fn interval_endpoints_are_draws() {
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|m| {
                (0..50)
                    .map(|n| ((n * 37 + m * 11) % 101) as f64 * 0.1)
                    .collect()
            })
            .collect();
        let q = mcse_quantile(&chains, 0.3, 0.9).unwrap();
        let pooled: Vec<f64> = chains.concat();
        assert!(pooled.contains(&q.interval_lo));
        assert!(pooled.contains(&q.interval_hi));
        assert!(q.mcse >= 0.0);
    }

    #[test]
    fn order_statistic_positions() {
        let sorted: Vec<f64> = (1..=10).map(f64::from).collect();
        // Large ESS: beta concentrates just around alpha, so S·a and S·b straddle 5.
        let (lo, hi, clamped) = error_interval(&sorted, 1e6, 0.5, 0.05, 0.95).unwrap();
        assert_eq!((lo, hi, clamped), (4.0, 6.0, false));
        // Tiny ESS in the extreme tail runs off the sample.
        let (_, _, clamped) = error_interval(&sorted, 2.0, 0.01, 0.001, 0.999).unwrap();
        assert!(clamped);
    }

    #[test]
    fn rejects_bad_coverage() {
        let chains = vec![vec![1.0f64, 2.0, 3.0, 4.0]; 2];
        assert!(mcse_quantile::<f64, _>(&chains, 0.5, 1.0).is_err());
        assert!(mcse_quantile::<f64, _>(&chains, 0.0, 0.9).is_err());
    }
}
