//! Full per-parameter diagnostics and report assembly.

use rayon::prelude::*;

use crate::chain_core::{
    is_constant, ChainStat, DiagnosticConfig, DiagnosticsReport, DrawsMatrix, Flag,
    QuantileEstimate, RECOMMENDED_CHAINS, SCHEMA_VERSION,
};
use crate::error::{DiagError, Result};
use crate::mcse::{mcse_mean_with, mcse_quantile_with};
use crate::rhat::rhat_summary;
use crate::scalar::Scalar;
use crate::transforms::pool;

/// Interval coverage reported alongside quantile estimates.
const REPORT_COVERAGE: f64 = 0.9;

/// Computes every diagnostic for one parameter's chains.
pub fn summarize<T: Scalar, C: AsRef<[T]>>(
    name: &str,
    chains: &[C],
    config: &DiagnosticConfig,
) -> Result<ChainStat> {
    let n = crate::transforms::common_length(chains)?;
    if n < 4 {
        return Err(DiagError::TooFewDraws(n));
    }
    if chains
        .iter()
        .any(|c| c.as_ref().iter().any(|v| !v.is_finite()))
    {
        return Ok(ChainStat::degenerate(name, vec![Flag::NonFinite]));
    }
    if is_constant(chains) {
        let mut stat = ChainStat::degenerate(name, vec![Flag::ConstantParameter]);
        stat.mean = chains[0].as_ref()[0].as_f64();
        return Ok(stat);
    }
    let est = config.estimator();
    let mut flags = Vec::new();

    let rhat = rhat_summary(chains)?;
    let bulk = est.bulk(chains)?;
    let mean_ess = est.mean(chains)?;
    let (q_lo, q_hi) = config.tail_quantiles;
    let tail = est.tail(chains, (q_lo, q_hi))?;
    let median = est.median(chains)?;
    let mad = est.mad(chains)?;
    let bda2 = est.bda2(chains)?;
    let mcse_mean = mcse_mean_with(chains, est)?;

    let mut quantiles = Vec::with_capacity(3);
    let mut mcse_median = f64::NAN;
    for q in [q_lo, 0.5, q_hi] {
        let m = mcse_quantile_with(chains, q, REPORT_COVERAGE, config.mcse_sd_quantiles, est)?;
        if m.tail_unstable {
            flags.push(Flag::TailUnstable);
        }
        if q == 0.5 {
            mcse_median = m.mcse.as_f64();
        }
        quantiles.push(QuantileEstimate {
            probability: q,
            estimate: m.point.as_f64(),
            mcse: m.mcse.as_f64(),
            ess: m.ess_used.as_f64(),
        });
    }

    let per_split = bulk.ess.as_f64() / (2 * chains.len()) as f64;
    if !(per_split >= config.min_ess_per_split_chain) {
        flags.push(Flag::InsufficientEssForRhat);
    }
    if tail.is_degenerate() || median.is_degenerate() || mad.is_degenerate() {
        flags.push(Flag::DegenerateIndicator);
    }
    if bulk.capped || mean_ess.capped || tail.capped || bda2.capped {
        flags.push(Flag::EssCapped);
    }
    if rhat.max.as_f64() > config.rhat_threshold {
        flags.push(Flag::RhatAboveThreshold);
    }
    if bulk.ess.as_f64() < config.ess_threshold || tail.ess.as_f64() < config.ess_threshold {
        flags.push(Flag::EssBelowThreshold);
    }
    flags.sort();
    flags.dedup();

    let pooled = pool(chains);
    let mean = pooled.iter().copied().sum::<T>() / T::of_usize(pooled.len());

    Ok(ChainStat {
        parameter: name.to_string(),
        mean: mean.as_f64(),
        rhat_classic: rhat.classic.as_f64(),
        rhat_rank: rhat.rank.as_f64(),
        rhat_folded: rhat.folded.as_f64(),
        rhat_max: rhat.max.as_f64(),
        ess_bulk: bulk.ess.as_f64(),
        ess_tail: tail.ess.as_f64(),
        ess_median: median.ess.as_f64(),
        ess_mad: mad.ess.as_f64(),
        ess_mean_classic: mean_ess.ess.as_f64(),
        ess_bda2: bda2.ess.as_f64(),
        mcse_mean: mcse_mean.as_f64(),
        mcse_median,
        quantile_estimates: quantiles,
        reliability_flags: flags,
    })
}

/// Diagnoses every parameter (in parallel) and wraps the results in a report.
pub fn diagnose<T: Scalar>(
    draws: &DrawsMatrix<T>,
    config: &DiagnosticConfig,
) -> Result<DiagnosticsReport> {
    config.check()?;
    if draws.iterations() < 4 {
        return Err(DiagError::TooFewDraws(draws.iterations()));
    }
    let parameters = (0..draws.parameters())
        .into_par_iter()
        .map(|p| summarize(&draws.names()[p], &draws.parameter(p), config))
        .collect::<Result<Vec<_>>>()?;
    let mut flags = Vec::new();
    if draws.chains() < RECOMMENDED_CHAINS {
        flags.push(Flag::WarnFewChains);
    }
    Ok(DiagnosticsReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        chains: draws.chains(),
        iterations: draws.iterations(),
        config: *config,
        flags,
        parameters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_parameter_does_not_abort_report() {
        let data = vec![
            vec![vec![2.5; 20]; 4],
            (0..4)
                .map(|m| (0..20).map(|n| ((n * 7 + m * 3) % 11) as f64).collect())
                .collect(),
        ];
        let draws = DrawsMatrix::from_parameters(vec!["c".into(), "x".into()], data).unwrap();
        let report = diagnose(&draws, &DiagnosticConfig::default()).unwrap();
        assert_eq!(report.parameters.len(), 2);
        assert!(report.parameters[0].has_flag(Flag::ConstantParameter));
        assert!(report.parameters[0].rhat_max.is_nan());
        assert!(report.parameters[1].rhat_max.is_finite());
        assert!(report.flags.is_empty());
    }

    #[test]
    fn rhat_max_is_max_of_components() {
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|m| {
                (0..40)
                    .map(|n| ((n * 13 + m * 5) % 17) as f64 + m as f64 * 0.3)
                    .collect()
            })
            .collect();
        let s = summarize("x", &chains, &DiagnosticConfig::default()).unwrap();
        assert_eq!(s.rhat_max, s.rhat_rank.max(s.rhat_folded));
        assert_eq!(s.quantile_estimates.len(), 3);
    }
}
