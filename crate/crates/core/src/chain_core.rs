//! Draw storage, configuration defaults, and the per-parameter report types.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{DiagError, Result};
use crate::ess::EssEstimator;
use crate::scalar::Scalar;

/// Whether non-finite draws are accepted at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonFinitePolicy {
    #[default]
    Reject,
    /// Keep them; diagnostics for the affected parameter become NaN + flag.
    Admit,
}

/// Post-warmup draws: `chains` × `iterations` × `parameters`.
///
/// Values are stored parameter-major so that one parameter's chains are
/// contiguous slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsMatrix<T> {
    chains: usize,
    iterations: usize,
    names: Vec<String>,
    values: Vec<T>,
}

impl<T: Scalar> DrawsMatrix<T> {
    /// Builds a matrix from `data[parameter][chain][iteration]`.
    pub fn from_parameters(names: Vec<String>, data: Vec<Vec<Vec<T>>>) -> Result<Self> {
        Self::from_parameters_with(names, data, NonFinitePolicy::Reject)
    }

    pub fn from_parameters_with(
        names: Vec<String>,
        data: Vec<Vec<Vec<T>>>,
        policy: NonFinitePolicy,
    ) -> Result<Self> {
        if names.len() != data.len() {
            return Err(DiagError::InvalidArgument(format!(
                "{} names for {} parameters",
                names.len(),
                data.len()
            )));
        }
        if data.is_empty() {
            return Err(DiagError::Empty("no parameters"));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(DiagError::DuplicateParameter(name.clone()));
            }
        }
        let chains = data[0].len();
        if chains == 0 {
            return Err(DiagError::Empty("no chains"));
        }
        let iterations = data[0][0].len();
        if iterations == 0 {
            return Err(DiagError::Empty("no iterations"));
        }
        let mut values = Vec::with_capacity(names.len() * chains * iterations);
        for (p, per_param) in data.into_iter().enumerate() {
            if per_param.len() != chains {
                return Err(DiagError::InvalidArgument(format!(
                    "parameter `{}` has {} chains, expected {chains}",
                    names[p],
                    per_param.len()
                )));
            }
            for (m, chain) in per_param.into_iter().enumerate() {
                if chain.len() != iterations {
                    return Err(DiagError::RaggedChain {
                        chain: m.to_string(),
                        expected: iterations,
                        found: chain.len(),
                    });
                }
                if policy == NonFinitePolicy::Reject {
                    if let Some(n) = chain.iter().position(|v| !v.is_finite()) {
                        return Err(DiagError::NonFinite {
                            parameter: names[p].clone(),
                            chain: m,
                            draw: n,
                        });
                    }
                }
                values.extend(chain);
            }
        }
        Ok(Self {
            chains,
            iterations,
            names,
            values,
        })
    }

    /// Single-parameter convenience constructor from `chains[chain][iteration]`.
    pub fn from_chains(name: impl Into<String>, chains: Vec<Vec<T>>) -> Result<Self> {
        Self::from_parameters(vec![name.into()], vec![chains])
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn parameters(&self) -> usize {
        self.names.len()
    }

    /// Total draws per parameter, `chains * iterations`.
    pub fn draws(&self) -> usize {
        self.chains * self.iterations
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Like [`index_of`](Self::index_of) but with an error listing valid names.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| DiagError::UnknownParameter {
                name: name.to_string(),
                available: self.names.join(", "),
            })
    }

    pub fn chain(&self, param: usize, chain: usize) -> &[T] {
        let start = (param * self.chains + chain) * self.iterations;
        &self.values[start..start + self.iterations]
    }

    /// All chains of one parameter.
    pub fn parameter(&self, param: usize) -> Vec<&[T]> {
        (0..self.chains).map(|m| self.chain(param, m)).collect()
    }

    /// Matrix restricted to the first `n` iterations of every chain.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.iterations {
            return Err(DiagError::InvalidArgument(format!(
                "prefix length {n} outside 1..={}",
                self.iterations
            )));
        }
        let data = (0..self.parameters())
            .map(|p| {
                (0..self.chains)
                    .map(|m| self.chain(p, m)[..n].to_vec())
                    .collect()
            })
            .collect();
        Self::from_parameters_with(self.names.clone(), data, NonFinitePolicy::Admit)
    }

    /// Matrix holding only the named parameters, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let mut out_names = Vec::with_capacity(names.len());
        let mut data = Vec::with_capacity(names.len());
        for name in names {
            let p = self.require(name)?;
            out_names.push(self.names[p].clone());
            data.push(self.parameter(p).into_iter().map(<[T]>::to_vec).collect());
        }
        Self::from_parameters_with(out_names, data, NonFinitePolicy::Admit)
    }

    pub fn has_nonfinite(&self, param: usize) -> bool {
        self.parameter(param)
            .iter()
            .any(|c| c.iter().any(|v| !v.is_finite()))
    }
}

/// Thresholds and knobs for a diagnostic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub rhat_threshold: f64,
    pub ess_threshold: f64,
    pub min_ess_per_split_chain: f64,
    pub tail_quantiles: (f64, f64),
    pub small_interval_count: usize,
    pub mcse_sd_quantiles: (f64, f64),
    pub ess_cap_enabled: bool,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            rhat_threshold: 1.01,
            ess_threshold: 400.0,
            min_ess_per_split_chain: 50.0,
            tail_quantiles: (0.05, 0.95),
            small_interval_count: 20,
            mcse_sd_quantiles: (0.16, 0.84),
            ess_cap_enabled: true,
        }
    }
}

impl DiagnosticConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(DiagError::InvalidConfig(m.to_string()));
        if !(self.rhat_threshold > 1.0) {
            return bad("rhat_threshold must exceed 1");
        }
        if !(self.ess_threshold >= 0.0) || !(self.min_ess_per_split_chain >= 0.0) {
            return bad("ESS thresholds must be non-negative");
        }
        let (lo, hi) = self.tail_quantiles;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("tail quantiles must satisfy 0 < low < high < 1");
        }
        let (lo, hi) = self.mcse_sd_quantiles;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("MCSE quantiles must satisfy 0 < low < high < 1");
        }
        if self.small_interval_count < 2 {
            return bad("small_interval_count must be at least 2");
        }
        Ok(())
    }

    pub fn estimator(&self) -> EssEstimator {
        EssEstimator {
            cap: self.ess_cap_enabled,
        }
    }
}

/// Minimum number of chains before results are trusted without a warning.
pub const RECOMMENDED_CHAINS: usize = 4;

/// Reliability flags attached to parameters or to a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Flag {
    /// Bulk-ESS per split chain below the configured minimum.
    InsufficientEssForRhat,
    ConstantParameter,
    WarnFewChains,
    /// A quantile indicator was all zeros or all ones.
    DegenerateIndicator,
    /// A quantile MCSE interval ran past the extreme order statistics.
    TailUnstable,
    NonFinite,
    /// An ESS estimate hit the S·log10(S) cap.
    EssCapped,
    RhatAboveThreshold,
    EssBelowThreshold,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::InsufficientEssForRhat => "INSUFFICIENT_ESS_FOR_RHAT",
            Flag::ConstantParameter => "CONSTANT_PARAMETER",
            Flag::WarnFewChains => "WARN_FEW_CHAINS",
            Flag::DegenerateIndicator => "DEGENERATE_INDICATOR",
            Flag::TailUnstable => "TAIL_UNSTABLE",
            Flag::NonFinite => "NON_FINITE",
            Flag::EssCapped => "ESS_CAPPED",
            Flag::RhatAboveThreshold => "RHAT_ABOVE_THRESHOLD",
            Flag::EssBelowThreshold => "ESS_BELOW_THRESHOLD",
        }
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A flag raised by [`validate`]; `parameter` is `None` for run-level flags.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValidationFlag {
    pub parameter: Option<String>,
    pub flag: Flag,
}

/// Checks a draws matrix for conditions under which R̂ and ESS are unreliable.
///
/// Flags too few chains, constant or non-finite parameters, and parameters
/// whose bulk-ESS per split chain is below `min_ess_per_split_chain`.
pub fn validate<T: Scalar>(
    draws: &DrawsMatrix<T>,
    config: &DiagnosticConfig,
) -> Result<Vec<ValidationFlag>> {
    config.check()?;
    if draws.iterations() < 4 {
        return Err(DiagError::TooFewDraws(draws.iterations()));
    }
    let mut flags = Vec::new();
    if draws.chains() < RECOMMENDED_CHAINS {
        flags.push(ValidationFlag {
            parameter: None,
            flag: Flag::WarnFewChains,
        });
    }
    let estimator = config.estimator();
    for (p, name) in draws.names().iter().enumerate() {
        let chains = draws.parameter(p);
        let tag = |flag| ValidationFlag {
            parameter: Some(name.clone()),
            flag,
        };
        if draws.has_nonfinite(p) {
            flags.push(tag(Flag::NonFinite));
            continue;
        }
        if is_constant(&chains) {
            flags.push(tag(Flag::ConstantParameter));
            continue;
        }
        let bulk = estimator.bulk(&chains)?.ess.as_f64();
        let per_split = bulk / (2 * draws.chains()) as f64;
        if !(per_split >= config.min_ess_per_split_chain) {
            flags.push(tag(Flag::InsufficientEssForRhat));
        }
    }
    Ok(flags)
}

/// True when every pooled draw equals the first one.
pub fn is_constant<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> bool {
    let mut values = chains.iter().flat_map(|c| c.as_ref().iter());
    match values.next() {
        Some(first) => values.all(|v| v == first),
        None => true,
    }
}

/// Point estimate and Monte Carlo standard error for one quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub probability: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub estimate: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub mcse: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess: f64,
}

/// Diagnostics for one parameter. Degenerate quantities are NaN (`null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStat {
    pub parameter: String,
    #[serde(deserialize_with = "nullable_f64")]
    pub mean: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub rhat_classic: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub rhat_rank: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub rhat_folded: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub rhat_max: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess_bulk: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess_tail: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess_median: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess_mad: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess_mean_classic: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub ess_bda2: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub mcse_mean: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub mcse_median: f64,
    pub quantile_estimates: Vec<QuantileEstimate>,
    pub reliability_flags: Vec<Flag>,
}

impl ChainStat {
    /// All-NaN record carrying the given flags.
    pub fn degenerate(parameter: &str, flags: Vec<Flag>) -> Self {
        Self {
            parameter: parameter.to_string(),
            mean: f64::NAN,
            rhat_classic: f64::NAN,
            rhat_rank: f64::NAN,
            rhat_folded: f64::NAN,
            rhat_max: f64::NAN,
            ess_bulk: f64::NAN,
            ess_tail: f64::NAN,
            ess_median: f64::NAN,
            ess_mad: f64::NAN,
            ess_mean_classic: f64::NAN,
            ess_bda2: f64::NAN,
            mcse_mean: f64::NAN,
            mcse_median: f64::NAN,
            quantile_estimates: Vec::new(),
            reliability_flags: flags,
        }
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.reliability_flags.contains(&flag)
    }

    /// Whether the headline R̂ or either ESS misses the configured thresholds.
    /// NaN values (constant parameters) do not count as violations.
    pub fn violates(&self, config: &DiagnosticConfig) -> bool {
        self.rhat_max > config.rhat_threshold
            || self.ess_bulk < config.ess_threshold
            || self.ess_tail < config.ess_threshold
    }
}

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Serializable output of one diagnostic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub timestamp: String,
    pub chains: usize,
    pub iterations: usize,
    pub config: DiagnosticConfig,
    pub flags: Vec<Flag>,
    pub parameters: Vec<ChainStat>,
}

impl DiagnosticsReport {
    pub fn any_violation(&self) -> bool {
        self.parameters.iter().any(|s| s.violates(&self.config))
    }
}

/// Reads a number that may have been written as `null` (NaN or ±∞).
pub fn nullable_f64<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(chains: Vec<Vec<f64>>) -> DrawsMatrix<f64> {
        DrawsMatrix::from_chains("x", chains).unwrap()
    }

    #[test]
    fn rejects_ragged_chains() {
        let err = DrawsMatrix::from_chains("x", vec![vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, DiagError::RaggedChain { found: 1, .. }));
    }

    #[test]
    fn rejects_nonfinite_unless_admitted() {
        let data = vec![vec![vec![1.0, f64::NAN, 2.0]]];
        assert!(DrawsMatrix::from_parameters(vec!["a".into()], data.clone()).is_err());
        let m = DrawsMatrix::from_parameters_with(vec!["a".into()], data, NonFinitePolicy::Admit)
            .unwrap();
        assert!(m.has_nonfinite(0));
    }

    #[test]
    fn rejects_duplicate_names() {
        let data = vec![vec![vec![1.0; 4]], vec![vec![2.0; 4]]];
        let err = DrawsMatrix::from_parameters(vec!["a".into(), "a".into()], data).unwrap_err();
        assert!(matches!(err, DiagError::DuplicateParameter(_)));
    }

    #[test]
    fn layout_and_prefix() {
        let data = vec![
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            vec![vec![7.0, 8.0, 9.0], vec![10.0, 11.0, 12.0]],
        ];
        let m = DrawsMatrix::from_parameters(vec!["a".into(), "b".into()], data).unwrap();
        assert_eq!(m.chain(1, 0), &[7.0, 8.0, 9.0]);
        assert_eq!(m.chain(0, 1), &[4.0, 5.0, 6.0]);
        let p = m.prefix(2).unwrap();
        assert_eq!(p.chain(1, 1), &[10.0, 11.0]);
        let s = m.select(&["b"]).unwrap();
        assert_eq!(s.names(), &["b".to_string()]);
        assert!(m.select(&["zzz"]).is_err());
    }

    #[test]
    fn config_defaults_and_checks() {
        let c = DiagnosticConfig::default();
        assert_eq!(c.rhat_threshold, 1.01);
        assert_eq!(c.ess_threshold, 400.0);
        assert_eq!(c.min_ess_per_split_chain, 50.0);
        assert_eq!(c.tail_quantiles, (0.05, 0.95));
        assert_eq!(c.small_interval_count, 20);
        assert!(c.check().is_ok());
        let bad = DiagnosticConfig {
            rhat_threshold: 1.0,
            ..c
        };
        assert!(bad.check().is_err());
        let bad = DiagnosticConfig {
            tail_quantiles: (0.9, 0.1),
            ..c
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn validate_rejects_short_chains() {
        let m = matrix(vec![vec![1.0, 2.0, 3.0]; 4]);
        assert!(matches!(
            validate(&m, &DiagnosticConfig::default()),
            Err(DiagError::TooFewDraws(3))
        ));
    }

    #[test]
    fn validate_flags_few_chains_and_constants() {
        let m = matrix(vec![vec![2.5; 100]; 2]);
        let flags = validate(&m, &DiagnosticConfig::default()).unwrap();
        assert!(flags.contains(&ValidationFlag {
            parameter: None,
            flag: Flag::WarnFewChains
        }));
        assert!(flags.contains(&ValidationFlag {
            parameter: Some("x".into()),
            flag: Flag::ConstantParameter
        }));
    }

    #[test]
    fn validate_flags_low_ess() {
        // Four chains stuck at distinct values plus tiny jitter: bulk-ESS is ~number of modes.
        let chains = (0..4)
            .map(|m| {
                (0..200)
                    .map(|n| m as f64 * 10.0 + n as f64 * 1e-3)
                    .collect()
            })
            .collect();
        let flags = validate(&matrix(chains), &DiagnosticConfig::default()).unwrap();
        assert_eq!(
            flags,
            vec![ValidationFlag {
                parameter: Some("x".into()),
                flag: Flag::InsufficientEssForRhat
            }]
        );
    }

    #[test]
    fn chainstat_json_nan_round_trip() {
        let s = ChainStat::degenerate("x", vec![Flag::ConstantParameter]);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"rhat_max\":null"));
        assert!(json.contains("CONSTANT_PARAMETER"));
        let back: ChainStat = serde_json::from_str(&json).unwrap();
        assert!(back.rhat_max.is_nan());
        assert_eq!(back.reliability_flags, vec![Flag::ConstantParameter]);
    }
}
