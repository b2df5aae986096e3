//! Effective sample size.
//!
//! Every estimator splits the chains first, combines per-chain FFT
//! autocovariances with the between-chain variance, truncates the
//! autocorrelation sum with Geyer's initial monotone sequence and divides the
//! retained draw count by the resulting integrated autocorrelation time.
//! Bulk-ESS runs this on rank-normalized draws; quantile, tail, MAD and
//! small-interval ESS run it on 0/1 indicator sequences.

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::error::{DiagError, Result};
use crate::rhat::{between_from_means, mean_var};
use crate::scalar::Scalar;
use crate::transforms::{
    common_length, fold, indicator_interval, indicator_leq, pooled_quantile, rank_normalize,
    split_chains,
};

fn fft_power_roundtrip<T: Scalar>(buf: &mut [Complex<T>]) {
    let len = buf.len();
    let (fwd, inv) = T::with_fft_planner(|p| (p.plan_fft_forward(len), p.plan_fft_inverse(len)));
    fwd.process(buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), T::zero());
    }
    inv.process(buf);
}

/// Biased (divisor `N`) autocovariances at lags `0..N` computed via FFT.
///
/// The centered chain is zero-padded to the next power of two at least `2N`
/// so the circular correlation equals the linear one.
pub fn autocovariance_fft<T: Scalar>(chain: &[T]) -> Vec<T> {
    let n = chain.len();
    if n == 0 {
        return Vec::new();
    }
    let (mean, _) = mean_var(chain);
    let len = (2 * n).next_power_of_two();
    let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
    for (b, &x) in buf.iter_mut().zip(chain) {
        b.re = x - mean;
    }
    fft_power_roundtrip(&mut buf);
    let scale = T::of_usize(len) * T::of_usize(n);
    buf[..n].iter().map(|c| c.re / scale).collect()
}

/// Per-chain and combined multi-chain autocorrelations of split chains.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrSpectrum<T> {
    /// `per_chain_rho[m][t]`; all zeros for a constant chain.
    pub per_chain_rho: Vec<Vec<T>>,
    /// Combined autocorrelation `1 − (W − mean_m s_m² ρ_{t,m}) / var⁺`.
    pub combined_rho: Vec<T>,
    /// Unbiased per-chain variances `s_m²`.
    pub per_chain_var: Vec<T>,
    pub within: T,
    pub var_plus: T,
}

impl<T: Scalar> AutocorrSpectrum<T> {
    /// `var⁺` is zero or not finite, so no autocorrelation is defined.
    pub fn is_degenerate(&self) -> bool {
        !(self.var_plus > T::zero()) || !self.var_plus.is_finite()
    }
}

/// Combines per-chain autocovariances of (already split) chains.
///
/// `W` and `s_m²` are formed from the lag-0 autocovariances so that
/// `combined_rho[0]` is exactly one.
pub fn combined_autocorrelation<T: Scalar, C: AsRef<[T]> + Sync>(
    chains: &[C],
) -> Result<AutocorrSpectrum<T>> {
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
    let acov: Vec<Vec<T>> = chains
        .iter()
        .map(|c| autocovariance_fft(c.as_ref()))
        .collect();
    let means: Vec<T> = chains.iter().map(|c| mean_var(c.as_ref()).0).collect();

    let nf = T::of_usize(n);
    let mf = T::of_usize(m);
    let unbias = nf / (nf - T::one());
    let mean_scaled_acov = |t: usize| acov.iter().map(|a| a[t] * unbias).sum::<T>() / mf;

    let per_chain_var: Vec<T> = acov.iter().map(|a| a[0] * unbias).collect();
    let within = mean_scaled_acov(0);
    let between = between_from_means(&means, n);
    let var_plus = within * (nf - T::one()) / nf + between / nf;

    let per_chain_rho = acov
        .iter()
        .map(|a| {
            if a[0] > T::zero() {
                a.iter().map(|&g| g / a[0]).collect()
            } else {
                vec![T::zero(); n]
            }
        })
        .collect();
    let combined_rho = (0..n)
        .map(|t| T::one() - (within - mean_scaled_acov(t)) / var_plus)
        .collect();

    Ok(AutocorrSpectrum {
        per_chain_rho,
        combined_rho,
        per_chain_var,
        within,
        var_plus,
    })
}

/// Integrated autocorrelation time and the last lag included in its sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation<T> {
    pub tau_hat: T,
    pub truncation_lag: usize,
}

/// Geyer's initial positive / initial monotone sequence estimator of τ.
///
/// Pairs `P_t = ρ_{2t} + ρ_{2t+1}` are kept while positive, then made
/// non-increasing by a running minimum. The returned τ averages the sum
/// ending at the last kept odd lag `2k+1` with the sum that also includes
/// the next even lag `2k+2` (when that autocorrelation is positive).
pub fn geyer_truncate<T: Scalar>(rho: &[T]) -> Truncation<T> {
    let two = T::of(2.0);
    if rho.len() < 2 {
        return Truncation {
            tau_hat: T::one(),
            truncation_lag: 0,
        };
    }
    let mut pairs = vec![rho[0] + rho[1]];
    let mut t = 1;
    while 2 * t + 1 < rho.len() {
        let p = rho[2 * t] + rho[2 * t + 1];
        if !(p > T::zero()) {
            break;
        }
        pairs.push(p);
        t += 1;
    }
    for i in 1..pairs.len() {
        if pairs[i] > pairs[i - 1] {
            pairs[i] = pairs[i - 1];
        }
    }
    let k = pairs.len() - 1;
    let tau_odd = -T::one() + two * pairs.iter().copied().sum::<T>();
    // tau_even = tau_odd + 2 rho_{2k+2}; their average adds rho_{2k+2} once.
    let tau_hat = match rho.get(2 * k + 2) {
        Some(&next_even) if next_even > T::zero() => tau_odd + next_even,
        _ => tau_odd,
    };
    Truncation {
        tau_hat,
        truncation_lag: 2 * k + 1,
    }
}

/// ESS estimate with the τ̂ it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssResult<T> {
    /// NaN when the input has no variance.
    pub ess: T,
    pub tau_hat: T,
    pub truncation_lag: usize,
    /// The estimate was limited to `S·log10(S)`.
    pub capped: bool,
}

impl<T: Scalar> EssResult<T> {
    pub fn nan() -> Self {
        Self {
            ess: T::nan(),
            tau_hat: T::nan(),
            truncation_lag: 0,
            capped: false,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.ess.is_nan()
    }
}

/// Upper bound `S·log10(S)` on reported ESS.
pub fn ess_cap(draws: usize) -> f64 {
    let s = draws as f64;
    s * s.log10()
}

/// One point of an ESS-versus-draws curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssEvolutionPoint<T> {
    /// Iterations per chain in the prefix.
    pub iterations: usize,
    /// Total draws in the prefix, `chains * iterations`.
    pub draws: usize,
    pub bulk: T,
    pub tail: T,
}

/// ESS estimators sharing one capping policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EssEstimator {
    pub cap: bool,
}

impl Default for EssEstimator {
    fn default() -> Self {
        Self { cap: true }
    }
}

impl EssEstimator {
    /// ESS of already-split chains.
    pub fn from_split<T: Scalar, C: AsRef<[T]> + Sync>(&self, split: &[C]) -> Result<EssResult<T>> {
        let spectrum = combined_autocorrelation(split)?;
        if spectrum.is_degenerate() {
            return Ok(EssResult::nan());
        }
        let draws = split.len() * split[0].as_ref().len();
        let Truncation {
            mut tau_hat,
            truncation_lag,
        } = geyer_truncate(&spectrum.combined_rho);
        let mut capped = false;
        if self.cap {
            let floor = T::of(1.0 / (draws as f64).log10());
            if tau_hat < floor {
                tau_hat = floor;
                capped = true;
            }
        }
        // Uncapped, a non-positive τ̂ (perfectly antithetic chains) has no
        // finite ESS.
        let ess = if tau_hat > T::zero() {
            T::of_usize(draws) / tau_hat
        } else {
            T::infinity()
        };
        Ok(EssResult {
            ess,
            tau_hat,
            truncation_lag,
            capped,
        })
    }

    /// Classic ESS of the mean on the raw values.
    pub fn mean<T: Scalar, C: AsRef<[T]>>(&self, chains: &[C]) -> Result<EssResult<T>> {
        self.from_split(split_chains(chains)?.chains())
    }

    /// Bulk-ESS: classic ESS of the rank-normalized draws.
    pub fn bulk<T: Scalar, C: AsRef<[T]>>(&self, chains: &[C]) -> Result<EssResult<T>> {
        self.mean(&rank_normalize(chains))
    }

    /// ESS of the indicator `draw <= Q(q)` for the pooled empirical quantile.
    /// NaN when the indicator is constant.
    pub fn quantile<T: Scalar, C: AsRef<[T]>>(&self, chains: &[C], q: f64) -> Result<EssResult<T>> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DiagError::InvalidArgument(format!(
                "quantile {q} outside (0, 1)"
            )));
        }
        let threshold = pooled_quantile(chains, q);
        self.indicator(&indicator_leq(chains, threshold))
    }

    fn indicator<T: Scalar>(&self, ind: &[Vec<T>]) -> Result<EssResult<T>> {
        let split = split_chains(ind)?;
        if crate::chain_core::is_constant(split.chains()) {
            return Ok(EssResult::nan());
        }
        self.from_split(split.chains())
    }

    /// Tail-ESS: the smaller quantile ESS of the two tail probabilities.
    pub fn tail<T: Scalar, C: AsRef<[T]>>(
        &self,
        chains: &[C],
        quantiles: (f64, f64),
    ) -> Result<EssResult<T>> {
        let lo = self.quantile(chains, quantiles.0)?;
        let hi = self.quantile(chains, quantiles.1)?;
        Ok(min_ess(lo, hi))
    }

    pub fn median<T: Scalar, C: AsRef<[T]>>(&self, chains: &[C]) -> Result<EssResult<T>> {
        self.quantile(chains, 0.5)
    }

    /// ESS of the median absolute deviation: median ESS of the folded draws.
    pub fn mad<T: Scalar, C: AsRef<[T]>>(&self, chains: &[C]) -> Result<EssResult<T>> {
        self.median(&fold(chains))
    }

    /// ESS of `Q(i/k) < draw <= Q((i+1)/k)` for each of `k` equal-probability intervals.
    pub fn local<T: Scalar, C: AsRef<[T]> + Sync>(
        &self,
        chains: &[C],
        k: usize,
    ) -> Result<Vec<EssResult<T>>> {
        let draws = common_length(chains)? * chains.len();
        if k == 0 || k > draws {
            return Err(DiagError::TooManyIntervals { k, draws });
        }
        (0..k)
            .into_par_iter()
            .map(|i| {
                let lo = i as f64 / k as f64;
                let hi = (i + 1) as f64 / k as f64;
                self.indicator(&indicator_interval(chains, lo, hi)?)
            })
            .collect()
    }

    /// Batch-means style `S·var⁺/B` with each split chain as a batch.
    /// Infinite when `B = 0`; then (or above the cap) reported at `S·log10(S)`.
    pub fn bda2<T: Scalar, C: AsRef<[T]>>(&self, chains: &[C]) -> Result<EssResult<T>> {
        let split = split_chains(chains)?;
        let d = crate::rhat::variance_decomposition(split.chains())?;
        if d.is_degenerate() {
            return Ok(EssResult::nan());
        }
        let draws = split.draws();
        let sf = T::of_usize(draws);
        let cap = T::of(ess_cap(draws));
        let mut ess = if d.between > T::zero() {
            sf * d.var_plus / d.between
        } else {
            T::infinity()
        };
        let mut capped = false;
        if ess.is_infinite() || (self.cap && ess > cap) {
            ess = cap;
            capped = true;
        }
        Ok(EssResult {
            ess,
            tau_hat: sf / ess,
            truncation_lag: 0,
            capped,
        })
    }

    /// Bulk- and tail-ESS recomputed on prefixes of every chain.
    pub fn evolution<T: Scalar, C: AsRef<[T]>>(
        &self,
        chains: &[C],
        grid: &[usize],
        tail_quantiles: (f64, f64),
    ) -> Result<Vec<EssEvolutionPoint<T>>> {
        let n = common_length(chains)?;
        grid.iter()
            .map(|&len| {
                if len < 4 || len > n {
                    return Err(DiagError::InvalidArgument(format!(
                        "prefix length {len} outside 4..={n}"
                    )));
                }
                let prefix: Vec<&[T]> = chains.iter().map(|c| &c.as_ref()[..len]).collect();
                Ok(EssEvolutionPoint {
                    iterations: len,
                    draws: len * chains.len(),
                    bulk: self.bulk(&prefix)?.ess,
                    tail: self.tail(&prefix, tail_quantiles)?.ess,
                })
            })
            .collect()
    }
}

/// Smaller of two results; NaN wins.
fn min_ess<T: Scalar>(a: EssResult<T>, b: EssResult<T>) -> EssResult<T> {
    if a.is_degenerate() {
        a
    } else if b.is_degenerate() || b.ess < a.ess {
        b
    } else {
        a
    }
}

/// `points` evenly spaced prefix lengths ending at `n`, each at least 4.
pub fn evolution_grid(n: usize, points: usize) -> Vec<usize> {
    let points = points.max(1);
    let mut grid: Vec<usize> = (1..=points)
        .map(|i| n * i / points)
        .filter(|&l| l >= 4)
        .collect();
    grid.dedup();
    grid
}

pub fn ess_mean<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<EssResult<T>> {
    EssEstimator::default().mean(chains)
}

pub fn ess_bulk<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<EssResult<T>> {
    EssEstimator::default().bulk(chains)
}

pub fn ess_quantile<T: Scalar, C: AsRef<[T]>>(chains: &[C], q: f64) -> Result<EssResult<T>> {
    EssEstimator::default().quantile(chains, q)
}

/// Tail-ESS at the default 5% / 95% quantiles.
pub fn ess_tail<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<EssResult<T>> {
    EssEstimator::default().tail(chains, (0.05, 0.95))
}

pub fn ess_median<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<EssResult<T>> {
    EssEstimator::default().median(chains)
}

pub fn ess_mad<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<EssResult<T>> {
    EssEstimator::default().mad(chains)
}

pub fn ess_local<T: Scalar, C: AsRef<[T]> + Sync>(
    chains: &[C],
    k: usize,
) -> Result<Vec<EssResult<T>>> {
    EssEstimator::default().local(chains, k)
}

pub fn ess_bda2<T: Scalar, C: AsRef<[T]>>(chains: &[C]) -> Result<EssResult<T>> {
    EssEstimator::default().bda2(chains)
}

pub fn ess_evolution<T: Scalar, C: AsRef<[T]>>(
    chains: &[C],
    grid: &[usize],
) -> Result<Vec<EssEvolutionPoint<T>>> {
    EssEstimator::default().evolution(chains, grid, (0.05, 0.95))
}
