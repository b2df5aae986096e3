//! Synthetic chains with known defects and replication sweeps over them.
//!
//! # Random streams
//!
//! Every chain of every replication draws from its own ChaCha8 generator
//! seeded with `substream_seed(seed, replication, chain)`, a SplitMix64
//! finalizer applied to the three indices in turn. Results therefore do not
//! depend on how replications are scheduled across threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{DiagError, Result};
use crate::ess::EssEstimator;
use crate::rhat::{rhat_summary, unsplit_rhat};
use crate::transforms::quantile_sorted;

/// Generating process for each chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    IidNormal,
    /// Stationary AR(1) with standard normal innovations.
    Ar1 {
        rho: f64,
    },
    /// Ratio of two independent stationary AR(1) chains: standard Cauchy marginal.
    CauchyRatio {
        rho: f64,
    },
    /// Random-walk Metropolis on the standard Cauchy density, started from
    /// an exact draw. Local moves make the tails mix far slower than the bulk.
    CauchyNominal {
        step: f64,
    },
}

impl Process {
    pub fn rho(&self) -> f64 {
        match *self {
            Process::IidNormal | Process::CauchyNominal { .. } => 0.0,
            Process::Ar1 { rho } | Process::CauchyRatio { rho } => rho,
        }
    }
}

/// Defect applied to otherwise well-mixed chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Manipulation {
    None,
    /// Adds `slope · s` to draw `s = 1..=N` of every chain.
    Trend {
        slope: f64,
    },
    /// Adds `delta` to one chain.
    Shift {
        delta: f64,
        chain: usize,
    },
    /// Scales one chain's deviations from its own sample mean.
    Scale {
        factor: f64,
        chain: usize,
    },
}

impl Manipulation {
    /// Trend whose variance over `1..=n` is `fraction` of the total marginal
    /// variance, given the noise variance `noise_var`:
    /// `slope² (n² − 1) / 12 = fraction / (1 − fraction) · noise_var`.
    pub fn trend_from_variance_fraction(fraction: f64, n: usize, noise_var: f64) -> Self {
        let nf = n as f64;
        let trend_var = fraction / (1.0 - fraction) * noise_var;
        Manipulation::Trend {
            slope: (12.0 * trend_var / (nf * nf - 1.0)).sqrt(),
        }
    }

    fn target_chain(&self) -> Option<usize> {
        match *self {
            Manipulation::Shift { chain, .. } | Manipulation::Scale { chain, .. } => Some(chain),
            _ => None,
        }
    }
}

impl fmt::Display for Manipulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Manipulation::None => write!(f, "none"),
            Manipulation::Trend { slope } => write!(f, "trend:{slope}"),
            Manipulation::Shift { delta, chain } => write!(f, "shift:{delta}:{chain}"),
            Manipulation::Scale { factor, chain } => write!(f, "scale:{factor}:{chain}"),
        }
    }
}

/// Parses `none`, `trend:<slope>`, `shift:<delta>[:<chain>]`,
/// `scale:<factor>[:<chain>]`; the chain defaults to 0.
impl FromStr for Manipulation {
    type Err = DiagError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DiagError::InvalidArgument(format!("bad manipulation `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())
        };
        let chain = || -> Result<usize> {
            match parts.get(2) {
                Some(c) => c.parse().map_err(|_| bad()),
                None => Ok(0),
            }
        };
        let m = match parts[0] {
            "none" if parts.len() == 1 => Manipulation::None,
            "trend" if parts.len() == 2 => Manipulation::Trend { slope: num(1)? },
            "shift" if parts.len() <= 3 => Manipulation::Shift {
                delta: num(1)?,
                chain: chain()?,
            },
            "scale" if parts.len() <= 3 => Manipulation::Scale {
                factor: num(1)?,
                chain: chain()?,
            },
            _ => return Err(bad()),
        };
        Ok(m)
    }
}

/// One simulated experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub process: Process,
    pub manipulation: Manipulation,
    pub chains: usize,
    pub iterations: usize,
    pub replications: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(DiagError::InvalidArgument(m));
        let rho = self.process.rho();
        if !(rho.abs() < 1.0) {
            return bad(format!("|rho| must be < 1, got {rho}"));
        }
        if let Process::CauchyNominal { step } = self.process {
            if !(step > 0.0 && step.is_finite()) {
                return bad(format!("proposal step must be positive, got {step}"));
            }
        }
        if self.chains == 0 || self.replications == 0 {
            return bad("chains and replications must be positive".into());
        }
        if self.iterations < 4 {
            return Err(DiagError::TooFewDraws(self.iterations));
        }
        if let Some(c) = self.manipulation.target_chain() {
            if c >= self.chains {
                return bad(format!("manipulated chain {c} out of range"));
            }
        }
        if let Manipulation::Scale { factor, .. } = self.manipulation {
            if !(factor > 0.0) {
                return bad(format!("scale factor must be positive, got {factor}"));
            }
        }
        Ok(())
    }

    /// Draws for replication `replication`, manipulation applied.
    pub fn generate(&self, replication: usize) -> Vec<Vec<f64>> {
        let mut chains: Vec<Vec<f64>> = (0..self.chains)
            .map(|m| {
                let mut rng = substream_rng(self.seed, replication as u64, m as u64);
                match self.process {
                    Process::IidNormal => gen_ar1_with(0.0, self.iterations, &mut rng),
                    Process::Ar1 { rho } => gen_ar1_with(rho, self.iterations, &mut rng),
                    Process::CauchyRatio { rho } => {
                        gen_cauchy_ratio_with(rho, self.iterations, &mut rng)
                    }
                    Process::CauchyNominal { step } => {
                        gen_cauchy_metropolis_with(step, self.iterations, &mut rng)
                    }
                }
            })
            .collect();
        apply_manipulation(&mut chains, self.manipulation);
        chains
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for `(seed, replication, chain)`.
pub fn substream_seed(seed: u64, replication: u64, chain: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ replication) ^ chain)
}

pub fn substream_rng(seed: u64, replication: u64, chain: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, replication, chain))
}

/// Stationary AR(1): `x_0 ~ N(0, 1/(1 − ρ²))`, `x_n = ρ x_{n−1} + ε_n`.
pub fn gen_ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
    gen_ar1_with(rho, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_ar1_with<R: Rng + ?Sized>(rho: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let sd0 = 1.0 / (1.0 - rho * rho).sqrt();
    let mut x = sd0 * rng.sample::<f64, _>(StandardNormal);
    out.push(x);
    for _ in 1..n {
        x = rho * x + rng.sample::<f64, _>(StandardNormal);
        out.push(x);
    }
    out
}

/// Ratio `u_n / v_n` of two independent stationary AR(1) chains.
pub fn gen_cauchy_ratio(rho: f64, n: usize, seed: u64) -> Vec<f64> {
    gen_cauchy_ratio_with(rho, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_cauchy_ratio_with<R: Rng + ?Sized>(rho: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let sd0 = 1.0 / (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let (mut u, mut v) = (0.0, 0.0);
    for i in 0..n {
        let (scale, keep) = if i == 0 { (sd0, 0.0) } else { (1.0, rho) };
        u = keep * u + scale * rng.sample::<f64, _>(StandardNormal);
        let mut next_v = 0.0;
        while next_v == 0.0 {
            next_v = keep * v + scale * rng.sample::<f64, _>(StandardNormal);
        }
        v = next_v;
        out.push(u / v);
    }
    out
}

pub fn gen_cauchy_metropolis(step: f64, n: usize, seed: u64) -> Vec<f64> {
    gen_cauchy_metropolis_with(step, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_cauchy_metropolis_with<R: Rng + ?Sized>(step: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let log_density = |x: f64| -x.mul_add(x, 1.0).ln();
    let mut x = (std::f64::consts::PI * (rng.random::<f64>() - 0.5)).tan();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let y = x + step * rng.sample::<f64, _>(StandardNormal);
        if rng.random::<f64>().ln() < log_density(y) - log_density(x) {
            x = y;
        }
        out.push(x);
    }
    out
}

/// Applies a defect in place.
pub fn apply_manipulation(chains: &mut [Vec<f64>], manipulation: Manipulation) {
    match manipulation {
        Manipulation::None => {}
        Manipulation::Trend { slope } => {
            for chain in chains.iter_mut() {
                for (s, x) in chain.iter_mut().enumerate() {
                    *x += slope * (s + 1) as f64;
                }
            }
        }
        Manipulation::Shift { delta, chain } => {
            for x in chains[chain].iter_mut() {
                *x += delta;
            }
        }
        Manipulation::Scale { factor, chain } => {
            let c = &mut chains[chain];
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            for x in c.iter_mut() {
                *x = mean + factor * (*x - mean);
            }
        }
    }
}

/// Diagnostics recorded for one replication. NaN where undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub replication: usize,
    pub rhat_classic: f64,
    pub rhat_rank: f64,
    pub rhat_folded: f64,
    pub rhat_max: f64,
    pub rhat_unsplit: f64,
    pub ess_mean: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

/// Column name and accessor.
pub type SweepColumn = (&'static str, fn(&SweepRecord) -> f64);

/// Names and accessors of the recorded diagnostics, in CSV column order.
pub const SWEEP_COLUMNS: [SweepColumn; 8] = [
    ("rhat_classic", |r| r.rhat_classic),
    ("rhat_rank", |r| r.rhat_rank),
    ("rhat_folded", |r| r.rhat_folded),
    ("rhat_max", |r| r.rhat_max),
    ("rhat_unsplit", |r| r.rhat_unsplit),
    ("ess_mean", |r| r.ess_mean),
    ("ess_bulk", |r| r.ess_bulk),
    ("ess_tail", |r| r.ess_tail),
];

/// Distribution of one diagnostic over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub name: &'static str,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    /// Fraction of finite values above 1.01 (meaningful for R̂ columns).
    pub frac_above_1_01: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: ScenarioSpec,
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn column(&self, name: &str) -> Vec<f64> {
        let (_, get) = SWEEP_COLUMNS
            .iter()
            .find(|(n, _)| *n == name)
            .unwrap_or_else(|| panic!("unknown sweep column {name}"));
        self.records.iter().map(get).collect()
    }

    /// Median over replications of a column, ignoring NaN.
    pub fn median(&self, name: &str) -> f64 {
        finite_quantile(self.column(name), 0.5)
    }

    pub fn summary(&self) -> Vec<ColumnSummary> {
        SWEEP_COLUMNS
            .iter()
            .map(|(name, get)| {
                let v: Vec<f64> = self.records.iter().map(get).collect();
                let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
                let above = finite.iter().filter(|&&x| x > 1.01).count();
                ColumnSummary {
                    name,
                    q05: finite_quantile(v.clone(), 0.05),
                    median: finite_quantile(v.clone(), 0.5),
                    q95: finite_quantile(v, 0.95),
                    frac_above_1_01: above as f64 / finite.len().max(1) as f64,
                }
            })
            .collect()
    }

    /// One row per replication.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "replication")?;
        for (name, _) in SWEEP_COLUMNS {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(w, "{}", r.replication)?;
            for (_, get) in SWEEP_COLUMNS {
                write!(w, ",{}", get(r))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        writeln!(
            w,
            "process={:?} manipulation={} chains={} iterations={} replications={} seed={}",
            s.process, s.manipulation, s.chains, s.iterations, s.replications, s.seed
        )?;
        writeln!(
            w,
            "{:<14} {:>12} {:>12} {:>12} {:>10}",
            "diagnostic", "q05", "median", "q95", ">1.01"
        )?;
        for c in self.summary() {
            writeln!(
                w,
                "{:<14} {:>12.5} {:>12.5} {:>12.5} {:>10.3}",
                c.name, c.q05, c.median, c.q95, c.frac_above_1_01
            )?;
        }
        Ok(())
    }
}

fn finite_quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.retain(|x| x.is_finite());
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Diagnoses one set of chains the way a sweep records it.
pub fn record(replication: usize, chains: &[Vec<f64>]) -> Result<SweepRecord> {
    let est = EssEstimator::default();
    let rhat = rhat_summary(chains)?;
    let unsplit = if chains.len() >= 2 {
        unsplit_rhat(chains)?
    } else {
        f64::NAN
    };
    Ok(SweepRecord {
        replication,
        rhat_classic: rhat.classic,
        rhat_rank: rhat.rank,
        rhat_folded: rhat.folded,
        rhat_max: rhat.max,
        rhat_unsplit: unsplit,
        ess_mean: est.mean(chains)?.ess,
        ess_bulk: est.bulk(chains)?.ess,
        ess_tail: est.tail(chains, (0.05, 0.95))?.ess,
    })
}

/// Runs all replications of a scenario, in parallel, in a reproducible way.
pub fn run_sweep(spec: &ScenarioSpec) -> Result<SweepResult> {
    spec.check()?;
    let records = (0..spec.replications)
        .into_par_iter()
        .map(|r| record(r, &spec.generate(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        spec: *spec,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_is_deterministic() {
        assert_eq!(gen_ar1(0.3, 50, 7), gen_ar1(0.3, 50, 7));
        assert_ne!(gen_ar1(0.3, 50, 7), gen_ar1(0.3, 50, 8));
    }

    #[test]
    fn trend_zero_is_identity() {
        let mut chains = vec![vec![1.0, 2.0, 3.0]];
        apply_manipulation(&mut chains, Manipulation::Trend { slope: 0.0 });
        assert_eq!(chains, vec![vec![1.0, 2.0, 3.0]]);
    }

    #[test]
    fn shift_and_scale_touch_one_chain() {
        let mut chains = vec![vec![1.0, 3.0], vec![1.0, 3.0]];
        apply_manipulation(
            &mut chains,
            Manipulation::Shift {
                delta: 2.0,
                chain: 1,
            },
        );
        assert_eq!(chains, vec![vec![1.0, 3.0], vec![3.0, 5.0]]);
        apply_manipulation(
            &mut chains,
            Manipulation::Scale {
                factor: 0.5,
                chain: 0,
            },
        );
        assert_eq!(chains[0], vec![1.5, 2.5]);
    }

    #[test]
    fn trend_fraction_conversion() {
        let Manipulation::Trend { slope } =
            Manipulation::trend_from_variance_fraction(0.02, 1000, 1.0)
        else {
            unreachable!()
        };
        let s: Vec<f64> = (1..=1000).map(|i| slope * i as f64).collect();
        let mean = s.iter().sum::<f64>() / 1000.0;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1000.0;
        assert!((var / (1.0 + var) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn manipulation_grammar() {
        assert_eq!("none".parse::<Manipulation>().unwrap(), Manipulation::None);
        assert_eq!(
            "scale:0.577:0".parse::<Manipulation>().unwrap(),
            Manipulation::Scale {
                factor: 0.577,
                chain: 0
            }
        );
        assert_eq!(
            "shift:2".parse::<Manipulation>().unwrap(),
            Manipulation::Shift {
                delta: 2.0,
                chain: 0
            }
        );
        assert_eq!(
            "trend:0.001".parse::<Manipulation>().unwrap(),
            Manipulation::Trend { slope: 0.001 }
        );
        for bad in [
            "",
            "scale",
            "scale:x",
            "shift:1:2:3",
            "wobble:1",
            "trend:1:2",
        ] {
            assert!(bad.parse::<Manipulation>().is_err(), "{bad}");
        }
    }

    #[test]
    fn spec_checks() {
        let ok = ScenarioSpec {
            process: Process::Ar1 { rho: 0.3 },
            manipulation: Manipulation::Scale {
                factor: 0.5,
                chain: 3,
            },
            chains: 4,
            iterations: 100,
            replications: 2,
            seed: 1,
        };
        assert!(ok.check().is_ok());
        assert!(ScenarioSpec { chains: 3, ..ok }.check().is_err());
        assert!(ScenarioSpec {
            process: Process::Ar1 { rho: 1.0 },
            ..ok
        }
        .check()
        .is_err());
        assert!(ScenarioSpec {
            replications: 0,
            ..ok
        }
        .check()
        .is_err());
    }

    #[test]
    fn sweep_is_reproducible() {
        let spec = ScenarioSpec {
            process: Process::Ar1 { rho: 0.3 },
            manipulation: Manipulation::None,
            chains: 4,
            iterations: 100,
            replications: 6,
            seed: 42,
        };
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.records.len(), 6);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!(r.replication, i);
        }
    }
}
