//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so every line is shown.
//!
//! `cargo test --release --test acceptance` (or a plain `cargo test`).

use std::process::{Command, ExitCode};
use std::time::Instant;

use mcdiag::ess::{autocovariance_fft, ess_bulk, ess_cap, ess_mean, ess_quantile, ess_tail};
use mcdiag::mcse::mcse_quantile;
use mcdiag::report_io::parse_report_json;
use mcdiag::rhat::{folded_split_rhat, rank_normalized_split_rhat};
use mcdiag::simulate::{
    run_sweep, substream_rng, Manipulation, Process, ScenarioSpec, SweepResult,
};
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sweep(process: Process, manipulation: Manipulation, n: usize, reps: usize) -> SweepResult {
    run_sweep(&ScenarioSpec {
        process,
        manipulation,
        chains: 4,
        iterations: n,
        replications: reps,
        seed: SEED,
    })
    .expect("valid scenario")
}

const AR: Process = Process::Ar1 { rho: 0.3 };
const CAUCHY: Process = Process::CauchyRatio { rho: 0.3 };

fn scale_defect_hidden_from_classic_rhat() -> Outcome {
    let t = Instant::now();
    let s = sweep(
        AR,
        Manipulation::Scale {
            factor: 1.0 / 3f64.sqrt(),
            chain: 0,
        },
        1000,
        200,
    );
    let secs = t.elapsed().as_secs_f64();
    let (classic, max) = (s.median("rhat_classic"), s.median("rhat_max"));
    outcome(
        classic < 1.01 && max > 1.01 && secs < 30.0,
        format!("median classic {classic:.4} (< 1.01), median rhat_max {max:.4} (> 1.01), {secs:.1}s (< 30s)"),
    )
}

fn shifted_cauchy_chain() -> Outcome {
    let s = sweep(
        CAUCHY,
        Manipulation::Shift {
            delta: 2.0,
            chain: 0,
        },
        1000,
        200,
    );
    let (classic, max) = (s.median("rhat_classic"), s.median("rhat_max"));
    outcome(
        classic < 1.05 && max > 1.01,
        format!("median classic {classic:.4} (< 1.05), median rhat_max {max:.4} (> 1.01)"),
    )
}

fn well_mixed_chains_pass() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, process) in [("ar1", AR), ("cauchy", CAUCHY)] {
        let s = sweep(process, Manipulation::None, 1000, 200);
        let ok = s
            .records
            .iter()
            .filter(|r| r.rhat_classic < 1.02 && r.rhat_max < 1.02)
            .count() as f64
            / s.records.len() as f64;
        pass &= ok >= 0.95;
        parts.push(format!("{label}: {:.1}% both < 1.02", 100.0 * ok));
    }
    outcome(pass, format!("{} (need >= 95%)", parts.join(", ")))
}

fn trend_detection() -> Outcome {
    let n = 1000;
    let s = sweep(
        Process::IidNormal,
        Manipulation::trend_from_variance_fraction(0.02, n, 1.0),
        n,
        200,
    );
    let (rank, unsplit) = (s.median("rhat_rank"), s.median("rhat_unsplit"));
    outcome(
        rank > 1.01 && unsplit < 1.01,
        format!(
            "median rank-normalized split {rank:.4} (> 1.01), median unsplit {unsplit:.4} (< 1.01)"
        ),
    )
}

fn shift_detection() -> Outcome {
    let s = sweep(
        Process::IidNormal,
        Manipulation::Shift {
            delta: 1.0 / 3.0,
            chain: 0,
        },
        1000,
        200,
    );
    let rank = s.median("rhat_rank");
    outcome(
        rank > 1.01,
        format!("median rank-normalized split {rank:.4} (> 1.01)"),
    )
}

fn scale_detection() -> Outcome {
    let s = sweep(
        Process::IidNormal,
        Manipulation::Scale {
            factor: 0.75,
            chain: 0,
        },
        1000,
        200,
    );
    let (folded, rank) = (s.median("rhat_folded"), s.median("rhat_rank"));
    outcome(
        folded > 1.01 && rank < 1.01,
        format!("median folded {folded:.4} (> 1.01), median rank-normalized {rank:.4} (< 1.01)"),
    )
}

fn ess_calibration() -> Outcome {
    let t = Instant::now();
    let iid = sweep(Process::IidNormal, Manipulation::None, 1000, 200).median("ess_mean");
    let ar = sweep(AR, Manipulation::None, 1000, 200).median("ess_mean");
    let secs = t.elapsed().as_secs_f64();
    let target_ar = 4000.0 * 0.7 / 1.3;
    let pass =
        (iid / 4000.0 - 1.0).abs() < 0.15 && (ar / target_ar - 1.0).abs() < 0.15 && secs < 20.0;
    outcome(
        pass,
        format!("iid median {iid:.0} vs 4000, ar1 median {ar:.0} vs {target_ar:.0} (within 15%), {secs:.1}s (< 20s)"),
    )
}

fn naive_acov(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (0..n)
        .map(|t| {
            (0..n - t)
                .map(|i| (x[i] - mean) * (x[i + t] - mean))
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

fn fft_matches_naive() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [7usize, 64, 1000, 4097] {
        for k in 0..100u64 {
            let mut rng = substream_rng(SEED, n as u64, k);
            let loc: f64 = rng.random_range(-100.0..100.0);
            let x: Vec<f64> = (0..n)
                .map(|_| loc + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let (fast, slow) = (autocovariance_fft(&x), naive_acov(&x));
            for (f, s) in fast.iter().zip(&slow) {
                worst = worst.max((f - s).abs() / slow[0]);
            }
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max |fft - naive| / gamma_0 = {worst:.2e} (<= 1e-10)"),
    )
}

fn monotone_invariance() -> Outcome {
    type Stat = fn(&[Vec<f64>]) -> f64;
    let stats: [(&str, Stat); 4] = [
        ("rhat_rank", |c| rank_normalized_split_rhat(c).unwrap()),
        ("rhat_folded", |c| folded_split_rhat(c).unwrap()),
        ("ess_bulk", |c| ess_bulk(c).unwrap().ess),
        ("ess_tail", |c| ess_tail(c).unwrap().ess),
    ];
    let mut broken = vec![0usize; stats.len()];
    for k in 0..50u64 {
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|m| {
                let mut rng = substream_rng(SEED, 9000 + k, m);
                (0..200)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let exp: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|x| x.exp()).collect())
            .collect();
        let cube: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|x| x * x * x).collect())
            .collect();
        for (i, (_, f)) in stats.iter().enumerate() {
            let base = f(&chains).to_bits();
            if f(&exp).to_bits() != base || f(&cube).to_bits() != base {
                broken[i] += 1;
            }
        }
    }
    let detail = stats
        .iter()
        .zip(&broken)
        .map(|((name, _), b)| format!("{name} {}/50", 50 - b))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        broken.iter().all(|&b| b == 0),
        format!("bit-identical under exp and cube: {detail}"),
    )
}

fn antithetic_cap() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut capped = 0;
    let mut total = 0;
    for k in 0..20u64 {
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|m| {
                let mut rng = substream_rng(SEED, 10_000 + k, m);
                let mut x = Vec::with_capacity(1000);
                // pairs (a, -a): every draw is cancelled by its neighbour
                for _ in 0..500 {
                    let a: f64 = rng.sample(StandardNormal);
                    x.push(a);
                    x.push(-a);
                }
                if k % 2 == 1 {
                    // or a strict sign alternation
                    for (i, v) in x.iter_mut().enumerate() {
                        *v = if i % 2 == 0 { v.abs() } else { -v.abs() };
                    }
                }
                x
            })
            .collect();
        let cap = ess_cap(4000);
        for r in [
            ess_mean(&chains).unwrap(),
            ess_bulk(&chains).unwrap(),
            ess_tail(&chains).unwrap(),
            ess_quantile(&chains, 0.3).unwrap(),
        ] {
            total += 1;
            capped += r.capped as usize;
            if r.ess.is_finite() {
                worst = worst.max(r.ess / cap);
            }
        }
    }
    outcome(
        worst <= 1.0,
        format!(
            "max ESS / (S log10 S) = {worst:.4} (<= 1); {capped}/{total} estimates hit the cap"
        ),
    )
}

fn quantile_mcse_coverage() -> Outcome {
    let reps = 1000;
    let spec = ScenarioSpec {
        process: Process::IidNormal,
        manipulation: Manipulation::None,
        chains: 4,
        iterations: 250,
        replications: reps,
        seed: SEED,
    };
    let covered = (0..reps)
        .filter(|&r| {
            let q = mcse_quantile(&spec.generate(r), 0.5, 0.9).unwrap();
            q.interval_lo <= 0.0 && 0.0 <= q.interval_hi
        })
        .count();
    let rate = covered as f64 / reps as f64;
    outcome(
        (rate - 0.9).abs() <= 0.04,
        format!(
            "90% interval for the median covered 0 in {:.1}% of {reps} (90 +/- 4)",
            100.0 * rate
        ),
    )
}

fn tail_ess_below_bulk_for_nominal_cauchy() -> Outcome {
    let s = sweep(
        Process::CauchyNominal { step: 2.5 },
        Manipulation::None,
        1000,
        100,
    );
    let (tail, bulk) = (s.median("ess_tail"), s.median("ess_bulk"));
    outcome(
        tail < bulk,
        format!("median tail-ESS {tail:.0} < median bulk-ESS {bulk:.0}"),
    )
}

fn external_draws_are_diagnosed() -> Outcome {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/funnel.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_mcdiag"))
        .args(["diagnose", fixture, "--format", "json"])
        .env_remove("MCDIAG_THREADS")
        .output()
        .expect("spawn mcdiag");
    let code = o.status.code().unwrap_or(-1);
    let report = match parse_report_json(&String::from_utf8_lossy(&o.stdout)) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("exit {code}, unreadable report: {e}")),
    };
    let finite = report
        .parameters
        .iter()
        .all(|p| p.rhat_max.is_finite() && p.ess_bulk.is_finite() && p.ess_tail.is_finite());
    let flagged: Vec<&str> = report
        .parameters
        .iter()
        .filter(|p| p.violates(&report.config))
        .map(|p| p.parameter.as_str())
        .collect();
    outcome(
        matches!(code, 0 | 3) && report.parameters.len() == 10 && finite,
        format!(
            "exit {code}, {} parameters, all finite: {finite}; over threshold: {}",
            report.parameters.len(),
            flagged.join(" ")
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        (
            "scale-deflated chain: classic misses, rhat_max catches",
            scale_defect_hidden_from_classic_rhat,
        ),
        (
            "shifted Cauchy chain: classic near 1, rhat_max catches",
            shifted_cauchy_chain,
        ),
        (
            "well-mixed ar1 / Cauchy chains stay below 1.02",
            well_mixed_chains_pass,
        ),
        ("2% trend: split catches, unsplit misses", trend_detection),
        ("one-third-SD shift detected", shift_detection),
        (
            "three-quarter-SD scale: folded catches, rank misses",
            scale_detection,
        ),
        ("ESS calibration on iid and AR(1)", ess_calibration),
        ("FFT autocovariance equals naive sum", fft_matches_naive),
        ("invariance under monotone transforms", monotone_invariance),
        ("ESS cap on antithetic chains", antithetic_cap),
        ("quantile MCSE interval coverage", quantile_mcse_coverage),
        (
            "tail-ESS below bulk-ESS for a nominal Cauchy sampler",
            tail_ess_below_bulk_for_nominal_cauchy,
        ),
        (
            "CLI diagnoses externally produced draws",
            external_draws_are_diagnosed,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!(
            "{verdict} [{:02}] {name}: {} ({:.1}s)",
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
