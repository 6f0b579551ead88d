//! Built-in verification suites, each a fixed config plus its own checks.

use clap::ValueEnum;
use hjhomog_core::environment::Family;
use hjhomog_core::models::HamiltonianKind;
use hjhomog_core::par::Exec;
use hjhomog_core::scheme::Operator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use crate::config::{resolve, ExperimentConfig, Resolved};
use crate::error::{CliError, Stage};
use crate::experiments::{execute, Check, Outcome};
use crate::output::Sink;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    #[value(name = "oracle-1d")]
    Oracle1d,
    #[value(name = "radial-2d")]
    Radial2d,
    #[value(name = "convex-variance")]
    ConvexVariance,
    #[value(name = "assumption-H", alias = "assumption-h")]
    AssumptionH,
    #[value(name = "comparison")]
    Comparison,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle1d => "oracle-1d",
            Suite::Radial2d => "radial-2d",
            Suite::ConvexVariance => "convex-variance",
            Suite::AssumptionH => "assumption-H",
            Suite::Comparison => "comparison",
        }
    }

    /// `(label, config)` pairs run by the suite, in order.
    pub fn configs(self) -> Vec<(&'static str, &'static str)> {
        match self {
            Suite::Oracle1d => vec![("eikonal", EIKONAL_1D), ("quadratic", QUADRATIC_1D)],
            Suite::Radial2d => vec![("", RADIAL_2D)],
            Suite::ConvexVariance => vec![("", CONVEX_VARIANCE)],
            Suite::AssumptionH => vec![("", ASSUMPTION_H)],
            Suite::Comparison => vec![("", COMPARISON)],
        }
    }
}

const EIKONAL_1D: &str = r#"{
  "experiment": "homog",
  "environment": {"family": {"random_phase_trig": {"base": 2, "amplitudes": [1], "frequencies": [1]}}},
  "hamiltonian": {"kind": "eikonal"},
  "numerics": {"dim": 1, "extent": 8, "spacing": 0.00390625},
  "sweep": {"p": [1], "deltas": [0.2, 0.1, 0.05, 0.025], "seeds": [1, 2, 3, 4, 5, 6, 7, 8]},
  "output": {"directory": "hjhomog-verify/oracle-1d"}
}"#;

const QUADRATIC_1D: &str = r#"{
  "experiment": "homog",
  "environment": {"family": {"random_phase_trig": {"base": 1, "amplitudes": [1], "frequencies": [1]}}},
  "hamiltonian": {"kind": "quadratic_potential"},
  "numerics": {"dim": 1, "extent": 8, "spacing": 0.00390625},
  "sweep": {"p": [2], "deltas": [0.2, 0.1, 0.05, 0.025], "seeds": [1, 2, 3, 4, 5, 6, 7, 8]},
  "output": {"directory": "hjhomog-verify/oracle-1d"}
}"#;

const RADIAL_2D: &str = r#"{
  "experiment": "verify-radial",
  "environment": {
    "family": {"random_phase_trig": {"base": 2, "amplitudes": [0.25, 0.25, 0.25, 0.25], "frequencies": [1, 1, 1, 1]}},
    "isotropize": true
  },
  "hamiltonian": {"kind": "eikonal"},
  "numerics": {"dim": 2, "extent": 4, "spacing": 0.015625},
  "sweep": {
    "p": [1, 0],
    "deltas": [0.2, 0.1, 0.05, 0.025],
    "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16],
    "directions": 8,
    "radii": [0.5, 1.0, 1.5]
  },
  "output": {"directory": "hjhomog-verify/radial-2d"}
}"#;

const CONVEX_VARIANCE: &str = r#"{
  "experiment": "verify-convex",
  "environment": {"family": {"random_phase_trig": {"base": 1, "amplitudes": [1], "frequencies": [1]}}},
  "hamiltonian": {"kind": "quadratic_potential"},
  "numerics": {"dim": 1, "extent": 8, "spacing": 0.00390625},
  "sweep": {"p": [2], "deltas": [0.2, 0.1, 0.05, 0.025], "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32]},
  "output": {"directory": "hjhomog-verify/convex-variance"}
}"#;

const ASSUMPTION_H: &str = r#"{
  "experiment": "solve",
  "environment": {"family": {"random_phase_trig": {"base": 2, "amplitudes": [1], "frequencies": [1]}}},
  "hamiltonian": {"kind": "eikonal"},
  "numerics": {"dim": 1, "extent": 8, "spacing": 0.00390625},
  "sweep": {"p": [1], "deltas": [0.2, 0.1, 0.05, 0.025], "seeds": [1, 2, 3, 4, 5, 6, 7, 8]},
  "output": {"directory": "hjhomog-verify/assumption-H"}
}"#;

const COMPARISON: &str = r#"{
  "experiment": "solve",
  "environment": {"family": {"random_phase_trig": {"base": 2, "amplitudes": [0.5, 0.5], "frequencies": [1, 1]}}},
  "hamiltonian": {"kind": "eikonal"},
  "numerics": {"dim": 2, "extent": 2, "spacing": 0.0625},
  "sweep": {"p": [1, 0.5], "deltas": [0.1], "seeds": [1]},
  "output": {"directory": "hjhomog-verify/comparison"}
}"#;

/// Composite Simpson rule on `[0, 1]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `(base, amplitude)` of a single-mode unit-frequency trig environment.
fn single_mode(cfg: &ExperimentConfig) -> Result<(f64, f64), CliError> {
    match &cfg.environment.family {
        Family::RandomPhaseTrig(t)
            if t.amplitudes.len() == 1 && t.frequencies.first().is_none_or(|&f| f == 1.0) =>
        {
            Ok((t.base, t.amplitudes[0]))
        }
        _ => Err(CliError::Config(
            "oracle-1d needs a single-mode random_phase_trig environment with frequency 1".into(),
        )),
    }
}

/// `H̄(p) = |p| / ∫ 1/c` for `H = c(x)|p|`.
pub fn eikonal_oracle(base: f64, amp: f64, p: f64) -> f64 {
    p.abs() / simpson(|x| 1.0 / (base + amp * (TAU * x).sin()), 20_000)
}

/// `λ` with `∫ √(λ + V) = |p|` for `H = |p|² − V`, `V = base + amp sin 2πx`.
pub fn quadratic_oracle(base: f64, amp: f64, p: f64) -> f64 {
    let g = |l: f64| simpson(|x| (l + base + amp * (TAU * x).sin()).max(0.0).sqrt(), 20_000) - p.abs();
    let (mut lo, mut hi) = (amp - base, amp - base + p * p + 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn oracle_check(cfg: &ExperimentConfig, out: &Outcome) -> Result<Check, CliError> {
    let (base, amp) = single_mode(cfg)?;
    let p = cfg.p()?[0];
    let (name, oracle) = match cfg.hamiltonian.kind {
        HamiltonianKind::Eikonal => ("eikonal_oracle", eikonal_oracle(base, amp, p)),
        HamiltonianKind::QuadraticPotential => ("quadratic_oracle", quadratic_oracle(base, amp, p)),
        HamiltonianKind::DoubleWell => {
            return Err(CliError::Config("oracle-1d has no double-well oracle".into()))
        }
    };
    let cbar = out
        .metrics
        .iter()
        .find(|(k, _)| k.starts_with("cbar["))
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    let rel = (cbar - oracle).abs() / oracle.abs();
    Ok(Check::new(
        name,
        rel <= cfg.checks.oracle_tol,
        format!("cbar {cbar:.6} vs {oracle:.6}: relative error {rel:.4} (tol {})", cfg.checks.oracle_tol),
    ))
}

fn bound_spread_check(cfg: &ExperimentConfig, out: &Outcome) -> Check {
    let bounds: Vec<f64> = out
        .metrics
        .iter()
        .filter(|(k, _)| k.starts_with("bound["))
        .map(|(_, v)| *v)
        .collect();
    let hi = bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / hi;
    Check::new(
        "bound_uniform_in_delta",
        bounds.len() >= 2 && spread <= cfg.checks.bound_spread_tol,
        format!(
            "max over seeds of delta|v| + Lip(v) per delta in [{lo:.4}, {hi:.4}]: spread {spread:.4} (tol {})",
            cfg.checks.bound_spread_tol
        ),
    )
}

/// One pseudo-step on random ordered pairs `v1 ≤ v2`; any `out1 > out2` is a witness.
pub fn comparison(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let p = cfg.p()?;
    let seed = *cfg
        .sweep
        .seeds
        .first()
        .ok_or_else(|| CliError::Config("sweep.seeds is empty".into()))?;
    let delta = *cfg
        .sweep
        .deltas
        .first()
        .ok_or_else(|| CliError::Config("sweep.deltas is empty".into()))?;
    let (ham, diff) = cfg.model().instantiate(&grid, seed).stage("comparison")?;
    let params = cfg
        .numerics
        .scheme
        .resolve(&ham, &diff, p, delta, &grid)
        .stage("comparison")?;
    let op = Operator::new(&ham, &diff, p, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let mut csv = String::from("pair,violations,worst\n");
    let mut witness: Option<String> = None;
    let mut total = 0usize;
    for pair in 0..cfg.checks.comparison_pairs {
        let amp = rng.random_range(0.01..1.0);
        let v1: Vec<f64> = (0..n).map(|_| rng.random_range(-amp..amp)).collect();
        let v2: Vec<f64> = v1
            .iter()
            .map(|&x| {
                if rng.random_bool(0.2) {
                    x + rng.random_range(0.0..amp)
                } else {
                    x
                }
            })
            .collect();
        op.pseudo_step(Exec::Sequential, &v1, delta, params.tau, &mut a);
        op.pseudo_step(Exec::Sequential, &v2, delta, params.tau, &mut b);
        let mut count = 0;
        let mut worst = 0.0f64;
        for i in 0..n {
            if a[i] > b[i] {
                count += 1;
                if a[i] - b[i] > worst {
                    worst = a[i] - b[i];
                }
                if witness.is_none() {
                    let x = grid.position(i);
                    witness = Some(format!(
                        "pair {pair}, node {i} at ({}, {}): v1 {:.6e} <= v2 {:.6e} but step gives {:.6e} > {:.6e}",
                        x[0], x[1], v1[i], v2[i], a[i], b[i]
                    ));
                }
            }
        }
        total += count;
        csv.push_str(&format!("{pair},{count},{worst:e}\n"));
    }
    sink.write("comparison.csv", csv.as_bytes())?;
    let mut out = Outcome::default();
    out.metrics.insert("violations".into(), total as f64);
    out.metrics.insert("sigma".into(), params.sigma);
    out.checks.push(Check::new(
        "order_preserved",
        total == 0,
        witness.unwrap_or_else(|| {
            format!(
                "{} pairs, sigma {:.4}, tau {:.4e}: no violation",
                cfg.checks.comparison_pairs, params.sigma, params.tau
            )
        }),
    ));
    sink.write("checks.csv", out.checks_csv().as_bytes())?;
    Ok(out)
}

/// Resolve the suite's configs with the given overrides.
pub fn suite_configs(suite: Suite, overrides: &[String]) -> Result<Vec<(&'static str, Resolved)>, CliError> {
    suite
        .configs()
        .into_iter()
        .map(|(label, text)| Ok((label, resolve(suite.name(), text, overrides)?)))
        .collect()
}

/// Run one sub-configuration of a suite, with the suite's extra checks.
pub fn run_part(
    suite: Suite,
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    exec: Exec,
) -> Result<Outcome, CliError> {
    let mut out = match suite {
        Suite::Comparison => return comparison(cfg, sink),
        _ => execute(cfg, sink, exec)?,
    };
    match suite {
        Suite::Oracle1d => {
            let c = oracle_check(cfg, &out)?;
            out.checks.push(c);
        }
        Suite::AssumptionH => {
            let c = bound_spread_check(cfg, &out);
            out.checks.push(c);
        }
        _ => {}
    }
    sink.write("checks.csv", out.checks_csv().as_bytes())?;
    Ok(out)
}
