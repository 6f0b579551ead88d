//! Effective Hamiltonians by vanishing discount, and corrector diagnostics.
//!
//! All expectations over the environment law are replaced by averages over
//! an explicit list of seeds. Jobs run in parallel over seeds; within a seed
//! the discounts are solved in decreasing order, each warm-started from the
//! previous one. Aggregation is always in the caller's seed order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::{sample_field, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Vector};
use crate::models::{DiffusionKind, DiffusionModel, HamiltonianKind, HamiltonianModel};
use crate::par::{self, Exec};
use crate::scheme::{Operator, SchemeConfig};
use crate::solver::{solve_discounted_from, DiscountedSolution};

/// Offset applied to the seed of the diffusion coefficient field so it is
/// not a copy of the Hamiltonian's field when both use the same family.
const DIFFUSION_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Number of trailing discounts used by the extrapolation fit.
const FIT_POINTS: usize = 3;

/// Minimum ensemble size for the mean-zero statistics.
pub const MIN_MEAN_ZERO_SEEDS: usize = 8;

/// Means below this are solver round-off, whatever their standard error.
pub const MEAN_ZERO_FLOOR: f64 = 1e-9;

/// Recipe for `(H, A)` realizations; the seed is supplied per job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hamiltonian: HamiltonianKind,
    pub environment: EnvironmentSpec,
    pub diffusion: DiffusionKind,
    /// Coefficient field of `A`; a constant `nu_min` when absent.
    pub diffusion_environment: Option<EnvironmentSpec>,
    pub nu_min: f64,
}

impl ModelSpec {
    /// First-order model `H(p, x)` with `A = 0`.
    pub fn first_order(hamiltonian: HamiltonianKind, environment: EnvironmentSpec) -> Self {
        ModelSpec {
            hamiltonian,
            environment,
            diffusion: DiffusionKind::Zero,
            diffusion_environment: None,
            nu_min: 0.0,
        }
    }

    pub fn instantiate(
        &self,
        grid: &GridSpec,
        seed: u64,
    ) -> Result<(HamiltonianModel, DiffusionModel)> {
        let field = sample_field(&self.environment.with_seed(seed), grid)?;
        let ham = HamiltonianModel::new(self.hamiltonian, field)?;
        let diff = match self.diffusion {
            DiffusionKind::Zero => DiffusionModel::zero(grid.dim()),
            kind => {
                let spec = match &self.diffusion_environment {
                    Some(s) => s.with_seed(seed.wrapping_add(DIFFUSION_SEED_OFFSET)),
                    None => EnvironmentSpec::constant(self.nu_min),
                };
                DiffusionModel::new(kind, sample_field(&spec, grid)?, self.nu_min)?
            }
        };
        Ok((ham, diff))
    }
}

/// Per-solve diagnostics kept alongside the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub residual_sup: f64,
    pub lipschitz_estimate: f64,
    pub sup_norm_delta_v: f64,
    pub max_abs_h: f64,
}

impl From<&DiscountedSolution> for SolveSummary {
    fn from(s: &DiscountedSolution) -> Self {
        SolveSummary {
            iterations: s.iterations,
            residual_sup: s.residual_sup,
            lipschitz_estimate: s.lipschitz_estimate,
            sup_norm_delta_v: s.sup_norm_delta_v,
            max_abs_h: s.max_abs_h,
        }
    }
}

/// Monte Carlo vanishing-discount estimate of `H̄(p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveEstimate {
    pub p: Vector,
    pub dim: usize,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `−δ_n v^{δ_n}(0)`, indexed `[seed][n]`.
    pub per_seed_values: Vec<Vec<f64>>,
    /// `[seed][n]`.
    pub diagnostics: Vec<Vec<SolveSummary>>,
    pub cbar: f64,
    pub extrapolation_slope: f64,
    pub extrapolation_residual: f64,
    /// Sample standard deviation across seeds, per discount.
    pub seed_dispersion: Vec<f64>,
}

impl EffectiveEstimate {
    /// Seed mean of `−δ_n v(0)` for each discount.
    pub fn seed_means(&self) -> Vec<f64> {
        (0..self.deltas.len())
            .map(|n| mean(self.per_seed_values.iter().map(|row| row[n])))
            .collect()
    }

    pub fn dispersion_final(&self) -> f64 {
        *self.seed_dispersion.last().unwrap_or(&0.0)
    }

    /// `extrapolation_residual + dispersion_final`.
    pub fn uncertainty(&self) -> f64 {
        self.extrapolation_residual + self.dispersion_final()
    }

    /// The a priori bound on `|δv(0)|` used in place of `M_p`.
    pub fn max_abs_h(&self) -> f64 {
        self.diagnostics
            .iter()
            .flatten()
            .map(|d| d.max_abs_h)
            .fold(0.0, f64::max)
    }

    /// Rows `p0[,p1],delta,seed,minus_delta_v0`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},delta,seed,minus_delta_v0", p_header(self.dim))?;
        for (s, row) in self.seeds.iter().zip(&self.per_seed_values) {
            for (delta, val) in self.deltas.iter().zip(row) {
                writeln!(w, "{},{delta},{s},{val}", p_fields(self.p, self.dim))?;
            }
        }
        Ok(())
    }

    pub fn write_summary_header<W: Write>(dim: usize, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},cbar,extrap_residual,dispersion_final",
            p_header(dim)
        )
    }

    pub fn write_summary_row<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{}",
            p_fields(self.p, self.dim),
            self.cbar,
            self.extrapolation_residual,
            self.dispersion_final()
        )
    }
}

fn p_header(dim: usize) -> &'static str {
    if dim == 1 {
        "p0"
    } else {
        "p0,p1"
    }
}

fn p_fields(p: Vector, dim: usize) -> String {
    if dim == 1 {
        format!("{}", p[0])
    } else {
        format!("{},{}", p[0], p[1])
    }
}

fn mean<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Sample standard deviation (zero for fewer than two values).
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Least-squares fit `m(δ) = c + kδ` over the last [`FIT_POINTS`] discounts.
/// Returns `(c, k, max |m − fit|)`.
pub fn extrapolate(deltas: &[f64], means: &[f64]) -> (f64, f64, f64) {
    let n = deltas.len();
    let start = n.saturating_sub(FIT_POINTS);
    let (x, y) = (&deltas[start..], &means[start..]);
    let m = x.len() as f64;
    let xm = x.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - xm) * (a - xm)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let k = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = ym - k * xm;
    let resid = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (c + k * a)).abs())
        .fold(0.0, f64::max);
    (c, k, resid)
}

fn validate_sweep(deltas: &[f64], seeds: &[u64]) -> Result<()> {
    if deltas.len() < 2 {
        return Err(Error::param("deltas", "need at least 2 discounts"));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::param("deltas", "discounts must be positive"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("deltas", "must be strictly decreasing"));
    }
    if seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one seed"));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("seeds", "duplicate seeds"));
    }
    Ok(())
}

struct SeedRun {
    values: Vec<f64>,
    diagnostics: Vec<SolveSummary>,
    last: Option<DiscountedSolution>,
}

fn run_seed(
    model: &ModelSpec,
    p: Vector,
    deltas: &[f64],
    seed: u64,
    grid: &GridSpec,
    scheme: &SchemeConfig,
    keep: bool,
) -> Result<SeedRun> {
    let job_err = |delta: f64, e: Error| Error::Job {
        seed,
        delta,
        source: Box::new(e),
    };
    let (ham, diff) = model
        .instantiate(grid, seed)
        .map_err(|e| job_err(deltas[0], e))?;
    let mut values = Vec::with_capacity(deltas.len());
    let mut diagnostics = Vec::with_capacity(deltas.len());
    let mut prev: Option<DiscountedSolution> = None;
    for &delta in deltas {
        let params = scheme
            .resolve(&ham, &diff, p, delta, grid)
            .map_err(|e| job_err(delta, e))?;
        // the previous solution with its constant rescaled to the new discount
        let init = prev.as_ref().map(|s| {
            let m = s.v.iter().sum::<f64>() / s.v.len() as f64;
            let c = m * s.delta / delta - m;
            s.v.iter().map(|x| x + c).collect::<Vec<f64>>()
        });
        let sol = solve_discounted_from(&ham, &diff, p, delta, &params, init.as_deref())
            .map_err(|e| job_err(delta, e))?;
        values.push(-delta * sol.value_at_origin());
        diagnostics.push(SolveSummary::from(&sol));
        prev = Some(sol);
    }
    Ok(SeedRun {
        values,
        diagnostics,
        last: if keep { prev } else { None },
    })
}

fn run_ensemble(
    model: &ModelSpec,
    p: Vector,
    deltas: &[f64],
    seeds: &[u64],
    grid: &GridSpec,
    scheme: &SchemeConfig,
    exec: Exec,
    keep: bool,
) -> Result<(EffectiveEstimate, Vec<DiscountedSolution>)> {
    validate_sweep(deltas, seeds)?;
    if grid.dim() == 1 && p[1] != 0.0 {
        return Err(Error::param("p", "second component must vanish in 1D"));
    }
    let runs = par::map(exec, seeds, |&s| {
        run_seed(model, p, deltas, s, grid, scheme, keep)
    });
    let mut per_seed_values = Vec::with_capacity(seeds.len());
    let mut diagnostics = Vec::with_capacity(seeds.len());
    let mut finals = Vec::new();
    for run in runs {
        let run = run?;
        per_seed_values.push(run.values);
        diagnostics.push(run.diagnostics);
        finals.extend(run.last);
    }
    let seed_dispersion: Vec<f64> = (0..deltas.len())
        .map(|n| {
            let col: Vec<f64> = per_seed_values.iter().map(|r| r[n]).collect();
            sample_std(&col)
        })
        .collect();
    let mut est = EffectiveEstimate {
        p,
        dim: grid.dim(),
        deltas: deltas.to_vec(),
        seeds: seeds.to_vec(),
        per_seed_values,
        diagnostics,
        cbar: 0.0,
        extrapolation_slope: 0.0,
        extrapolation_residual: 0.0,
        seed_dispersion,
    };
    let (c, k, r) = extrapolate(deltas, &est.seed_means());
    est.cbar = c;
    est.extrapolation_slope = k;
    est.extrapolation_residual = r;
    Ok((est, finals))
}

/// Estimate `H̄(p)` from `−δ v^δ(0)` over seeds and a decreasing discount sequence.
pub fn vanishing_discount(
    model: &ModelSpec,
    p: Vector,
    deltas: &[f64],
    seeds: &[u64],
    grid: &GridSpec,
    scheme: &SchemeConfig,
    exec: Exec,
) -> Result<EffectiveEstimate> {
    run_ensemble(model, p, deltas, seeds, grid, scheme, exec, false).map(|r| r.0)
}

/// As [`vanishing_discount`], also returning each seed's solution at the
/// smallest discount (in seed order).
pub fn vanishing_discount_with_solutions(
    model: &ModelSpec,
    p: Vector,
    deltas: &[f64],
    seeds: &[u64],
    grid: &GridSpec,
    scheme: &SchemeConfig,
    exec: Exec,
) -> Result<(EffectiveEstimate, Vec<DiscountedSolution>)> {
    run_ensemble(model, p, deltas, seeds, grid, scheme, exec, true)
}

/// `θ(x) = v(x) − v(0)`.
pub fn extract_corrector(sol: &DiscountedSolution) -> Vec<f64> {
    let v0 = sol.v[0];
    sol.v.iter().map(|x| x - v0).collect()
}

/// Linear drift of `θ` fitted on the outer shells `‖x̃‖∞ ∈ [L/4, L/2)`.
///
/// Returns `(r, rms / L)` where `rms` is the root-mean-square of `θ − r·x̃`
/// over the shells.
pub fn estimate_drift(theta: &[f64], grid: &GridSpec) -> Result<(Vector, f64)> {
    if theta.len() != grid.len() {
        return Err(Error::param("theta", "length does not match the grid"));
    }
    let l = grid.extent();
    let d = grid.dim();
    let shell: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let n = grid.sup_norm(grid.displacement(i));
            n >= l / 4.0 && n < l / 2.0
        })
        .collect();
    // normal equations Σ x̃ x̃ᵀ r = Σ θ x̃
    let mut m = [[0.0; 2]; 2];
    let mut b = [0.0; 2];
    for &i in &shell {
        let x = grid.displacement(i);
        for a in 0..d {
            b[a] += theta[i] * x[a];
            for c in 0..d {
                m[a][c] += x[a] * x[c];
            }
        }
    }
    let r = if d == 1 {
        if m[0][0] <= 0.0 {
            return Err(Error::Geometry("empty drift shell".into()));
        }
        [b[0] / m[0][0], 0.0]
    } else {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det.abs() > 1e-12 * (m[0][0] * m[1][1]).abs()) {
            return Err(Error::Geometry(
                "degenerate normal equations for the drift fit".into(),
            ));
        }
        [
            (b[0] * m[1][1] - b[1] * m[0][1]) / det,
            (m[0][0] * b[1] - m[1][0] * b[0]) / det,
        ]
    };
    let ss: f64 = shell
        .iter()
        .map(|&i| {
            let x = grid.displacement(i);
            let e = theta[i] - (r[0] * x[0] + r[1] * x[1]);
            e * e
        })
        .sum();
    Ok((r, (ss / shell.len() as f64).sqrt() / l))
}

/// Radii at which the sublinearity profile is sampled.
pub fn profile_radii(grid: &GridSpec) -> Vec<f64> {
    let l = grid.extent();
    vec![l / 16.0, l / 8.0, l / 4.0, l / 2.0 - grid.spacing()]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectorReport {
    pub p: Vector,
    pub dim: usize,
    pub drift: Vector,
    pub drift_fit_residual: f64,
    /// `(R, max_{‖x̃‖∞ = R} |θ̃(x)| / R)`.
    pub sublinearity_profile: Vec<(f64, f64)>,
    pub equation_residual_sup: f64,
    pub cbar_used: f64,
    pub delta: f64,
}

impl CorrectorReport {
    /// Profile rows `R,max_ratio`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "R,max_ratio")?;
        for (r, v) in &self.sublinearity_profile {
            writeln!(w, "{r},{v}")?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},r0,r1,drift_fit_residual,equation_residual_sup,cbar_used,delta",
            p_header(self.dim)
        )?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p_fields(self.p, self.dim),
            self.drift[0],
            self.drift[1],
            self.drift_fit_residual,
            self.equation_residual_sup,
            self.cbar_used,
            self.delta
        )
    }
}

/// Drift, sublinearity and corrector-equation residual of `θ̃ = θ − r·x̃` at
/// the shifted momentum `p + r`, on the solve's own lattice and scheme.
pub fn corrector_report(
    ham: &HamiltonianModel,
    diff: &DiffusionModel,
    sol: &DiscountedSolution,
    cbar: f64,
) -> Result<CorrectorReport> {
    let grid = sol.grid;
    if ham.field().grid() != &grid {
        return Err(Error::param("grid", "solution and model grids differ"));
    }
    let theta = extract_corrector(sol);
    let (r, fit) = estimate_drift(&theta, &grid)?;
    let h = grid.spacing();
    let shifted = [sol.p[0] + r[0], sol.p[1] + r[1]];
    let tilde: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.displacement(i);
            theta[i] - (r[0] * x[0] + r[1] * x[1])
        })
        .collect();

    let op = Operator::new(ham, diff, shifted, &sol.params);
    // lattice differences of θ̃ = θ − r·x̃ taken on ℝ^d, ignoring the seam of x̃
    let residual_sup = (0..grid.len())
        .map(|i| {
            let c = grid.coords(i);
            let t = op.terms(i, |o| {
                theta[grid.step_index(c, o)]
                    - theta[i]
                    - h * (r[0] * o[0] as f64 + r[1] * o[1] as f64)
            });
            (-t.diffusion + t.hamiltonian - t.dissipation - cbar).abs()
        })
        .fold(0.0, f64::max);

    let sublinearity_profile = profile_radii(&grid)
        .into_iter()
        .map(|radius| {
            let m = (0..grid.len())
                .filter(|&i| (grid.sup_norm(grid.displacement(i)) - radius).abs() < 0.5 * h)
                .map(|i| tilde[i].abs())
                .fold(0.0, f64::max);
            (radius, m / radius)
        })
        .collect();

    Ok(CorrectorReport {
        p: sol.p,
        dim: grid.dim(),
        drift: r,
        drift_fit_residual: fit,
        sublinearity_profile,
        equation_residual_sup: residual_sup,
        cbar_used: cbar,
        delta: sol.delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    InsufficientSeeds,
}

/// Seed mean and standard error of one scalar statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStat {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub passes: bool,
}

impl MeanStat {
    fn new(label: String, xs: &[f64]) -> Self {
        let mean = mean(xs.iter().copied());
        let stderr = sample_std(xs) / (xs.len() as f64).sqrt();
        MeanStat {
            label,
            mean,
            stderr,
            passes: mean.abs() <= 3.0 * stderr + MEAN_ZERO_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanZeroReport {
    pub seeds: usize,
    pub status: CheckStatus,
    /// `θ(x)` at each probe point, then each drift component.
    pub stats: Vec<MeanStat>,
}

impl MeanZeroReport {
    pub fn passes(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "quantity,mean,stderr,pass")?;
        for s in &self.stats {
            writeln!(w, "{},{},{},{}", s.label, s.mean, s.stderr, s.passes)?;
        }
        Ok(())
    }
}

/// `|mean| ≤ 3·stderr` (plus [`MEAN_ZERO_FLOOR`]) for `θ` at each probe point and for each drift component.
pub fn mean_zero_checks(
    thetas: &[Vec<f64>],
    drifts: &[Vector],
    grid: &GridSpec,
    probes: &[Vector],
) -> MeanZeroReport {
    let seeds = thetas.len();
    if seeds < MIN_MEAN_ZERO_SEEDS {
        return MeanZeroReport {
            seeds,
            status: CheckStatus::InsufficientSeeds,
            stats: Vec::new(),
        };
    }
    let mut stats = Vec::new();
    for x in probes {
        let i = grid.nearest_index(*x);
        let xs: Vec<f64> = thetas.iter().map(|t| t[i]).collect();
        let label = if grid.dim() == 1 {
            format!("theta({})", x[0])
        } else {
            format!("theta({};{})", x[0], x[1])
        };
        stats.push(MeanStat::new(label, &xs));
    }
    for a in 0..grid.dim() {
        let xs: Vec<f64> = drifts.iter().map(|r| r[a]).collect();
        stats.push(MeanStat::new(format!("r{a}"), &xs));
    }
    let status = if stats.iter().all(|s| s.passes) {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    MeanZeroReport {
        seeds,
        status,
        stats,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub deltas: Vec<f64>,
    pub dispersion: Vec<f64>,
    pub threshold: f64,
    /// Relative slack allowed between consecutive dispersions.
    pub slack: f64,
    pub nonincreasing: bool,
    pub passes: bool,
    pub estimate: EffectiveEstimate,
}

impl VarianceReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "delta,dispersion")?;
        for (d, s) in self.deltas.iter().zip(&self.dispersion) {
            writeln!(w, "{d},{s}")?;
        }
        Ok(())
    }
}

/// Seed dispersion of `−δv^δ(0)` along the discount sequence for convex `H`
/// and `p`-independent `A`.
#[allow(clippy::too_many_arguments)]
pub fn convexcase_variance_decay(
    model: &ModelSpec,
    p: Vector,
    deltas: &[f64],
    seeds: &[u64],
    grid: &GridSpec,
    scheme: &SchemeConfig,
    threshold: f64,
    exec: Exec,
) -> Result<VarianceReport> {
    if model.hamiltonian == HamiltonianKind::DoubleWell {
        return Err(Error::NotApplicable(
            "the double-well Hamiltonian is not convex in p".into(),
        ));
    }
    if model.diffusion == DiffusionKind::CurvatureProjection {
        return Err(Error::NotApplicable(
            "the curvature diffusion depends on p".into(),
        ));
    }
    let estimate = vanishing_discount(model, p, deltas, seeds, grid, scheme, exec)?;
    let dispersion = estimate.seed_dispersion.clone();
    let slack = 0.1;
    let nonincreasing = dispersion
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + slack) + f64::EPSILON);
    let passes = nonincreasing && *dispersion.last().unwrap() <= threshold;
    Ok(VarianceReport {
        deltas: deltas.to_vec(),
        dispersion,
        threshold,
        slack,
        nonincreasing,
        passes,
        estimate,
    })
}
